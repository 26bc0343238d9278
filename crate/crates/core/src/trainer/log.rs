use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostics of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub loss_dr: f64,
    pub loss_db: f64,
    pub active_frac_dr: f64,
    pub active_frac_db: f64,
    pub rate: f64,
    /// Bias-loss anchors without a valid pair, summed over the epoch.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

pub const LOG_HEADER: &str = "epoch,loss_dr,loss_db,active_frac_dr,active_frac_db,rate,skipped";

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut text = String::from(LOG_HEADER);
        text.push('\n');
        for e in &self.epochs {
            text.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                e.epoch, e.loss_dr, e.loss_db, e.active_frac_dr, e.active_frac_db, e.rate, e.skipped
            ));
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Error::data(format!("writing train log: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::data("train log: unexpected header"));
        }
        let epochs = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || Error::data(format!("train log: malformed row {}", i + 2));
                if f.len() != 7 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(EpochStats {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    loss_dr: num(f[1])?,
                    loss_db: num(f[2])?,
                    active_frac_dr: num(f[3])?,
                    active_frac_db: num(f[4])?,
                    rate: num(f[5])?,
                    skipped: f[6].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { epochs })
    }
}
