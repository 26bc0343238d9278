//! Dataset CSV: `id,camera,split,<channel...>,f0,...,f{d-1}`.
//!
//! Embedding exports use `e0..` instead of `f0..`; both read as features.
//!
//! Features are written with 17 significant digits so a save/load round trip
//! is exact. Rows are numbered as file lines (the header is row 1).

use std::io::{Read, Write};
use std::path::Path;

use super::{sort_class_names, Channel, Dataset, Sample, Split};
use crate::error::{Error, Result};

const FIXED: [&str; 3] = ["id", "camera", "split"];

pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    write_with_prefix(ds, out, "f")
}

pub(crate) fn write_with_prefix<W: Write>(ds: &Dataset, out: W, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(ds.channels().iter().map(|c| c.name.clone()));
    header.extend((0..ds.dim()).map(|j| format!("{prefix}{j}")));
    let wrap = |e: csv::Error| Error::data(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(wrap)?;
    for s in ds.samples() {
        let mut rec: Vec<String> = vec![s.id.to_string(), s.camera.to_string(), s.split.as_str().into()];
        rec.extend(
            s.bias
                .iter()
                .zip(ds.channels())
                .map(|(&l, ch)| ch.classes[l as usize].clone()),
        );
        rec.extend(s.features.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, std::io::BufWriter::new(file))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_dataset(std::io::BufReader::new(file), &name)
}

fn parse_err(row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.into(),
        message: message.into(),
    }
}

pub fn read_dataset<R: Read>(input: R, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(parse_err(1, "header", "empty file, header required")),
        Some(r) => r.map_err(|e| parse_err(1, "header", e.to_string()))?,
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    for (i, want) in FIXED.iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(*want) {
            return Err(parse_err(1, *want, format!("missing column `{want}` at position {i}")));
        }
    }
    let first_feature = header
        .iter()
        .position(|h| h == "f0" || h == "e0")
        .ok_or_else(|| parse_err(1, "f0", "no feature columns"))?;
    let prefix = &header[first_feature][..1];
    let channel_names: Vec<String> = header[FIXED.len()..first_feature].to_vec();
    for (j, h) in header[first_feature..].iter().enumerate() {
        if *h != format!("{prefix}{j}") {
            return Err(parse_err(1, h.clone(), format!("expected feature column `{prefix}{j}`")));
        }
    }
    let looks_like_feature =
        |c: &str| (c.starts_with('f') || c.starts_with('e')) && c[1..].parse::<usize>().is_ok();
    for (i, c) in channel_names.iter().enumerate() {
        if c.is_empty() || looks_like_feature(c) {
            return Err(parse_err(1, c.clone(), "invalid channel column name"));
        }
        if FIXED.contains(&c.as_str()) || channel_names[..i].contains(c) {
            return Err(parse_err(1, c.clone(), "duplicate column"));
        }
    }
    let dim = header.len() - first_feature;
    let n_fields = header.len();

    struct Row {
        id: u32,
        camera: u32,
        split: Split,
        labels: Vec<String>,
        features: Vec<f64>,
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, "?", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != n_fields {
            return Err(parse_err(
                line,
                format!("{}", rec.len()),
                format!("row has {} fields, header has {n_fields}", rec.len()),
            ));
        }
        let field = |i: usize| rec.get(i).expect("length checked").trim();
        let id = field(0)
            .parse::<u32>()
            .map_err(|e| parse_err(line, "id", format!("`{}`: {e}", field(0))))?;
        let camera = field(1)
            .parse::<u32>()
            .map_err(|e| parse_err(line, "camera", format!("`{}`: {e}", field(1))))?;
        let split = field(2)
            .parse::<Split>()
            .map_err(|e| parse_err(line, "split", e))?;
        let labels = (0..channel_names.len())
            .map(|c| {
                let v = field(FIXED.len() + c);
                if v.is_empty() {
                    Err(parse_err(line, channel_names[c].clone(), "empty bias label"))
                } else {
                    Ok(v.to_string())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let features = (0..dim)
            .map(|j| {
                let v = field(first_feature + j);
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(parse_err(line, header[first_feature + j].clone(), format!("non-numeric feature `{v}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            id,
            camera,
            split,
            labels,
            features,
        });
    }

    let channels: Vec<Channel> = channel_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut classes: Vec<String> = rows.iter().map(|r| r.labels[c].clone()).collect();
            sort_class_names(&mut classes);
            classes.dedup();
            Channel {
                name: name.clone(),
                classes,
            }
        })
        .collect();
    let samples = rows
        .into_iter()
        .map(|r| Sample {
            bias: r
                .labels
                .iter()
                .zip(&channels)
                .map(|(l, ch)| ch.classes.iter().position(|k| k == l).expect("collected") as u32)
                .collect(),
            features: r.features,
            id: r.id,
            camera: r.camera,
            split: r.split,
        })
        .collect();
    Dataset::new(name, channels, dim, samples)
}
