use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate decaying linearly from `base` at epoch 0 to zero at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base: f64,
    pub total_epochs: usize,
}

impl Schedule {
    pub fn new(base: f64, total_epochs: usize) -> Result<Self> {
        if !(base.is_finite() && base >= 0.0) {
            return Err(Error::config(format!("base rate must be finite and >= 0, got {base}")));
        }
        if total_epochs == 0 {
            return Err(Error::config("schedule needs at least one epoch"));
        }
        Ok(Self { base, total_epochs })
    }

    pub fn rate(&self, epoch: usize) -> Result<f64> {
        if epoch > self.total_epochs {
            return Err(Error::config(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        if epoch == self.total_epochs {
            return Ok(0.0);
        }
        Ok(self.base * (1.0 - epoch as f64 / self.total_epochs as f64))
    }
}
