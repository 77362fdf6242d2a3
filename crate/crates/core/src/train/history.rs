use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_mse,val_mae,wall_time_s";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub entries: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.entries.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.val_mse, e.val_mae, e.wall_time_s
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
            return Err(Error::Parse(format!("unexpected history header {headers:?}")));
        }
        let mut entries = Vec::new();
        for rec in rdr.deserialize::<EpochRecord>() {
            entries.push(rec.map_err(|e| Error::Parse(e.to_string()))?);
        }
        let best_epoch = entries
            .iter()
            .fold(None::<&EpochRecord>, |b, e| match b {
                Some(b) if b.val_mse <= e.val_mse => Some(b),
                _ => Some(e),
            })
            .map_or(0, |e| e.epoch);
        Ok(TrainHistory { entries, best_epoch, stopped_early: false })
    }
}
