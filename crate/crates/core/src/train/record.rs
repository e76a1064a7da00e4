use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "iteration,loss,train_psnr,test_psnr,test_ssim,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    /// Mean training loss since the previous record.
    pub loss: f64,
    /// PSNR of the mean final-pass batch error since the previous record.
    pub train_psnr: f64,
    pub test_psnr: f64,
    pub test_ssim: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    /// CSV text. The `seconds` column is left empty unless `wall_time` is
    /// set, which keeps seeded runs byte-reproducible.
    pub fn to_csv(&self, wall_time: bool) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{:.9},{:.6},{:.6},{:.6},",
                r.iteration, r.loss, r.train_psnr, r.test_psnr, r.test_ssim
            );
            if wall_time {
                let _ = write!(s, "{:.3}", r.seconds);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path, wall_time: bool) -> Result<()> {
        fs::write(path, self.to_csv(wall_time)).map_err(|e| Error::io(path, e))
    }

    /// Same records apart from wall-clock time.
    pub fn same_progress(&self, other: &TrainLog) -> bool {
        self.to_csv(false) == other.to_csv(false)
    }
}
