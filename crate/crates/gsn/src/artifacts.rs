//! Metrics CSV and the per-command manifest that records the seed and
//! config hash next to text and image outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gsn_core::trainer::EpochReport;
use serde::Serialize;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,mean_nll,lr";

/// Numbers use Rust's shortest round-trip formatting, so the file is
/// byte-identical for identical runs.
pub fn metrics_csv(reports: &[EpochReport]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in reports {
        writeln!(s, "{},{:?},{:?}", r.epoch, r.mean_nll, r.lr_used).expect("write to string");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn path(out: &Path, command: &str) -> PathBuf {
        out.join(format!("{command}.manifest.json"))
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = Self::path(out, &self.command);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(Error::io(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let reports = [
            EpochReport { epoch: 1, mean_nll: 2.5, lr_used: 0.1 },
            EpochReport { epoch: 2, mean_nll: 1.0 / 3.0, lr_used: 0.099 },
        ];
        assert_eq!(metrics_csv(&reports), "epoch,mean_nll,lr\n1,2.5,0.1\n2,0.3333333333333333,0.099\n");
    }
}
