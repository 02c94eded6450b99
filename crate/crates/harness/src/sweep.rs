//! One-parameter grids over λ or T.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::runner::{run_experiment, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Temperature,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Temperature => "temperature",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::Temperature => cfg.temperature = value,
        }
        cfg
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "temperature" => Ok(SweepParam::Temperature),
            other => Err(format!("unknown sweep parameter `{other}` (expected lambda or temperature)")),
        }
    }
}

#[derive(Debug)]
pub struct SweepCell {
    pub value: f64,
    pub outcome: Result<RunReport, HarnessError>,
}

/// Runs one experiment per value. A failing cell is recorded and the sweep
/// moves on.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Vec<SweepCell> {
    values
        .iter()
        .map(|&value| SweepCell {
            value,
            outcome: run_experiment(&param.apply(base, value)),
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "param,value,framework,mean_accuracy,std_accuracy,repeats,status";

/// Grid summary; failed cells get one row with an empty framework column.
pub fn sweep_csv(base_hash: &str, param: SweepParam, cells: &[SweepCell]) -> String {
    let mut out = format!("# config_hash={base_hash}\n{SWEEP_HEADER}\n");
    for cell in cells {
        match &cell.outcome {
            Ok(report) => {
                for s in &report.summary {
                    writeln!(
                        out,
                        "{param},{},{},{},{},{},ok",
                        cell.value, s.framework, s.mean_accuracy, s.std_accuracy, s.repeats
                    )
                    .unwrap();
                }
            }
            Err(e) => {
                let msg = e.to_string().replace('"', "\"\"");
                writeln!(out, "{param},{},,,,0,\"error: {msg}\"", cell.value).unwrap();
            }
        }
    }
    out
}
