//! Result records, one JSON object per line.

use gscatter::{SolveReport, SpdMatrix};
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub version: String,
    pub command: Command,
    /// Distinguishes the rows of a multi-solve command such as `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub config: RunConfig,
    pub p: usize,
    pub eta: f64,
    /// Full symmetric matrix, row-major.
    pub estimate: Vec<f64>,
    pub status: String,
    pub iters: usize,
    /// `None` when the value is not finite.
    pub final_objective: Option<f64>,
    pub final_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
    /// Penalty value at the estimate.
    pub kappa: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub elapsed_secs: f64,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ResultRecord {
    pub fn from_report(
        config: &RunConfig,
        eta: f64,
        report: &SolveReport,
        elapsed_secs: f64,
    ) -> Self {
        let m = report.estimate.as_matrix();
        let p = m.nrows();
        let trace = config.solve.record_trace.then(|| {
            report
                .objective_trace
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .collect()
        });
        ResultRecord {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.command,
            label: None,
            config: config.clone(),
            p,
            eta,
            estimate: (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .map(|ij| m[ij])
                .collect(),
            status: report.status.as_str().to_string(),
            iters: report.iters,
            final_objective: finite(report.final_objective),
            final_residual: report.final_residual.and_then(finite),
            objective_trace: trace,
            kappa: finite(config.penalty.0.value(&report.estimate)),
            warnings: report.warnings.clone(),
            elapsed_secs,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn estimate_matrix(&self) -> CliResult<SpdMatrix> {
        Ok(SpdMatrix::from_row_slice(self.p, &self.estimate)?)
    }

    pub fn to_json_line(&self) -> CliResult<String> {
        serde_json::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json_line(line: &str) -> CliResult<Self> {
        serde_json::from_str(line).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gscatter::Status;

    #[test]
    fn record_round_trips_exactly() {
        let est =
            SpdMatrix::from_row_slice(2, &[1.0 / 3.0, 0.1 + 0.2, 0.1 + 0.2, std::f64::consts::PI])
                .unwrap();
        let report = SolveReport {
            estimate: est,
            status: Status::Converged,
            iters: 7,
            objective_trace: vec![2.0 / 7.0, 1e-300, 0.1 * 3.0],
            final_residual: Some(1.234_567_890_123_456_7e-9),
            final_objective: -5.0 / 9.0,
            warnings: vec!["w".into()],
        };
        let cfg = RunConfig::new(Command::Estimate);
        let rec = ResultRecord::from_report(&cfg, 0.5, &report, 0.01);
        let line = rec.to_json_line().unwrap();
        assert!(!line.contains('\n'));
        let back = ResultRecord::from_json_line(&line).unwrap();
        assert_eq!(back, rec);
        for (a, b) in back.estimate.iter().zip(&rec.estimate) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(
            back.estimate_matrix().unwrap().as_matrix(),
            report.estimate.as_matrix()
        );
    }

    #[test]
    fn non_finite_objective_becomes_null() {
        let report = SolveReport {
            estimate: SpdMatrix::identity(2),
            status: Status::Diverged,
            iters: 1,
            objective_trace: vec![1.0, f64::INFINITY],
            final_residual: None,
            final_objective: f64::NAN,
            warnings: vec![],
        };
        let rec = ResultRecord::from_report(&RunConfig::new(Command::Estimate), 0.5, &report, 0.0);
        let line = rec.to_json_line().unwrap();
        assert!(line.contains("\"final_objective\":null"));
        assert_eq!(ResultRecord::from_json_line(&line).unwrap(), rec);
    }
}
