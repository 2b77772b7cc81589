//! Machine-readable run outputs: the trajectory CSV and the final report.
//!
//! Floats are written in shortest round-trip decimal form, so positions
//! read back from either file reproduce the recorded values exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{relative_error, Termination, TrajectoryRecord};
use crate::scenarios::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: usize,
    pub value: f64,
    pub target: f64,
    /// `|m_k - m_k*| / max(|m_k*|, 1e-12)`.
    pub relative_error: f64,
}

/// Paths of the files written for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFiles {
    pub trajectory: String,
    pub report: String,
}

/// Summary of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub termination_reason: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub sliding_steps: usize,
    pub simulated_time: f64,
    pub moments: Vec<MomentReport>,
    /// Moments `m_1..m_s` of the final adjacency matrix.
    pub final_moments: Vec<f64>,
    /// Final spectrum, largest first.
    pub final_eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_eigenvalues: Option<Vec<f64>>,
    /// Relative error of each final eigenvalue against the reference
    /// eigenvalue of the same rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalue_errors: Option<Vec<f64>>,
    pub final_positions: Vec<Vec<f64>>,
    pub ordering_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<ReportFiles>,
}

impl RunReport {
    pub fn new(scenario: &Scenario, record: &TrajectoryRecord) -> Self {
        let targets = &scenario.targets;
        let moments = (1..=targets.order())
            .map(|k| {
                let value = record.final_moments.moment(k);
                let target = targets.moment(k);
                MomentReport {
                    order: k,
                    value,
                    target,
                    relative_error: relative_error(value, target),
                }
            })
            .collect();
        let reference = targets.reference_eigenvalues().map(|r| {
            let mut r = r.to_vec();
            r.sort_by(|a, b| b.total_cmp(a));
            r
        });
        let eigenvalue_errors = reference.as_ref().and_then(|r| {
            (r.len() == record.final_eigenvalues.len()).then(|| {
                record
                    .final_eigenvalues
                    .iter()
                    .zip(r)
                    .map(|(v, t)| relative_error(*v, *t))
                    .collect()
            })
        });
        Self {
            name: scenario.name.clone(),
            termination_reason: record.termination,
            accepted_steps: record.accepted_steps,
            rejected_steps: record.rejected_steps,
            sliding_steps: record.sliding_steps,
            simulated_time: record.final_time,
            moments,
            final_moments: record.final_moments.values().to_vec(),
            final_eigenvalues: record.final_eigenvalues.clone(),
            reference_eigenvalues: reference,
            eigenvalue_errors,
            final_positions: record.final_configuration.to_rows(),
            ordering_violations: record.ordering_violations,
            files: None,
        }
    }

    pub fn worst_relative_error(&self) -> f64 {
        self.moments
            .iter()
            .skip(1)
            .map(|m| m.relative_error)
            .fold(0.0, f64::max)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{}: {} after {} accepted / {} rejected steps, t = {}\n",
            self.name, self.termination_reason, self.accepted_steps, self.rejected_steps, self.simulated_time
        );
        out.push_str("  k  final          target         rel. error\n");
        for m in &self.moments {
            out.push_str(&format!(
                "  {:<2} {:<14.6} {:<14.6} {:.3e}\n",
                m.order, m.value, m.target, m.relative_error
            ));
        }
        out.push_str(&format!("  largest eigenvalue {:.6}", self.final_eigenvalues[0]));
        if let Some(r) = &self.reference_eigenvalues {
            out.push_str(&format!(" (reference {:.6})", r[0]));
        }
        out.push('\n');
        if self.ordering_violations > 0 {
            out.push_str(&format!(
                "  ordering violations: {}\n",
                self.ordering_violations
            ));
        }
        if let Some(files) = &self.files {
            out.push_str(&format!("  wrote {} and {}\n", files.trajectory, files.report));
        }
        out
    }
}

/// Column names of the trajectory CSV for `n` robots in `d` dimensions
/// tracking `s` moments.
pub fn trajectory_header(n: usize, d: usize, s: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=s).map(|k| format!("m_{k}")));
    header.push("cost".into());
    header.push("barrier".into());
    for i in 1..=n {
        header.extend((1..=d).map(|r| format!("x_{i}_{r}")));
    }
    header
}

/// Writes one row per recorded sample.
pub fn write_trajectory_csv<W: Write>(writer: W, record: &TrajectoryRecord) -> csv::Result<()> {
    let first = &record.start_configuration;
    let s = record.final_moments.order();
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(trajectory_header(first.n(), first.d(), s))?;
    for sample in &record.samples {
        let mut row: Vec<String> = Vec::with_capacity(3 + s + first.n() * first.d());
        row.push(sample.t.to_string());
        row.extend(sample.moments.values().iter().map(f64::to_string));
        row.push(sample.cost.to_string());
        row.push(sample.barrier.to_string());
        row.extend(sample.configuration.flat().iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
