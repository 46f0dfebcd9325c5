//! The randomized bound checks behind `verify-bounds`.

use std::io::Write;

use aliasplan_core::verify::{check_bound_soundness, check_convergence, check_identities, check_refinement, CheckSummary};
use serde::Serialize;

/// Relative tolerance of the sandwich checks.
pub const SOUNDNESS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: &'static str,
    pub instances: usize,
    pub violations: usize,
    pub worst: f64,
}

impl CheckRow {
    fn new(check: &'static str, s: CheckSummary) -> Self {
        Self {
            check,
            instances: s.instances,
            violations: s.violations,
            worst: s.worst,
        }
    }
}

/// Runs every family of checks on `instances` random instances.
pub fn verify_bounds(instances: usize, seed: u64) -> Vec<CheckRow> {
    let (eta, entropy) = check_bound_soundness(instances, seed, SOUNDNESS_TOLERANCE);
    let (identity, split) = check_identities(instances, seed);
    let (eta_full, entropy_full) = check_convergence(instances, seed);
    let refinement = check_refinement(instances, seed);
    vec![
        CheckRow::new("eta_sandwich", eta),
        CheckRow::new("entropy_sandwich", entropy),
        CheckRow::new("entropy_identity", identity),
        CheckRow::new("eta_split", split),
        CheckRow::new("eta_full_selection", eta_full),
        CheckRow::new("entropy_full_selection", entropy_full),
        CheckRow::new("refinement", refinement),
    ]
}

pub fn write_check_csv<W: Write>(rows: &[CheckRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
