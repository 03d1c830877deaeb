use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use priorkrylov::solvers::{IterationRecord, Termination};
use serde::Serialize;

pub const HISTORY_HEADER: &str = "iter,mu,basis_dim,rre,ssim,gini,kappa,n_A,n_Psi,n_Psidag,dp_root_found";

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            h.iter,
            num(h.mu),
            h.basis_dim,
            opt(h.rre),
            opt(h.ssim),
            num(h.gini),
            num(h.kappa),
            h.n_a,
            h.n_psi,
            h.n_psidag,
            h.dp_root_found
        );
    }
    s
}

/// One table row: final metrics, how the run ended, and how long it took.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub method: String,
    pub weights: serde_json::Value,
    pub seed: u64,
    pub iterations: usize,
    pub final_mu: Option<f64>,
    pub final_rre: Option<f64>,
    pub final_ssim: Option<f64>,
    pub final_gini: Option<f64>,
    pub final_kappa: Option<f64>,
    pub n_a: Option<u64>,
    pub n_psi: Option<u64>,
    pub n_psidag: Option<u64>,
    pub termination: String,
    pub reason: Option<String>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn new(
        method: &str,
        weights: serde_json::Value,
        seed: u64,
        history: &[IterationRecord],
        termination: &str,
        reason: Option<String>,
        wall_time_s: f64,
    ) -> Self {
        let last = history.last();
        Summary {
            method: method.to_string(),
            weights,
            seed,
            iterations: history.len(),
            final_mu: last.map(|h| h.mu),
            final_rre: last.and_then(|h| h.rre),
            final_ssim: last.and_then(|h| h.ssim),
            final_gini: last.map(|h| h.gini),
            final_kappa: last.map(|h| h.kappa),
            n_a: last.map(|h| h.n_a),
            n_psi: last.map(|h| h.n_psi),
            n_psidag: last.map(|h| h.n_psidag),
            termination: termination.to_string(),
            reason,
            wall_time_s,
        }
    }
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::MaxIter => "max_iter",
        Termination::StopTol => "stop_tol",
        Termination::Breakdown => "breakdown",
    }
}

pub fn write_run(dir: &Path, history: &[IterationRecord], summary: &Summary) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("history.csv"), history_csv(history))?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}
