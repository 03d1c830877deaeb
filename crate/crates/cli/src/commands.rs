use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use priorkrylov::analysis::{verify_theorem_bounds, BoundReport, DenseInstance, Which};
use priorkrylov::linalg::{to_dense, LinearOperator};
use priorkrylov::solvers::{solve, IterationRecord, Method, ProblemRef, SolverConfig, SolverError, Termination};
use priorkrylov::weights::WeightScheme;
use priorkrylov::{DVector, Problem64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{self, num, Summary};
use crate::CliError;

/// Largest problem `spectra` will assemble densely.
pub const SPECTRA_MAX_N: usize = 512;

struct Outcome {
    x: Option<DVector<f64>>,
    history: Vec<IterationRecord>,
    termination: String,
    reason: Option<String>,
    wall: f64,
}

impl Outcome {
    fn broke_down(&self) -> bool {
        self.reason.is_some()
    }

    fn summary(&self, cfg: &SolverConfig, seed: u64) -> Summary {
        let weights = serde_json::to_value(cfg.weights).unwrap_or(serde_json::Value::Null);
        Summary::new(cfg.method.label(), weights, seed, &self.history, &self.termination, self.reason.clone(), self.wall)
    }
}

fn execute(problem: &Problem64, cfg: &SolverConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let result = solve(&ProblemRef::from(problem), None, cfg);
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => {
            let reason = match r.termination {
                Termination::Breakdown => Some(r.breakdown.clone().unwrap_or_else(|| "breakdown".into())),
                _ => None,
            };
            Ok(Outcome {
                x: Some(r.x),
                history: r.history,
                termination: output::termination_name(r.termination).into(),
                reason,
                wall,
            })
        }
        Err(SolverError::InvalidConfig(m)) => Err(CliError::Config(m)),
        Err(e) => {
            Ok(Outcome { x: None, history: Vec::new(), termination: "error".into(), reason: Some(e.to_string()), wall })
        }
    }
}

pub fn run(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    let solver = cfg.solver_config()?;
    let problem = cfg.problem.build::<f64>(cfg.seed);
    let out = execute(&problem, &solver)?;
    output::write_run(&cfg.output_dir, &out.history, &out.summary(&solver, cfg.seed))
        .with_context(|| format!("writing {}", cfg.output_dir.display()))?;
    match out.reason {
        Some(r) => Err(CliError::Breakdown(r)),
        None => Ok(()),
    }
}

fn config_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Config(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no *.json configurations in {}", dir.display())));
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn compare(dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let files = config_files(dir)?;
    let configs = files.iter().map(|f| RunConfig::load(f)).collect::<Result<Vec<_>, _>>()?;
    let first = &configs[0];
    for (f, c) in files.iter().zip(&configs) {
        if c.problem != first.problem || c.seed != first.seed {
            return Err(CliError::Config(format!(
                "{} does not share the problem and seed of {}",
                f.display(),
                files[0].display()
            )));
        }
    }
    let solvers = configs.iter().map(|c| c.solver_config()).collect::<Result<Vec<_>, _>>()?;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| first.output_dir.clone());
    let problem = first.problem.build::<f64>(first.seed);

    let outcomes = solvers.par_iter().map(|s| execute(&problem, s)).collect::<Result<Vec<_>, _>>()?;

    let names: Vec<String> = files.iter().map(|f| stem(f)).collect();
    let labels: Vec<String> = solvers
        .iter()
        .zip(&names)
        .map(|(s, n)| {
            let l = s.method.label();
            if solvers.iter().filter(|t| t.method == s.method).count() > 1 {
                format!("{l}[{n}]")
            } else {
                l.to_string()
            }
        })
        .collect();

    let mut matrix = String::from("config,method,iterations,termination,rre,ssim,gini,kappa,n_A,n_Psi,n_Psidag\n");
    let mut long = String::from("method,iter,metric,value\n");
    for (((name, label), solver), o) in names.iter().zip(&labels).zip(&solvers).zip(&outcomes) {
        output::write_run(&out_dir.join(name), &o.history, &o.summary(solver, first.seed))?;
        let last = o.history.last();
        let f = |v: Option<f64>| v.map(num).unwrap_or_default();
        let c = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            matrix,
            "{name},{label},{},{},{},{},{},{},{},{},{}",
            o.history.len(),
            o.termination,
            f(last.and_then(|h| h.rre)),
            f(last.and_then(|h| h.ssim)),
            f(last.map(|h| h.gini)),
            f(last.map(|h| h.kappa)),
            c(last.map(|h| h.n_a)),
            c(last.map(|h| h.n_psi)),
            c(last.map(|h| h.n_psidag)),
        );
        for h in &o.history {
            let metrics = [("mu", Some(h.mu)), ("rre", h.rre), ("ssim", h.ssim), ("gini", Some(h.gini)), ("kappa", Some(h.kappa))];
            for (m, v) in metrics {
                if let Some(v) = v {
                    let _ = writeln!(long, "{label},{},{m},{}", h.iter, num(v));
                }
            }
        }
    }
    fs::write(out_dir.join("metrics.csv"), matrix)?;
    fs::write(out_dir.join("history_long.csv"), long)?;
    Ok(())
}

/// The MM rule a sweep varies, or a configuration error.
fn mm_p(scheme: WeightScheme, method: Method) -> Result<f64, CliError> {
    match scheme {
        WeightScheme::Mm { p, .. } => Ok(p),
        WeightScheme::Ias { .. } => Err(CliError::Config(format!("{method}: IAS weights have no ε to sweep"))),
        other => Err(CliError::Config(format!("{method}: weights {other:?} have no ε to sweep"))),
    }
}

pub fn sweep_epsilon(path: &Path, eps: &[f64], methods: Option<&[Method]>) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    if eps.is_empty() {
        return Err(CliError::Config("empty ε list".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(CliError::Config(format!("ε must be positive (got {e})")));
    }
    let default = [cfg.method()];
    let methods = methods.unwrap_or(&default);
    let mut jobs = Vec::new();
    for &m in methods {
        let base = match cfg.weights {
            Some(_) => cfg.weights()?,
            None => m.default_weights(cfg.problem.is_2d()),
        };
        let p = mm_p(base, m)?;
        for &e in eps {
            jobs.push((m, e, cfg.solver_config_for(m, WeightScheme::Mm { p, epsilon: e })?));
        }
    }
    let problem = cfg.problem.build::<f64>(cfg.seed);
    let outcomes = jobs.par_iter().map(|(_, _, s)| execute(&problem, s)).collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("method,eps,final_rre,final_gini\n");
    for ((m, e, _), o) in jobs.iter().zip(&outcomes) {
        let last = o.history.last();
        let f = |v: Option<f64>| v.map(num).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{}", m.label(), num(*e), f(last.and_then(|h| h.rre)), f(last.map(|h| h.gini)));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("sweep_epsilon.csv"), csv)?;
    Ok(())
}

#[derive(Serialize)]
struct SpectraReport<'a> {
    method: &'a str,
    iterations: usize,
    mu: f64,
    standard: &'a BoundReport,
    priorconditioned: &'a BoundReport,
}

fn bounds_csv(r: &BoundReport) -> String {
    let mut s = String::from("i,lambda,lower,upper\n");
    for e in &r.entries {
        let _ = writeln!(s, "{},{},{},{}", e.i, num(e.lambda), num(e.lower), num(e.upper));
    }
    s
}

pub fn spectra(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    let solver = cfg.solver_config()?;
    let problem = cfg.problem.build::<f64>(cfg.seed);
    let n = problem.a.ncols();
    if n > SPECTRA_MAX_N {
        return Err(CliError::Config(format!("spectra needs N ≤ {SPECTRA_MAX_N} (got {n})")));
    }
    let out = execute(&problem, &solver)?;
    let (Some(x), Some(last)) = (out.x.as_ref(), out.history.last()) else {
        return Err(CliError::Breakdown(out.reason.unwrap_or_else(|| "no iterate".into())));
    };
    let mu = last.mu;
    let w = solver
        .weights
        .compute(&problem.psi.apply(x), 1.0 / mu)
        .map_err(|e| CliError::Other(anyhow::anyhow!("weights at the final iterate: {e}")))?;
    let inst = DenseInstance { a: to_dense(problem.a.as_ref()), psi: problem.psi.clone(), w, mu };
    let st = verify_theorem_bounds(Which::Standard, &inst).map_err(|e| CliError::Other(e.into()))?;
    let pr = verify_theorem_bounds(Which::Priorconditioned, &inst).map_err(|e| CliError::Other(e.into()))?;

    fs::create_dir_all(&cfg.output_dir)?;
    let report =
        SpectraReport { method: solver.method.label(), iterations: out.history.len(), mu, standard: &st, priorconditioned: &pr };
    fs::write(cfg.output_dir.join("spectra.json"), serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n")?;
    fs::write(cfg.output_dir.join("spectra_standard.csv"), bounds_csv(&st))?;
    fs::write(cfg.output_dir.join("spectra_priorconditioned.csv"), bounds_csv(&pr))?;
    if out.broke_down() {
        return Err(CliError::Breakdown(out.reason.unwrap_or_default()));
    }
    Ok(())
}
