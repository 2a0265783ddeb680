//! Rayon fan-out for model grids and simulation studies. Results are
//! collected in input order, so output does not depend on the thread count.

use fcmm_core::estimation::{fit, rank_grid, FitConfig, GridEntry};
use fcmm_core::likelihood::{Dataset, ModelSpec};
use fcmm_core::simulation::{check_specs, run_replicate, summarize, ReplicateOutcome, SimDesign, SimStudyReport};
use rayon::prelude::*;

use crate::error::CliError;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FCMM_THREADS";

/// Thread count from [`THREADS_ENV`], or rayon's default when unset.
pub fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        _ => Ok(None),
    }
}

pub fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

pub fn fit_grid(
    pool: &rayon::ThreadPool,
    d: &Dataset,
    specs: &[ModelSpec],
    cfg: &FitConfig,
) -> Result<Vec<GridEntry>, CliError> {
    if specs.is_empty() {
        return Err(CliError::Validation("empty model grid".into()));
    }
    let mut out: Vec<GridEntry> = pool.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(index, spec)| {
                let mut c = cfg.clone();
                if c.start.as_ref().is_some_and(|s| s.validate(spec).is_err()) {
                    c.start = None;
                }
                GridEntry {
                    index,
                    spec: spec.clone(),
                    outcome: fit(d, spec, &c).map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    rank_grid(&mut out);
    Ok(out)
}

/// Every replicate's outcome per spec, in replicate order.
pub fn sim_outcomes(
    pool: &rayon::ThreadPool,
    design: &SimDesign,
    specs: &[ModelSpec],
    cfg: &FitConfig,
) -> Result<Vec<Vec<ReplicateOutcome>>, CliError> {
    if design.replicates < 2 {
        return Err(CliError::Validation("a simulation study needs at least 2 replicates".into()));
    }
    design.validate()?;
    check_specs(design, specs)?;
    let per_rep: Vec<Vec<ReplicateOutcome>> = pool.install(|| {
        (0..design.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(design, specs, cfg, r))
            .collect()
    });
    let mut per_spec = vec![Vec::with_capacity(design.replicates); specs.len()];
    for rep in per_rep {
        for (k, o) in rep.into_iter().enumerate() {
            per_spec[k].push(o);
        }
    }
    Ok(per_spec)
}

pub fn sim_study(
    pool: &rayon::ThreadPool,
    design: &SimDesign,
    specs: &[ModelSpec],
    cfg: &FitConfig,
) -> Result<Vec<SimStudyReport>, CliError> {
    let per_spec = sim_outcomes(pool, design, specs, cfg)?;
    let truth = design.truth_vector();
    Ok(specs
        .iter()
        .zip(&per_spec)
        .map(|(s, o)| summarize(s, &truth, o))
        .collect())
}
