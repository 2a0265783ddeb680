//! CSV and JSON emission of fits, grids, SROC curves, simulation reports
//! and run manifests.

use std::fs::File;
use std::path::{Path, PathBuf};

use fcmm_core::estimation::{FitResult, GridEntry};
use fcmm_core::likelihood::{ModelSpec, ParamSet};
use fcmm_core::simulation::{ParamSummary, SimStudyReport};
use fcmm_core::sroc::TestSroc;
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

const NA: &str = "NA";

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        NA.to_string()
    }
}

/// File-name form of a spec label.
pub fn file_label(spec: &ModelSpec) -> String {
    spec.label().replace(['/', ','], "_")
}

/// `parameter,estimate,se` rows for π, δ and τ, then the log-likelihood.
pub fn write_fit_csv(r: &FitResult, path: &Path) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "estimate", "se"])?;
    let names = ParamSet::names(r.spec.n_tests());
    for (i, (name, est)) in names.iter().zip(r.estimates.to_vec()).enumerate() {
        let se = r.se(i).map(num).unwrap_or_else(|| NA.into());
        w.write_record([name.clone(), num(est), se])?;
    }
    w.write_record(["loglik".to_string(), num(r.loglik), NA.into()])?;
    w.flush()?;
    Ok(())
}

pub fn write_convergence_csv(r: &FitResult, path: &Path) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["key", "value"])?;
    for (k, v) in convergence_pairs(r) {
        w.write_record([k, &v])?;
    }
    w.flush()?;
    Ok(())
}

fn convergence_pairs(r: &FitResult) -> Vec<(&'static str, String)> {
    vec![
        ("spec", r.spec.label()),
        ("converged", r.converged.to_string()),
        ("termination", r.termination.as_str().to_string()),
        ("iterations", r.iterations.to_string()),
        ("evaluations", r.evaluations.to_string()),
        ("grad_norm", num(r.grad_norm)),
        ("hessian_pd", r.hessian_pd.to_string()),
        ("tau_at_cap", r.tau_at_cap.to_string()),
        ("neg_loglik", num(-r.loglik)),
    ]
}

pub fn fit_json(r: &FitResult) -> Value {
    let names = ParamSet::names(r.spec.n_tests());
    let params: Vec<Value> = names
        .iter()
        .zip(r.estimates.to_vec())
        .enumerate()
        .map(|(i, (n, e))| json!({ "name": n, "estimate": e, "se": r.se(i) }))
        .collect();
    let h = &r.hessian;
    let hessian: Vec<Vec<f64>> = (0..h.rows()).map(|i| h.row(i).to_vec()).collect();
    json!({
        "spec": r.spec.label(),
        "margin": r.spec.margin().name(),
        "families": r.spec.families().iter().map(|f| f.name()).collect::<Vec<_>>(),
        "parameters": params,
        "loglik": r.loglik,
        "neg_loglik": -r.loglik,
        "converged": r.converged,
        "termination": r.termination.as_str(),
        "iterations": r.iterations,
        "evaluations": r.evaluations,
        "grad_norm": r.grad_norm,
        "hessian_pd": r.hessian_pd,
        "tau_at_cap": r.tau_at_cap,
        "hessian_unconstrained": hessian,
    })
}

pub fn write_json(v: &Value, path: &Path) -> Result<(), CliError> {
    serde_json::to_writer_pretty(create(path)?, v)?;
    Ok(())
}

/// Writes one fit in the chosen format under `stem`; returns the files.
pub fn emit_fit(r: &FitResult, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>, CliError> {
    match format {
        Format::Csv => {
            let a = dir.join(format!("{stem}.csv"));
            let b = dir.join(format!("{stem}_convergence.csv"));
            write_fit_csv(r, &a)?;
            write_convergence_csv(r, &b)?;
            Ok(vec![a, b])
        }
        Format::Json => {
            let a = dir.join(format!("{stem}.json"));
            write_json(&fit_json(r), &a)?;
            Ok(vec![a])
        }
    }
}

/// Ranking table in grid order (log-likelihood descending).
pub fn write_grid_csv(entries: &[GridEntry], path: &Path) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["rank", "spec", "margin", "copulas", "loglik", "neg_loglik", "converged", "iterations", "status"])?;
    for (k, e) in entries.iter().enumerate() {
        let (ll, conv, it, status) = match &e.outcome {
            Ok(r) => (r.loglik, r.converged.to_string(), r.iterations.to_string(), r.termination.as_str().to_string()),
            Err(msg) => (f64::NAN, "false".into(), NA.into(), msg.clone()),
        };
        w.write_record([
            (k + 1).to_string(),
            e.spec.label(),
            e.spec.margin().name().to_string(),
            e.spec.copula_label(),
            num(ll),
            num(-ll),
            conv,
            it,
            status,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn grid_json(entries: &[GridEntry]) -> Value {
    Value::Array(
        entries
            .iter()
            .enumerate()
            .map(|(k, e)| match &e.outcome {
                Ok(r) => json!({ "rank": k + 1, "fit": fit_json(r) }),
                Err(msg) => json!({ "rank": k + 1, "spec": e.spec.label(), "error": msg }),
            })
            .collect(),
    )
}

/// `sroc_test<t>_q<q>_<direction>.csv` per curve and `contour_test<t>.csv`
/// per test; tests are numbered from 1.
pub fn emit_sroc(tests: &[TestSroc], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for t in tests {
        let n = t.test + 1;
        for c in &t.curves {
            let path = dir.join(format!("sroc_test{n}_q{}_{}.csv", c.quantile_q, c.direction));
            let mut w = writer(&path)?;
            w.write_record(["x0", "x1", "z0", "z1"])?;
            for p in &c.points {
                w.write_record([num(p.x0), num(p.x1), num(p.z0), num(p.z1)])?;
            }
            w.flush()?;
            files.push(path);
        }
        let path = dir.join(format!("contour_test{n}.csv"));
        let mut w = writer(&path)?;
        w.write_record(["x0", "x1", "density"])?;
        let g = &t.contour;
        for (i, x0) in g.grid_x0.iter().enumerate() {
            for (j, x1) in g.grid_x1.iter().enumerate() {
                w.write_record([num(*x0), num(*x1), num(g.density[(i, j)])])?;
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// Rows Bias, SD, sqrtVbar and RMSE (all ×100), one column per parameter.
pub fn write_sim_report(r: &SimStudyReport, path: &Path) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["statistic".to_string()];
    header.extend(r.params.iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    let rows: [(&str, fn(&ParamSummary) -> f64); 4] = [
        ("Bias", |p| p.bias),
        ("SD", |p| p.sd),
        ("sqrtVbar", |p| p.sqrt_mean_var),
        ("RMSE", |p| p.rmse),
    ];
    for (label, f) in rows {
        let mut rec = vec![label.to_string()];
        rec.extend(r.params.iter().map(|p| num(f(p))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sim_summary(reports: &[SimStudyReport], path: &Path) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["spec", "replicates", "converged", "with_std_errors", "convergence_rate"])?;
    for r in reports {
        w.write_record([
            r.spec.label(),
            r.replicates.to_string(),
            r.converged.to_string(),
            r.with_std_errors.to_string(),
            num(r.convergence_rate()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sim_json(reports: &[SimStudyReport]) -> Value {
    Value::Array(
        reports
            .iter()
            .map(|r| {
                json!({
                    "spec": r.spec.label(),
                    "replicates": r.replicates,
                    "converged": r.converged,
                    "with_std_errors": r.with_std_errors,
                    "parameters": r.params.iter().map(|p| json!({
                        "name": p.name, "truth": p.truth, "bias": p.bias, "sd": p.sd,
                        "sqrt_vbar": p.sqrt_mean_var, "rmse": p.rmse,
                    })).collect::<Vec<_>>(),
                    "failures": r.failures.iter().map(|(k, m)| json!({"replicate": k, "reason": m})).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

/// Records what produced the files in an output directory.
pub fn write_manifest(dir: &Path, command: &str, config: Value, seed: Option<u64>, files: &[PathBuf]) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let v = json!({
        "command": command,
        "config": config,
        "seed": seed,
        "library": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "files": names,
    });
    write_json(&v, &path)?;
    Ok(path)
}
