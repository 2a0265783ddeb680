//! The `fcmm` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcmm_core::copula::CopulaFamily;
use fcmm_core::estimation::{fit, FitConfig, FitResult};
use fcmm_core::likelihood::{Dataset, ModelSpec, STANDARD_COPULAS};
use fcmm_core::margins::MarginKind;
use fcmm_core::quadrature::{DEFAULT_NQ, MAX_NQ};
use fcmm_core::simulation::simulate_replicate;
use fcmm_core::sroc::{sroc_for_fit, DEFAULT_GRID};
use serde::Serialize;

use crate::config::TruthConfig;
use crate::error::CliError;
use crate::io::{load_dataset, save_dataset, Layout};
use crate::parallel;
use crate::report::{self, Format};

#[derive(Debug, Parser)]
#[command(name = "fcmm", version, about = "One-factor copula mixed models for diagnostic test meta-analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset and print its dimensions.
    Validate(DataArgs),
    /// Fit one model.
    Fit(FitCmd),
    /// Fit a grid of models and rank them by log-likelihood.
    FitGrid(GridCmd),
    /// Fit one model and emit quantile-regression curves and contours.
    Sroc(SrocCmd),
    /// Simulate datasets from a truth configuration.
    Simulate(SimulateCmd),
    /// Repeatedly simulate and fit, summarizing bias, SD and RMSE.
    SimStudy(SimStudyCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginArg {
    Normal,
    Beta,
}

impl From<MarginArg> for MarginKind {
    fn from(m: MarginArg) -> Self {
        match m {
            MarginArg::Normal => MarginKind::NormalLogit,
            MarginArg::Beta => MarginKind::BetaIdentity,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Read `study,test,tp,fn,tn,fp` cells instead of counts.
    #[arg(long)]
    pub cells: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimArgs {
    /// Quadrature points per dimension.
    #[arg(long, default_value_t = DEFAULT_NQ)]
    pub nq: usize,
    /// Inner quadrature points; defaults to --nq.
    #[arg(long)]
    pub nq_inner: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl OptimArgs {
    fn config(&self) -> Result<FitConfig, CliError> {
        for n in std::iter::once(self.nq).chain(self.nq_inner) {
            if n == 0 || n > MAX_NQ {
                return Err(CliError::Validation(format!("quadrature size must be in 1..={MAX_NQ}, got {n}")));
            }
        }
        Ok(FitConfig {
            nq: self.nq,
            nq_inner: self.nq_inner,
            max_iter: self.max_iter,
            ..FitConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    #[serde(skip)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MarginArg::Normal)]
    pub margin: MarginArg,
    /// 2T comma-separated families or a shorthand such as cln0-270.
    #[arg(long, default_value = "cln0-270")]
    pub copulas: String,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Exit with status 4 when the fit does not converge.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Margins to cross with the copula specs.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MarginArg::Normal, MarginArg::Beta])]
    pub margin: Vec<MarginArg>,
    /// Copula specs separated by ';'.
    #[arg(long, value_delimiter = ';', default_values_t = STANDARD_COPULAS.map(String::from))]
    pub copulas: Vec<String>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Exit with status 4 when any fit does not converge.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SrocCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MarginArg::Normal)]
    pub margin: MarginArg,
    #[arg(long, default_value = "cln0-270")]
    pub copulas: String,
    /// Quantile levels of the regression curves.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.5, 0.99])]
    pub quantiles: Vec<f64>,
    /// Pair copula family; defaults to a linking family of the test that admits the pair tau.
    #[arg(long)]
    pub pair_family: Option<String>,
    /// Points on the conditioning grid and per contour axis.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateCmd {
    /// Truth configuration JSON.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of datasets to write.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimStudyCmd {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Margin of the fitted specs; defaults to the truth margin.
    #[arg(long, value_enum)]
    pub margin: Option<MarginArg>,
    /// Fitted copula specs separated by ';'; defaults to the truth spec.
    #[arg(long, value_delimiter = ';')]
    pub copulas: Vec<String>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

fn load(d: &DataArgs) -> Result<Dataset, CliError> {
    load_dataset(&d.data, if d.cells { Layout::Cells } else { Layout::Counts })
}

fn out_dir(p: &Path) -> Result<&Path, CliError> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn config_json<T: Serialize>(args: &T, format: Option<Format>) -> serde_json::Value {
    let mut v = serde_json::to_value(args).unwrap_or(serde_json::Value::Null);
    if let (Some(f), Some(obj)) = (format, v.as_object_mut()) {
        obj.insert("format".into(), format!("{f:?}").to_lowercase().into());
    }
    if let Some(obj) = v.as_object_mut() {
        obj.insert(
            "threads".into(),
            parallel::thread_count().ok().flatten().map_or(serde_json::Value::Null, Into::into),
        );
    }
    v
}

fn check_strict(strict: bool, results: &[&FitResult]) -> Result<(), CliError> {
    if !strict {
        return Ok(());
    }
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("{} ({})", r.spec.label(), r.termination.as_str()))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(bad.join(", ")))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(a) => {
            let d = load(&a)?;
            println!("ok: {} studies, {} tests", d.len(), d.n_tests());
            Ok(())
        }
        Command::Fit(a) => {
            let d = load(&a.data)?;
            let spec = ModelSpec::parse(a.margin.into(), &a.copulas, d.n_tests())?;
            let cfg = a.optim.config()?;
            let r = fit(&d, &spec, &cfg)?;
            let dir = out_dir(&a.out.out)?;
            let files = report::emit_fit(&r, dir, "fit", a.out.format)?;
            report::write_manifest(dir, "fit", config_json(&a, Some(a.out.format)), None, &files)?;
            println!("{}: loglik {:.4}, converged {}", spec.label(), r.loglik, r.converged);
            check_strict(a.strict, &[&r])
        }
        Command::FitGrid(a) => {
            let d = load(&a.data)?;
            let mut specs = Vec::new();
            for &m in &a.margin {
                for c in &a.copulas {
                    specs.push(ModelSpec::parse(m.into(), c, d.n_tests())?);
                }
            }
            let cfg = a.optim.config()?;
            let pool = parallel::pool()?;
            let grid = parallel::fit_grid(&pool, &d, &specs, &cfg)?;
            let dir = out_dir(&a.out.out)?;
            let mut files = Vec::new();
            match a.out.format {
                Format::Csv => {
                    let p = dir.join("grid.csv");
                    report::write_grid_csv(&grid, &p)?;
                    files.push(p);
                }
                Format::Json => {
                    let p = dir.join("grid.json");
                    report::write_json(&report::grid_json(&grid), &p)?;
                    files.push(p);
                }
            }
            for e in &grid {
                if let Ok(r) = &e.outcome {
                    let stem = format!("fit_{}", report::file_label(&e.spec));
                    files.extend(report::emit_fit(r, dir, &stem, a.out.format)?);
                }
            }
            report::write_manifest(dir, "fit-grid", config_json(&a, Some(a.out.format)), None, &files)?;
            for (k, e) in grid.iter().enumerate() {
                match &e.outcome {
                    Ok(r) => println!("{:>2} {:<22} loglik {:.4}", k + 1, e.spec.label(), r.loglik),
                    Err(m) => println!("{:>2} {:<22} failed: {m}", k + 1, e.spec.label()),
                }
            }
            let ok: Vec<&FitResult> = grid.iter().filter_map(|e| e.outcome.as_ref().ok()).collect();
            if ok.is_empty() {
                return Err(CliError::Numerical("every fit in the grid failed".into()));
            }
            check_strict(a.strict, &ok)?;
            if a.strict && ok.len() < grid.len() {
                return Err(CliError::NotConverged("some fits in the grid failed".into()));
            }
            Ok(())
        }
        Command::Sroc(a) => {
            let d = load(&a.data)?;
            let spec = ModelSpec::parse(a.margin.into(), &a.copulas, d.n_tests())?;
            let pair = a
                .pair_family
                .as_deref()
                .map(str::parse::<CopulaFamily>)
                .transpose()?;
            if a.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                return Err(CliError::Validation("quantiles must lie in (0, 1)".into()));
            }
            let cfg = a.optim.config()?;
            let r = fit(&d, &spec, &cfg)?;
            let tests = sroc_for_fit(&spec, &r.estimates, &a.quantiles, pair, a.grid)?;
            let dir = out_dir(&a.out.out)?;
            let mut files = report::emit_fit(&r, dir, "fit", a.out.format)?;
            files.extend(report::emit_sroc(&tests, dir)?);
            report::write_manifest(dir, "sroc", config_json(&a, Some(a.out.format)), None, &files)?;
            for t in &tests {
                println!("test {}: pair {} tau {:.4}", t.test + 1, t.family, t.tau_pair);
            }
            check_strict(a.strict, &[&r])
        }
        Command::Simulate(a) => {
            let cfg = TruthConfig::load(&a.truth)?;
            let design = cfg.design(a.replicates, a.seed)?;
            let dir = out_dir(&a.out)?;
            let mut files = Vec::new();
            for r in 0..a.replicates as u64 {
                let d = simulate_replicate(&design, r)?;
                let p = dir.join(format!("dataset_r{r}.csv"));
                save_dataset(&d, &p)?;
                files.push(p);
            }
            let mut conf = config_json(&a, None);
            if let Some(obj) = conf.as_object_mut() {
                obj.insert("truth_config".into(), serde_json::to_value(&cfg)?);
            }
            report::write_manifest(dir, "simulate", conf, Some(a.seed), &files)?;
            println!("wrote {} datasets", files.len());
            Ok(())
        }
        Command::SimStudy(a) => {
            let cfg = TruthConfig::load(&a.truth)?;
            let design = cfg.design(a.replicates, a.seed)?;
            let margin: MarginKind = a.margin.map(Into::into).unwrap_or(design.spec.margin());
            let specs = if a.copulas.is_empty() {
                vec![ModelSpec::new(margin, design.spec.families().to_vec())?]
            } else {
                a.copulas
                    .iter()
                    .map(|c| ModelSpec::parse(margin, c, design.spec.n_tests()))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let fit_cfg = a.optim.config()?;
            let pool = parallel::pool()?;
            let reports = parallel::sim_study(&pool, &design, &specs, &fit_cfg)?;
            let dir = out_dir(&a.out.out)?;
            let mut files = Vec::new();
            match a.out.format {
                Format::Csv => {
                    for r in &reports {
                        let p = dir.join(format!("sim_{}.csv", report::file_label(&r.spec)));
                        report::write_sim_report(r, &p)?;
                        files.push(p);
                    }
                    let p = dir.join("sim_summary.csv");
                    report::write_sim_summary(&reports, &p)?;
                    files.push(p);
                }
                Format::Json => {
                    let p = dir.join("sim.json");
                    report::write_json(&report::sim_json(&reports), &p)?;
                    files.push(p);
                }
            }
            let mut conf = config_json(&a, Some(a.out.format));
            if let Some(obj) = conf.as_object_mut() {
                obj.insert("truth_config".into(), serde_json::to_value(&cfg)?);
            }
            report::write_manifest(dir, "sim-study", conf, Some(a.seed), &files)?;
            for r in &reports {
                println!("{}: {} of {} replicates converged", r.spec.label(), r.converged, r.replicates);
            }
            Ok(())
        }
    }
}
