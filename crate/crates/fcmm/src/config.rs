//! JSON truth configurations for `simulate` and `sim-study`.

use std::path::Path;

use fcmm_core::copula::CopulaFamily;
use fcmm_core::likelihood::{ModelSpec, ParamSet};
use fcmm_core::margins::MarginKind;
use fcmm_core::simulation::{DVineConfig, Dependence, Edge, SimDesign, SizeDist};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub n_studies: usize,
    pub margin: String,
    /// Linking copulas: shorthand such as `cln0-270` or a comma list of 2T names.
    pub copulas: String,
    pub pi1: Vec<f64>,
    pub pi0: Vec<f64>,
    pub delta1: Vec<f64>,
    pub delta0: Vec<f64>,
    /// Required unless `dvine` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default = "default_prevalence")]
    pub prevalence: f64,
    #[serde(default)]
    pub size: SizeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dvine: Option<DVineJson>,
}

fn default_prevalence() -> f64 {
    0.4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeConfig {
    pub shape: f64,
    pub rate: f64,
    pub lag: f64,
}

impl Default for SizeConfig {
    fn default() -> Self {
        let d = SizeDist::default();
        SizeConfig {
            shape: d.shape,
            rate: d.rate,
            lag: d.lag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeJson {
    pub family: String,
    pub tau: f64,
}

/// Edges of the D-vine on the path U11 – U01 – U12 – U02.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DVineJson {
    pub level1: [EdgeJson; 3],
    pub level2: [EdgeJson; 2],
    pub level3: EdgeJson,
}

fn edge(e: &EdgeJson) -> Result<Edge, CliError> {
    let family: CopulaFamily = e.family.parse()?;
    if !family.admits_tau(e.tau) {
        return Err(CliError::Validation(format!(
            "vine edge {}: tau {} has the wrong sign or magnitude",
            e.family, e.tau
        )));
    }
    Ok(Edge::new(family, e.tau))
}

impl TruthConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn design(&self, replicates: usize, seed: u64) -> Result<SimDesign, CliError> {
        let margin: MarginKind = self.margin.parse()?;
        let t = self.pi1.len();
        let spec = ModelSpec::parse(margin, &self.copulas, t)?;
        let dependence = match &self.dvine {
            None => Dependence::OneFactor,
            Some(v) => Dependence::DVine(DVineConfig {
                level1: [edge(&v.level1[0])?, edge(&v.level1[1])?, edge(&v.level1[2])?],
                level2: [edge(&v.level2[0])?, edge(&v.level2[1])?],
                level3: edge(&v.level3)?,
            }),
        };
        let tau = match (&self.tau, &dependence) {
            (Some(t), _) => t.clone(),
            (None, Dependence::DVine(_)) => vec![0.0; 2 * t],
            (None, Dependence::OneFactor) => {
                return Err(CliError::Validation("truth config needs 'tau' or 'dvine'".into()))
            }
        };
        let truth = ParamSet::new(
            self.pi1.clone(),
            self.pi0.clone(),
            self.delta1.clone(),
            self.delta0.clone(),
            tau,
        )?;
        let design = SimDesign {
            n_studies: self.n_studies,
            spec,
            truth,
            prevalence: self.prevalence,
            size_dist: SizeDist {
                shape: self.size.shape,
                rate: self.size.rate,
                lag: self.size.lag,
            },
            dependence,
            replicates,
            seed,
        };
        design.validate()?;
        Ok(design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        for name in ["three_test_truth.json", "dvine_truth.json"] {
            let cfg = TruthConfig::load(&dir.join(name)).unwrap();
            cfg.design(10, 1).unwrap();
        }
    }

    #[test]
    fn one_factor_needs_tau() {
        let text = r#"{"n_studies": 5, "margin": "normal", "copulas": "bvn",
            "pi1": [0.8], "pi0": [0.7], "delta1": [1.0], "delta0": [1.0]}"#;
        let cfg: TruthConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.design(2, 1).is_err());
    }
}
