use std::fs;
use std::path::{Path, PathBuf};

use priorkrylov::priorcond::PinvStrategy;
use priorkrylov::problems::ProblemSpec;
use priorkrylov::regparam::DpConfig;
use priorkrylov::solvers::{Method, SolverConfig};
use priorkrylov::weights::WeightScheme;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment: problem, method, weights, where to write, which seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    /// Omitted: the method's built-in preset.
    #[serde(default)]
    pub weights: Option<WeightsSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either a bare tag (`"ps-gks"`) or a tag with solver overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodSpec {
    Tag(Method),
    Full(MethodSection),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub tag: Method,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub h: Option<usize>,
    #[serde(default)]
    pub reorthogonalize: Option<bool>,
    #[serde(default)]
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub d_min: Option<usize>,
    #[serde(default)]
    pub d_max: Option<usize>,
    #[serde(default)]
    pub dp: Option<DpConfig>,
    #[serde(default)]
    pub pinv: Option<PinvStrategy>,
}

/// A preset name (`"MM3"`, `"IAS"`, ...) or an explicit scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Preset(String),
    Scheme(WeightScheme),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.solver_config()?;
        Ok(cfg)
    }

    pub fn method(&self) -> Method {
        match &self.method {
            MethodSpec::Tag(m) => *m,
            MethodSpec::Full(s) => s.tag,
        }
    }

    pub fn weights(&self) -> Result<WeightScheme, CliError> {
        match &self.weights {
            None => Ok(self.method().default_weights(self.problem.is_2d())),
            Some(WeightsSpec::Preset(name)) => {
                WeightScheme::preset(name).ok_or_else(|| CliError::Config(format!("unknown weight preset `{name}`")))
            }
            Some(WeightsSpec::Scheme(s)) => Ok(*s),
        }
    }

    /// Validated solver settings.
    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        self.solver_config_for(self.method(), self.weights()?)
    }

    /// Solver settings for another method and weight rule, keeping this
    /// configuration's overrides.
    pub fn solver_config_for(&self, method: Method, weights: WeightScheme) -> Result<SolverConfig, CliError> {
        self.problem.validate().map_err(CliError::Config)?;
        let mut cfg = SolverConfig::new(method).with_weights(weights);
        if let MethodSpec::Full(s) = &self.method {
            if let Some(v) = s.max_iter {
                cfg.max_iter = v;
            }
            if let Some(v) = s.h {
                cfg.h = v;
            }
            if let Some(v) = s.reorthogonalize {
                cfg.reorthogonalize = v;
            }
            if let Some(v) = s.stop_tol {
                cfg.stop_tol = v;
            }
            if let Some(v) = s.d_min {
                cfg.d_min = v;
            }
            if let Some(v) = s.d_max {
                cfg.d_max = v;
            }
            if let Some(v) = s.dp {
                cfg.dp = v;
            }
            cfg.pinv = s.pinv;
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_presets() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"problem": {"kind": "dct1d"}, "method": "s-gks", "seed": 3}"#).unwrap();
        let sc = cfg.solver_config().unwrap();
        assert_eq!(sc.method, Method::Sgks);
        assert_eq!(sc.weights, WeightScheme::preset("MM2").unwrap());
        assert_eq!(sc.max_iter, 150);
    }

    #[test]
    fn full_method_section_overrides_defaults() {
        let text = r#"{
            "problem": {"kind": "ct2d", "n": 16},
            "method": {"tag": "rec-ps-gks", "max_iter": 7, "d_min": 4, "d_max": 9},
            "weights": {"scheme": "mm", "p": 1.0, "epsilon": 0.05}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let sc = cfg.solver_config().unwrap();
        assert_eq!((sc.max_iter, sc.d_min, sc.d_max), (7, 4, 9));
        assert_eq!(sc.weights, WeightScheme::Mm { p: 1.0, epsilon: 0.05 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<RunConfig, _> =
            serde_json::from_str(r#"{"problem": {"kind": "dct1d"}, "method": "gks", "colour": 1}"#);
        assert!(r.is_err());
        let r: Result<RunConfig, _> =
            serde_json::from_str(r#"{"problem": {"kind": "dct1d", "size": 3}, "method": "gks"}"#);
        assert!(r.is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"problem": {"kind": "dct1d", "m": 2000}, "method": "gks"}"#,
        )
        .unwrap();
        assert!(cfg.solver_config().is_err());
        let cfg: RunConfig =
            serde_json::from_str(r#"{"problem": {"kind": "dct1d"}, "method": "gks", "weights": "MM9"}"#).unwrap();
        assert!(cfg.solver_config().is_err());
    }
}
