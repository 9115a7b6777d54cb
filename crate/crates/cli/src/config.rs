//! Run configuration: an optional TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use alm_panoc::panoc::PanocParams;
use alm_panoc::problems::ChainParams;
use alm_panoc::{AlmParams, SolverVariant};
use serde::Deserialize;

use crate::CliError;

/// Everything a run can be configured with. Every field is optional so that
/// a file and the flags can be layered; see [`RunConfig::overlay`].
///
/// ```toml
/// problem = "hs071"
/// variant = "struct-panoc-ils"
/// seed = 3
///
/// [alm]
/// eps = 1e-4
/// max_outer = 50
///
/// [chain]
/// n_balls = 3
/// horizon = 20
/// ```
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub variant: Option<String>,
    pub variants: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub warm_start: Option<bool>,
    pub n_steps: Option<usize>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub alm: AlmSection,
    #[serde(default)]
    pub panoc: PanocSection,
    #[serde(default)]
    pub chain: ChainSection,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlmSection {
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub eps0: Option<f64>,
    pub rho_eps: Option<f64>,
    pub sigma0: Option<f64>,
    pub theta: Option<f64>,
    pub delta_growth: Option<f64>,
    pub sigma_max: Option<f64>,
    pub y_max: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_time_s: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanocSection {
    pub max_iter: Option<usize>,
    pub tau_min: Option<f64>,
    pub max_ls_iter: Option<usize>,
    pub sigma_coeff: Option<f64>,
    pub memory: Option<usize>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub n_balls: Option<usize>,
    pub horizon: Option<usize>,
}

macro_rules! overlay_fields {
    ($dst:expr, $src:expr; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay_fields!(self, top; problem, variant, variants, seed, out, warm_start, n_steps, jobs);
        overlay_fields!(self.alm, top.alm;
            eps, delta, eps0, rho_eps, sigma0, theta, delta_growth, sigma_max, y_max, max_outer, max_time_s);
        overlay_fields!(self.panoc, top.panoc; max_iter, tau_min, max_ls_iter, sigma_coeff, memory);
        overlay_fields!(self.chain, top.chain; n_balls, horizon);
        self
    }

    /// Validates the configuration and fills in defaults.
    pub fn resolve(&self) -> Result<Settings, CliError> {
        let parse = |name: &str| SolverVariant::from_str(name).map_err(|e| CliError::Config(e.to_string()));
        let mut variants = Vec::new();
        if let Some(v) = &self.variant {
            variants.push(parse(v)?);
        }
        for v in self.variants.iter().flatten() {
            let v = parse(v)?;
            if !variants.contains(&v) {
                variants.push(v);
            }
        }

        let defaults = AlmParams::default();
        let a = &self.alm;
        let alm = AlmParams {
            eps_final: a.eps.unwrap_or(defaults.eps_final),
            delta_final: a.delta.unwrap_or(defaults.delta_final),
            eps0: a.eps0.unwrap_or(defaults.eps0),
            rho_eps: a.rho_eps.unwrap_or(defaults.rho_eps),
            sigma0: a.sigma0.unwrap_or(defaults.sigma0),
            theta: a.theta.unwrap_or(defaults.theta),
            delta_growth: a.delta_growth.unwrap_or(defaults.delta_growth),
            sigma_max: a.sigma_max.unwrap_or(defaults.sigma_max),
            y_max: a.y_max.unwrap_or(defaults.y_max),
            max_outer: a.max_outer.unwrap_or(defaults.max_outer),
            max_time: match a.max_time_s {
                Some(t) if !(t > 0.0 && t.is_finite()) => {
                    return Err(CliError::Config("alm.max_time_s must be positive".into()))
                }
                Some(t) => Some(Duration::from_secs_f64(t)),
                None => None,
            },
            ..defaults
        };
        alm.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let pd = PanocParams::default();
        let p = &self.panoc;
        let panoc = PanocParams {
            max_iter: p.max_iter.unwrap_or(pd.max_iter),
            tau_min: p.tau_min.unwrap_or(pd.tau_min),
            max_ls_iter: p.max_ls_iter.unwrap_or(pd.max_ls_iter),
            sigma_coeff: p.sigma_coeff.unwrap_or(pd.sigma_coeff),
            ..pd
        };
        panoc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let memory = p.memory.unwrap_or(10);
        if memory == 0 {
            return Err(CliError::Config("panoc.memory must be at least 1".into()));
        }

        let cd = ChainParams::default();
        let chain = ChainParams {
            n_balls: self.chain.n_balls.unwrap_or(cd.n_balls),
            horizon: self.chain.horizon.unwrap_or(cd.horizon),
            ..cd
        };
        chain.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let jobs = self.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        let n_steps = self.n_steps.unwrap_or(10);
        if n_steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }

        Ok(Settings {
            problem: self.problem.clone(),
            variants,
            seed: self.seed.unwrap_or(0),
            out: self.out.clone(),
            warm_start: self.warm_start,
            n_steps,
            jobs,
            alm,
            panoc,
            memory,
            chain,
        })
    }
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub problem: Option<String>,
    /// explicitly selected variants, empty when none were given
    pub variants: Vec<SolverVariant>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// `None` runs both cold and warm (mpc only)
    pub warm_start: Option<bool>,
    pub n_steps: usize,
    pub jobs: usize,
    pub alm: AlmParams,
    pub panoc: PanocParams,
    pub memory: usize,
    pub chain: ChainParams,
}

impl Settings {
    /// The selected variants, or all six when none were named.
    pub fn variants_or_all(&self) -> Vec<SolverVariant> {
        if self.variants.is_empty() {
            SolverVariant::ALL.to_vec()
        } else {
            self.variants.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("problme = \"hs071\"").is_err());
        assert!(RunConfig::from_toml("[alm]\nepsilon = 1e-3").is_err());
        assert!(RunConfig::from_toml("[solver]\nx = 1").is_err());
    }

    #[test]
    fn overlay_prefers_the_top_layer() {
        let file = RunConfig::from_toml("problem = \"hs071\"\nseed = 4\n[alm]\neps = 1e-4\ndelta = 1e-5").unwrap();
        let flags = RunConfig {
            seed: Some(9),
            alm: AlmSection { eps: Some(1e-6), ..Default::default() },
            ..Default::default()
        };
        let s = file.overlay(flags).resolve().unwrap();
        assert_eq!(s.problem.as_deref(), Some("hs071"));
        assert_eq!(s.seed, 9);
        assert_eq!(s.alm.eps_final, 1e-6);
        assert_eq!(s.alm.delta_final, 1e-5);
    }

    #[test]
    fn defaults() {
        let s = RunConfig::default().resolve().unwrap();
        assert_eq!((s.alm.eps_final, s.alm.delta_final), (1e-3, 1e-3));
        assert_eq!(s.jobs, 1);
        assert_eq!(s.variants_or_all().len(), 6);
        assert!(s.warm_start.is_none());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in
            ["variant = \"newton\"", "jobs = 0", "[alm]\neps = -1.0", "[panoc]\ntau_min = 2.0", "[chain]\nhorizon = 0"]
        {
            let err = RunConfig::from_toml(text).unwrap().resolve().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn variant_lists_are_deduplicated() {
        let cfg = RunConfig {
            variant: Some("panoc".into()),
            variants: Some(vec!["panoc".into(), "panoc-ils".into()]),
            ..Default::default()
        };
        assert_eq!(cfg.resolve().unwrap().variants, vec![SolverVariant::Panoc, SolverVariant::PanocIls]);
    }
}
