//! Declarative experiment configurations. A config file fully determines a
//! run: with a fixed seed the CSV artifacts are byte-identical.

use serde::Deserialize;
use std::path::Path;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// ε-proxy exponent: r^ε is replaced by (log r)^eps_power in bounds.
    #[serde(default = "default_eps_power")]
    pub eps_power: f64,
    pub experiment: ExperimentSpec,
}

fn default_eps_power() -> f64 {
    2.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Lemma-16 equality, quadratic Gauss sums, and the Weil bound.
    KloostermanAudit {
        primes: Vec<u64>,
        exponents: Vec<u32>,
        samples: u64,
        weil_samples: u64,
        weil_c_max: u64,
    },
    /// Decomposition and reduction-formula residuals for the complete sums.
    SigmaAudit {
        primes: Vec<u64>,
        exponents: Vec<u32>,
        draws: u64,
    },
    /// Short product sums against the Theorem-5 shape, plus the
    /// differencing/completion intermediate audits.
    Theorem5Sweep {
        draws: u64,
        weyl_draws: u64,
    },
    /// Hensel count-invariance, unique lifting of singular roots, and the
    /// singular-count bound calibrations.
    CensusSweep {
        primes: Vec<u64>,
        s_max: u32,
        hensel_draws: u64,
        bound_draws: u64,
    },
    /// Circle-method L² errors.
    Jutila {
        q_values: Vec<f64>,
        /// δ = Q^{-e} for each exponent e.
        delta_exponents: Vec<f64>,
    },
    /// Voronoi summation residuals.
    Voronoi {
        weights: Vec<u32>,
        c_max: u64,
        n_values: Vec<f64>,
        table_n_max: usize,
    },
    /// Diagonal term against its closed forms.
    Diagonal {
        q_values: Vec<u64>,
        weight1: u32,
        weight2: u32,
        table_n_max: usize,
    },
    /// The second-moment experiment over primitive characters.
    Moment {
        q_values: Vec<u64>,
        weight1: u32,
        weight2: u32,
        table_n_max: usize,
        /// cross-check per-character values against the naive double sum
        /// for every q at or below this bound
        oracle_q_max: u64,
    },
    /// Shifted convolution sums with individual and averaged bound reports.
    ShiftedConvolution {
        draws: u64,
        table_n_max: usize,
    },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::KloostermanAudit { .. } => "kloosterman-audit",
            ExperimentSpec::SigmaAudit { .. } => "sigma-audit",
            ExperimentSpec::Theorem5Sweep { .. } => "theorem5-sweep",
            ExperimentSpec::CensusSweep { .. } => "census-sweep",
            ExperimentSpec::Jutila { .. } => "jutila",
            ExperimentSpec::Voronoi { .. } => "voronoi",
            ExperimentSpec::Diagonal { .. } => "diagonal",
            ExperimentSpec::Moment { .. } => "moment",
            ExperimentSpec::ShiftedConvolution { .. } => "shifted-convolution",
        }
    }

    /// Shrink every sweep so the whole run fits in CI time.
    pub fn shrink(&mut self) {
        match self {
            ExperimentSpec::KloostermanAudit {
                samples,
                weil_samples,
                exponents,
                ..
            } => {
                *samples = (*samples).min(40);
                *weil_samples = (*weil_samples).min(500);
                exponents.retain(|&s| s <= 3);
            }
            ExperimentSpec::SigmaAudit { draws, exponents, .. } => {
                *draws = (*draws).min(12);
                exponents.retain(|&s| s <= 2);
            }
            ExperimentSpec::Theorem5Sweep { draws, weyl_draws } => {
                *draws = (*draws).min(8);
                *weyl_draws = (*weyl_draws).min(4);
            }
            ExperimentSpec::CensusSweep {
                s_max,
                hensel_draws,
                bound_draws,
                ..
            } => {
                *s_max = (*s_max).min(3);
                *hensel_draws = (*hensel_draws).min(10);
                *bound_draws = (*bound_draws).min(6);
            }
            ExperimentSpec::Jutila { q_values, .. } => {
                q_values.retain(|&q| q <= 50.0);
            }
            ExperimentSpec::Voronoi {
                c_max, n_values, ..
            } => {
                *c_max = (*c_max).min(3);
                n_values.truncate(1);
            }
            ExperimentSpec::Diagonal {
                q_values,
                table_n_max,
                ..
            } => {
                q_values.truncate(4);
                *table_n_max = (*table_n_max).min(300_000);
            }
            ExperimentSpec::Moment {
                q_values,
                table_n_max,
                ..
            } => {
                q_values.retain(|&q| q <= 61);
                if q_values.is_empty() {
                    q_values.push(53);
                }
                *table_n_max = (*table_n_max).min(100_000);
            }
            ExperimentSpec::ShiftedConvolution { draws, table_n_max } => {
                *draws = (*draws).min(5);
                *table_n_max = (*table_n_max).min(150_000);
            }
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}
