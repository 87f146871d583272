//! JSON problem configuration: schema types, validation, and conversion
//! into solver inputs.
//!
//! The schema is strict: unknown keys are rejected so a typo cannot
//! silently fall back to a default. Exactly one of `market`/`kernel` must
//! be present; `market` carries the full term structure and is required by
//! path simulation, `kernel` fixes the terminal weighting law directly.
//! The machine-readable copy of this schema lives in
//! `schema/config.schema.json` next to this crate.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use quro_core::claim::Claim;
use quro_core::grid::Grid;
use quro_core::market::{KernelLaw, MarketSpec, Piecewise, SquareMatrix};
use quro_core::utility::UtilityModel;

/// Top-level problem description as read from the config file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub market: Option<MarketConfig>,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    pub utility: UtilityConfig,
    pub claim: ClaimConfig,
    /// Initial wealth; must be positive.
    pub wealth: f64,
    /// Number of quantile grid nodes.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Seed for path simulation; solves themselves are deterministic
    /// without it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_grid_n() -> usize {
    4096
}

/// Piecewise-constant coefficient segment: the value holds on
/// `[previous end, end)`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece<T> {
    pub end: f64,
    pub value: T,
}

/// Term structure of the complete market. All three coefficient lists must
/// close at `horizon`; the volatility matrix is row-major per segment.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub horizon: f64,
    pub rate: Vec<Piece<f64>>,
    pub risk_premium: Vec<Piece<Vec<f64>>>,
    pub volatility: Vec<Piece<Vec<Vec<f64>>>>,
}

/// Lognormal terminal weighting law given by its log-moments.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub log_mean: f64,
    pub log_sd: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    Exponential {
        alpha: f64,
    },
    Power {
        gamma: f64,
        #[serde(default)]
        shift: f64,
    },
    Log {
        #[serde(default)]
        shift: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimConfig {
    Constant { value: f64 },
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
    Uniform { lower: f64, upper: f64 },
    ShiftedLognormal { mu: f64, sigma: f64, shift: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative budget-matching tolerance for the multiplier calibration.
    pub budget: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { budget: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub n_steps: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_paths: 2000,
            n_steps: 256,
        }
    }
}

/// Reads and validates a config file. Schema violations and inconsistent
/// blocks are reported here; numeric preconditions of individual solver
/// inputs are re-checked by the conversion helpers below.
pub fn load(path: &Path) -> Result<ProblemConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: ProblemConfig = serde_json::from_str(&text)
        .with_context(|| format!("config {} violates the schema", path.display()))?;
    if cfg.market.is_some() == cfg.kernel.is_some() {
        bail!("config must contain exactly one of `market` and `kernel`");
    }
    if !(cfg.wealth > 0.0) || !cfg.wealth.is_finite() {
        bail!("`wealth` must be a positive finite number, got {}", cfg.wealth);
    }
    Ok(cfg)
}

impl ProblemConfig {
    /// Builds the market term structure when the `market` block is present.
    pub fn market_spec(&self) -> Result<Option<MarketSpec>> {
        let Some(m) = &self.market else {
            return Ok(None);
        };
        let rate = piecewise(&m.rate, m.horizon, "rate", |v| Ok(*v))?;
        let premium = piecewise(&m.risk_premium, m.horizon, "risk_premium", |v| {
            Ok(v.clone())
        })?;
        let vol = piecewise(&m.volatility, m.horizon, "volatility", |rows| {
            let dim = rows.len();
            let mut data = Vec::with_capacity(dim * dim);
            for row in rows {
                if row.len() != dim {
                    bail!(
                        "volatility matrix must be square, got a row of {} in a {}x{} matrix",
                        row.len(),
                        dim,
                        dim
                    );
                }
                data.extend_from_slice(row);
            }
            Ok(SquareMatrix::new(dim, data)?)
        })?;
        Ok(Some(MarketSpec::new(rate, premium, vol)?))
    }

    /// Terminal weighting law: derived from the market when present,
    /// otherwise taken from the `kernel` block.
    pub fn law(&self, market: Option<&MarketSpec>) -> Result<KernelLaw> {
        if let Some(m) = market {
            return Ok(m.kernel_law());
        }
        let k = self
            .kernel
            .as_ref()
            .expect("load() guarantees one of market/kernel");
        Ok(KernelLaw::new(k.log_mean, k.log_sd)?)
    }

    pub fn utility(&self) -> Result<UtilityModel> {
        Ok(match self.utility {
            UtilityConfig::Exponential { alpha } => UtilityModel::exponential(alpha)?,
            UtilityConfig::Power { gamma, shift } => UtilityModel::power(gamma, shift)?,
            UtilityConfig::Log { shift } => UtilityModel::log(shift)?,
        })
    }

    pub fn claim(&self) -> Result<Claim> {
        Ok(match &self.claim {
            ClaimConfig::Constant { value } => Claim::constant(*value)?,
            ClaimConfig::Discrete { atoms, weights } => Claim::discrete(atoms, weights)?,
            ClaimConfig::Uniform { lower, upper } => Claim::uniform(*lower, *upper)?,
            ClaimConfig::ShiftedLognormal { mu, sigma, shift } => {
                Claim::shifted_lognormal(*mu, *sigma, *shift)?
            }
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid_n)?)
    }
}

/// Splits a `{end, value}` list into a `Piecewise`, converting each value
/// and checking that the segments close at the declared horizon.
fn piecewise<T, U>(
    pieces: &[Piece<T>],
    horizon: f64,
    name: &str,
    convert: impl Fn(&T) -> Result<U>,
) -> Result<Piecewise<U>> {
    if pieces.is_empty() {
        bail!("`{name}` needs at least one segment");
    }
    let last = pieces.last().expect("nonempty").end;
    if last != horizon {
        bail!("`{name}` segments end at {last} but the horizon is {horizon}");
    }
    let ends = pieces.iter().map(|p| p.end).collect();
    let mut values = Vec::with_capacity(pieces.len());
    for p in pieces {
        values.push(convert(&p.value)?);
    }
    Ok(Piecewise::new(ends, values)?)
}
