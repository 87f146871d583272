//! Deterministic file artifacts.
//!
//! CSV fields are rendered with 17 significant digits, which round-trips
//! every finite f64 exactly, so identical inputs produce identical bytes.
//! JSON files go through serde_json with a fixed field order; non-finite
//! numbers (a price that does not exist) are mapped to `null` because JSON
//! has no NaN.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use quro_core::envelope::EnvelopeResult;
use quro_core::grid::{Grid, QuantileFunction};
use quro_core::portfolio::HedgedPaths;
use quro_core::pricer::PriceResult;

/// 17-significant-digit rendering used for every CSV number.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `solution.csv`: one row per grid node with the optimal quantile and the
/// two dual tail functions.
pub fn write_solution(
    path: &Path,
    grid: Grid,
    qbar: &QuantileFunction,
    lambda_tail: &[f64],
    slack: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["t", "Qbar", "Lambda", "H"])?;
    for i in 0..grid.n() {
        w.write_record([
            sig17(grid.node(i)),
            sig17(qbar.value(i)),
            sig17(lambda_tail[i]),
            sig17(slack[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    lambda: f64,
    #[serde(rename = "V0")]
    v0: f64,
    budget_residual: f64,
}

/// `summary.json` with exactly `{lambda, V0, budget_residual}`.
pub fn write_summary(path: &Path, lambda: f64, v0: f64, budget_residual: f64) -> Result<()> {
    write_json(
        path,
        &Summary {
            lambda,
            v0,
            budget_residual,
        },
    )
}

#[derive(Serialize)]
struct PriceJson {
    p: Option<f64>,
    #[serde(rename = "V_EU")]
    v_eu: f64,
    #[serde(rename = "V0")]
    v0: f64,
    residual: f64,
    exists: bool,
    boundary: bool,
}

/// `price.json`: the pricing verdict. `p` is `null` when no price exists.
pub fn write_price(path: &Path, r: &PriceResult) -> Result<()> {
    write_json(
        path,
        &PriceJson {
            p: finite_or_null(r.price),
            v_eu: r.value_classical,
            v0: r.value_robust,
            residual: r.residual,
            exists: r.exists,
            boundary: r.boundary,
        },
    )
}

/// `paths.csv`: simulated weighting-process and hedged-wealth paths,
/// path-major, one row per (path, time) pair.
pub fn write_paths(path: &Path, sim: &HedgedPaths) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["path_id", "t", "varrho", "wealth"])?;
    for p in 0..sim.n_paths() {
        let kernel = sim.kernel_path(p);
        let wealth = sim.wealth_path(p);
        for (k, t) in sim.times().iter().enumerate() {
            w.write_record([
                p.to_string(),
                sig17(*t),
                sig17(kernel[k]),
                sig17(wealth[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `envelope.csv`: the hull input polyline and its upper concave envelope.
/// `slope` belongs to the cell to the right of the row's point and is empty
/// on the last row; `knot` is 1 where the envelope touches the input.
pub fn write_envelope(path: &Path, env: &EnvelopeResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["k", "z", "f", "envelope", "slope", "knot"])?;
    let mut is_knot = vec![false; env.points.len()];
    for &k in &env.hull_knots {
        is_knot[k] = true;
    }
    for (k, &(z, f)) in env.points.iter().enumerate() {
        let slope = if k < env.cell_slopes.len() {
            sig17(env.cell_slopes[k])
        } else {
            String::new()
        };
        w.write_record([
            k.to_string(),
            sig17(z),
            sig17(f),
            sig17(env.delta[k]),
            slope,
            (is_knot[k] as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes any JSON-ready report with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("cannot serialize {}", path.display()))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
