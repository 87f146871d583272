//! Command implementations. Each returns the process exit code on the
//! success path; hard failures propagate as errors and are classified by
//! `main`.
//!
//! Two commands can succeed at writing their report yet still exit 3:
//! `price` when no price exists and `check` when the diagnosis is negative.
//! That keeps "the math says no" distinguishable from "the code failed"
//! while leaving the evidence on disk.

use std::path::Path;

use anyhow::{bail, Result};
use serde_json::json;

use quro_core::grid::{Grid, QuantileFunction};
use quro_core::market::{KernelLaw, MarketSpec};
use quro_core::portfolio::{simulate_hedged, TerminalMap};
use quro_core::preference::{check_tail_dominance, wellposedness_check};
use quro_core::pricer::indifference_price;
use quro_core::solver::{calibrate, CalibrateOptions, RobustSolution};
use quro_core::utility::UtilityModel;

use crate::config::{ProblemConfig, UtilityConfig};
use crate::output;

/// Solver inputs shared by every command: the sampled claim and kernel
/// quantiles plus the law they were drawn from.
struct Inputs {
    market: Option<MarketSpec>,
    law: KernelLaw,
    utility: UtilityModel,
    grid: Grid,
    claim_q: QuantileFunction,
    kernel_q: QuantileFunction,
}

fn inputs(cfg: &ProblemConfig) -> Result<Inputs> {
    let market = cfg.market_spec()?;
    let law = cfg.law(market.as_ref())?;
    let grid = cfg.grid()?;
    let claim_q = cfg.claim()?.sample(grid)?;
    let kernel_q = law.sample_quantile(grid)?;
    Ok(Inputs {
        market,
        law,
        utility: cfg.utility()?,
        grid,
        claim_q,
        kernel_q,
    })
}

fn calibrate_cfg(cfg: &ProblemConfig, inp: &Inputs) -> quro_core::Result<RobustSolution> {
    let opts = CalibrateOptions {
        budget_tol: cfg.tolerances.budget,
        ..CalibrateOptions::default()
    };
    calibrate(
        cfg.wealth,
        &inp.claim_q,
        &inp.kernel_q,
        &inp.utility,
        &inp.law,
        &opts,
    )
}

pub fn solve(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let inp = inputs(cfg)?;
    let sol = calibrate_cfg(cfg, &inp)?;
    output::write_solution(
        &out.join("solution.csv"),
        inp.grid,
        sol.qbar(),
        &sol.lagrangian.lambda_tail,
        &sol.lagrangian.slack,
    )?;
    output::write_summary(
        &out.join("summary.json"),
        sol.lambda_star,
        sol.value,
        sol.budget_residual,
    )?;
    log::info!(
        "solve: lambda {:.6e}, value {:.6e}, budget residual {:.3e}",
        sol.lambda_star,
        sol.value,
        sol.budget_residual
    );
    Ok(0)
}

fn exponential_alpha(cfg: &ProblemConfig, command: &str) -> Result<f64> {
    match cfg.utility {
        UtilityConfig::Exponential { alpha } => Ok(alpha),
        _ => bail!("`{command}` uses the closed exponential route; set utility kind to \"exponential\""),
    }
}

pub fn solve_exp(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let alpha = exponential_alpha(cfg, "solve-exp")?;
    let inp = inputs(cfg)?;
    let sol = quro_core::envelope::solve_exponential(cfg.wealth, &inp.claim_q, &inp.kernel_q, alpha)?;
    if sol.floor_violated {
        log::warn!("closed route crossed the nonnegativity floor; prefer `solve` for this configuration");
    }
    output::write_solution(
        &out.join("solution.csv"),
        inp.grid,
        &sol.qbar,
        &sol.lambda_tail,
        &sol.slack,
    )?;
    output::write_summary(&out.join("summary.json"), sol.lambda, sol.value, sol.budget_residual)?;
    Ok(0)
}

pub fn price(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let inp = inputs(cfg)?;
    let res = indifference_price(cfg.wealth, &inp.claim_q, &inp.utility, &inp.law, inp.grid)?;
    if let Some(reason) = &res.reason {
        log::warn!("price: {reason}");
    }
    output::write_price(&out.join("price.json"), &res)?;
    Ok(if res.exists { 0 } else { 3 })
}

pub fn simulate(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let inp = inputs(cfg)?;
    let Some(market) = &inp.market else {
        bail!("`simulate` needs the market term structure; configs with only a `kernel` block cannot drive paths");
    };
    let sol = calibrate_cfg(cfg, &inp)?;
    let map = TerminalMap::new(sol.lagrangian.qbar.clone(), inp.law)?;
    let sim = simulate_hedged(
        market,
        &map,
        cfg.simulation.n_paths,
        cfg.simulation.n_steps,
        cfg.seed,
    )?;
    if sim.widened_steps() > 0 {
        log::info!(
            "simulate: {} of {} hedge evaluations widened their difference stencil",
            sim.widened_steps(),
            cfg.simulation.n_paths * cfg.simulation.n_steps
        );
    }
    output::write_paths(&out.join("paths.csv"), &sim)?;
    Ok(0)
}

pub fn check(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let inp = inputs(cfg)?;
    let claim = cfg.claim()?;
    let tail = check_tail_dominance(&claim, &inp.utility, &inp.law);

    // Calibrate without the internal well-posedness gate so an ill-posed
    // problem is reported as a verdict instead of aborting the diagnosis.
    let opts = CalibrateOptions {
        budget_tol: cfg.tolerances.budget,
        check_wellposedness: false,
        ..CalibrateOptions::default()
    };
    let attempt = calibrate(
        cfg.wealth,
        &inp.claim_q,
        &inp.kernel_q,
        &inp.utility,
        &inp.law,
        &opts,
    );
    let (lambda, wellposed, failure) = match attempt {
        Ok(sol) => (Some(sol.lambda_star), sol.wellposed, None),
        Err(e @ quro_core::Error::Invalid(_)) => return Err(e.into()),
        Err(e) => {
            let probe = wellposedness_check(&inp.utility, &inp.law, 1.0)?;
            (None, probe, Some(e.to_string()))
        }
    };

    let finite_or_null = |v: f64| v.is_finite().then_some(v);
    let ok = wellposed.well_posed() && tail.satisfied() && lambda.is_some();
    let report = json!({
        "well_posed": wellposed.well_posed(),
        "lambda_probe": wellposed.lambda,
        "utility_term_finite": wellposed.utility_term.finite,
        "budget_term_finite": wellposed.budget_term.finite,
        "dual_term_finite": wellposed.dual_term.finite,
        "lambda_lower_estimate": finite_or_null(wellposed.lambda_lower_estimate),
        "tail_dominance": tail.satisfied(),
        "tail_sufficient": tail.sufficient,
        "tail_decay_ok": tail.decay_ok,
        "tail_final_ratio": finite_or_null(tail.final_ratio),
        "claim_marginal_utility_integrable": tail.marginal_utility_mean.finite,
        "calibrated": lambda.is_some(),
        "lambda": lambda,
        "failure": failure,
    });
    output::write_json(&out.join("check.json"), &report)?;
    Ok(if ok { 0 } else { 3 })
}

pub fn envelope(cfg: &ProblemConfig, out: &Path) -> Result<u8> {
    let alpha = exponential_alpha(cfg, "envelope")?;
    let inp = inputs(cfg)?;
    let sol = quro_core::envelope::solve_exponential(cfg.wealth, &inp.claim_q, &inp.kernel_q, alpha)?;
    output::write_envelope(&out.join("envelope.csv"), &sol.envelope)?;
    Ok(0)
}
