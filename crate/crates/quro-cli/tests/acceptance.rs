//! Acceptance gate: nine end-to-end criteria covering the coupling oracle,
//! the classical reduction, route equivalence, the small-grid lattice
//! oracle, discrete optimality conditions, duality and value shape,
//! replication quality, indifference pricing, and CLI determinism.
//!
//! One test per criterion; the test name is the pass/fail line. Each test
//! also prints a `criterion N: PASS` summary (visible with --nocapture)
//! with the measured quantities. Tolerances are pinned in the asserts, not
//! configurable.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use tempfile::TempDir;

use quro_core::envelope::solve_exponential;
use quro_core::grid::{Grid, QuantileFunction};
use quro_core::market::{KernelLaw, MarketSpec};
use quro_core::portfolio::{replicate_and_verify, ExponentialMertonPayoff};
use quro_core::preference::{
    min_coupling_oracle, robust_objective, sandwich_constants, sup_distance,
};
use quro_core::pricer::{classical_value, indifference_price};
use quro_core::solver::{calibrate, solve_lagrangian, verify_complementarity, CalibrateOptions};
use quro_core::utility::UtilityModel;

/// Reference market: r = 0.03, theta = 0.25, sigma = 0.2, horizon 1.
fn reference_market() -> MarketSpec {
    MarketSpec::constant(1.0, 0.03, 0.25, 0.2).unwrap()
}

fn reference_law() -> KernelLaw {
    reference_market().kernel_law()
}

fn kernel_q(n: usize) -> QuantileFunction {
    reference_law().sample_quantile(Grid::new(n).unwrap()).unwrap()
}

fn two_point(n: usize) -> QuantileFunction {
    QuantileFunction::from_atoms(Grid::new(n).unwrap(), &[0.0, 1.0], &[0.5, 0.5]).unwrap()
}

fn zero_claim(n: usize) -> QuantileFunction {
    QuantileFunction::constant(Grid::new(n).unwrap(), 0.0).unwrap()
}

/// e^{-rT} on the reference market.
const DISCOUNT: f64 = 0.9704455335485082;

// For 200 random instances with at most 6 atoms, the exhaustive coupling
// minimum must equal the comonotone arrangement's objective to 1e-12.
#[test]
fn criterion_1_coupling_oracle() {
    let start = Instant::now();
    let models = [
        UtilityModel::exponential(1.0).unwrap(),
        UtilityModel::exponential(0.4).unwrap(),
        UtilityModel::power(0.45, 0.0).unwrap(),
        UtilityModel::log(0.25).unwrap(),
    ];
    let mut rng = StdRng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let u = &models[trial % models.len()];
        let k = rng.gen_range(2..=6usize);
        let x_atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..2.0)).collect();
        let y_atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..2.0)).collect();
        let oracle = min_coupling_oracle(&x_atoms, &y_atoms, u).unwrap();

        let grid = Grid::new(k).unwrap();
        let mut xs = x_atoms.clone();
        let mut ys = y_atoms.clone();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let (x0, x1) = (xs[0], xs[k - 1]);
        let (y0, y1) = (ys[0], ys[k - 1]);
        let qx = QuantileFunction::from_values(grid, xs, x0, x1).unwrap();
        let qy = QuantileFunction::from_values(grid, ys, y0, y1).unwrap();
        let aligned = robust_objective(&qx, &qy, u).unwrap();

        let gap = (oracle.value - aligned).abs();
        worst = worst.max(gap);
        assert!(
            gap <= 1e-12,
            "trial {trial}: exhaustive minimum {} vs comonotone objective {aligned}",
            oracle.value
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    eprintln!(
        "criterion 1: PASS (200 instances, worst gap {worst:.3e}, {:.2} s)",
        elapsed.as_secs_f64()
    );
}

// Zero claim, exponential utility on the reference market: the calibrated
// quantile matches the closed form nodewise to 1e-6 at n = 4096, and the
// value matches to 1e-6 relative.
#[test]
fn criterion_2_classical_reduction() {
    let n = 4096;
    let grid = Grid::new(n).unwrap();
    let kernel = kernel_q(n);
    let claim = zero_claim(n);
    let u = UtilityModel::exponential(1.0).unwrap();
    let sol = calibrate(1.0, &claim, &kernel, &u, &reference_law(), &CalibrateOptions::default())
        .unwrap();

    // Closed form in the grid moments of the sampled kernel: the optimal
    // terminal wealth is C - ln(rho) with C fixed by the budget.
    let h = grid.step();
    let (mut erho, mut erholn) = (0.0, 0.0);
    for i in 0..n {
        let r = kernel.value_reversed(i);
        erho += r;
        erholn += r * r.ln();
    }
    erho *= h;
    erholn *= h;
    let c = (1.0 + erholn) / erho;

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let oracle = c - kernel.value_reversed(i).ln();
        worst = worst.max((sol.qbar().value(i) - oracle).abs());
    }
    assert!(worst <= 1e-6, "worst nodewise gap {worst}");

    let v_oracle = -(-c).exp() * erho;
    let rel = (sol.value - v_oracle).abs() / v_oracle.abs();
    assert!(rel <= 1e-6, "value {} vs closed form {v_oracle}", sol.value);
    eprintln!("criterion 2: PASS (nodewise {worst:.3e}, value rel {rel:.3e})");
}

// Two-point claim: the isotonic route and the envelope route must agree in
// sup-norm within 5/n at n in {256, 1024, 4096}, with the distance
// shrinking monotonically in n, all under 30 s.
#[test]
fn criterion_3_route_equivalence() {
    let start = Instant::now();
    let u = UtilityModel::exponential(1.0).unwrap();
    let law = reference_law();
    let mut sups = Vec::new();
    for &n in &[256usize, 1024, 4096] {
        let kernel = kernel_q(n);
        let claim = two_point(n);
        let env = solve_exponential(1.0, &claim, &kernel, 1.0).unwrap();
        let vi = calibrate(1.0, &claim, &kernel, &u, &law, &CalibrateOptions::default()).unwrap();
        let sup = sup_distance(&env.qbar, vi.qbar()).unwrap();
        assert!(sup <= 5.0 / n as f64, "n={n}: sup distance {sup}");
        sups.push(sup);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    assert!(
        sups[1] < sups[0] && sups[2] < sups[1],
        "sup distances do not shrink monotonically: {sups:?}. Both routes solve \
         the same finite-dimensional program exactly, so their distance is \
         multiplier-calibration noise (about 1e-11, versus bounds of 2e-2 to \
         1.2e-3) and carries no grid-refinement structure to order.",
    );
    eprintln!(
        "criterion 3: PASS (sups {sups:?}, {:.2} s)",
        elapsed.as_secs_f64()
    );
}

// On n = 5 grids, the fixed-multiplier solver must match an exhaustive
// dynamic program over monotone nonnegative vectors on a 200-point value
// lattice, within one lattice step of objective, across 50 random draws.
#[test]
fn criterion_4_small_grid_lattice_oracle() {
    let n = 5;
    let grid = Grid::new(n).unwrap();
    let kernel = kernel_q(n);
    let models = [
        UtilityModel::exponential(1.0).unwrap(),
        UtilityModel::power(0.45, 0.3).unwrap(),
        UtilityModel::log(0.8).unwrap(),
    ];
    let mut rng = StdRng::seed_from_u64(404);
    for trial in 0..50 {
        let u = &models[trial % models.len()];
        let atoms: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..2.0)).collect();
        let claim = QuantileFunction::from_atoms(grid, &atoms, &[0.5, 0.5]).unwrap();
        let lambda = rng.gen_range(0.3f64.ln()..3.0f64.ln()).exp();
        let sol = solve_lagrangian(lambda, &claim, &kernel, u).unwrap();
        let (dp, step) = lattice_best(lambda, &claim, &kernel, u);

        let d = sol.value - dp;
        assert!(d >= -1e-10, "trial {trial}: solver below the lattice by {}", -d);
        // One lattice step of the steepest marginal near the solution.
        let mut gmax = lambda * kernel.value_reversed(0);
        for i in 0..n {
            let q = (sol.qbar.value(i) - step).max(0.0);
            gmax = gmax.max(u.du(q + claim.value(i)));
        }
        assert!(
            d <= 2.0 * step * gmax + 1e-9,
            "trial {trial}: gap {d} exceeds the lattice bound {}",
            2.0 * step * gmax
        );
    }
    eprintln!("criterion 4: PASS (50 draws against a 200-level lattice program)");
}

/// Exact maximum of the separable objective over nondecreasing nonnegative
/// vectors on a uniform value lattice, by a suffix-max dynamic program.
fn lattice_best(
    lambda: f64,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    u: &UtilityModel,
) -> (f64, f64) {
    let n = claim.grid().n();
    const LEVELS: usize = 200;
    let mut qmax = 1e-3f64;
    for i in 0..n {
        qmax = qmax.max(u.inv_du(lambda * kernel.value_reversed(i)) - claim.value(i));
    }
    qmax *= 1.05;
    let step = qmax / (LEVELS - 1) as f64;
    let phi = |i: usize, l: usize| {
        let q = step * l as f64;
        u.u(q + claim.value(i)) - lambda * q * kernel.value_reversed(i)
    };
    let mut suffix = vec![0.0f64; LEVELS];
    for i in (0..n).rev() {
        let mut row = vec![0.0f64; LEVELS];
        for (l, r) in row.iter_mut().enumerate() {
            *r = phi(i, l) + if i + 1 < n { suffix[l] } else { 0.0 };
        }
        let mut acc = f64::NEG_INFINITY;
        for l in (0..LEVELS).rev() {
            acc = acc.max(row[l]);
            suffix[l] = acc;
        }
    }
    (suffix[0] / n as f64, step)
}

// Every solution must pass the discrete optimality conditions at tol = 2/n:
// slack nonnegativity, terminal conditions, jump/slack pairing, the floor
// at the first node, and directional optimality against 100 perturbations.
#[test]
fn criterion_5_complementarity_suite() {
    let models = [
        UtilityModel::exponential(1.0).unwrap(),
        UtilityModel::power(0.45, 0.3).unwrap(),
        UtilityModel::log(0.8).unwrap(),
    ];
    let mut rng = StdRng::seed_from_u64(505);
    let mut cases: Vec<(QuantileFunction, QuantileFunction, f64, UtilityModel)> = Vec::new();

    // Random fixed-multiplier solutions on a medium grid.
    let n = 256;
    let grid = Grid::new(n).unwrap();
    let kernel = kernel_q(n);
    for trial in 0..24 {
        let u = &models[trial % models.len()];
        let atoms: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..2.0)).collect();
        let claim = QuantileFunction::from_atoms(grid, &atoms, &[0.5, 0.5]).unwrap();
        let lambda = rng.gen_range(0.3f64.ln()..3.0f64.ln()).exp();
        let sol = solve_lagrangian(lambda, &claim, &kernel, u).unwrap();
        cases.push((sol.qbar, claim, lambda, u.clone()));
    }

    // Calibrated solutions on a finer grid: zero claim and two-point claim.
    let u = UtilityModel::exponential(1.0).unwrap();
    let law = reference_law();
    for claim in [zero_claim(1024), two_point(1024)] {
        let sol = calibrate(1.0, &claim, &kernel_q(1024), &u, &law, &CalibrateOptions::default())
            .unwrap();
        cases.push((sol.lagrangian.qbar, claim, sol.lambda_star, u.clone()));
    }

    for (case, (qbar, claim, lambda, u)) in cases.iter().enumerate() {
        let n = claim.grid().n();
        let tol = 2.0 / n as f64;
        let kernel = kernel_q(n);
        let report =
            verify_complementarity(qbar, claim, &kernel, *lambda, u, tol, 1000 + case as u64)
                .unwrap();
        assert!(report.nonneg_slack.pass, "case {case}: H dips below -{tol}: {report}");
        assert!(report.terminal_slack.pass, "case {case}: H(1) != 0: {report}");
        assert!(report.terminal_tail.pass, "case {case}: Lambda(1) != 0: {report}");
        assert!(report.pairing.pass, "case {case}: jump/slack pairing fails: {report}");
        assert!(report.directional.pass, "case {case}: directional test fails: {report}");
        assert!(report.pass(), "case {case}: {report}");

        // Binding multiplier at the entry node forces the floor.
        let (_, slack) =
            recompute_slack(qbar, claim, &kernel, *lambda, u);
        if slack[0] > tol {
            assert_eq!(
                qbar.value(0),
                0.0,
                "case {case}: H(0) = {} > {tol} but the first node is off the floor",
                slack[0]
            );
        }
    }
    eprintln!("criterion 5: PASS ({} solutions, 100 perturbations each)", cases.len());
}

/// Tail dual functions of a candidate, mirroring the solver's definition:
/// Lambda_i = h * sum_{j >= i} u'(q_j + theta_j), H_i = lambda * h *
/// sum_{j >= i} rho_j - Lambda_i.
fn recompute_slack(
    qbar: &QuantileFunction,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    lambda: f64,
    u: &UtilityModel,
) -> (Vec<f64>, Vec<f64>) {
    let n = qbar.grid().n();
    let h = qbar.grid().step();
    let mut lambda_tail = vec![0.0; n];
    let mut slack = vec![0.0; n];
    let (mut du_acc, mut rho_acc) = (0.0, 0.0);
    for i in (0..n).rev() {
        du_acc += u.du(qbar.value(i) + claim.value(i));
        rho_acc += kernel.value_reversed(i);
        lambda_tail[i] = h * du_acc;
        slack[i] = lambda * h * rho_acc - lambda_tail[i];
    }
    (lambda_tail, slack)
}

// Duality identity to 1e-8 relative, strict monotonicity and concavity of
// the value in wealth, and the sandwich against the classical value with
// the proof's constants.
#[test]
fn criterion_6_duality_and_value_shape() {
    let n = 2048;
    let kernel = kernel_q(n);
    let claim = two_point(n);
    let u = UtilityModel::exponential(1.0).unwrap();
    let law = reference_law();
    let (c1, c2) = sandwich_constants(&claim, &u);

    let xs = [0.5, 1.0, 2.0, 4.0];
    let mut values = Vec::new();
    for &x in &xs {
        let sol = calibrate(x, &claim, &kernel, &u, &law, &CalibrateOptions::default()).unwrap();
        // Constrained objective recomputed without the multiplier must meet
        // V_lambda + lambda x to 1e-8 relative.
        let objective = robust_objective(sol.qbar(), &claim, &u).unwrap();
        let dual = sol.lagrangian.value + sol.lambda_star * x;
        let rel = (objective - dual).abs() / dual.abs();
        assert!(rel <= 1e-8, "x={x}: duality gap {rel}");
        assert!((sol.value - dual).abs() <= 1e-14 * dual.abs());

        let v_eu = classical_value(x, &u, &law, Grid::new(n).unwrap()).unwrap();
        assert!(
            v_eu - c1 - 1e-12 <= sol.value && sol.value <= v_eu + c2 + 1e-12,
            "x={x}: value {} outside [{} - {c1}, {} + {c2}]",
            sol.value,
            v_eu,
            v_eu
        );
        values.push(sol.value);
    }

    for w in values.windows(2) {
        assert!(w[1] > w[0], "value not strictly increasing: {values:?}");
    }
    let slopes: Vec<f64> = values
        .windows(2)
        .zip(xs.windows(2))
        .map(|(v, x)| (v[1] - v[0]) / (x[1] - x[0]))
        .collect();
    for w in slopes.windows(2) {
        assert!(w[1] < w[0], "secant slopes not decreasing: {slopes:?}");
    }
    eprintln!("criterion 6: PASS (duality, monotone concave values {values:.6?})");
}

// Replicating the closed-form zero-claim solution with 2000 paths: terminal
// RMSE at 256 steps within 1% of E[X*], per-doubling RMSE ratios in
// [0.6, 0.85] along the step ladder, an exactly zero budget gap, under 60 s.
#[test]
fn criterion_7_replication() {
    let start = Instant::now();
    let market = reference_market();
    let law = market.kernel_law();
    let payoff = ExponentialMertonPayoff::calibrated(1.0, 1.0, &law).unwrap();
    // E[X*] = C + |m| for the reference market, C the budget level.
    let mean_target = 1.0929545339535169;

    let mut rmse = Vec::new();
    for &steps in &[32usize, 64, 128, 256] {
        let report = replicate_and_verify(&market, &payoff, 2000, steps, 7).unwrap();
        assert_eq!(report.budget_gap, 0.0, "budget gap at {steps} steps");
        assert!((report.initial_wealth - 1.0).abs() <= 1e-8);
        assert!((report.mean_target - mean_target).abs() <= 0.02);
        rmse.push(report.terminal_rmse);
    }
    let final_rel = rmse[3] / mean_target;
    assert!(final_rel <= 0.01, "RMSE at 256 steps is {final_rel:.4} of E[X*]");

    let ratios: Vec<f64> = rmse.windows(2).map(|w| w[1] / w[0]).collect();
    for (k, r) in ratios.iter().enumerate() {
        assert!(
            (0.6..=0.85).contains(r),
            "per-doubling RMSE ratio {r:.3} at rung {k} leaves [0.6, 0.85]; ladder {rmse:?}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    eprintln!(
        "criterion 7: PASS (RMSE ladder {rmse:?}, ratios {ratios:.3?}, {:.1} s)",
        elapsed.as_secs_f64()
    );
}

// Pricing gates: exact zero for the zero claim, discounted cash within 5e-3
// for a constant claim, the two-point price inside (0, e^{-rT}), and the
// matching residual within 1e-8 relative in every solved case.
#[test]
fn criterion_8_indifference_pricing() {
    let n = 4096;
    let grid = Grid::new(n).unwrap();
    let u = UtilityModel::exponential(1.0).unwrap();
    let law = reference_law();

    let zero = indifference_price(1.0, &zero_claim(n), &u, &law, grid).unwrap();
    assert!(zero.exists);
    assert_eq!(zero.price, 0.0, "zero claim must price at exactly zero");

    let cash = QuantileFunction::constant(grid, 0.5).unwrap();
    let cash_price = indifference_price(1.0, &cash, &u, &law, grid).unwrap();
    assert!(cash_price.exists && !cash_price.boundary);
    let gap = (cash_price.price - 0.5 * DISCOUNT).abs();
    assert!(gap <= 5e-3, "constant claim price off cash value by {gap}");
    assert!(cash_price.residual <= 1e-8 * cash_price.value_classical.abs());

    let binary = indifference_price(1.0, &two_point(n), &u, &law, grid).unwrap();
    assert!(binary.exists);
    assert!(
        binary.price > 0.0 && binary.price < DISCOUNT,
        "two-point price {} outside (0, {DISCOUNT})",
        binary.price
    );
    assert!(binary.residual <= 1e-8 * binary.value_classical.abs());
    eprintln!(
        "criterion 8: PASS (prices 0, {:.6}, {:.6})",
        cash_price.price, binary.price
    );
}

// Two CLI runs with the same config and seed must write byte-identical
// solution.csv and price.json.
#[test]
fn criterion_9_cli_determinism() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "market": {
    "horizon": 1.0,
    "rate": [{"end": 1.0, "value": 0.03}],
    "risk_premium": [{"end": 1.0, "value": [0.25]}],
    "volatility": [{"end": 1.0, "value": [[0.2]]}]
  },
  "utility": {"kind": "exponential", "alpha": 1.0},
  "claim": {"kind": "discrete", "atoms": [0.0, 1.0], "weights": [0.5, 0.5]},
  "wealth": 1.0,
  "grid_n": 2048,
  "seed": 7
}"#,
    )
    .unwrap();

    let run = |cmd: &str, dir: &Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_quro"))
            .args([
                cmd,
                "--config",
                config.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ])
            .output()
            .expect("binary spawns");
        assert!(
            out.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run("solve", dir);
        run("price", dir);
    }
    for name in ["solution.csv", "price.json"] {
        let lhs = fs::read(a.join(name)).unwrap();
        let rhs = fs::read(b.join(name)).unwrap();
        assert!(lhs == rhs, "{name} differs between identical runs");
    }
    eprintln!("criterion 9: PASS (solution.csv and price.json byte-identical)");
}
