//! Acceptance suite: twelve criteria, one PASS/FAIL line each. Runs without
//! the libtest harness so the lines are always shown.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dbq_bsde::gradient::{backprop_gradient, direction, directional_derivative};
use dbq_bsde::hybrid::{parity_fixture_d2, pqc_only_layout};
use dbq_bsde::{
    experiment_configs, hjb_reference, make_hjb, Architecture, BsdeModel, MicroPipeline, PdeProblem,
};
use dbq_cli::{run, RunConfig, Values};
use dbq_core::autodiff::{
    forward_directional, forward_eval, reverse_gradient, Activation, FeedForwardNet, ParamVector, SquaredError,
};
use dbq_core::ledger::{
    gradient_method_complexity, loss_estimation_budget, payoff_variance_bound, scaling_fit, theoretical_budget,
    BudgetMode, ComplexityQuery, GradientMethod, Mode, QueryLedger, Unitary,
};
use dbq_core::mc::{
    chebyshev_samples, coupled_level_sample, error_budget, level_increments, mc_mean, mlmc_estimate,
    mlmc_sample_complexity, mv_mc_samples, n_gauss_bound, qamlmc_sample_complexity, riemann_error_bound,
    riemann_left_sum, MlmcConfig,
};
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::sde::{discretize_gaussian, empirical_strong_order, euler_path, simulate, PathBatch, SdeSpec, TimeGrid};
use dbq_core::stats::{loglog_slope, mean_var, normal_pdf};
use dbq_qsim::ae::AmplitudeEstimator;
use dbq_qsim::{gates, hea_gradients, inner_product_estimate, qamc_mean_at, HeaCircuit, HeaSpec, QamcTarget, StateVector};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn normal_vec(n: usize, rng: &mut CounterRng) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng.fill_normal(&mut v);
    v
}

fn cli_config(subcommand: &str, out: &std::path::Path, keys: &[(&str, &str, &str)]) -> RunConfig {
    let mut v = Values::default();
    v.set("run", "out", &out.to_string_lossy()).unwrap();
    for (s, k, val) in keys {
        v.set(s, k, val).unwrap();
    }
    RunConfig::new(subcommand, &v).unwrap()
}

fn read_rows(path: &std::path::Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn ad_correctness() -> Outcome {
    const ACTS: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Relu];
    let mut worst = 0.0f64;
    for i in 0..10_000u64 {
        let mut rng = CounterRng::new(101, purpose::TEST, i, 0);
        let depth = 2 + rng.below(3);
        let sizes: Vec<usize> = (0..depth).map(|_| 1 + rng.below(6)).collect();
        let mut acts: Vec<Activation> = (0..depth - 2).map(|_| ACTS[rng.below(3)]).collect();
        acts.push(Activation::Identity);
        let net = FeedForwardNet::random_normal(&sizes, &acts, 1.0, &mut rng).unwrap();
        let x = normal_vec(net.input_dim(), &mut rng);
        let v = ParamVector::new(normal_vec(net.n_params(), &mut rng));
        let loss = SquaredError(normal_vec(net.output_dim(), &mut rng));
        let (_, jvp) = forward_directional(&net, &x, &v, &loss).unwrap();
        let g = reverse_gradient(&net, &x, &loss).unwrap();
        worst = worst.max((jvp - g.dot(&v)).abs() / (1.0 + jvp.abs()));
    }
    ensure!(worst <= 1e-10, "worst relative disagreement {worst:e}");
    // Two inputs, two tanh hidden units, one linear output, C = a₂².
    let (w1, w2, x) = ([0.3, -0.8, 1.1, 0.4], [0.9, -0.5], [0.7, -1.2]);
    let mut p = w1.to_vec();
    p.extend([0.0, 0.0, w2[0], w2[1], 0.0]);
    let net = FeedForwardNet::from_params(&[2, 2, 1], &[Activation::Tanh, Activation::Identity], &ParamVector::new(p))
        .unwrap();
    let (a11, a12) = (x[0] * w1[0] + x[1] * w1[1], x[0] * w1[2] + x[1] * w1[3]);
    let a2 = a11.tanh() * w2[0] + a12.tanh() * w2[1];
    let dt = |a: f64| 1.0 - a.tanh().powi(2);
    let loss = SquaredError(vec![0.0]);
    let g = reverse_gradient(&net, &x, &loss).unwrap().values;
    let expected = [
        2.0 * a2 * w2[0] * dt(a11) * x[0],
        2.0 * a2 * w2[0] * dt(a11) * x[1],
        2.0 * a2 * w2[1] * dt(a12) * x[0],
        2.0 * a2 * w2[1] * dt(a12) * x[1],
    ];
    let toy = (0..4).fold(0.0f64, |m, i| m.max((g[i] - expected[i]).abs()));
    ensure!(toy <= 1e-14, "toy gradient deviates by {toy:e}");
    ensure!((forward_eval(&net, &x).unwrap()[0] - a2).abs() < 1e-15, "toy forward value");
    Ok(format!("worst relative gap {worst:.1e} over 1e4 nets; toy gradient within {toy:.1e}"))
}

fn forward_gradient_instance(seed: u64) -> (PdeProblem, BsdeModel, PathBatch) {
    let p = make_hjb(1, 1.0).unwrap();
    let arch = Architecture {
        hidden: vec![3],
        hidden_activation: Activation::Tanh,
        output_activation: Activation::Identity,
    };
    let mut m = BsdeModel::classical(&p, 4, &arch, seed).unwrap();
    let mut rng = CounterRng::new(seed, purpose::TEST, 0, 0);
    m.u0 = rng.normal();
    m.z0 = vec![rng.normal()];
    let b = simulate(&p.sde, &m.grid, 8, seed, 0).unwrap();
    (p, m, b)
}

fn direction_draws(m: &BsdeModel, p: &PdeProblem, b: &PathBatch, seed: u64, k: u64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|s| {
            let v = direction(m.n_params(), seed, 0, s, false);
            let (_, dd) = directional_derivative(m, p, b, &v).unwrap();
            v.iter().map(|vi| dd * vi).collect()
        })
        .collect()
}

fn forward_gradient_unbiased() -> Outcome {
    let (p, m, b) = forward_gradient_instance(121);
    let (_, g) = backprop_gradient(&m, &p, &b).unwrap();
    let k = 100_000u64;
    let est = direction_draws(&m, &p, &b, 5, k);
    let mut worst_z = 0.0f64;
    for j in 0..g.len() {
        let col: Vec<f64> = est.iter().map(|e| e[j]).collect();
        let (mean, var) = mean_var(&col);
        let z = (mean - g[j]).abs() / (var / k as f64).sqrt();
        worst_z = worst_z.max(z);
    }
    ensure!(worst_z <= 3.0, "an entry is {worst_z:.2} standard errors from backprop");
    let ks: Vec<f64> = (0..=6).map(|i| (100.0 * 10f64.powf(i as f64 / 2.0)).round()).collect();
    let mut sum = vec![0.0; g.len()];
    let mut taken = 0;
    let mut errs = Vec::new();
    for &kk in &ks {
        while taken < kk as usize {
            sum.iter_mut().zip(&est[taken]).for_each(|(s, e)| *s += e);
            taken += 1;
        }
        errs.push(sum.iter().zip(&g).map(|(s, gj)| (s / kk - gj).powi(2)).sum::<f64>().sqrt());
    }
    let slope = loglog_slope(&ks, &errs);
    ensure!((slope + 0.5).abs() <= 0.1, "convergence slope {slope:.3}");
    Ok(format!("max |z| = {worst_z:.2} over {} entries, slope {slope:.3}", g.len()))
}

fn forward_gradient_variance() -> Outcome {
    let mut tightest = 0.0f64;
    for net in 0..50u64 {
        let (p, m, b) = forward_gradient_instance(2000 + net);
        let (_, g) = backprop_gradient(&m, &p, &b).unwrap();
        let n = g.len() as f64;
        let g_max = g.iter().fold(0.0f64, |a, v| a.max(v * v));
        let est = direction_draws(&m, &p, &b, net, 2000);
        for j in 0..g.len() {
            let col: Vec<f64> = est.iter().map(|e| e[j]).collect();
            let var = mean_var(&col).1;
            let bound = (n + 2.0) * g_max;
            ensure!(var <= bound, "net {net} entry {j}: variance {var} > {bound}");
            tightest = tightest.max(var / bound);
        }
    }
    Ok(format!("largest variance / bound = {tightest:.3} over 50 nets"))
}

fn single_qubit_chi(a: f64) -> StateVector {
    let mut s = StateVector::new(1).unwrap();
    s.apply_gate(&gates::ry(2.0 * a.sqrt().asin()), &[0]).unwrap();
    s
}

fn amplitude_estimation() -> Outcome {
    let mut rng = CounterRng::new(41, purpose::TEST, 0, 0);
    let mut rates = Vec::new();
    for m in [4u32, 6, 8] {
        let mut ok = 0;
        for trial in 0..200u64 {
            let a = rng.uniform();
            let ae = AmplitudeEstimator::new(&single_qubit_chi(a), 0, m).unwrap();
            let est = ae.sample(&mut CounterRng::new(42, purpose::MEASUREMENT, trial, m as u64));
            if (est - a).abs() <= ae.error_bound(a) {
                ok += 1;
            }
        }
        ensure!(ok >= 150, "k = {}: bound held in {ok}/200", 1u64 << m);
        rates.push(format!("k={}: {ok}/200", 1u64 << m));
        let k = 1u64 << m;
        for j in [1, k / 8, k / 4 - 1] {
            let a = (PI * j as f64 / k as f64).sin().powi(2);
            let ae = AmplitudeEstimator::new(&single_qubit_chi(a), 0, m).unwrap();
            for s in 0..5 {
                let est = ae.sample(&mut CounterRng::new(43, purpose::MEASUREMENT, s, j));
                ensure!((est - a).abs() < 1e-12, "k = {k}, y = {j}: exact phase returned {est} for {a}");
            }
        }
    }
    Ok(format!("{}; representable phases exact", rates.join(", ")))
}

fn quadratic_speedup() -> Outcome {
    let d = discretize_gaussian(4, 1.0).unwrap();
    let hi = d.points.iter().map(|x| x * x).fold(0.0, f64::max);
    let v = |x: f64| x * x;
    let t = QamcTarget {
        dist: &d,
        v: &v,
        lo: 0.0,
        hi,
    };
    let truth = t.exact_mean();
    let mut quantum = Vec::new();
    for m in 4..=9u32 {
        let (mut err, mut cost) = (0.0, 0);
        for s in 0..30 {
            let r = qamc_mean_at(&t, m, 0.2, 5000 + s, None).unwrap();
            err += (r.value - truth).abs();
            cost = r.cost;
        }
        quantum.push((cost as f64, err / 30.0));
    }
    let cdf: Vec<f64> = d
        .probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut classical = Vec::new();
    for n in [100u64, 400, 1600, 6400, 25_600] {
        let mut err = 0.0;
        for s in 0..200u64 {
            let sampler = |i: u64| {
                let u = CounterRng::new(7000 + s, purpose::MONTE_CARLO, i, n).uniform();
                v(d.points[cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)])
            };
            err += (mc_mean(&sampler, n, 0.05).unwrap().value - truth).abs();
        }
        classical.push((n as f64, err / 200.0));
    }
    let q = scaling_fit(&quantum).unwrap();
    let c = scaling_fit(&classical).unwrap();
    ensure!((q.slope + 1.0).abs() <= 0.2, "quantum slope {:.3}", q.slope);
    ensure!((c.slope + 0.5).abs() <= 0.1, "classical slope {:.3}", c.slope);
    Ok(format!(
        "quantum slope {:.3} (CI {:.2}..{:.2}), classical slope {:.3} (CI {:.2}..{:.2})",
        q.slope, q.ci.0, q.ci.1, c.slope, c.ci.0, c.ci.1
    ))
}

fn gbm_exact(x0: f64, a: f64, b: f64) -> impl Fn(f64, &[f64]) -> Vec<f64> + Sync {
    move |t, w| vec![x0 * ((a - 0.5 * b * b) * t + b * w[0]).exp()]
}

fn strong_order() -> Outcome {
    let steps = [8, 16, 32, 64, 128, 256];
    let gbm = SdeSpec::gbm(vec![1.0], 1.0, 0.05, 0.4).unwrap();
    let s = empirical_strong_order(&gbm, &gbm_exact(1.0, 0.05, 0.4), &steps, 4000, 61).unwrap();
    ensure!((0.35..=0.65).contains(&s.r_hat), "stochastic r̂ = {:.3}", s.r_hat);
    let det = SdeSpec::gbm(vec![1.0], 1.0, 0.8, 0.0).unwrap();
    let dfit = empirical_strong_order(&det, &gbm_exact(1.0, 0.8, 0.0), &steps, 16, 61).unwrap();
    ensure!((0.85..=1.15).contains(&dfit.r_hat), "deterministic r̂ = {:.3}", dfit.r_hat);
    Ok(format!("GBM r̂ = {:.3}, deterministic r̂ = {:.3}", s.r_hat, dfit.r_hat))
}

fn multilevel() -> Outcome {
    let (x0, a, b) = (1.0, 0.05, 0.2);
    let spec = SdeSpec::gbm(vec![x0], 1.0, a, b).unwrap();
    let payoff = |x: &[f64]| x[0];
    let r = mlmc_estimate(&spec, &payoff, &MlmcConfig::new(0.005, 71)).unwrap();
    let exact = x0 * a.exp();
    let dev = (r.estimate.value - exact).abs() / r.estimate.half_width;
    ensure!(dev <= 3.0, "estimate {} is {dev:.2} half-widths from {exact}", r.estimate.value);
    let lv = &r.levels[1..];
    let steps: Vec<f64> = lv.iter().map(|l| (1u64 << l.level) as f64).collect();
    let vars: Vec<f64> = lv.iter().map(|l| l.variance).collect();
    let slope = loglog_slope(&steps, &vars);
    ensure!((-1.2..=-0.8).contains(&slope), "variance decay slope {slope:.3}");
    for level in 1..8u32 {
        let (_, coarse) = coupled_level_sample(&spec, &payoff, level, 72, level as u64).unwrap();
        let fine = level_increments(&spec, level, 72, level as u64);
        let n = 1usize << (level - 1);
        let pairs: Vec<f64> = (0..n).map(|m| fine[2 * m] + fine[2 * m + 1]).collect();
        let mut st = vec![0.0; n + 1];
        euler_path(&spec, &TimeGrid::uniform(0.0, 1.0, n).unwrap(), &pairs, &mut st).unwrap();
        ensure!(coarse.to_bits() == payoff(&st[n..]).to_bits(), "coarse path differs at level {level}");
    }
    Ok(format!(
        "{} within {dev:.2} half-widths of {exact:.6}; V_k slope {slope:.3}; coupling bitwise",
        r.estimate.value
    ))
}

fn bsde_hjb() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d1 = dir.path().join("d1");
    let cfg = cli_config(
        "bsde-train",
        &d1,
        &[
            ("train", "estimator", "backprop"),
            ("train", "lr", "0.05"),
            ("train", "batch", "128"),
            ("train", "iterations", "10000"),
        ],
    );
    run(&cfg).map_err(|e| e.to_string())?;
    let u0: f64 = read_rows(&d1.join("summary.csv"))[0][4].parse().unwrap();
    let reference = hjb_reference(1.0, 0.0).map_err(|e| e.to_string())?;
    let rel = ((u0 - reference) / reference).abs();
    ensure!(rel <= 0.05, "d = 1: u0 = {u0} vs reference {reference} ({:.2}% off)", 100.0 * rel);
    let d5 = dir.path().join("d5");
    let cfg = cli_config(
        "bsde-train",
        &d5,
        &[("problem", "d", "5"), ("train", "estimator", "all"), ("train", "lr", "0.01"), ("train", "batch", "20")],
    );
    run(&cfg).map_err(|e| e.to_string())?;
    let mut ratios = Vec::new();
    for row in read_rows(&d5.join("summary.csv")) {
        let ratio: f64 = row[3].parse().unwrap();
        ensure!(ratio >= 10.0, "d = 5, {}: loss fell only {ratio:.2}x", row[0]);
        ratios.push(format!("{} {ratio:.1}x", row[0]));
    }
    ensure!(ratios.len() == 3, "expected three estimators, got {}", ratios.len());
    Ok(format!(
        "d=1 u0 {u0:.5} vs {reference:.5} ({:.2}%); d=5 {}",
        100.0 * rel,
        ratios.join(", ")
    ))
}

fn parameter_shift() -> Outcome {
    let h = 1e-5;
    let mut rng = CounterRng::new(91, purpose::TEST, 0, 0);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = 2 + trial % 3;
        let mut spec = HeaSpec::new(n, 2, 1.0);
        for a in spec.z.iter_mut().chain(spec.theta.iter_mut()) {
            *a = rng.uniform_range(-PI, PI);
        }
        let w: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let c = HeaCircuit::new(n, 2, 1.0).unwrap();
        let obs = |z: &[f64], th: &[f64]| -> f64 { c.expectations(z, th).unwrap().iter().zip(&w).map(|(e, w)| e * w).sum() };
        let (gt, gz) = hea_gradients(&spec, &w).unwrap();
        for j in 0..spec.theta.len() {
            let (mut p, mut m) = (spec.theta.clone(), spec.theta.clone());
            p[j] += h;
            m[j] -= h;
            worst = worst.max(((obs(&spec.z, &p) - obs(&spec.z, &m)) / (2.0 * h) - gt[j]).abs());
        }
        for j in 0..n {
            let (mut p, mut m) = (spec.z.clone(), spec.z.clone());
            p[j] += h;
            m[j] -= h;
            worst = worst.max(((obs(&p, &spec.theta) - obs(&m, &spec.theta)) / (2.0 * h) - gz[j]).abs());
        }
    }
    ensure!(worst <= 1e-6, "worst deviation {worst:e}");
    Ok(format!("worst |shift - FD| = {worst:.1e} over 100 settings"))
}

fn hybrid_parity() -> Outcome {
    let totals: Vec<(usize, usize)> = experiment_configs()
        .iter()
        .map(|c| (c.classical_params(), c.quantum.total_params()))
        .collect();
    let want = [225, 565, 1260, 20, 30, 42];
    for (i, (&(c, q), w)) in totals.iter().zip(want).enumerate() {
        ensure!(c == w && q == w, "fixture {i}: classical {c}, hybrid {q}, expected {w}");
    }
    for (d, w) in [(4, 20), (5, 30), (6, 42)] {
        let l = pqc_only_layout(d).unwrap();
        ensure!(l.total_params() == w, "PQC-only d = {d}: {} parameters", l.total_params());
    }
    let fx = parity_fixture_d2();
    ensure!(fx.classical_params() == fx.quantum.total_params(), "d = 2 fixture totals differ");
    let dir = tempfile::tempdir().unwrap();
    let cfg = cli_config("hybrid-train", dir.path(), &[("hybrid", "iterations", "4000")]);
    run(&cfg).map_err(|e| e.to_string())?;
    let report = fs::read_to_string(dir.path().join("hybrid_report.txt")).map_err(|e| e.to_string())?;
    ensure!(!report.is_empty(), "empty report");
    let mut parts = Vec::new();
    for row in read_rows(&dir.path().join("hybrid_summary.csv")) {
        let (before, after): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        ensure!(after < 0.2 * before, "{}: {before:.4} -> {after:.4} is not below 0.2x", row[0]);
        parts.push(format!("{} {:.2}x", row[0], before / after));
    }
    ensure!(parts.len() == 2, "summary lacks a model");
    Ok(format!("totals 225/565/1260 and 20/30/42 exact; d=2 {}; report written", parts.join(", ")))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn riemann_and_budgets() -> Outcome {
    ensure!(close(riemann_error_bound(1.0, 0.0, 1.0, 1, 10).unwrap(), 0.05), "riemann bound example");
    let left = (riemann_left_sum(|x| x, 0.0, 1.0, 10) - 0.5).abs();
    ensure!(close(left, 0.05), "left-rule error of f(x) = x is {left}");
    for n in [4u64, 8, 16, 32, 64, 128, 256, 512, 1024] {
        let err = (riemann_left_sum(normal_pdf, -3.0, 3.0, n) - 0.997_300_203_936_739_8).abs();
        let bound = riemann_error_bound(normal_pdf(1.0), -3.0, 3.0, 1, n).unwrap();
        ensure!(err <= bound, "Gaussian density, n = {n}: {err} > {bound}");
    }
    let ng = n_gauss_bound(2, 1, 1.0, 0.1, 0.01);
    ensure!(close(ng, 64.8) && ng.log2().ceil() == 7.0, "n_Gauss example gives {ng}");
    ensure!(error_budget(0.1, 0.5, 1, 1.0, 0.1, 1.0, 0.05).unwrap().n_steps == 100, "N at r = 1/2, ε = 0.1");
    ensure!(chebyshev_samples(1.0, 0.1, 0.01).unwrap() == 10_000, "Chebyshev example");
    ensure!(chebyshev_samples(0.0, 0.1, 0.01).unwrap() == 1, "zero-variance Chebyshev");
    ensure!(mv_mc_samples(1.0, 0.1, 0.01, 8).unwrap() == 1476, "Hoeffding example");
    ensure!(close(mlmc_sample_complexity(0.1, 0.5).unwrap(), 100.0 * 10f64.ln().powi(2)), "MLMC middle branch");
    ensure!(close(mlmc_sample_complexity(0.1, 1.0).unwrap(), 100.0), "MLMC top branch");
    let l = 10f64.ln();
    ensure!(
        close(qamlmc_sample_complexity(0.1, 1.0).unwrap(), l.powf(3.5) * l.ln().powi(2) / 0.1),
        "QAMLMC r = 1 branch"
    );
    let row = |x_mode, method, v_mode, d| {
        gradient_method_complexity(&ComplexityQuery {
            method,
            x_mode,
            v_mode,
            d,
            g_max: 4.0,
            eps: 0.1,
        })
        .unwrap()
    };
    ensure!(close(row(Mode::Classical, GradientMethod::Backprop, None, 1.0), 400.0), "table row 1");
    ensure!(close(row(Mode::Quantum, GradientMethod::Backprop, None, 3.0), 180.0), "table row 4");
    ensure!(
        close(row(Mode::Quantum, GradientMethod::ForwardGradient, Some(Mode::Classical), 3.0), 243.0 * 8.0 / 1e-3),
        "table row 5 branch"
    );
    let cl = theoretical_budget(BudgetMode::Classical, 4.0, 2.0, 0.1, 1.0, None).unwrap();
    let qu = theoretical_budget(BudgetMode::Qamc, 4.0, 2.0, 0.1, 1.0, None).unwrap();
    ensure!(close(cl.get(Unitary::Gauss), 800.0) && close(qu.get(Unitary::Gauss), 80.0), "budget example");
    ensure!(close(cl.get(Unitary::F) / qu.get(Unitary::F), 10.0), "classical/quantum ratio λ/ε");
    let sol = theoretical_budget(BudgetMode::Qamc, 0.0, 1.0, 0.1, 1.0, Some(0.5)).unwrap();
    ensure!(close(sol.get(Unitary::F), 1e3), "solution mode U_f ~ ε⁻³");
    ensure!(close(payoff_variance_bound(1.0, 1.0, 0.25, 0.5, 1.0, &[1.0]), 3.25), "λ² = 1+0.25+2 at ‖x0‖² = 1");
    ensure!(close(payoff_variance_bound(1.0, 1.0, 0.25, 0.5, 1.0, &[0.0]), 2.25), "λ² = 1+0.25+1 at x0 = 0");
    ensure!(payoff_variance_bound(0.0, 1.0, 0.25, 0.5, 1.0, &[0.0]) == 0.0, "K_fp = 0");
    ensure!(close(loss_estimation_budget(1.0, 0.0, 0.0, 0.1).unwrap(), 10.0), "loss budget example");
    let fit = scaling_fit(&[(1.0, 1.0), (10.0, 0.1), (100.0, 0.01), (1000.0, 0.001)]).unwrap();
    ensure!(close(fit.slope, -1.0), "scaling fit of 1/q");
    let p = make_hjb(1, 1.0).unwrap();
    let mut shapes = Vec::new();
    for n in 1..=2usize {
        let m = BsdeModel::classical(&p, n, &Architecture::default_for(1), 3).unwrap();
        let pipe = MicroPipeline::build(&m, &p, 2).unwrap();
        let ledger = QueryLedger::new();
        let r = pipe.estimate(1, n, 4, 0.2, 5, &ledger).unwrap();
        let reps = r.cost;
        ensure!(ledger.get(Unitary::NN) == (n as u64 - 1) * reps, "N = {n}: U_NN {}", ledger.get(Unitary::NN));
        ensure!(ledger.get(Unitary::Gauss) == n as u64 * reps, "N = {n}: U_Gauss {}", ledger.get(Unitary::Gauss));
        shapes.push(format!("N={n}: {reps} preparations"));
    }
    Ok(format!(
        "example values reproduced; quadrature within bounds; ledger shapes hold ({}); \
         the λ² example 3.25 = 1+0.25+2 needs ‖x0‖² = 1 (x0 = 0 gives 2.25)",
        shapes.join(", ")
    ))
}

fn ripe() -> Outcome {
    let mut fails = 0;
    for trial in 0..200u64 {
        let mut rng = CounterRng::new(121, purpose::TEST, trial, 0);
        let mut v = normal_vec(8, &mut rng);
        let mut c = normal_vec(8, &mut rng);
        for x in [&mut v, &mut c] {
            let n = x.iter().map(|y| y * y).sum::<f64>().sqrt();
            x.iter_mut().for_each(|y| *y /= n);
        }
        let dot: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
        let s = inner_product_estimate(&v, &c, 0.05, 0.1, 500 + trial).map_err(|e| e.to_string())?;
        if (s.value - dot).abs() > 0.05 {
            fails += 1;
        }
    }
    ensure!(fails <= 20, "{fails}/200 estimates missed ε = 0.05");
    Ok(format!("{fails}/200 outside ε = 0.05 (allowed 20)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("AD correctness", 10, ad_correctness),
        ("forward-gradient unbiasedness", 60, forward_gradient_unbiased),
        ("forward-gradient variance bound", 60, forward_gradient_variance),
        ("amplitude estimation", 300, amplitude_estimation),
        ("quadratic speedup shape", 600, quadratic_speedup),
        ("Euler-Maruyama strong order", 120, strong_order),
        ("multilevel Monte Carlo", 300, multilevel),
        ("deep BSDE solves HJB", 1800, bsde_hjb),
        ("parameter-shift rule", 120, parameter_shift),
        ("hybrid parity fixtures", 1200, hybrid_parity),
        ("Riemann and budget formulas", 120, riemann_and_budgets),
        ("RIPE inner products", 300, ripe),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("{msg}; took {:.1}s, limit {budget}s", elapsed.as_secs_f64()))
            }
            o => o,
        };
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("criterion {id:>2} {tag} {name} ({:.1}s): {msg}", elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
