//! One function per subcommand. Each writes its CSV artifacts under the
//! output directory and returns a short text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dbq_bsde::hybrid::{hybrid_model, parity_fixture_d2, ExperimentConfig};
use dbq_bsde::train::{training_batch, validation_loss, VALIDATION_STREAM};
use dbq_bsde::{
    estimate_gradient, experiment_configs, hjb_reference, loss_batch, make_allen_cahn, make_black_scholes_default,
    make_hjb, train, Architecture, BsdeModel, Estimator, LossHistory, MicroPipeline, PdeProblem, StepNet,
    TrainConfig,
};
use dbq_core::autodiff::Activation;
use dbq_core::ledger::{
    classical_fwd_grad_samples, directional_derivative_complexity, fwd_grad_mixed_complexity,
    fwd_grad_quantum_complexity, gradient_method_complexity, loss_estimation_budget, payoff_variance_bound,
    theoretical_budget, BudgetMode, ComplexityQuery, GradientMethod, Mode, QueryLedger, Unitary, VarianceDimension,
};
use dbq_core::mc::{
    chebyshev_samples, error_budget, mlmc_estimate, mlmc_sample_complexity, mv_mc_samples, n_gauss_bound,
    qamlmc_sample_complexity, riemann_error_bound, MlmcConfig,
};
use dbq_core::rng::{derive_seed, purpose, CounterRng};
use dbq_core::sde::{save_path_dump, SdeSpec};
use dbq_core::{Error, Result};
use dbq_qsim::ae::AmplitudeEstimator;
use dbq_qsim::{gates, StateVector};

use crate::config::{ModelParams, ProblemParams, RunConfig, TrainParams};
use crate::plot::emit_plot_data;

pub const ESTIMATE_HEADER: [&str; 5] = ["k", "estimate", "true_value", "abs_error", "queries"];
pub const MLMC_HEADER: [&str; 5] = ["level", "samples", "mean_correction", "variance", "cost"];
pub const HYBRID_HEADER: [&str; 2] = ["iteration", "loss"];
pub const SUMMARY_HEADER: [&str; 5] = ["estimator", "initial_loss", "final_loss", "ratio", "u0"];
pub const COST_HEADER: [&str; 3] = ["formula", "inputs", "value"];

/// Twelve significant digits, in exponent form outside `[1e-4, 1e15)`.
fn fmt_num(v: f64) -> String {
    let v: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// CSV file with a fixed header; rows are written as displayed strings.
struct Table {
    w: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(fs::File::create(path)?);
        w.write_record(header).map_err(csv_err)?;
        Ok(Self { w })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields).map_err(csv_err)
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn build_problem(p: &ProblemParams, d: usize) -> Result<PdeProblem> {
    match p.pde.as_str() {
        "hjb" => make_hjb(d, p.horizon),
        "allen_cahn" => make_allen_cahn(d, p.horizon),
        "black_scholes" => make_black_scholes_default(d, p.horizon),
        other => Err(Error::config(format!("unknown pde `{other}`"))),
    }
}

pub fn architecture(m: &ModelParams, d: usize) -> Result<Architecture> {
    let mut arch = Architecture::default_for(d);
    let width = if m.width == 0 { arch.hidden[0] } else { m.width };
    arch.hidden = vec![width; m.hidden_layers];
    arch.hidden_activation = Activation::from_name(&m.activation)?;
    Ok(arch)
}

pub fn estimators(t: &TrainParams) -> Vec<Estimator> {
    let fwd = Estimator::ForwardGradient {
        v_samples: t.v_samples,
        truncate: t.truncate,
    };
    let num = Estimator::Numerical { h: t.h };
    match t.estimator.as_str() {
        "all" => vec![Estimator::Backprop, fwd, num],
        "forward_gradient" => vec![fwd],
        "numerical" => vec![num],
        _ => vec![Estimator::Backprop],
    }
}

fn train_config(t: &TrainParams, estimator: Estimator, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(t.lr, t.batch, t.iterations, estimator, seed);
    c.clip = (t.clip > 0.0).then_some(t.clip);
    c.wall_clock = t.wall_clock;
    c
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

pub fn bsde_train(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let d = cfg.problem.d;
    let p = build_problem(&cfg.problem, d)?;
    let arch = architecture(&cfg.model, d)?;
    let t = &cfg.train;
    let mut summary = Table::create(&out.join("summary.csv"), &SUMMARY_HEADER)?;
    let mut text = String::new();
    let mut histories = Vec::new();
    for est in estimators(t) {
        let name = est.name();
        let mut model = BsdeModel::classical(&p, cfg.problem.steps, &arch, cfg.seed)?;
        let before = validation_loss(&model, &p, t.validation_batch, t.validation_seed)?;
        let history = train(&mut model, &p, &train_config(t, est, cfg.seed))?;
        let after = validation_loss(&model, &p, t.validation_batch, t.validation_seed)?;
        let path = out.join(format!("train_{name}.csv"));
        history.write_csv(fs::File::create(&path)?)?;
        histories.push(path);
        model.save(out.join(format!("model_{name}")))?;
        if !history.warnings.is_empty() {
            fs::write(out.join(format!("warnings_{name}.txt")), history.warnings.join("\n") + "\n")?;
        }
        summary.row(&[
            name.into(),
            before.to_string(),
            after.to_string(),
            (before / after).to_string(),
            model.u0.to_string(),
        ])?;
        let _ = writeln!(
            text,
            "{name}: validation loss {before:.6} -> {after:.6} ({:.2}x), u0 = {:.6}",
            before / after,
            model.u0
        );
    }
    summary.finish()?;
    let refs: Vec<&Path> = histories.iter().map(PathBuf::as_path).collect();
    emit_plot_data(&refs, &out.join("plot.csv"))?;
    Ok(text)
}

pub fn bsde_eval(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let dir = if cfg.eval.checkpoint.is_empty() {
        out.join("model_backprop")
    } else {
        PathBuf::from(&cfg.eval.checkpoint)
    };
    if !dir.join("model.txt").is_file() {
        return Err(Error::config(format!("no saved model in {}", dir.display())));
    }
    let model = BsdeModel::load(&dir)?;
    let p = build_problem(&cfg.problem, model.d())?;
    if model.n_steps() != cfg.problem.steps || (model.grid.t_end() - cfg.problem.horizon).abs() > 1e-12 {
        return Err(Error::config(format!(
            "model has {} steps to T = {}, config asks for {} steps to T = {}",
            model.n_steps(),
            model.grid.t_end(),
            cfg.problem.steps,
            cfg.problem.horizon
        )));
    }
    let t = &cfg.train;
    let batch = training_batch(&model, &p, t.validation_batch, t.validation_seed, VALIDATION_STREAM)?;
    let loss = loss_batch(&model, &p, &batch)?;
    let mut rows = vec![("loss", loss), ("u0", model.u0)];
    if cfg.problem.pde == "hjb" && model.d() == 1 {
        let reference = hjb_reference(cfg.problem.horizon, 0.0)?;
        rows.push(("reference", reference));
        rows.push(("rel_error", ((model.u0 - reference) / reference).abs()));
    }
    let mut table = Table::create(&out.join("eval.csv"), &["metric", "value"])?;
    let mut text = String::new();
    for (k, v) in &rows {
        table.row(&[k.to_string(), v.to_string()])?;
        let _ = writeln!(text, "{k}: {v}");
    }
    table.finish()?;
    if cfg.eval.dump_paths {
        save_path_dump(&batch, t.validation_seed, out.join("paths.bin"))?;
    }
    Ok(text)
}

pub fn grad_bench(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let d = cfg.problem.d;
    let p = build_problem(&cfg.problem, d)?;
    let model = BsdeModel::classical(&p, cfg.problem.steps, &architecture(&cfg.model, d)?, cfg.seed)?;
    let batch = training_batch(&model, &p, cfg.train.batch, cfg.seed, 0)?;
    let exact = estimate_gradient(&model, &p, &batch, &Estimator::Backprop, cfg.seed, 0)?;
    let norm = exact.grad.values.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut all = cfg.train.clone();
    all.estimator = "all".into();
    let mut table = Table::create(&out.join("grad_bench.csv"), &["estimator", "loss", "max_abs_error", "rel_l2_error"])?;
    let mut text = String::new();
    for est in estimators(&all) {
        let g = estimate_gradient(&model, &p, &batch, &est, cfg.seed, 0)?;
        let diff: Vec<f64> = g.grad.values.iter().zip(&exact.grad.values).map(|(a, b)| a - b).collect();
        let max_abs = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rel = diff.iter().map(|v| v * v).sum::<f64>().sqrt() / norm;
        table.row(&[est.name().into(), g.loss.to_string(), max_abs.to_string(), rel.to_string()])?;
        let _ = writeln!(text, "{}: max |Δ| = {max_abs:.3e}, relative l2 = {rel:.3e}", est.name());
    }
    table.finish()?;
    Ok(text)
}

pub fn qamc(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let q = &cfg.quantum;
    let d = cfg.problem.d;
    let p = build_problem(&cfg.problem, d)?;
    let model = BsdeModel::classical(&p, q.steps, &architecture(&cfg.model, d)?, cfg.seed)?;
    let pipe = MicroPipeline::build(&model, &p, q.n_bits)?;
    let truth = pipe.exact_loss();
    let ledger = QueryLedger::new();
    let mut table = Table::create(&out.join("qamc.csv"), &ESTIMATE_HEADER)?;
    let mut text = format!("exact discretized loss {truth}\n");
    for m in q.phase_bits_min..=q.phase_bits_max {
        let mut err = 0.0;
        for trial in 0..q.trials {
            let r = pipe.estimate(d, q.steps, m, q.delta, derive_seed(cfg.seed, trial), &ledger)?;
            err += (r.value - truth).abs();
            table.row(&[
                (1u64 << m).to_string(),
                r.value.to_string(),
                truth.to_string(),
                (r.value - truth).abs().to_string(),
                r.cost.to_string(),
            ])?;
        }
        let _ = writeln!(text, "k = {}: mean |error| {:.3e}", 1u64 << m, err / q.trials as f64);
    }
    table.finish()?;
    fs::write(out.join("ledger.csv"), ledger.snapshot().to_csv())?;
    Ok(text)
}

pub fn ae_bench(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let q = &cfg.quantum;
    let a = q.amplitude;
    let mut chi = StateVector::new(1)?;
    chi.apply_gate(&gates::ry(2.0 * a.sqrt().asin()), &[0])?;
    let mut table = Table::create(&out.join("ae_bench.csv"), &ESTIMATE_HEADER)?;
    let mut text = String::new();
    for m in q.phase_bits_min..=q.phase_bits_max {
        let ae = AmplitudeEstimator::new(&chi, 0, m)?;
        let mut within = 0;
        for trial in 0..q.trials {
            let mut rng = CounterRng::new(cfg.seed, purpose::MEASUREMENT, trial, m as u64);
            let est = ae.sample(&mut rng);
            if (est - a).abs() <= ae.error_bound(a) {
                within += 1;
            }
            table.row(&[
                ae.k().to_string(),
                est.to_string(),
                a.to_string(),
                (est - a).abs().to_string(),
                ae.grover_calls().to_string(),
            ])?;
        }
        let _ = writeln!(text, "k = {}: bound held in {within}/{} runs", ae.k(), q.trials);
    }
    table.finish()?;
    Ok(text)
}

pub fn mlmc(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let m = &cfg.mlmc;
    let spec = SdeSpec::gbm(vec![m.x0], m.horizon, m.drift, m.vol)?;
    let strike = m.strike;
    let call = |x: &[f64]| (x[0] - strike).max(0.0);
    let identity = |x: &[f64]| x[0];
    let payoff: &(dyn Fn(&[f64]) -> f64 + Sync) = if m.payoff == "call" { &call } else { &identity };
    let mut mc = MlmcConfig::new(m.eps, cfg.seed);
    mc.pilot = m.pilot;
    mc.max_level = m.max_level;
    let r = mlmc_estimate(&spec, payoff, &mc)?;
    let mut table = Table::create(&out.join("mlmc.csv"), &MLMC_HEADER)?;
    for l in &r.levels {
        table.row(&[
            l.level.to_string(),
            l.samples.to_string(),
            l.mean_correction.to_string(),
            l.variance.to_string(),
            l.cost.to_string(),
        ])?;
    }
    table.finish()?;
    let mut text = format!(
        "estimate {} ± {} (one standard error), {} levels, cost {}\n",
        r.estimate.value,
        r.estimate.half_width,
        r.levels.len(),
        r.estimate.cost
    );
    if m.payoff == "identity" {
        let _ = writeln!(text, "analytic E[X_T] = {}", m.x0 * (m.drift * m.horizon).exp());
    }
    Ok(text)
}

pub fn fixture(name: &str) -> Result<ExperimentConfig> {
    let pick = |n: &str| {
        experiment_configs()
            .into_iter()
            .find(|c| c.name == n)
            .ok_or_else(|| Error::config(format!("no fixture named {n}")))
    };
    match name {
        "d2" => Ok(parity_fixture_d2()),
        "d5" | "d10" | "d20" => pick(&format!("hybrid-{name}")),
        "pqc4" | "pqc5" | "pqc6" => pick(&format!("pqc-d{}", &name[3..])),
        other => Err(Error::config(format!("unknown fixture `{other}`"))),
    }
}

fn classical_architecture(sizes: &[usize]) -> Architecture {
    Architecture {
        hidden: sizes[1..sizes.len() - 1].to_vec(),
        hidden_activation: Activation::Relu,
        output_activation: Activation::Identity,
    }
}

fn write_losses(history: &LossHistory, path: &Path) -> Result<()> {
    let mut t = Table::create(path, &HYBRID_HEADER)?;
    for r in &history.records {
        t.row(&[r.iteration.to_string(), r.loss.to_string()])?;
    }
    t.finish()
}

struct HybridRun {
    label: &'static str,
    params: usize,
    before: f64,
    after: f64,
}

fn run_model<N: StepNet>(
    model: &mut BsdeModel<N>,
    p: &PdeProblem,
    cfg: &RunConfig,
    path: &Path,
) -> Result<(f64, f64)> {
    let h = &cfg.hybrid;
    let t = &cfg.train;
    let before = validation_loss(model, p, t.validation_batch, t.validation_seed)?;
    let tc = TrainConfig::new(h.lr, h.batch, h.iterations, Estimator::Backprop, cfg.seed);
    let history = train(model, p, &tc)?;
    write_losses(&history, path)?;
    Ok((before, validation_loss(model, p, t.validation_batch, t.validation_seed)?))
}

pub fn hybrid_train(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let fx = fixture(&cfg.hybrid.fixture)?;
    let p = build_problem(&cfg.problem, fx.d)?;
    let steps = cfg.problem.steps;
    let mut layout = fx.quantum.clone();
    layout.t = cfg.quantum.t;
    let q_path = out.join("hybrid_quantum.csv");
    let c_path = out.join("hybrid_classical.csv");
    let mut hyb = hybrid_model(&p, steps, &layout, cfg.hybrid.bypass, cfg.seed)?;
    let (qb, qa) = run_model(&mut hyb, &p, cfg, &q_path)?;
    let mut cls = BsdeModel::classical(&p, steps, &classical_architecture(&fx.classical), cfg.seed)?;
    let (cb, ca) = run_model(&mut cls, &p, cfg, &c_path)?;
    emit_plot_data(&[&q_path, &c_path], &out.join("hybrid_plot.csv"))?;
    let runs = [
        HybridRun {
            label: "hybrid",
            params: layout.total_params(),
            before: qb,
            after: qa,
        },
        HybridRun {
            label: "classical",
            params: fx.classical_params(),
            before: cb,
            after: ca,
        },
    ];
    let mut table = Table::create(
        &out.join("hybrid_summary.csv"),
        &["model", "params_per_net", "initial_loss", "final_loss", "ratio"],
    )?;
    for r in &runs {
        table.row(&[
            r.label.into(),
            r.params.to_string(),
            r.before.to_string(),
            r.after.to_string(),
            (r.before / r.after).to_string(),
        ])?;
    }
    table.finish()?;
    let report = hybrid_report(&fx, &layout, steps, cfg, &runs);
    fs::write(out.join("hybrid_report.txt"), &report)?;
    Ok(report)
}

fn hybrid_report(
    fx: &ExperimentConfig,
    layout: &dbq_bsde::HybridLayout,
    steps: usize,
    cfg: &RunConfig,
    runs: &[HybridRun],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "fixture {} (d = {}, N = {steps}, lr {}, batch {}, {} iterations, seed {})",
        fx.name, fx.d, cfg.hybrid.lr, cfg.hybrid.batch, cfg.hybrid.iterations, cfg.seed
    );
    let _ = writeln!(
        s,
        "hybrid per-step network: pre {:?}, {} qubits x {} repetitions ({} angles), post {:?}; {} parameters",
        layout.pre,
        layout.qubits,
        layout.reps,
        layout.variational_params(),
        layout.post,
        layout.total_params()
    );
    let _ = writeln!(s, "classical per-step network: {:?}; {} parameters", fx.classical, fx.classical_params());
    for r in runs {
        let verdict = if r.after < 0.2 * r.before {
            "below 0.2x initial"
        } else {
            "NOT below 0.2x initial"
        };
        let _ = writeln!(
            s,
            "{}: validation loss {:.6} -> {:.6}, {:.2}x reduction, {verdict}",
            r.label,
            r.before,
            r.after,
            r.before / r.after
        );
    }
    let (h, c) = (&runs[0], &runs[1]);
    let lead = if h.after < c.after { "hybrid" } else { "classical" };
    let _ = writeln!(
        s,
        "{lead} model ends lower; final-loss ratio hybrid/classical = {:.3}",
        h.after / c.after
    );
    s
}

pub fn cost_model(cfg: &RunConfig) -> Result<String> {
    let out = prepare_out(cfg)?;
    let c = &cfg.cost;
    let (d, n, eps, lambda, g, delta) = (c.d as f64, c.steps as f64, c.eps, c.lambda, c.g_max, c.delta);
    let n_theta = if c.n_theta == 0 { d * d } else { c.n_theta as f64 };
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    let mut push = |id: &str, inputs: String, v: f64| rows.push((id.into(), inputs, v));

    push(
        "chebyshev_samples",
        format!("var={} eps={eps} delta={delta}", lambda * lambda),
        chebyshev_samples(lambda * lambda, eps, delta)? as f64,
    );
    push(
        "mv_mc_samples",
        format!("B={lambda} eps={eps} delta={delta} d={}", c.d),
        mv_mc_samples(lambda, eps, delta, c.d)? as f64,
    );
    push(
        "riemann_error_bound",
        format!("L={} a=0 b=1 M=1 n={}", c.lip, c.steps),
        riemann_error_bound(c.lip, 0.0, 1.0, 1, c.steps as u64)?,
    );
    push(
        "n_gauss",
        format!("N={} d={} L={} dt={} eps={eps}", c.steps, c.d, c.lip, c.dt),
        n_gauss_bound(c.steps as u64, c.d, c.lip, c.dt, eps),
    );
    if eps < 1.0 {
        let b = error_budget(eps, c.r, c.d, c.lip, c.dt, lambda, delta)?;
        let inputs = format!("eps={eps} r={} d={} L={} dt={} lambda={lambda} delta={delta}", c.r, c.d, c.lip, c.dt);
        push("error_budget.n_steps", inputs.clone(), b.n_steps as f64);
        push("error_budget.n_gauss_points", inputs.clone(), b.n_gauss_points);
        push("error_budget.n_gauss_qubits", inputs.clone(), b.n_gauss_qubits as f64);
        push("error_budget.classical_samples", inputs.clone(), b.classical_samples as f64);
        push("error_budget.quantum_queries", inputs, b.quantum_queries as f64);
        push("mlmc_sample_complexity", format!("eps={eps} r={}", c.r), mlmc_sample_complexity(eps, c.r)?);
        push("qamlmc_sample_complexity", format!("eps={eps} r={}", c.r), qamlmc_sample_complexity(eps, c.r)?);
    }
    for (mode, tag) in [(BudgetMode::Classical, "classical"), (BudgetMode::Qamc, "qamc")] {
        for (order, suffix) in [(None, "loss"), (Some(c.r), "solution")] {
            let b = theoretical_budget(mode, n, d, eps, lambda, order)?;
            let inputs = match order {
                None => format!("N={} d={} eps={eps} lambda={lambda}", c.steps, c.d),
                Some(r) => format!("r={r} d={} eps={eps} lambda={lambda}", c.d),
            };
            for u in Unitary::ALL {
                push(&format!("budget.{tag}.{suffix}.{}", u.name()), inputs.clone(), b.get(u));
            }
        }
    }
    let rows_tbl = [
        ("table.classical_x.backprop", Mode::Classical, GradientMethod::Backprop, None),
        ("table.classical_x.fwd_grad", Mode::Classical, GradientMethod::ForwardGradient, Some(Mode::Classical)),
        ("table.classical_x.numerical", Mode::Classical, GradientMethod::Numerical, None),
        ("table.quantum_x.backprop", Mode::Quantum, GradientMethod::Backprop, None),
        ("table.quantum_x.fwd_grad_classical_v", Mode::Quantum, GradientMethod::ForwardGradient, Some(Mode::Classical)),
        ("table.quantum_x.fwd_grad_quantum_v", Mode::Quantum, GradientMethod::ForwardGradient, Some(Mode::Quantum)),
        ("table.quantum_x.numerical", Mode::Quantum, GradientMethod::Numerical, None),
    ];
    for (id, x_mode, method, v_mode) in rows_tbl {
        let q = ComplexityQuery {
            method,
            x_mode,
            v_mode,
            d,
            g_max: g,
            eps,
        };
        push(id, format!("d={} g_max={g} eps={eps}", c.d), gradient_method_complexity(&q)?);
    }
    let fin = format!("n_theta={n_theta} d={} g_max={g} eps={eps}", c.d);
    push(
        "fwd_grad_quantum.input_dim",
        fin.clone(),
        fwd_grad_quantum_complexity(n_theta, d, g, eps, VarianceDimension::Input),
    );
    push(
        "fwd_grad_quantum.param_dim",
        fin,
        fwd_grad_quantum_complexity(n_theta, d, g, eps, VarianceDimension::Parameters),
    );
    push(
        "fwd_grad_mixed",
        format!("n_theta={n_theta} g_max={g} eps={eps}"),
        fwd_grad_mixed_complexity(n_theta, g, eps),
    );
    push(
        "directional_derivative",
        format!("n_theta={n_theta} g_max={g} |v|={} eps={eps}", n_theta.sqrt()),
        directional_derivative_complexity(n_theta, g, n_theta.sqrt(), eps),
    );
    push(
        "classical_fwd_grad_samples",
        format!("n_theta={n_theta} g_max={g} eps={eps} delta={delta}"),
        classical_fwd_grad_samples(n_theta, g, eps, delta),
    );
    push(
        "loss_estimation_budget",
        format!("L={} f0=0 E|X|^2={} eps={eps}", c.lip, c.d),
        loss_estimation_budget(c.lip, 0.0, d, eps)?,
    );
    let dt = 1.0 / n;
    push(
        "payoff_variance_bound",
        format!("K_fp={} K2=1 dt={dt} r={} C=1 x0=0", c.lip * c.lip, c.r),
        payoff_variance_bound(c.lip * c.lip, 1.0, dt, c.r, 1.0, &vec![0.0; c.d]),
    );

    let mut table = Table::create(&out.join("cost_model.csv"), &COST_HEADER)?;
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let iwidth = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut text = String::from("leading constants 1, logarithmic factors dropped: values fix shapes, not absolute counts\n");
    let _ = writeln!(text, "{:<width$}  {:<iwidth$}  value", "formula", "inputs");
    for (id, inputs, v) in &rows {
        let v = fmt_num(*v);
        table.row(&[id.clone(), inputs.clone(), v.clone()])?;
        let _ = writeln!(text, "{id:<width$}  {inputs:<iwidth$}  {v}");
    }
    table.finish()?;
    Ok(text)
}
