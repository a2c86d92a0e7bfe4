//! Sectioned `key = value` run configuration. Every key is declared once in
//! [`SCHEMA`], which supplies its type, default and help text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dbq_core::{Error, Result};
use ini::Ini;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Uint,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Uint => "uint".into(),
            Kind::Float => "float".into(),
            Kind::Bool => "bool".into(),
            Kind::Text => "text".into(),
            Kind::Choice(opts) => opts.join("|"),
        }
    }

    fn check(self, raw: &str) -> std::result::Result<(), String> {
        match self {
            Kind::Uint => raw.parse::<u64>().map(|_| ()).map_err(|e| e.to_string()),
            Kind::Float => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(()),
                Ok(v) => Err(format!("{v} is not finite")),
                Err(e) => Err(e.to_string()),
            },
            Kind::Bool => raw.parse::<bool>().map(|_| ()).map_err(|e| e.to_string()),
            Kind::Text => Ok(()),
            Kind::Choice(opts) if opts.contains(&raw) => Ok(()),
            Kind::Choice(opts) => Err(format!("expected one of {}", opts.join(", "))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Field {
    pub section: &'static str,
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn field(section: &'static str, key: &'static str, kind: Kind, default: &'static str, doc: &'static str) -> Field {
    Field {
        section,
        key,
        kind,
        default,
        doc,
    }
}

pub const ESTIMATORS: &[&str] = &["backprop", "forward_gradient", "numerical", "all"];
pub const FIXTURES: &[&str] = &["d2", "d5", "d10", "d20", "pqc4", "pqc5", "pqc6"];

pub const SCHEMA: &[Field] = &[
    field("run", "seed", Kind::Uint, "1", "master seed; overridden by --seed"),
    field("run", "out", Kind::Text, "out", "output directory; overridden by --out"),
    field("run", "threads", Kind::Uint, "0", "worker threads, 0 = all cores; overridden by --threads"),
    field("problem", "pde", Kind::Choice(&["hjb", "allen_cahn", "black_scholes"]), "hjb", "PDE instance"),
    field("problem", "d", Kind::Uint, "1", "spatial dimension"),
    field("problem", "steps", Kind::Uint, "20", "time steps N"),
    field("problem", "horizon", Kind::Float, "1.0", "terminal time T"),
    field("model", "width", Kind::Uint, "0", "hidden width, 0 = default for d"),
    field("model", "hidden_layers", Kind::Uint, "2", "hidden layers per step network"),
    field("model", "activation", Kind::Choice(&["relu", "tanh", "sigmoid"]), "relu", "hidden activation"),
    field("train", "estimator", Kind::Choice(ESTIMATORS), "all", "gradient estimator; all runs the three in turn"),
    field("train", "lr", Kind::Float, "0.01", "SGD learning rate"),
    field("train", "batch", Kind::Uint, "20", "paths per iteration"),
    field("train", "iterations", Kind::Uint, "2000", "SGD iterations"),
    field("train", "h", Kind::Float, "0.001", "central-difference step of the numerical estimator"),
    field("train", "v_samples", Kind::Uint, "100", "directions averaged by the forward gradient"),
    field("train", "truncate", Kind::Bool, "false", "clamp forward-gradient directions to ±3"),
    field("train", "clip", Kind::Float, "0", "elementwise gradient clamp, 0 disables"),
    field("train", "wall_clock", Kind::Bool, "false", "record wall_ms; breaks byte-identical reruns"),
    field("train", "validation_batch", Kind::Uint, "1000", "paths in the fixed validation batch"),
    field("train", "validation_seed", Kind::Uint, "99", "seed of the validation batch"),
    field("eval", "checkpoint", Kind::Text, "", "model directory, empty = <out>/model_backprop"),
    field("eval", "dump_paths", Kind::Bool, "true", "write the evaluation paths to paths.bin"),
    field("quantum", "phase_bits_min", Kind::Uint, "3", "smallest phase register, k = 2^bits"),
    field("quantum", "phase_bits_max", Kind::Uint, "7", "largest phase register"),
    field("quantum", "trials", Kind::Uint, "10", "independent runs per k"),
    field("quantum", "delta", Kind::Float, "0.2", "failure probability of each mean estimate"),
    field("quantum", "amplitude", Kind::Float, "0.3", "ae-bench target probability a"),
    field("quantum", "n_bits", Kind::Uint, "3", "qubits per discretized Gaussian increment"),
    field("quantum", "steps", Kind::Uint, "2", "time steps of the simulated qamc pipeline"),
    field("quantum", "t", Kind::Float, "1.0", "entangling initial-state evolution time"),
    field("mlmc", "eps", Kind::Float, "0.02", "target root-mean-square error"),
    field("mlmc", "x0", Kind::Float, "1.0", "GBM initial value"),
    field("mlmc", "drift", Kind::Float, "0.05", "GBM drift a"),
    field("mlmc", "vol", Kind::Float, "0.2", "GBM volatility b"),
    field("mlmc", "horizon", Kind::Float, "1.0", "GBM horizon"),
    field("mlmc", "payoff", Kind::Choice(&["identity", "call"]), "identity", "payoff of X_T"),
    field("mlmc", "strike", Kind::Float, "1.0", "call strike"),
    field("mlmc", "pilot", Kind::Uint, "1000", "pilot samples per level"),
    field("mlmc", "max_level", Kind::Uint, "16", "finest admissible level"),
    field("hybrid", "fixture", Kind::Choice(FIXTURES), "d2", "matched hybrid/classical pair"),
    field("hybrid", "lr", Kind::Float, "0.05", "SGD learning rate"),
    field("hybrid", "batch", Kind::Uint, "20", "paths per iteration"),
    field("hybrid", "iterations", Kind::Uint, "2000", "SGD iterations"),
    field("hybrid", "bypass", Kind::Bool, "false", "replace the circuit by the identity"),
    field("cost", "d", Kind::Uint, "2", "dimension"),
    field("cost", "steps", Kind::Uint, "4", "time steps N"),
    field("cost", "eps", Kind::Float, "0.1", "target error"),
    field("cost", "lambda", Kind::Float, "1.0", "payoff standard-deviation bound"),
    field("cost", "g_max", Kind::Float, "4.0", "squared max gradient entry"),
    field("cost", "n_theta", Kind::Uint, "0", "trainable parameters, 0 = d^2"),
    field("cost", "r", Kind::Float, "0.5", "strong order"),
    field("cost", "delta", Kind::Float, "0.01", "failure probability"),
    field("cost", "lip", Kind::Float, "1.0", "payoff Lipschitz constant"),
    field("cost", "dt", Kind::Float, "0.1", "step size in the Gaussian-grid bound"),
];

/// Subcommand name, summary and the sections it reads.
pub const SUBCOMMANDS: &[(&str, &str, &[&str])] = &[
    ("bsde-train", "train the deep BSDE solver", &["run", "problem", "model", "train"]),
    ("bsde-eval", "evaluate a saved model on the validation batch", &["run", "problem", "train", "eval"]),
    ("grad-bench", "compare the three gradient estimators on one batch", &["run", "problem", "model", "train"]),
    ("qamc", "amplitude-estimated loss of a micro-scale model", &["run", "problem", "model", "quantum"]),
    ("ae-bench", "amplitude estimation error against k", &["run", "quantum"]),
    ("mlmc", "multilevel Monte Carlo on geometric Brownian motion", &["run", "mlmc"]),
    ("hybrid-train", "train a hybrid network and its matched classical twin", &["run", "problem", "train", "hybrid", "quantum"]),
    ("cost-model", "evaluate the closed-form query budgets", &["run", "cost"]),
];

/// Help text listing every key a subcommand reads.
pub fn schema_help(subcommand: &str) -> String {
    let sections = SUBCOMMANDS
        .iter()
        .find(|s| s.0 == subcommand)
        .map(|s| s.2)
        .unwrap_or(&[]);
    let mut out = String::from("Config keys (file sections, defaults in brackets):\n");
    for sec in sections {
        let _ = writeln!(out, "  [{sec}]");
        for f in SCHEMA.iter().filter(|f| f.section == *sec) {
            let _ = writeln!(
                out,
                "    {:<18} {:<34} [{}] {}",
                f.key,
                f.kind.describe(),
                f.default,
                f.doc
            );
        }
    }
    out
}

/// Raw values keyed by `(section, key)`, always complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Values(BTreeMap<(String, String), String>);

impl Default for Values {
    fn default() -> Self {
        Self(
            SCHEMA
                .iter()
                .map(|f| ((f.section.to_string(), f.key.to_string()), f.default.to_string()))
                .collect(),
        )
    }
}

fn lookup(section: &str, key: &str) -> Option<&'static Field> {
    SCHEMA.iter().find(|f| f.section == section && f.key == key)
}

impl Values {
    /// Sets one key after checking it exists and parses.
    pub fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<()> {
        let f = lookup(section, key).ok_or_else(|| Error::config(format!("unknown key `{key}` in [{section}]")))?;
        f.kind
            .check(raw)
            .map_err(|e| Error::config(format!("[{section}] {key} = `{raw}`: {e}")))?;
        self.0.insert((section.into(), key.into()), raw.into());
        Ok(())
    }

    /// Defaults overridden by the file text.
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::config(format!("config syntax: {e}")))?;
        let mut v = Self::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::config(format!("key `{k}` appears before any [section]")));
                }
                continue;
            };
            if !SCHEMA.iter().any(|f| f.section == section) {
                return Err(Error::config(format!("unknown section [{section}]")));
            }
            for (k, raw) in props.iter() {
                if props.get_all(k).count() > 1 {
                    return Err(Error::config(format!("key `{k}` repeated in [{section}]")));
                }
                v.set(section, k, raw)?;
            }
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn raw(&self, section: &str, key: &str) -> &str {
        &self.0[&(section.to_string(), key.to_string())]
    }

    fn uint(&self, section: &str, key: &str) -> usize {
        self.raw(section, key).parse().expect("validated on insert")
    }

    fn u64(&self, section: &str, key: &str) -> u64 {
        self.raw(section, key).parse().expect("validated on insert")
    }

    fn float(&self, section: &str, key: &str) -> f64 {
        self.raw(section, key).parse().expect("validated on insert")
    }

    fn flag(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).parse().expect("validated on insert")
    }

    fn text(&self, section: &str, key: &str) -> String {
        self.raw(section, key).to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub pde: String,
    pub d: usize,
    pub steps: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub width: usize,
    pub hidden_layers: usize,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub estimator: String,
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub h: f64,
    pub v_samples: usize,
    pub truncate: bool,
    pub clip: f64,
    pub wall_clock: bool,
    pub validation_batch: usize,
    pub validation_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub checkpoint: String,
    pub dump_paths: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumParams {
    pub phase_bits_min: u32,
    pub phase_bits_max: u32,
    pub trials: u64,
    pub delta: f64,
    pub amplitude: f64,
    pub n_bits: usize,
    pub steps: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcParams {
    pub eps: f64,
    pub x0: f64,
    pub drift: f64,
    pub vol: f64,
    pub horizon: f64,
    pub payoff: String,
    pub strike: f64,
    pub pilot: u64,
    pub max_level: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    pub fixture: String,
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub bypass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub d: usize,
    pub steps: usize,
    pub eps: f64,
    pub lambda: f64,
    pub g_max: f64,
    pub n_theta: usize,
    pub r: f64,
    pub delta: f64,
    pub lip: f64,
    pub dt: f64,
}

/// Typed view of a complete [`Values`] plus the subcommand to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub problem: ProblemParams,
    pub model: ModelParams,
    pub train: TrainParams,
    pub eval: EvalParams,
    pub quantum: QuantumParams,
    pub mlmc: MlmcParams,
    pub hybrid: HybridParams,
    pub cost: CostParams,
}

impl RunConfig {
    pub fn new(subcommand: &str, v: &Values) -> Result<Self> {
        if !SUBCOMMANDS.iter().any(|s| s.0 == subcommand) {
            return Err(Error::config(format!("unknown subcommand `{subcommand}`")));
        }
        let bits = |k: &str| -> Result<u32> {
            u32::try_from(v.u64("quantum", k)).map_err(|_| Error::config(format!("[quantum] {k} out of range")))
        };
        let cfg = Self {
            subcommand: subcommand.into(),
            seed: v.u64("run", "seed"),
            out: PathBuf::from(v.text("run", "out")),
            threads: v.uint("run", "threads"),
            problem: ProblemParams {
                pde: v.text("problem", "pde"),
                d: v.uint("problem", "d"),
                steps: v.uint("problem", "steps"),
                horizon: v.float("problem", "horizon"),
            },
            model: ModelParams {
                width: v.uint("model", "width"),
                hidden_layers: v.uint("model", "hidden_layers"),
                activation: v.text("model", "activation"),
            },
            train: TrainParams {
                estimator: v.text("train", "estimator"),
                lr: v.float("train", "lr"),
                batch: v.uint("train", "batch"),
                iterations: v.uint("train", "iterations"),
                h: v.float("train", "h"),
                v_samples: v.uint("train", "v_samples"),
                truncate: v.flag("train", "truncate"),
                clip: v.float("train", "clip"),
                wall_clock: v.flag("train", "wall_clock"),
                validation_batch: v.uint("train", "validation_batch"),
                validation_seed: v.u64("train", "validation_seed"),
            },
            eval: EvalParams {
                checkpoint: v.text("eval", "checkpoint"),
                dump_paths: v.flag("eval", "dump_paths"),
            },
            quantum: QuantumParams {
                phase_bits_min: bits("phase_bits_min")?,
                phase_bits_max: bits("phase_bits_max")?,
                trials: v.u64("quantum", "trials"),
                delta: v.float("quantum", "delta"),
                amplitude: v.float("quantum", "amplitude"),
                n_bits: v.uint("quantum", "n_bits"),
                steps: v.uint("quantum", "steps"),
                t: v.float("quantum", "t"),
            },
            mlmc: MlmcParams {
                eps: v.float("mlmc", "eps"),
                x0: v.float("mlmc", "x0"),
                drift: v.float("mlmc", "drift"),
                vol: v.float("mlmc", "vol"),
                horizon: v.float("mlmc", "horizon"),
                payoff: v.text("mlmc", "payoff"),
                strike: v.float("mlmc", "strike"),
                pilot: v.u64("mlmc", "pilot"),
                max_level: u32::try_from(v.u64("mlmc", "max_level"))
                    .map_err(|_| Error::config("[mlmc] max_level out of range"))?,
            },
            hybrid: HybridParams {
                fixture: v.text("hybrid", "fixture"),
                lr: v.float("hybrid", "lr"),
                batch: v.uint("hybrid", "batch"),
                iterations: v.uint("hybrid", "iterations"),
                bypass: v.flag("hybrid", "bypass"),
            },
            cost: CostParams {
                d: v.uint("cost", "d"),
                steps: v.uint("cost", "steps"),
                eps: v.float("cost", "eps"),
                lambda: v.float("cost", "lambda"),
                g_max: v.float("cost", "g_max"),
                n_theta: v.uint("cost", "n_theta"),
                r: v.float("cost", "r"),
                delta: v.float("cost", "delta"),
                lip: v.float("cost", "lip"),
                dt: v.float("cost", "dt"),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.d == 0 || p.steps == 0 || !(p.horizon > 0.0) {
            return Err(Error::config("[problem] needs d ≥ 1, steps ≥ 1 and horizon > 0"));
        }
        let q = &self.quantum;
        if q.phase_bits_min == 0 || q.phase_bits_min > q.phase_bits_max || q.trials == 0 {
            return Err(Error::config("[quantum] needs 1 ≤ phase_bits_min ≤ phase_bits_max and trials ≥ 1"));
        }
        if !(q.delta > 0.0 && q.delta < 1.0) || !(0.0..=1.0).contains(&q.amplitude) {
            return Err(Error::config("[quantum] needs delta in (0,1) and amplitude in [0,1]"));
        }
        if self.train.validation_batch == 0 {
            return Err(Error::config("[train] validation_batch must be at least 1"));
        }
        if self.train.clip < 0.0 {
            return Err(Error::config("[train] clip must be ≥ 0"));
        }
        Ok(())
    }
}
