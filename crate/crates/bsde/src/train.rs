//! SGD training loop with a fresh path batch per iteration.

use std::io::{Read, Write};
use std::time::Instant;

use dbq_core::autodiff::sgd_step;
use dbq_core::sde::{simulate, PathBatch};
use dbq_core::{Error, Result};

use crate::gradient::{clip_gradient, estimate_gradient, Estimator};
use crate::model::{BsdeModel, StepNet};
use crate::problem::PdeProblem;
use crate::rollout::loss_batch;

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Increment stream of validation batches; training uses the iteration index.
pub const VALIDATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub estimator: Estimator,
    pub seed: u64,
    /// Elementwise clamp applied to each gradient before the update.
    pub clip: Option<f64>,
    /// Record elapsed wall time; off keeps histories byte-reproducible.
    pub wall_clock: bool,
}

impl TrainConfig {
    pub fn new(lr: f64, batch: usize, iterations: usize, estimator: Estimator, seed: u64) -> Self {
        Self {
            lr,
            batch,
            iterations,
            estimator,
            seed,
            clip: None,
            wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and ≥ 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::config(format!("clip threshold must be positive, got {c}")));
            }
        }
        self.estimator.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub u0: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
    /// Finite-difference warnings, tagged with the iteration.
    pub warnings: Vec<String>,
}

pub const HISTORY_HEADER: [&str; 4] = ["iteration", "loss", "u0", "wall_ms"];

impl LossHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(HISTORY_HEADER).map_err(csv_err)?;
        for r in &self.records {
            out.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                r.u0.to_string(),
                r.wall_ms.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?;
        if header.iter().ne(HISTORY_HEADER) {
            return Err(Error::invalid(format!(
                "expected header {}, found {}",
                HISTORY_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|e| Error::invalid(format!("column {}: {e}", HISTORY_HEADER[i])))
            };
            records.push(LossRecord {
                iteration: row[0]
                    .parse()
                    .map_err(|e| Error::invalid(format!("column iteration: {e}")))?,
                loss: num(1)?,
                u0: num(2)?,
                wall_ms: num(3)?,
            });
        }
        Ok(Self {
            records,
            warnings: Vec::new(),
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// Batch `iteration` of a training run.
pub fn training_batch<N: StepNet>(
    model: &BsdeModel<N>,
    problem: &PdeProblem,
    batch: usize,
    seed: u64,
    iteration: u64,
) -> Result<PathBatch> {
    simulate(&problem.sde, &model.grid, batch, seed, iteration)
}

/// Sample → loss → gradient → `θ ← θ − η·grad`, once per iteration. Each record
/// holds the loss and `u0` before that iteration's update.
pub fn train<N: StepNet>(model: &mut BsdeModel<N>, problem: &PdeProblem, cfg: &TrainConfig) -> Result<LossHistory> {
    cfg.validate()?;
    let start = Instant::now();
    let mut history = LossHistory::default();
    let mut theta = model.params();
    for it in 0..cfg.iterations {
        let batch = training_batch(model, problem, cfg.batch, cfg.seed, it as u64)?;
        let mut est = estimate_gradient(model, problem, &batch, &cfg.estimator, cfg.seed, it as u64)?;
        if !(est.loss <= DIVERGENCE_LIMIT) {
            return Err(Error::numeric(format!(
                "training diverged at iteration {it}: loss {:e} exceeds {DIVERGENCE_LIMIT:e}",
                est.loss
            )));
        }
        history
            .warnings
            .extend(est.warnings.drain(..).map(|w| format!("iteration {it}: {w}")));
        history.records.push(LossRecord {
            iteration: it,
            loss: est.loss,
            u0: model.u0,
            wall_ms: if cfg.wall_clock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        if let Some(c) = cfg.clip {
            clip_gradient(&mut est.grad.values, c);
        }
        sgd_step(&mut theta, &est.grad.values, cfg.lr);
        model.set_params(&theta)?;
    }
    Ok(history)
}

/// Loss on the fixed validation batch keyed by `seed`.
pub fn validation_loss<N: StepNet>(model: &BsdeModel<N>, problem: &PdeProblem, batch: usize, seed: u64) -> Result<f64> {
    let b = training_batch(model, problem, batch, seed, VALIDATION_STREAM)?;
    loss_batch(model, problem, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::problem::make_hjb;

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let p = make_hjb(1, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, 5, &Architecture::default_for(1), 2).unwrap();
        let before = m.params();
        let cfg = TrainConfig::new(0.0, 8, 5, Estimator::Backprop, 3);
        let h = train(&mut m, &p, &cfg).unwrap();
        assert_eq!(m.params(), before);
        assert_eq!(h.len(), 5);
        assert!(h.records.iter().all(|r| r.u0 == 0.0));
        // A fresh batch each iteration, so the frozen model still sees different losses.
        let l: Vec<f64> = h.losses();
        assert!(l.windows(2).any(|w| w[0] != w[1]));
        let b = training_batch(&m, &p, 8, 3, 2).unwrap();
        assert_eq!(loss_batch(&m, &p, &b).unwrap().to_bits(), l[2].to_bits());
    }

    #[test]
    fn divergence_aborts() {
        let p = make_hjb(1, 1.0).unwrap();
        let mut m = BsdeModel::classical(&p, 3, &Architecture::default_for(1), 2).unwrap();
        m.u0 = 2e6;
        let cfg = TrainConfig::new(0.01, 4, 3, Estimator::Backprop, 1);
        assert!(matches!(train(&mut m, &p, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn history_csv_round_trip() {
        let h = LossHistory {
            records: vec![
                LossRecord {
                    iteration: 0,
                    loss: 0.1 + 0.2,
                    u0: -1.0 / 3.0,
                    wall_ms: 0.0,
                },
                LossRecord {
                    iteration: 1,
                    loss: 1e-300,
                    u0: 2.5,
                    wall_ms: 12.75,
                },
            ],
            warnings: Vec::new(),
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"iteration,loss,u0,wall_ms\n"));
        assert_eq!(LossHistory::read_csv(&buf[..]).unwrap(), h);
        assert!(LossHistory::read_csv(&b"a,b\n1,2\n"[..]).is_err());
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let mut c = TrainConfig::new(-1.0, 4, 1, Estimator::Backprop, 0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.lr = 0.1;
        c.batch = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.batch = 4;
        c.estimator = Estimator::Numerical { h: 0.0 };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
