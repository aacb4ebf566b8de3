//! Adam training over chunked datasets, validation-based checkpoint
//! selection, and λ grid search.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{System, SystemId};
use crate::error::{Error, Result};
use crate::integrate::{rollout, Chunk};
use crate::losses::{combined_loss, LossBreakdown, MlpGraphModel, RegMode};
use crate::model::{forward, init_params, MlpNodes, MlpParams};
use crate::numerics::graph::Graph;
use crate::numerics::sampler::{CounterRng, DirectionSampler};
use crate::numerics::vector::Vector;

/// Whether probe directions are drawn once or fresh every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionResampling {
    Fixed,
    PerIteration,
}

/// Everything one experiment needs: the physical setup, dataset sizes,
/// optimizer settings and the regularization choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemId,
    /// Ground-truth sampling step (seconds).
    pub dt: f64,
    /// Model integration step; an integer multiple of dt.
    pub dt_model: f64,
    pub t_train: f64,
    pub t_val: f64,
    pub t_test: f64,
    /// Training rollout length N, in model steps.
    pub rollout_n: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub lambda: f64,
    pub reg_mode: RegMode,
    /// Number of probe directions V for the AD regularizer.
    pub v_dirs: usize,
    pub resampling: DirectionResampling,
    /// Optional deterministic mini-batching; full batch when absent.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Full-scale reference settings per system.
    pub fn full_scale(system: SystemId) -> Self {
        let base = ExperimentConfig {
            system,
            dt: 0.01,
            dt_model: 0.01,
            t_train: 8.0,
            t_val: 8.0,
            t_test: 100.0,
            rollout_n: 2,
            n_train: 40,
            n_val: 40,
            n_test: 100,
            epochs: 4500,
            hidden: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            lambda: 0.0,
            reg_mode: RegMode::None,
            v_dirs: 10,
            resampling: DirectionResampling::PerIteration,
            batch_size: None,
            seed: 0,
        };
        match system {
            SystemId::TwoBody => base,
            SystemId::RigidBody => ExperimentConfig {
                dt_model: 0.1,
                t_train: 15.0,
                t_val: 15.0,
                t_test: 800.0,
                rollout_n: 5,
                ..base
            },
            SystemId::KuramotoSivashinsky => ExperimentConfig {
                dt: 0.2,
                dt_model: 0.2,
                t_train: 28.0,
                t_val: 28.0,
                t_test: 128.0,
                n_train: 512,
                n_val: 128,
                n_test: 128,
                epochs: 1000,
                ..base
            },
        }
    }

    /// Shrunk settings that finish on a desk CPU in minutes.
    pub fn desk(system: SystemId) -> Self {
        let full = Self::full_scale(system);
        match system {
            SystemId::TwoBody => ExperimentConfig {
                hidden: 64,
                n_train: 10,
                n_val: 10,
                n_test: 20,
                epochs: 300,
                ..full
            },
            SystemId::RigidBody => ExperimentConfig {
                hidden: 64,
                n_train: 10,
                n_val: 10,
                n_test: 20,
                epochs: 300,
                ..full
            },
            SystemId::KuramotoSivashinsky => ExperimentConfig {
                hidden: 64,
                n_train: 8,
                n_val: 4,
                n_test: 4,
                epochs: 50,
                ..full
            },
        }
    }

    /// Model steps per stored ground-truth step (RB trains on every 10th
    /// sample).
    pub fn stride(&self) -> usize {
        (self.dt_model / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let must_pos = [
            ("dt", self.dt),
            ("dt_model", self.dt_model),
            ("t_train", self.t_train),
            ("t_val", self.t_val),
            ("t_test", self.t_test),
            ("lr", self.lr),
        ];
        for (name, v) in must_pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("config.{name}: must be positive")));
            }
        }
        let ratio = self.dt_model / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::Config(
                "config.dt_model: must be an integer multiple of dt".into(),
            ));
        }
        if self.rollout_n < 1 {
            return Err(Error::Config("config.rollout_n: must be ≥ 1".into()));
        }
        if self.rollout_n as f64 * self.dt_model > self.t_train {
            return Err(Error::Config(
                "config.rollout_n: rollout exceeds t_train".into(),
            ));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::Config(
                "config.n_train/n_val/n_test: must be ≥ 1".into(),
            ));
        }
        if self.reg_mode == RegMode::Ad && self.v_dirs == 0 {
            return Err(Error::Config("config.v_dirs: must be ≥ 1 for ad mode".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("config.lambda: must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Adam moments; shapes mirror the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize, hidden: usize) -> Self {
        AdamState {
            m: MlpParams::zeros(n, hidden),
            v: MlpParams::zeros(n, hidden),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place. Rejects non-finite gradients
/// before touching any state.
pub fn adam_step(
    p: &mut MlpParams,
    grads: &MlpParams,
    st: &mut AdamState,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("adam gradient input".into()));
    }
    st.t += 1;
    let t = st.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let gs = grads.slices();
    let ps = p.slices_mut();
    let ms = st.m.slices_mut();
    let vs = st.v.slices_mut();
    for (((pt, gt), mt), vt) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
        for i in 0..pt.len() {
            let g = gt[i];
            mt[i] = b1 * mt[i] + (1.0 - b1) * g;
            vt[i] = b2 * vt[i] + (1.0 - b2) * g * g;
            let m_hat = mt[i] / c1;
            let v_hat = vt[i] / c2;
            pt[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One epoch's summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub traj_loss: f64,
    pub reg_loss: f64,
    pub total_loss: f64,
    pub val_mse: f64,
    pub wall_time_s: f64,
}

/// Result of a training run: the checkpoint achieving minimal validation
/// MSE plus the full per-epoch record. `failure` is set when training hit a
/// numeric failure and returned the best checkpoint so far.
pub struct TrainOutput {
    pub best_params: MlpParams,
    pub best_val_mse: f64,
    pub records: Vec<TrainRecord>,
    pub failure: Option<String>,
}

/// Mean per-rollout-step squared trajectory error over validation chunks,
/// evaluated without gradients.
pub fn validation_mse(p: &MlpParams, chunks: &[Chunk]) -> Result<f64> {
    assert!(!chunks.is_empty());
    let mut acc = 0.0;
    let mut steps = 0usize;
    for chunk in chunks {
        let n = chunk.n();
        let traj = rollout(
            |x: &Vector| forward(p, x),
            &chunk.states[0],
            chunk.dt,
            n,
            SystemId::TwoBody, // tag irrelevant for this computation
        );
        match traj {
            Ok(t) => {
                for i in 1..=n {
                    acc += t.states[i].sub(&chunk.states[i]).sq_norm();
                }
            }
            Err(_) => {
                // A diverged validation rollout disqualifies the checkpoint.
                return Ok(f64::INFINITY);
            }
        }
        steps += n;
    }
    Ok(acc / steps as f64)
}

/// Train on chunked data with per-epoch full-batch (or deterministic
/// mini-batch) Adam steps. Returns the checkpoint minimizing validation MSE.
pub fn train(
    cfg: &ExperimentConfig,
    train_chunks: &[Chunk],
    val_chunks: &[Chunk],
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_chunks.is_empty() || val_chunks.is_empty() {
        return Err(Error::Domain("empty training or validation set".into()));
    }
    let sys: System = cfg.system.system();
    let dim = cfg.system.dim();
    let mut params = init_params(CounterRng::new(cfg.seed).u64_at(0), dim, cfg.hidden);
    let mut adam = AdamState::new(dim, cfg.hidden);
    let sampler = DirectionSampler::new(CounterRng::new(cfg.seed).u64_at(1), dim);
    let shuffle_rng = CounterRng::new(cfg.seed).substream(2);

    let mut best_params = params.clone();
    let mut best_val = validation_mse(&params, val_chunks)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut failure = None;
    let started = Instant::now();
    let mut graph = Graph::new();

    'epochs: for epoch in 0..cfg.epochs {
        let dir_offset = match cfg.resampling {
            DirectionResampling::Fixed => 0,
            DirectionResampling::PerIteration => (epoch * cfg.v_dirs) as u64,
        };
        let dirs: Vec<Vector> = if cfg.reg_mode == RegMode::Ad {
            sampler.directions(dir_offset, cfg.v_dirs)
        } else {
            Vec::new()
        };

        let mut order: Vec<usize> = (0..train_chunks.len()).collect();
        let batch = cfg.batch_size.unwrap_or(train_chunks.len()).max(1);
        if cfg.batch_size.is_some() {
            // Deterministic Fisher-Yates keyed by (seed, epoch).
            let r = shuffle_rng.substream(epoch as u64);
            for i in (1..order.len()).rev() {
                order.swap(i, r.index_at(i as u64, (i + 1) as u64) as usize);
            }
        }

        let mut epoch_bd = LossBreakdown {
            traj: 0.0,
            reg: 0.0,
            lambda: cfg.lambda,
            total: 0.0,
        };

        for batch_idx in order.chunks(batch) {
            let mut grad_acc = MlpParams::zeros(dim, cfg.hidden);
            for &ci in batch_idx {
                graph.reset();
                let nodes = MlpNodes::register(&mut graph, &params);
                let model = MlpGraphModel {
                    nodes,
                    params: &params,
                };
                let result = combined_loss(
                    &mut graph,
                    &model,
                    &sys,
                    &train_chunks[ci],
                    cfg.reg_mode,
                    cfg.lambda,
                    &dirs,
                );
                let (total, bd) = match result {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(format!("epoch {epoch}: {e}"));
                        break 'epochs;
                    }
                };
                epoch_bd.traj += bd.traj;
                epoch_bd.reg += bd.reg;
                epoch_bd.total += bd.total;
                let grads = match graph.backward(total) {
                    Ok(g) => g,
                    Err(e) => {
                        failure = Some(format!("epoch {epoch}: {e}"));
                        break 'epochs;
                    }
                };
                let g = nodes.extract_grads(&grads);
                for (acc, part) in grad_acc.slices_mut().into_iter().zip(g.slices()) {
                    for (a, b) in acc.iter_mut().zip(part) {
                        *a += b;
                    }
                }
            }
            if let Err(e) = adam_step(
                &mut params,
                &grad_acc,
                &mut adam,
                cfg.lr,
                cfg.beta1,
                cfg.beta2,
                cfg.eps_adam,
            ) {
                failure = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
        }

        let val_mse = validation_mse(&params, val_chunks)?;
        if val_mse < best_val {
            best_val = val_mse;
            best_params = params.clone();
        }
        records.push(TrainRecord {
            epoch,
            traj_loss: epoch_bd.traj,
            reg_loss: epoch_bd.reg,
            total_loss: epoch_bd.total,
            val_mse,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainOutput {
        best_params,
        best_val_mse: best_val,
        records,
        failure,
    })
}

/// One grid-search row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub val_mse: f64,
    pub failed: bool,
}

pub struct GridSearchOutput {
    pub best_lambda: f64,
    pub best: TrainOutput,
    pub table: Vec<GridRow>,
}

/// Train one model per λ (shared seed) and keep the one with the lowest
/// validation MSE; ties break toward the larger λ.
pub fn grid_search(
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    train_chunks: &[Chunk],
    val_chunks: &[Chunk],
) -> Result<GridSearchOutput> {
    assert!(!lambdas.is_empty());
    let mut table = Vec::with_capacity(lambdas.len());
    let mut best: Option<(f64, TrainOutput)> = None;
    for &lambda in lambdas {
        let run_cfg = ExperimentConfig {
            lambda,
            ..cfg.clone()
        };
        match train(&run_cfg, train_chunks, val_chunks) {
            Ok(out) => {
                let failed = out.failure.is_some();
                table.push(GridRow {
                    lambda,
                    val_mse: out.best_val_mse,
                    failed,
                });
                let better = match &best {
                    None => true,
                    // Strictly better, or a tie resolved toward larger λ.
                    Some((bl, bo)) => {
                        out.best_val_mse < bo.best_val_mse
                            || (out.best_val_mse == bo.best_val_mse && lambda > *bl)
                    }
                };
                if better {
                    best = Some((lambda, out));
                }
            }
            Err(e) => {
                table.push(GridRow {
                    lambda,
                    val_mse: f64::NAN,
                    failed: true,
                });
                // Hard errors are tolerated per-λ; the grid continues.
                let _ = e;
            }
        }
    }
    match best {
        Some((best_lambda, bo)) => Ok(GridSearchOutput {
            best_lambda,
            best: bo,
            table,
        }),
        None => Err(Error::NumericFailure {
            step: 0,
            context: format!(
                "all grid-search runs failed: {:?}",
                table.iter().map(|r| r.lambda).collect::<Vec<_>>()
            ),
        }),
    }
}
