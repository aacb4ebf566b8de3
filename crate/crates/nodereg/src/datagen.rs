//! Ground-truth dataset generation: initial-condition sampling per system,
//! integration at the reference settings, warmup truncation, and
//! train/val/test splits with disjoint seed streams.

use serde::{Deserialize, Serialize};

use crate::dynamics::{KsGrid, System, SystemId};
use crate::error::{Error, Result};
use crate::integrate::{etdrk4_rollout, rollout, Trajectory};
use crate::numerics::sampler::CounterRng;
use crate::numerics::vector::Vector;
use crate::train::ExperimentConfig;

/// Chaotic transient discarded from the start of every generated
/// flame-front trajectory, in stored steps.
pub const KS_WARMUP_STEPS: usize = 360;
/// Internal ETDRK4 substeps per stored flame-front sample.
pub const KS_SUBSTEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x7261_696e,
            Split::Val => 0x76_616c,
            Split::Test => 0x74_6573,
        }
    }
}

/// Eccentric planar orbit start: X₀ = (1−e, 0, 0, √((1+e)/(1−e))).
pub fn tb_initial(e: f64) -> Vector {
    vec![1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()].into()
}

/// Unit angular momentum tilted by φ: X₀ = (cos φ, 0, sin φ).
pub fn rb_initial(phi: f64) -> Vector {
    vec![phi.cos(), 0.0, phi.sin()].into()
}

/// Truncated Fourier field U₀(x) = Σₘ Aₘ·sin(2π·lₘ·x/L + φₘ), m = 1..10,
/// with integer wavenumbers — exactly mean-free up to roundoff.
pub fn ks_initial(grid: &KsGrid, coeffs: &[(f64, u64, f64)]) -> Vector {
    Vector::from_fn(grid.n_points, |i| {
        let x = grid.length * i as f64 / grid.n_points as f64;
        coeffs
            .iter()
            .map(|&(a, l, phi)| {
                a * (2.0 * std::f64::consts::PI * l as f64 * x / grid.length + phi).sin()
            })
            .sum()
    })
}

/// Deterministic initial condition for trajectory `index` of a stream.
pub fn sample_initial(system: SystemId, stream: &CounterRng, index: u64) -> Vector {
    let rng = stream.substream(index);
    match system {
        SystemId::TwoBody => tb_initial(rng.uniform_in(0, 0.5, 0.7)),
        SystemId::RigidBody => rb_initial(rng.uniform_in(0, 0.5, 1.5)),
        SystemId::KuramotoSivashinsky => {
            let grid = KsGrid::default();
            let coeffs: Vec<(f64, u64, f64)> = (0..10u64)
                .map(|m| {
                    (
                        rng.uniform_in(3 * m, -0.5, 0.5),
                        1 + rng.index_at(3 * m + 1, 3),
                        rng.uniform_in(3 * m + 2, 0.0, 2.0 * std::f64::consts::PI),
                    )
                })
                .collect();
            ks_initial(&grid, &coeffs)
        }
    }
}

/// The three generated splits.
pub struct GeneratedData {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

fn generate_split(cfg: &ExperimentConfig, split: Split) -> Result<Vec<Trajectory>> {
    let (count, duration) = match split {
        Split::Train => (cfg.n_train, cfg.t_train),
        Split::Val => (cfg.n_val, cfg.t_val),
        Split::Test => (cfg.n_test, cfg.t_test),
    };
    let steps = (duration / cfg.dt).round() as usize;
    let stream = CounterRng::new(cfg.seed).substream(split.tag());
    let sys: System = cfg.system.system();
    let mut out = Vec::with_capacity(count);
    for index in 0..count as u64 {
        let x0 = sample_initial(cfg.system, &stream, index);
        let traj = match &sys {
            System::KuramotoSivashinsky(grid) => {
                // Sub-step for accuracy, keep every 4th state, then drop the
                // warmup transient so data sits on the attractor.
                let total = KS_SUBSTEPS * (KS_WARMUP_STEPS + steps);
                let fine = etdrk4_rollout(&x0, grid, cfg.dt / KS_SUBSTEPS as f64, total)?;
                let stored = fine.subsample(KS_SUBSTEPS);
                let states = stored.states[KS_WARMUP_STEPS..].to_vec();
                Trajectory::new(
                    states,
                    cfg.dt,
                    KS_WARMUP_STEPS as f64 * cfg.dt,
                    cfg.system,
                )?
            }
            _ => rollout(|v| sys.rhs_f64(v), &x0, cfg.dt, steps, cfg.system)?,
        };
        // Ground truth must be clean; surface the failing stream on error.
        for (i, s) in traj.states.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NumericFailure {
                    step: i,
                    context: format!(
                        "non-finite ground truth (split {split:?}, trajectory {index}, seed {})",
                        cfg.seed
                    ),
                });
            }
        }
        out.push(traj);
    }
    Ok(out)
}

/// Generate all three splits from disjoint seed streams.
pub fn generate(cfg: &ExperimentConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    Ok(GeneratedData {
        train: generate_split(cfg, Split::Train)?,
        val: generate_split(cfg, Split::Val)?,
        test: generate_split(cfg, Split::Test)?,
    })
}
