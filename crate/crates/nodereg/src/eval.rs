//! Evaluation metrics: long-horizon relative error, offline error,
//! Jacobian error, conservation drift, divergence bookkeeping, and the
//! Grönwall trajectory-error bound.

use serde::{Deserialize, Serialize};

use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrate::{rk4_step, Trajectory};
use crate::model::{forward, model_jvp, MlpParams};
use crate::numerics::dual::full_jacobian;
use crate::numerics::sampler::DirectionSampler;
use crate::numerics::vector::{Matrix, Vector};

/// A trajectory is declared diverged at the first non-finite state or the
/// first step with relative error above this ceiling.
pub const DIVERGENCE_RE: f64 = 1e3;

/// Relative-error series of one model trajectory against ground truth.
/// `values[i]` is `None` where the truth norm is below 1e-14 (undefined).
/// The series is truncated at the divergence step, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ReSeries {
    pub values: Vec<Option<f64>>,
    pub diverged_at: Option<usize>,
}

impl ReSeries {
    /// First step with a defined value strictly above `threshold`; the
    /// divergence truncation point counts as exceeding any threshold.
    pub fn first_exceeds(&self, threshold: f64) -> Option<usize> {
        for (i, v) in self.values.iter().enumerate() {
            if let Some(r) = v {
                if *r > threshold {
                    return Some(i);
                }
            }
        }
        self.diverged_at
    }
}

/// Per-step R_e(t) = ‖x_θ(t) − x(t)‖ / ‖x(t)‖ for one trajectory pair.
pub fn relative_error_series(model_states: &[Vector], true_states: &[Vector]) -> ReSeries {
    let n = model_states.len().min(true_states.len());
    let mut values = Vec::with_capacity(n);
    let mut diverged_at = None;
    for i in 0..n {
        let pred = &model_states[i];
        if !pred.is_finite() {
            diverged_at = Some(i);
            break;
        }
        let denom = true_states[i].norm();
        if denom < 1e-14 {
            values.push(None);
            continue;
        }
        let re = pred.sub(&true_states[i]).norm() / denom;
        if re > DIVERGENCE_RE {
            diverged_at = Some(i);
            break;
        }
        values.push(Some(re));
    }
    ReSeries {
        values,
        diverged_at,
    }
}

/// Integrate the learned dynamics, stopping early at the first non-finite
/// state. Returns the visited states and the failing step, if any.
pub fn model_rollout(
    p: &MlpParams,
    x0: &Vector,
    dt: f64,
    n_steps: usize,
) -> (Vec<Vector>, Option<usize>) {
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    for step in 0..n_steps {
        match rk4_step(|x| forward(p, x), states.last().unwrap(), dt) {
            Ok(next) => states.push(next),
            Err(_) => return (states, Some(step)),
        }
    }
    (states, None)
}

/// Mean over states of ‖F(x) − F_θ(x)‖² (mean-squared convention).
pub fn offline_error(p: &MlpParams, sys: &System, states: &[Vector]) -> Result<f64> {
    assert!(!states.is_empty());
    let mut acc = 0.0;
    for x in states {
        let truth = sys.rhs_f64(x)?;
        let pred = forward(p, x)?;
        acc += pred.sub(&truth).sq_norm();
    }
    Ok(acc / states.len() as f64)
}

/// How the per-state Jacobian gap is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JacobianMode {
    /// Exact column-assembled Jacobians; intended for dim ≤ 16.
    Full,
    /// Monte-Carlo Frobenius estimate with this many probe directions.
    Hutchinson(usize),
}

/// Mean over states of ‖J_F(x) − J_{F_θ}(x)‖_F, with the model supplied
/// as a JVP oracle so any differentiable map (including the true dynamics
/// itself) can stand in for the network.
pub fn jacobian_error_of<M>(
    model_jvp_fn: M,
    sys: &System,
    states: &[Vector],
    mode: JacobianMode,
    seed: u64,
) -> Result<f64>
where
    M: Fn(&Vector, &Vector) -> Result<Vector>,
{
    assert!(!states.is_empty());
    let dim = states[0].len();
    if mode == JacobianMode::Full && dim > 16 {
        return Err(Error::UnsupportedMode(format!(
            "full jacobian error for dim {dim} > 16"
        )));
    }
    let mut acc = 0.0;
    for (si, x) in states.iter().enumerate() {
        let err = match mode {
            JacobianMode::Full => {
                let jf = full_jacobian(|z| sys.rhs(z), x)?;
                let cols: Vec<Vector> = (0..dim)
                    .map(|j| model_jvp_fn(x, &Vector::basis(dim, j)))
                    .collect::<Result<_>>()?;
                let jm = Matrix::from_columns(&cols);
                jf.sub(&jm).frobenius()
            }
            JacobianMode::Hutchinson(v_dirs) => {
                assert!(v_dirs >= 1);
                let sampler = DirectionSampler::new(seed ^ (si as u64), dim);
                let mut sq = 0.0;
                for k in 0..v_dirs {
                    let v = sampler.direction(k as u64);
                    let gap = sys.true_jvp(x, &v)?.sub(&model_jvp_fn(x, &v)?);
                    sq += gap.sq_norm();
                }
                (sq / v_dirs as f64).sqrt()
            }
        };
        acc += err;
    }
    Ok(acc / states.len() as f64)
}

/// [`jacobian_error_of`] specialized to an MLP checkpoint.
pub fn jacobian_error(
    p: &MlpParams,
    sys: &System,
    states: &[Vector],
    mode: JacobianMode,
    seed: u64,
) -> Result<f64> {
    jacobian_error_of(|x, v| Ok(model_jvp(p, x, v)), sys, states, mode, seed)
}

/// Relative drift of the conserved quantity along a trajectory:
/// |Q(x(t)) − Q(x(0))| / max(|Q(x(0))|, 1e-12).
pub fn conservation_error_series(traj: &Trajectory, sys: &System) -> Vec<(f64, f64)> {
    let q0 = sys.conserved(&traj.states[0]);
    let denom = q0.abs().max(1e-12);
    traj.states
        .iter()
        .enumerate()
        .map(|(i, s)| (traj.time(i), (sys.conserved(s) - q0).abs() / denom))
        .collect()
}

/// (ε∞/L)·(e^{Lt} − 1), the Grönwall upper bound on the trajectory gap of
/// two systems whose right-hand sides differ by at most ε∞ with Lipschitz
/// constant L.
pub fn gronwall_bound(eps_inf: f64, l: f64, t: f64) -> Result<f64> {
    if l <= 0.0 {
        return Err(Error::Domain(format!(
            "gronwall bound needs L > 0, got {l}"
        )));
    }
    assert!(t >= 0.0 && eps_inf >= 0.0);
    Ok(eps_inf / l * ((l * t).exp() - 1.0))
}

/// Everything the evaluation CLI reports for one checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean per-step squared trajectory error over surviving trajectories.
    pub traj_mse: f64,
    pub eps_offline: f64,
    pub jac_error: f64,
    /// (t, mean R_e over surviving trajectories with a defined value).
    pub re_series: Vec<(f64, f64)>,
    /// (t, mean relative conservation error of the model trajectories).
    pub cons_series: Vec<(f64, f64)>,
    /// Final R_e per trajectory (divergence-truncated runs report the
    /// ceiling value so heavy tails stay visible without poisoning means).
    pub final_re_distribution: Vec<f64>,
    pub diverged_count: usize,
    pub n_trajectories: usize,
    pub horizon: usize,
}

/// Roll the model out against every test trajectory and assemble all
/// metrics. `stride` maps model steps onto stored ground-truth samples
/// (RB uses 10); offline/Jacobian metrics are computed on a deterministic
/// subsample of the test points to bound cost.
pub fn evaluate(
    p: &MlpParams,
    sys: &System,
    tests: &[Trajectory],
    horizon: usize,
    stride: usize,
    jac_mode: JacobianMode,
    seed: u64,
) -> Result<MetricsReport> {
    assert!(!tests.is_empty() && horizon >= 1 && stride >= 1);
    let dt_model = tests[0].dt * stride as f64;

    let mut re_sum = vec![0.0; horizon + 1];
    let mut re_count = vec![0usize; horizon + 1];
    let mut cons_sum = vec![0.0; horizon + 1];
    let mut cons_count = vec![0usize; horizon + 1];
    let mut finals = Vec::with_capacity(tests.len());
    let mut diverged = 0usize;
    let mut mse_acc = 0.0;
    let mut mse_steps = 0usize;

    for traj in tests {
        let truth: Vec<Vector> = traj.states.iter().step_by(stride).cloned().collect();
        let n = horizon.min(truth.len() - 1);
        let (pred, _) = model_rollout(p, &truth[0], dt_model, n);
        let series = relative_error_series(&pred, &truth);
        let alive = series.values.len();
        if series.diverged_at.is_some() {
            diverged += 1;
        }
        for (i, v) in series.values.iter().enumerate() {
            if let Some(r) = v {
                re_sum[i] += r;
                re_count[i] += 1;
            }
        }
        for (i, s) in pred.iter().take(alive).enumerate() {
            mse_acc += s.sub(&truth[i]).sq_norm();
            mse_steps += 1;
            let q0 = sys.conserved(&pred[0]);
            let q = sys.conserved(s);
            cons_sum[i] += (q - q0).abs() / q0.abs().max(1e-12);
            cons_count[i] += 1;
        }
        let final_re = series
            .values
            .last()
            .copied()
            .flatten()
            .unwrap_or(DIVERGENCE_RE);
        finals.push(if series.diverged_at.is_some() {
            DIVERGENCE_RE
        } else {
            final_re
        });
    }

    // Offline and Jacobian errors on at most 100 points per trajectory.
    let mut probe_states = Vec::new();
    for traj in tests {
        let step = (traj.states.len() / 100).max(1);
        probe_states.extend(traj.states.iter().step_by(step).cloned());
    }
    let eps_offline = offline_error(p, sys, &probe_states)?;
    let jac_error = jacobian_error(p, sys, &probe_states, jac_mode, seed)?;

    let collect = |sum: &[f64], count: &[usize]| -> Vec<(f64, f64)> {
        sum.iter()
            .zip(count)
            .enumerate()
            .filter(|(_, (_, &c))| c > 0)
            .map(|(i, (&s, &c))| (i as f64 * dt_model, s / c as f64))
            .collect()
    };

    Ok(MetricsReport {
        traj_mse: if mse_steps > 0 {
            mse_acc / mse_steps as f64
        } else {
            f64::INFINITY
        },
        eps_offline,
        jac_error,
        re_series: collect(&re_sum, &re_count),
        cons_series: collect(&cons_sum, &cons_count),
        final_re_distribution: finals,
        diverged_count: diverged,
        n_trajectories: tests.len(),
        horizon,
    })
}
