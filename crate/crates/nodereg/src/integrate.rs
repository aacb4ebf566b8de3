//! Time integration: classical RK4 (plain and differentiable), an
//! exponential integrator for stiff spectral ground truth, and chunking of
//! trajectories into short training windows.

use crate::dynamics::{KsGrid, SystemId};
use crate::error::{Error, Result};
use crate::numerics::fft::{fft_in_place, Complex};
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::vector::Vector;

/// A uniformly sampled trajectory: states at t0, t0+dt, t0+2dt, …
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub dt: f64,
    pub t0: f64,
    pub system: SystemId,
}

impl Trajectory {
    pub fn new(states: Vec<Vector>, dt: f64, t0: f64, system: SystemId) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Domain("trajectory needs at least 2 states".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        for (i, s) in states.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NumericFailure {
                    step: i,
                    context: "non-finite state in trajectory".into(),
                });
            }
        }
        Ok(Trajectory {
            states,
            dt,
            t0,
            system,
        })
    }

    /// Number of steps (states − 1).
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Keep every `stride`-th state (including the first); dt scales up.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        assert!(stride >= 1);
        Trajectory {
            states: self.states.iter().step_by(stride).cloned().collect(),
            dt: self.dt * stride as f64,
            t0: self.t0,
            system: self.system,
        }
    }
}

/// N+1 consecutive states from a trajectory; one short training rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub states: Vec<Vector>,
    pub dt: f64,
}

impl Chunk {
    /// Rollout length N (states − 1).
    pub fn n(&self) -> usize {
        self.states.len() - 1
    }
}

/// One classical Runge-Kutta-4 update.
pub fn rk4_step<F>(f: F, x: &Vector, dt: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    debug_assert!(dt > 0.0);
    let k1 = f(x)?;
    let k2 = f(&x.axpy(dt / 2.0, &k1))?;
    let k3 = f(&x.axpy(dt / 2.0, &k2))?;
    let k4 = f(&x.axpy(dt, &k3))?;
    // x + dt/6 · (k1 + 2k2 + 2k3 + k4)
    let mut sum = k2.add(&k3).scale(2.0);
    sum = sum.add(&k1).add(&k4);
    let out = x.axpy(dt / 6.0, &sum);
    if !out.is_finite() {
        return Err(Error::NonFinite("rk4 step output".into()));
    }
    Ok(out)
}

/// Integrate `n_steps` RK4 steps, recording every state.
pub fn rollout<F>(f: F, x0: &Vector, dt: f64, n_steps: usize, system: SystemId) -> Result<Trajectory>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    assert!(n_steps >= 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    for step in 0..n_steps {
        let next = rk4_step(&f, states.last().unwrap(), dt).map_err(|e| match e {
            Error::NonFinite(_) => Error::NumericFailure {
                step,
                context: "non-finite state during rollout".into(),
            },
            other => other,
        })?;
        states.push(next);
    }
    Trajectory::new(states, dt, 0.0, system)
}

/// One RK4 update recorded on the reverse-mode graph. `f` maps a state node
/// to its derivative node; gradients flow through all four stages.
pub fn rk4_step_nodes<F>(g: &mut Graph, f: &mut F, x: NodeId, dt: f64) -> Result<NodeId>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    let k1 = f(g, x)?;
    let x2 = g.axpy(x, dt / 2.0, k1);
    let k2 = f(g, x2)?;
    let x3 = g.axpy(x, dt / 2.0, k2);
    let k3 = f(g, x3)?;
    let x4 = g.axpy(x, dt, k3);
    let k4 = f(g, x4)?;
    let s23 = g.add(k2, k3);
    let s = g.axpy(k1, 2.0, s23);
    let s = g.add(s, k4);
    let out = g.axpy(x, dt / 6.0, s);
    if !g.vector(out).is_finite() {
        return Err(Error::NonFinite("differentiable rk4 step output".into()));
    }
    Ok(out)
}

/// Differentiable rollout: returns the node of every visited state,
/// starting with `x0` itself.
pub fn rollout_nodes<F>(
    g: &mut Graph,
    f: &mut F,
    x0: NodeId,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<NodeId>>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    assert!(n_steps >= 1);
    let mut nodes = Vec::with_capacity(n_steps + 1);
    nodes.push(x0);
    for step in 0..n_steps {
        let next = rk4_step_nodes(g, f, *nodes.last().unwrap(), dt).map_err(|e| match e {
            Error::NonFinite(_) => Error::NumericFailure {
                step,
                context: "non-finite state during differentiable rollout".into(),
            },
            other => other,
        })?;
        nodes.push(next);
    }
    Ok(nodes)
}

// Minimal complex-f64 helpers for the ETDRK4 contour quadrature.
fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

fn cexp(a: (f64, f64)) -> (f64, f64) {
    let r = a.0.exp();
    (r * a.1.cos(), r * a.1.sin())
}

/// Precomputed per-mode ETDRK4 coefficients for a real diagonal linear
/// symbol, evaluated by averaging over a contour of radius 1 around each
/// h·L value (stable where h·L ≈ 0).
struct Etdrk4Coeffs {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    /// −½·i·k multiplier of fft(u²), Nyquist zeroed.
    gk: Vec<f64>,
}

impl Etdrk4Coeffs {
    fn new(grid: &KsGrid, h: f64) -> Self {
        let n = grid.n_points;
        let m_pts = 32usize;
        let mut e = Vec::with_capacity(n);
        let mut e2 = Vec::with_capacity(n);
        let mut q = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        let mut f3 = vec![0.0; n];
        let mut gk = Vec::with_capacity(n);
        for (m, &k) in grid.wavenumbers.iter().enumerate() {
            let l = k * k - k.powi(4);
            e.push((h * l).exp());
            e2.push((h * l / 2.0).exp());
            let k_odd = if m == n / 2 { 0.0 } else { k };
            gk.push(-0.5 * k_odd);
            // Mean over contour points hL + e^{iπ(j+½)/M}.
            let (mut sq, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..m_pts {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / m_pts as f64;
                let lr = (h * l + theta.cos(), theta.sin());
                let elr = cexp(lr);
                let elr2 = cexp((lr.0 / 2.0, lr.1 / 2.0));
                let lr2 = cmul(lr, lr);
                let lr3 = cmul(lr2, lr);
                // (e^{z/2} − 1)/z
                sq += cdiv((elr2.0 - 1.0, elr2.1), lr).0;
                // (−4 − z + e^z (4 − 3z + z²)) / z³
                let num1 = (
                    -4.0 - lr.0 + cmul(elr, (4.0 - 3.0 * lr.0 + lr2.0, -3.0 * lr.1 + lr2.1)).0,
                    -lr.1 + cmul(elr, (4.0 - 3.0 * lr.0 + lr2.0, -3.0 * lr.1 + lr2.1)).1,
                );
                s1 += cdiv(num1, lr3).0;
                // (2 + z + e^z (−2 + z)) / z³
                let num2 = (
                    2.0 + lr.0 + cmul(elr, (-2.0 + lr.0, lr.1)).0,
                    lr.1 + cmul(elr, (-2.0 + lr.0, lr.1)).1,
                );
                s2 += cdiv(num2, lr3).0;
                // (−4 − 3z − z² + e^z (4 − z)) / z³
                let num3 = (
                    -4.0 - 3.0 * lr.0 - lr2.0 + cmul(elr, (4.0 - lr.0, -lr.1)).0,
                    -3.0 * lr.1 - lr2.1 + cmul(elr, (4.0 - lr.0, -lr.1)).1,
                );
                s3 += cdiv(num3, lr3).0;
            }
            let inv_m = 1.0 / m_pts as f64;
            q[m] = h * sq * inv_m;
            f1[m] = h * s1 * inv_m;
            f2[m] = h * s2 * inv_m;
            f3[m] = h * s3 * inv_m;
        }
        Etdrk4Coeffs {
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            gk,
        }
    }
}

/// Spectral nonlinearity N̂(v̂) = −½·i·k·fft(u²) with u = ifft(v̂).
fn ks_nonlinear(v_hat: &[Complex<f64>], gk: &[f64]) -> Vec<Complex<f64>> {
    let mut buf = v_hat.to_vec();
    fft_in_place(&mut buf, true);
    for c in buf.iter_mut() {
        let u = c.re;
        *c = Complex::new(u * u, 0.0);
    }
    fft_in_place(&mut buf, false);
    buf.iter()
        .zip(gk)
        .map(|(c, &g)| c.mul_i_scaled(g))
        .collect()
}

/// Exponential time-differencing RK4 rollout for the flame-front PDE: the
/// stiff linear part is integrated exactly in spectral space, the advection
/// nonlinearity explicitly. Used only for ground-truth generation.
pub fn etdrk4_rollout(
    u0: &Vector,
    grid: &KsGrid,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if u0.len() != grid.n_points {
        return Err(Error::DimensionMismatch {
            expected: grid.n_points,
            got: u0.len(),
        });
    }
    assert!(n_steps >= 1);
    let coef = Etdrk4Coeffs::new(grid, dt);
    let n = grid.n_points;

    let mut v: Vec<Complex<f64>> = u0.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_in_place(&mut v, false);

    let to_state = |v_hat: &[Complex<f64>]| -> Vector {
        let mut buf = v_hat.to_vec();
        fft_in_place(&mut buf, true);
        buf.into_iter().map(|c| c.re).collect::<Vec<_>>().into()
    };

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(to_state(&v));

    for step in 0..n_steps {
        let nv = ks_nonlinear(&v, &coef.gk);
        let mut a = vec![Complex::<f64>::zero(); n];
        for i in 0..n {
            a[i] = v[i].scale(coef.e2[i]).add(nv[i].scale(coef.q[i]));
        }
        let na = ks_nonlinear(&a, &coef.gk);
        let mut b = vec![Complex::<f64>::zero(); n];
        for i in 0..n {
            b[i] = v[i].scale(coef.e2[i]).add(na[i].scale(coef.q[i]));
        }
        let nb = ks_nonlinear(&b, &coef.gk);
        let mut c = vec![Complex::<f64>::zero(); n];
        for i in 0..n {
            let two_nb_minus_nv = nb[i].scale(2.0).sub(nv[i]);
            c[i] = a[i].scale(coef.e2[i]).add(two_nb_minus_nv.scale(coef.q[i]));
        }
        let nc = ks_nonlinear(&c, &coef.gk);
        for i in 0..n {
            let na_nb = na[i].add(nb[i]);
            v[i] = v[i]
                .scale(coef.e[i])
                .add(nv[i].scale(coef.f1[i]))
                .add(na_nb.scale(2.0 * coef.f2[i]))
                .add(nc[i].scale(coef.f3[i]));
            if !v[i].re.is_finite() || !v[i].im.is_finite() {
                return Err(Error::NumericFailure {
                    step,
                    context: "non-finite spectral coefficient in etdrk4".into(),
                });
            }
        }
        states.push(to_state(&v));
    }
    Trajectory::new(states, dt, 0.0, SystemId::KuramotoSivashinsky)
}

/// Cut each trajectory into non-overlapping windows of n+1 states at
/// offsets 0, n, 2n, …; any trailing remainder is dropped. Trajectories
/// shorter than n+1 states contribute nothing.
pub fn chunk_trajectories(trajs: &[Trajectory], n: usize) -> Vec<Chunk> {
    assert!(n >= 1);
    let mut chunks = Vec::new();
    for traj in trajs {
        let mut start = 0;
        while start + n < traj.states.len() {
            chunks.push(Chunk {
                states: traj.states[start..=start + n].to_vec(),
                dt: traj.dt,
            });
            start += n;
        }
    }
    chunks
}

/// Like [`chunk_trajectories`] but each chunk carries one extra lookahead
/// state (n+2 total) so second differences exist at every loss window
/// point. Windows still start at offsets 0, n, 2n, … so the loss windows
/// themselves stay non-overlapping.
pub fn chunk_trajectories_lookahead(trajs: &[Trajectory], n: usize) -> Vec<Chunk> {
    assert!(n >= 1);
    let mut chunks = Vec::new();
    for traj in trajs {
        let mut start = 0;
        while start + n + 1 < traj.states.len() {
            chunks.push(Chunk {
                states: traj.states[start..=start + n + 1].to_vec(),
                dt: traj.dt,
            });
            start += n;
        }
    }
    chunks
}
