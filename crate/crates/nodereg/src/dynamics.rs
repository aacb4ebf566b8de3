//! Right-hand sides, conserved quantities, and exact directional
//! derivatives for the three benchmark systems.
//!
//! Every right-hand side is written generically over [`Scalar`], so the same
//! code evaluates on f64 for integration and on dual numbers for exact
//! Jacobian-vector products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dual::{jvp, Dual, Scalar};
use crate::numerics::fft::{fft_real, ifft_real_part, Complex};
use crate::numerics::vector::Vector;

/// System tag; fixes the state dimension and the conserved quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemId {
    TwoBody,
    RigidBody,
    KuramotoSivashinsky,
}

impl SystemId {
    pub fn dim(self) -> usize {
        match self {
            SystemId::TwoBody => 4,
            SystemId::RigidBody => 3,
            SystemId::KuramotoSivashinsky => 256,
        }
    }

    pub fn tag_byte(self) -> u8 {
        match self {
            SystemId::TwoBody => 0,
            SystemId::RigidBody => 1,
            SystemId::KuramotoSivashinsky => 2,
        }
    }

    pub fn from_tag_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(SystemId::TwoBody),
            1 => Ok(SystemId::RigidBody),
            2 => Ok(SystemId::KuramotoSivashinsky),
            _ => Err(Error::Format(format!("unknown system tag {b}"))),
        }
    }

    /// The system with its default parameters.
    pub fn system(self) -> System {
        match self {
            SystemId::TwoBody => System::TwoBody,
            SystemId::RigidBody => System::RigidBody(RigidBodyParams::default()),
            SystemId::KuramotoSivashinsky => System::KuramotoSivashinsky(KsGrid::default()),
        }
    }
}

/// Principal moments of inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyParams {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        RigidBodyParams {
            i1: 1.6,
            i2: 1.0,
            i3: 2.0 / 3.0,
        }
    }
}

/// Periodic spectral grid for the flame-front PDE.
#[derive(Debug, Clone, PartialEq)]
pub struct KsGrid {
    pub n_points: usize,
    pub length: f64,
    /// Signed wavenumber 2π·m̃/L per FFT bin (m̃ wraps negative past n/2).
    pub wavenumbers: Vec<f64>,
}

impl KsGrid {
    pub fn new(n_points: usize, length: f64) -> Self {
        assert!(n_points.is_power_of_two(), "grid size must be a power of two");
        let wavenumbers = (0..n_points)
            .map(|m| {
                let signed = if m <= n_points / 2 {
                    m as isize
                } else {
                    m as isize - n_points as isize
                };
                2.0 * std::f64::consts::PI * signed as f64 / length
            })
            .collect();
        KsGrid {
            n_points,
            length,
            wavenumbers,
        }
    }
}

impl Default for KsGrid {
    fn default() -> Self {
        KsGrid::new(256, 64.0)
    }
}

/// A benchmark system together with its parameters.
#[derive(Debug, Clone)]
pub enum System {
    TwoBody,
    RigidBody(RigidBodyParams),
    KuramotoSivashinsky(KsGrid),
}

impl System {
    pub fn id(&self) -> SystemId {
        match self {
            System::TwoBody => SystemId::TwoBody,
            System::RigidBody(_) => SystemId::RigidBody,
            System::KuramotoSivashinsky(_) => SystemId::KuramotoSivashinsky,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::TwoBody => 4,
            System::RigidBody(_) => 3,
            System::KuramotoSivashinsky(g) => g.n_points,
        }
    }

    /// Evaluate the right-hand side on any scalar type.
    pub fn rhs<S: Scalar>(&self, u: &[S]) -> Result<Vec<S>> {
        match self {
            System::TwoBody => tb_rhs(u),
            System::RigidBody(p) => Ok(rb_rhs(u, p)),
            System::KuramotoSivashinsky(g) => Ok(ks_rhs(u, g)),
        }
    }

    pub fn rhs_f64(&self, u: &Vector) -> Result<Vector> {
        Ok(self.rhs(u.as_slice())?.into())
    }

    /// Conserved quantity along exact trajectories: angular momentum,
    /// Casimir ½||u||², or the spatial mean times domain length.
    pub fn conserved(&self, u: &Vector) -> f64 {
        match self {
            System::TwoBody => u[0] * u[3] - u[2] * u[1],
            System::RigidBody(_) => 0.5 * u.sq_norm(),
            System::KuramotoSivashinsky(g) => {
                (g.length / g.n_points as f64) * u.iter().sum::<f64>()
            }
        }
    }

    /// Exact J_F(u)·v via dual propagation through the right-hand side.
    pub fn true_jvp(&self, u: &Vector, v: &Vector) -> Result<Vector> {
        let (_, tangent) = jvp(|x: &[Dual]| self.rhs(x), u, v)?;
        Ok(tangent)
    }
}

/// Planar gravitational motion around a body fixed at the origin:
/// state (x, y, ẋ, ẏ), acceleration −(x, y)/r³.
pub fn tb_rhs<S: Scalar>(u: &[S]) -> Result<Vec<S>> {
    assert_eq!(u.len(), 4);
    let (x, y, vx, vy) = (u[0], u[1], u[2], u[3]);
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r.value() < 1e-12 {
        return Err(Error::Singularity { r: r.value() });
    }
    let r3 = r2 * r;
    Ok(vec![vx, vy, -x / r3, -y / r3])
}

/// Euler equations for the angular momentum of a free rigid body.
pub fn rb_rhs<S: Scalar>(u: &[S], p: &RigidBodyParams) -> Vec<S> {
    assert_eq!(u.len(), 3);
    let (y1, y2, y3) = (u[0], u[1], u[2]);
    let w1 = y1.scale(1.0 / p.i1);
    let w2 = y2.scale(1.0 / p.i2);
    let w3 = y3.scale(1.0 / p.i3);
    vec![
        -y3 * w2 + y2 * w3,
        y3 * w1 - y1 * w3,
        -y2 * w1 + y1 * w2,
    ]
}

/// Flame-front PDE right-hand side −U_xx − U_xxxx − U·U_x, spatial
/// derivatives pseudospectral, the product formed pointwise in physical
/// space. No dealiasing.
pub fn ks_rhs<S: Scalar>(u: &[S], grid: &KsGrid) -> Vec<S> {
    assert_eq!(u.len(), grid.n_points);
    let n = grid.n_points;
    let spectrum = fft_real(u);

    let mut dx_hat: Vec<Complex<S>> = Vec::with_capacity(n);
    let mut lin_hat: Vec<Complex<S>> = Vec::with_capacity(n);
    for (m, c) in spectrum.iter().enumerate() {
        let k = grid.wavenumbers[m];
        // Odd derivative: Nyquist mode has no well-defined sign, drop it.
        let k_odd = if m == n / 2 { 0.0 } else { k };
        dx_hat.push(c.mul_i_scaled(k_odd));
        // −(ik)² − (ik)⁴ applied in one pass: (k² − k⁴)·û
        lin_hat.push(c.scale(k * k - k.powi(4)));
    }
    let u_x = ifft_real_part(&dx_hat);
    let linear = ifft_real_part(&lin_hat);

    (0..n).map(|i| linear[i] - u[i] * u_x[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dual::full_jacobian;

    #[test]
    fn tb_circular_orbit_point() {
        let out = tb_rhs(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn tb_hand_evaluated_point() {
        // (0, 2, 1, 0): r = 2, r³ = 8 → (1, 0, 0, -0.25)
        let out = tb_rhs(&[0.0, 2.0, 1.0, 0.0]).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 0.0, -0.25]);
    }

    #[test]
    fn tb_origin_is_singular() {
        assert!(matches!(
            tb_rhs(&[0.0, 0.0, 1.0, 1.0]),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn rb_principal_axes_are_equilibria() {
        let p = RigidBodyParams::default();
        assert_eq!(rb_rhs(&[1.0, 0.0, 0.0], &p), vec![0.0, 0.0, 0.0]);
        assert_eq!(rb_rhs(&[0.0, 1.0, 0.0], &p), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rb_hand_evaluated_point() {
        let p = RigidBodyParams::default();
        let out = rb_rhs(&[1.0, 1.0, 0.0], &p);
        assert!((out[0]).abs() < 1e-15);
        assert!((out[1]).abs() < 1e-15);
        assert!((out[2] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn rb_flow_is_orthogonal_to_state() {
        // uᵀ·rhs(u) = 0 is exactly why ½||u||² is conserved.
        let p = RigidBodyParams::default();
        let rng = crate::numerics::CounterRng::new(5);
        for t in 0..100 {
            let u: Vec<f64> = (0..3).map(|j| rng.normal_at(3 * t + j)).collect();
            let f = rb_rhs(&u, &p);
            let dot: f64 = u.iter().zip(&f).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-13, "dot {dot}");
        }
    }

    #[test]
    fn ks_constant_field_is_stationary() {
        let grid = KsGrid::new(64, 64.0);
        let u = vec![3.25; 64];
        let out = ks_rhs(&u, &grid);
        for &o in &out {
            assert!(o.abs() < 1e-10, "rhs {o}");
        }
    }

    #[test]
    fn ks_single_mode_matches_analytic() {
        // u = sin(kx), k = 2π/L: rhs = (k² − k⁴)·sin(kx) − (k/2)·sin(2kx)
        let n = 256;
        let length = 64.0;
        let grid = KsGrid::new(n, length);
        let k = 2.0 * std::f64::consts::PI / length;
        let u: Vec<f64> = (0..n)
            .map(|i| (k * length * i as f64 / n as f64).sin())
            .collect();
        let out = ks_rhs(&u, &grid);
        for (i, &o) in out.iter().enumerate() {
            let x = length * i as f64 / n as f64;
            let expected = (k * k - k.powi(4)) * (k * x).sin() - 0.5 * k * (2.0 * k * x).sin();
            assert!((o - expected).abs() < 1e-10, "i={i} got {o} want {expected}");
        }
    }

    #[test]
    fn ks_rhs_preserves_zero_mean() {
        let grid = KsGrid::new(256, 64.0);
        let rng = crate::numerics::CounterRng::new(17);
        for t in 0..100u64 {
            let u: Vec<f64> = (0..256)
                .map(|j| rng.normal_at(t * 256 + j as u64))
                .collect();
            let out = ks_rhs(&u, &grid);
            let mean = out.iter().sum::<f64>() / 256.0;
            assert!(mean.abs() < 1e-10, "mean {mean}");
        }
    }

    #[test]
    fn conserved_values() {
        // Eccentric orbit start: L₀ = (1−e)·√((1+e)/(1−e)) = √(1−e²) = 0.8 at e = 0.6
        let e = 0.6f64;
        let x0: Vector = vec![1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()].into();
        let l0 = System::TwoBody.conserved(&x0);
        assert!((l0 - 0.8).abs() < 1e-14);

        let sys = SystemId::RigidBody.system();
        for phi in [0.3, 1.0, 1.4] {
            let u: Vector = vec![f64::cos(phi), 0.0, f64::sin(phi)].into();
            assert!((sys.conserved(&u) - 0.5).abs() < 1e-15);
        }

        let ks = SystemId::KuramotoSivashinsky.system();
        assert_eq!(ks.conserved(&Vector::zeros(256)), 0.0);
    }

    #[test]
    fn rb_true_jvp_at_equilibrium_first_column_zero() {
        let sys = SystemId::RigidBody.system();
        let u: Vector = vec![1.0, 0.0, 0.0].into();
        let v = Vector::basis(3, 0);
        let t = sys.true_jvp(&u, &v).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn ks_jvp_at_zero_is_linear_operator() {
        // At u = 0 the nonlinearity contributes nothing: J·v = −v_xx − v_xxxx
        let grid = KsGrid::new(64, 64.0);
        let sys = System::KuramotoSivashinsky(grid.clone());
        let u = Vector::zeros(64);
        let k = 2.0 * std::f64::consts::PI * 3.0 / 64.0;
        let v = Vector::from_fn(64, |i| (k * i as f64).sin());
        let t = sys.true_jvp(&u, &v).unwrap();
        for (i, &ti) in t.iter().enumerate() {
            let expected = (k * k - k.powi(4)) * (k * i as f64).sin();
            assert!((ti - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn tb_true_jvp_matches_assembled_jacobian() {
        let sys = System::TwoBody;
        let u: Vector = vec![0.4, -0.9, 1.1, 0.2].into();
        let jac = full_jacobian(|x| sys.rhs(x), &u).unwrap();
        let rng = crate::numerics::CounterRng::new(3);
        for t in 0..10u64 {
            let v = Vector::from_fn(4, |j| rng.normal_at(4 * t + j as u64));
            let got = sys.true_jvp(&u, &v).unwrap();
            let want = jac.matvec(&v);
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tb_jacobian_top_block_is_velocity_identity() {
        let jac = full_jacobian(|x| System::TwoBody.rhs(x), &vec![1.0, 0.0, 0.0, 1.0].into())
            .unwrap();
        assert_eq!(jac.row(0), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(jac.row(1), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn true_jvp_is_linear_in_direction() {
        let sys = System::TwoBody;
        let u: Vector = vec![0.8, 0.3, -0.5, 1.0].into();
        let v: Vector = vec![1.0, -1.0, 0.5, 2.0].into();
        let w: Vector = vec![0.2, 0.7, -0.3, 0.1].into();
        let (alpha, beta) = (1.7, -0.6);
        let combo = v.scale(alpha).add(&w.scale(beta));
        let lhs = sys.true_jvp(&u, &combo).unwrap();
        let rhs_v = sys.true_jvp(&u, &v).unwrap();
        let rhs_w = sys.true_jvp(&u, &w).unwrap();
        let rhs = rhs_v.scale(alpha).add(&rhs_w.scale(beta));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
