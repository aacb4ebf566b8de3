//! Forward-mode differentiation with dual numbers.
//!
//! Functions written generically over [`Scalar`] can be evaluated on plain
//! f64 or on [`Dual`] numbers; in the latter case the tangent component
//! carries a directional derivative through the whole computation, exact to
//! floating-point roundoff.

use crate::error::{Error, Result};
use crate::numerics::vector::{Matrix, Vector};

/// Arithmetic shared by f64 and dual numbers. Enough surface for the
/// right-hand sides implemented in this crate (rational ops, sqrt,
/// trigonometry for spectral twiddles, ReLU gating).
pub trait Scalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;
    /// The primal value, ignoring any derivative payload.
    fn value(self) -> f64;
    fn scale(self, c: f64) -> Self;
    fn sqrt(self) -> Self;
    /// max(x, 0) with derivative 0 at exactly 0.
    fn relu(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}

/// A dual number `value + tangent·ε` with ε² = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub tangent: f64,
}

impl Dual {
    #[inline]
    pub fn new(value: f64, tangent: f64) -> Self {
        Dual { value, tangent }
    }

    #[inline]
    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            tangent: 0.0,
        }
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.value + o.value, self.tangent + o.tangent)
    }
}

impl std::ops::Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.value - o.value, self.tangent - o.tangent)
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.value * o.value,
            self.tangent * o.value + self.value * o.tangent,
        )
    }
}

impl std::ops::Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let v = self.value / o.value;
        Dual::new(v, (self.tangent - v * o.tangent) / o.value)
    }
}

impl std::ops::Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.tangent)
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(c: f64) -> Self {
        Dual::constant(c)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.value * c, self.tangent * c)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Dual::new(s, self.tangent / (2.0 * s))
    }
    #[inline]
    fn relu(self) -> Self {
        if self.value > 0.0 {
            self
        } else {
            Dual::constant(0.0)
        }
    }
}

/// A vector-valued dual: primal value and directional tangent, same length.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    pub value: Vector,
    pub tangent: Vector,
}

impl DualVector {
    pub fn new(value: Vector, tangent: Vector) -> Result<Self> {
        if value.len() != tangent.len() {
            return Err(Error::DimensionMismatch {
                expected: value.len(),
                got: tangent.len(),
            });
        }
        Ok(DualVector { value, tangent })
    }

    pub fn components(&self) -> Vec<Dual> {
        self.value
            .iter()
            .zip(self.tangent.iter())
            .map(|(&v, &t)| Dual::new(v, t))
            .collect()
    }

    pub fn from_components(parts: &[Dual]) -> Self {
        DualVector {
            value: parts.iter().map(|d| d.value).collect::<Vec<_>>().into(),
            tangent: parts.iter().map(|d| d.tangent).collect::<Vec<_>>().into(),
        }
    }
}

/// Evaluates `f` at `x` seeded with direction `v`, returning
/// `(f(x), J_f(x)·v)` by dual-number propagation.
pub fn jvp<F>(f: F, x: &Vector, v: &Vector) -> Result<(Vector, Vector)>
where
    F: Fn(&[Dual]) -> Result<Vec<Dual>>,
{
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    let seeded: Vec<Dual> = x
        .iter()
        .zip(v.iter())
        .map(|(&xi, &vi)| Dual::new(xi, vi))
        .collect();
    let out = f(&seeded)?;
    let dv = DualVector::from_components(&out);
    if !dv.value.is_finite() || !dv.tangent.is_finite() {
        return Err(Error::NonFinite("jvp evaluation".into()));
    }
    Ok((dv.value, dv.tangent))
}

/// Assembles the full m×n Jacobian of `f` at `x`, one tangent column
/// per basis direction.
pub fn full_jacobian<F>(f: F, x: &Vector) -> Result<Matrix>
where
    F: Fn(&[Dual]) -> Result<Vec<Dual>>,
{
    let n = x.len();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let (_, col) = jvp(&f, x, &Vector::basis(n, j))?;
        columns.push(col);
    }
    Ok(Matrix::from_columns(&columns))
}
