//! The learnable dynamics: a three-layer ReLU MLP with forward evaluation,
//! a closed-form Jacobian-vector product, and registration on the
//! reverse-mode graph for training.

use crate::error::{Error, Result};
use crate::numerics::dual::Scalar;
use crate::numerics::graph::{Gradients, Graph, NodeId};
use crate::numerics::sampler::CounterRng;
use crate::numerics::vector::{Matrix, Vector};

/// Weights of the fixed architecture W3·relu(W2·relu(W1·x+b1)+b2)+b3.
/// Also used as the container for gradients and optimizer moments, which
/// share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
    pub w3: Matrix,
    pub b3: Vector,
}

impl MlpParams {
    pub fn state_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn zeros(n: usize, hidden: usize) -> Self {
        MlpParams {
            w1: Matrix::zeros(hidden, n),
            b1: Vector::zeros(hidden),
            w2: Matrix::zeros(hidden, hidden),
            b2: Vector::zeros(hidden),
            w3: Matrix::zeros(n, hidden),
            b3: Vector::zeros(n),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams::zeros(self.state_dim(), self.hidden())
    }

    pub fn param_count(&self) -> usize {
        let (n, h) = (self.state_dim(), self.hidden());
        n * h + h + h * h + h + h * n + n
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.b1.is_finite()
            && self.w2.is_finite()
            && self.b2.is_finite()
            && self.w3.is_finite()
            && self.b3.is_finite()
    }

    /// All six tensors flattened, in a fixed order (W1,b1,W2,b2,W3,b3).
    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w3.as_slice(),
            self.b3.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w3.as_mut_slice(),
            self.b3.as_mut_slice(),
        ]
    }
}

/// Deterministic initialization: weights uniform in ±√(1/fan_in) per layer,
/// biases zero.
pub fn init_params(seed: u64, n: usize, hidden: usize) -> MlpParams {
    assert!(n >= 1 && hidden >= 1);
    let rng = CounterRng::new(seed);
    let layer = |tag: u64, rows: usize, cols: usize| {
        let sub = rng.substream(tag);
        let bound = (1.0 / cols as f64).sqrt();
        Matrix::from_fn(rows, cols, |i, j| {
            sub.uniform_in((i * cols + j) as u64, -bound, bound)
        })
    };
    MlpParams {
        w1: layer(1, hidden, n),
        b1: Vector::zeros(hidden),
        w2: layer(2, hidden, hidden),
        b2: Vector::zeros(hidden),
        w3: layer(3, n, hidden),
        b3: Vector::zeros(n),
    }
}

/// Forward pass on plain f64 vectors.
pub fn forward(p: &MlpParams, x: &Vector) -> Result<Vector> {
    let relu = |v: Vector| -> Vector {
        v.iter()
            .map(|&a| if a > 0.0 { a } else { 0.0 })
            .collect::<Vec<_>>()
            .into()
    };
    let h1 = relu(p.w1.matvec(x).add(&p.b1));
    let h2 = relu(p.w2.matvec(&h1).add(&p.b2));
    let out = p.w3.matvec(&h2).add(&p.b3);
    if !out.is_finite() {
        return Err(Error::NonFinite("mlp forward output".into()));
    }
    Ok(out)
}

/// Forward pass generic over the scalar type, for cross-checking the
/// closed-form JVP with dual-number propagation.
pub fn forward_generic<S: Scalar>(p: &MlpParams, x: &[S]) -> Result<Vec<S>> {
    assert_eq!(x.len(), p.state_dim());
    let dense = |w: &Matrix, b: &Vector, input: &[S]| -> Vec<S> {
        (0..w.rows())
            .map(|i| {
                let mut acc = S::from_f64(b[i]);
                for (j, &xj) in input.iter().enumerate() {
                    acc = acc + xj.scale(w.get(i, j));
                }
                acc
            })
            .collect()
    };
    let h1: Vec<S> = dense(&p.w1, &p.b1, x).into_iter().map(|a| a.relu()).collect();
    let h2: Vec<S> = dense(&p.w2, &p.b2, &h1).into_iter().map(|a| a.relu()).collect();
    Ok(dense(&p.w3, &p.b3, &h2))
}

/// Closed-form J_{F_θ}(x)·v: propagate v through each weight matrix and
/// mask by the sign of the corresponding preactivation (ReLU derivative at
/// exactly 0 taken as 0).
pub fn model_jvp(p: &MlpParams, x: &Vector, v: &Vector) -> Vector {
    let z1 = p.w1.matvec(x).add(&p.b1);
    let t1 = p.w1.matvec(v);
    let t1m = mask_by(&t1, &z1);
    let h1 = relu_vec(&z1);
    let z2 = p.w2.matvec(&h1).add(&p.b2);
    let t2 = p.w2.matvec(&t1m);
    let t2m = mask_by(&t2, &z2);
    p.w3.matvec(&t2m)
}

fn relu_vec(v: &Vector) -> Vector {
    v.iter()
        .map(|&a| if a > 0.0 { a } else { 0.0 })
        .collect::<Vec<_>>()
        .into()
}

fn mask_by(t: &Vector, z: &Vector) -> Vector {
    t.iter()
        .zip(z.iter())
        .map(|(&ti, &zi)| if zi > 0.0 { ti } else { 0.0 })
        .collect::<Vec<_>>()
        .into()
}

/// Handles of the six parameter tensors registered on a graph.
#[derive(Debug, Clone, Copy)]
pub struct MlpNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub w3: NodeId,
    pub b3: NodeId,
    pub state_dim: usize,
    pub hidden: usize,
}

impl MlpNodes {
    pub fn register(g: &mut Graph, p: &MlpParams) -> MlpNodes {
        MlpNodes {
            w1: g.param_matrix(p.w1.clone(), "w1"),
            b1: g.param_vector(p.b1.clone(), "b1"),
            w2: g.param_matrix(p.w2.clone(), "w2"),
            b2: g.param_vector(p.b2.clone(), "b2"),
            w3: g.param_matrix(p.w3.clone(), "w3"),
            b3: g.param_vector(p.b3.clone(), "b3"),
            state_dim: p.state_dim(),
            hidden: p.hidden(),
        }
    }

    /// Forward pass recorded on the graph.
    pub fn forward_nodes(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let z1 = g.matvec(self.w1, x);
        let z1 = g.add(z1, self.b1);
        let h1 = g.relu(z1);
        let z2 = g.matvec(self.w2, h1);
        let z2 = g.add(z2, self.b2);
        let h2 = g.relu(z2);
        let out = g.matvec(self.w3, h2);
        g.add(out, self.b3)
    }

    /// ReLU masks of both layers at a fixed evaluation point, registered as
    /// graph constants. The masks carry no parameter gradient (the ReLU
    /// derivative is piecewise constant), so they are computed outside the
    /// graph and shared across all directions probed at the same point.
    pub fn preacts(&self, g: &mut Graph, p: &MlpParams, x: &Vector) -> (NodeId, NodeId) {
        let z1 = p.w1.matvec(x).add(&p.b1);
        let z2 = p.w2.matvec(&relu_vec(&z1)).add(&p.b2);
        (g.constant(z1), g.constant(z2))
    }

    /// JVP path on the graph: v through W1, gate by layer-1 preactivation,
    /// through W2, gate by layer-2 preactivation, through W3. Gradients
    /// w.r.t. the weight matrices flow through the three matvecs.
    pub fn jvp_nodes(&self, g: &mut Graph, pre: (NodeId, NodeId), v: NodeId) -> NodeId {
        let t1 = g.matvec(self.w1, v);
        let t1m = g.gate(t1, pre.0);
        let t2 = g.matvec(self.w2, t1m);
        let t2m = g.gate(t2, pre.1);
        g.matvec(self.w3, t2m)
    }

    /// Pull the six parameter gradients out of a finished backward sweep.
    pub fn extract_grads(&self, grads: &Gradients) -> MlpParams {
        let (n, h) = (self.state_dim, self.hidden);
        MlpParams {
            w1: grads.matrix(self.w1, h, n),
            b1: grads.vector(self.b1, h),
            w2: grads.matrix(self.w2, h, h),
            b2: grads.vector(self.b2, h),
            w3: grads.matrix(self.w3, n, h),
            b3: grads.vector(self.b3, n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dual::{jvp as dual_jvp, Dual};
    use crate::numerics::sampler::DirectionSampler;

    #[test]
    fn same_seed_same_params() {
        assert_eq!(init_params(7, 4, 16), init_params(7, 4, 16));
        assert_ne!(init_params(7, 4, 16), init_params(8, 4, 16));
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_biases() {
        let p = init_params(3, 4, 32);
        let b1 = (1.0f64 / 4.0).sqrt();
        assert!(p.w1.as_slice().iter().all(|w| w.abs() <= b1));
        let b2 = (1.0f64 / 32.0).sqrt();
        assert!(p.w2.as_slice().iter().all(|w| w.abs() <= b2));
        assert!(p.b1.sq_norm() == 0.0 && p.b2.sq_norm() == 0.0 && p.b3.sq_norm() == 0.0);
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(init_params(0, 4, 200).param_count(), 42_004);
        // 3·64+64 + 64·64+64 + 64·3+3
        assert_eq!(init_params(0, 3, 64).param_count(), 4_611);
    }

    #[test]
    fn zero_params_forward_is_b3() {
        let mut p = MlpParams::zeros(3, 8);
        p.b3 = vec![1.0, -2.0, 0.5].into();
        let out = forward(&p, &vec![9.0, -3.0, 4.0].into()).unwrap();
        assert_eq!(out, p.b3);
    }

    #[test]
    fn hand_computed_two_unit_net() {
        // n=1, hidden=2. W1 = [1; -1], W2 = I, W3 = [1, 1], all biases 0.
        // For x > 0: h1 = (x, 0), h2 = (x, 0), out = x. For x < 0: out = -x.
        // So the net computes |x|.
        let mut p = MlpParams::zeros(1, 2);
        p.w1 = Matrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        p.w2 = Matrix::identity(2);
        p.w3 = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(forward(&p, &vec![3.0].into()).unwrap()[0], 3.0);
        assert_eq!(forward(&p, &vec![-2.5].into()).unwrap()[0], 2.5);
    }

    #[test]
    fn bias_free_net_is_positively_homogeneous() {
        let p = init_params(11, 4, 32); // init gives zero biases
        let x: Vector = vec![0.4, -1.2, 0.9, 0.1].into();
        let alpha = 2.7;
        let fx = forward(&p, &x).unwrap();
        let fax = forward(&p, &x.scale(alpha)).unwrap();
        for (a, b) in fax.iter().zip(fx.scale(alpha).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jvp_zero_direction_is_zero() {
        let p = init_params(5, 4, 16);
        let out = model_jvp(&p, &vec![1.0, 2.0, 3.0, 4.0].into(), &Vector::zeros(4));
        assert_eq!(out.sq_norm(), 0.0);
    }

    #[test]
    fn dead_network_has_zero_jvp() {
        let mut p = init_params(5, 3, 8);
        p.b1 = Vector::from_fn(8, |_| -100.0); // kills every first-layer unit
        let out = model_jvp(&p, &vec![0.1, 0.2, 0.3].into(), &vec![1.0, 1.0, 1.0].into());
        assert_eq!(out.sq_norm(), 0.0);
    }

    #[test]
    fn model_jvp_matches_dual_propagation_exactly() {
        let p = init_params(21, 4, 24);
        let s = DirectionSampler::new(5, 4);
        for i in 0..20 {
            let x = s.direction(2 * i);
            let v = s.direction(2 * i + 1);
            let closed = model_jvp(&p, &x, &v);
            let (_, dual) =
                dual_jvp(|z: &[Dual]| forward_generic(&p, z), &x, &v).unwrap();
            assert_eq!(closed, dual, "direction {i}");
        }
    }

    #[test]
    fn model_jvp_linear_in_direction() {
        let p = init_params(2, 3, 16);
        let x: Vector = vec![0.3, -0.7, 1.1].into();
        let v: Vector = vec![1.0, 0.5, -2.0].into();
        let w: Vector = vec![-0.4, 0.9, 0.2].into();
        let combo = v.scale(1.3).add(&w.scale(-2.1));
        let lhs = model_jvp(&p, &x, &combo);
        let rhs = model_jvp(&p, &x, &v)
            .scale(1.3)
            .add(&model_jvp(&p, &x, &w).scale(-2.1));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn model_jvp_matches_central_differences() {
        let p = init_params(9, 3, 32);
        let x: Vector = vec![0.37, -0.85, 0.44].into();
        let v: Vector = vec![0.6, -0.2, 1.0].into();
        // Kink avoidance: all preactivations must be safely away from zero.
        let z1 = p.w1.matvec(&x).add(&p.b1);
        assert!(z1.iter().all(|z| z.abs() > 1e-4), "test point too close to a kink");
        let h = 1e-6;
        let up = forward(&p, &x.axpy(h, &v)).unwrap();
        let dn = forward(&p, &x.axpy(-h, &v)).unwrap();
        let fd = up.sub(&dn).scale(1.0 / (2.0 * h));
        let got = model_jvp(&p, &x, &v);
        for (a, b) in got.iter().zip(fd.iter()) {
            assert!((a - b).abs() / b.abs().max(1e-9) < 1e-6, "got {a} fd {b}");
        }
    }

    #[test]
    fn graph_forward_matches_plain_forward() {
        let p = init_params(13, 4, 16);
        let x: Vector = vec![0.1, -0.9, 0.5, 2.0].into();
        let want = forward(&p, &x).unwrap();
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let xn = g.constant(x);
        let out = nodes.forward_nodes(&mut g, xn);
        assert_eq!(g.vector(out), &want);
    }

    #[test]
    fn graph_jvp_matches_closed_form() {
        let p = init_params(13, 4, 16);
        let x: Vector = vec![0.1, -0.9, 0.5, 2.0].into();
        let v: Vector = vec![1.0, 0.3, -0.6, 0.2].into();
        let want = model_jvp(&p, &x, &v);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let pre = nodes.preacts(&mut g, &p, &x);
        let vn = g.constant(v);
        let out = nodes.jvp_nodes(&mut g, pre, vn);
        assert_eq!(g.vector(out), &want);
    }

    #[test]
    fn jvp_loss_gradient_matches_finite_differences() {
        // loss(θ) = ||J_{F_θ}(x)·v||², gradient w.r.t. one W2 entry.
        let x: Vector = vec![0.37, -0.85].into();
        let v: Vector = vec![0.6, -0.2].into();
        let base = init_params(31, 2, 4);
        let eval = |p: &MlpParams| model_jvp(p, &x, &v).sq_norm();

        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &base);
        let pre = nodes.preacts(&mut g, &base, &x);
        let vn = g.constant(v.clone());
        let out = nodes.jvp_nodes(&mut g, pre, vn);
        let loss = g.sum_sq(out);
        assert!((loss.value - eval(&base)).abs() < 1e-14);
        let grads = nodes.extract_grads(&g.backward(loss).unwrap());

        let h = 1e-6;
        for (i, j) in [(0usize, 1usize), (2, 3), (1, 0)] {
            let mut p = base.clone();
            p.w2.set(i, j, p.w2.get(i, j) + h);
            let up = eval(&p);
            p.w2.set(i, j, p.w2.get(i, j) - 2.0 * h);
            let dn = eval(&p);
            let fd = (up - dn) / (2.0 * h);
            let got = grads.w2.get(i, j);
            assert!(
                (got - fd).abs() / fd.abs().max(1e-8) < 1e-4,
                "({i},{j}) got {got} fd {fd}"
            );
        }
    }
}
