//! Reverse-mode differentiation over vector-granularity operations.
//!
//! A [`Graph`] records one loss evaluation; [`Graph::backward`] then yields
//! one partial per registered parameter. Directional-derivative (tangent)
//! paths are built from the same ops — tangent vectors are ordinary graph
//! nodes, so losses containing Jacobian-vector products differentiate with
//! respect to parameters like any other loss.

use crate::error::{Error, Result};
use crate::numerics::vector::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// A scalar loss value plus its handle into the graph that produced it.
#[derive(Debug, Clone, Copy)]
pub struct DiffScalar {
    pub id: NodeId,
    pub value: f64,
}

#[derive(Debug, Clone)]
enum Payload {
    Scalar(f64),
    Vector(Vector),
    Matrix(Matrix),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// M·x
    MatVec { m: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// a + alpha·b
    Axpy { a: NodeId, b: NodeId, alpha: f64 },
    Scale { x: NodeId, alpha: f64 },
    Relu { x: NodeId },
    /// x ⊙ step(value(gate)); the gate receives no adjoint (its derivative
    /// is zero except on a measure-zero set, fixed to zero).
    Gate { x: NodeId, gate: NodeId },
    /// ||x||² → scalar
    SumSq { x: NodeId },
    ScalarAdd { a: NodeId, b: NodeId },
    ScalarScale { x: NodeId, alpha: f64 },
}

struct Node {
    value: Payload,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(NodeId, String)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    /// Drop all nodes but keep allocated capacity for reuse.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Payload, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    #[inline]
    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn param_matrix(&mut self, m: Matrix, name: &str) -> NodeId {
        let id = self.push(Payload::Matrix(m), Op::Leaf, true);
        self.params.push((id, name.to_string()));
        id
    }

    pub fn param_vector(&mut self, v: Vector, name: &str) -> NodeId {
        let id = self.push(Payload::Vector(v), Op::Leaf, true);
        self.params.push((id, name.to_string()));
        id
    }

    pub fn constant(&mut self, v: Vector) -> NodeId {
        self.push(Payload::Vector(v), Op::Leaf, false)
    }

    pub fn vector(&self, id: NodeId) -> &Vector {
        match &self.nodes[id.0].value {
            Payload::Vector(v) => v,
            _ => panic!("node is not a vector"),
        }
    }

    pub fn matrix(&self, id: NodeId) -> &Matrix {
        match &self.nodes[id.0].value {
            Payload::Matrix(m) => m,
            _ => panic!("node is not a matrix"),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        match &self.nodes[id.0].value {
            Payload::Scalar(s) => *s,
            _ => panic!("node is not a scalar"),
        }
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let y = self.matrix(m).matvec(self.vector(x));
        let ng = self.needs(m) || self.needs(x);
        self.push(Payload::Vector(y), Op::MatVec { m, x }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.vector(a).add(self.vector(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Payload::Vector(y), Op::Add { a, b }, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.vector(a).sub(self.vector(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Payload::Vector(y), Op::Sub { a, b }, ng)
    }

    pub fn axpy(&mut self, a: NodeId, alpha: f64, b: NodeId) -> NodeId {
        let y = self.vector(a).axpy(alpha, self.vector(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Payload::Vector(y), Op::Axpy { a, b, alpha }, ng)
    }

    pub fn scale(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let y = self.vector(x).scale(alpha);
        let ng = self.needs(x);
        self.push(Payload::Vector(y), Op::Scale { x, alpha }, ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y: Vector = self
            .vector(x)
            .iter()
            .map(|&a| if a > 0.0 { a } else { 0.0 })
            .collect::<Vec<_>>()
            .into();
        let ng = self.needs(x);
        self.push(Payload::Vector(y), Op::Relu { x }, ng)
    }

    /// Elementwise product of `x` with the ReLU mask of `gate`'s value.
    /// This is the tangent-path counterpart of `relu`.
    pub fn gate(&mut self, x: NodeId, gate: NodeId) -> NodeId {
        let y: Vector = self
            .vector(x)
            .iter()
            .zip(self.vector(gate).iter())
            .map(|(&a, &g)| if g > 0.0 { a } else { 0.0 })
            .collect::<Vec<_>>()
            .into();
        let ng = self.needs(x);
        self.push(Payload::Vector(y), Op::Gate { x, gate }, ng)
    }

    pub fn sum_sq(&mut self, x: NodeId) -> DiffScalar {
        let s = self.vector(x).sq_norm();
        let ng = self.needs(x);
        let id = self.push(Payload::Scalar(s), Op::SumSq { x }, ng);
        DiffScalar { id, value: s }
    }

    pub fn scalar_zero(&mut self) -> DiffScalar {
        let id = self.push(Payload::Scalar(0.0), Op::Leaf, false);
        DiffScalar { id, value: 0.0 }
    }

    pub fn scalar_add(&mut self, a: DiffScalar, b: DiffScalar) -> DiffScalar {
        let s = a.value + b.value;
        let ng = self.needs(a.id) || self.needs(b.id);
        let id = self.push(Payload::Scalar(s), Op::ScalarAdd { a: a.id, b: b.id }, ng);
        DiffScalar { id, value: s }
    }

    pub fn scalar_scale(&mut self, x: DiffScalar, alpha: f64) -> DiffScalar {
        let s = x.value * alpha;
        let ng = self.needs(x.id);
        let id = self.push(Payload::Scalar(s), Op::ScalarScale { x: x.id, alpha }, ng);
        DiffScalar { id, value: s }
    }

    /// Reverse sweep from `out`, returning one partial per registered
    /// parameter. Fails on non-finite gradient components, naming the
    /// offending parameter.
    pub fn backward(&self, out: DiffScalar) -> Result<Gradients> {
        let mut adj: Vec<Option<Payload>> = (0..=out.id.0).map(|_| None).collect();
        adj[out.id.0] = Some(Payload::Scalar(1.0));

        for id in (0..=out.id.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad && !matches!(node.op, Op::Leaf) {
                adj[id] = None;
                continue;
            }
            let Some(grad) = adj[id].take() else { continue };
            match (&node.op, &grad) {
                (Op::Leaf, _) => {
                    adj[id] = Some(grad); // keep for parameter extraction
                }
                (Op::MatVec { m, x }, Payload::Vector(g)) => {
                    if self.needs(*m) {
                        let xv = self.vector(*x);
                        match adj[m.0].get_or_insert_with(|| {
                            Payload::Matrix(Matrix::zeros(g.len(), xv.len()))
                        }) {
                            Payload::Matrix(acc) => acc.add_outer_scaled(g, xv, 1.0),
                            _ => unreachable!(),
                        }
                    }
                    if self.needs(*x) {
                        let delta = self.matrix(*m).matvec_t(g);
                        accumulate_vec(&mut adj[x.0], &delta);
                    }
                }
                (Op::Add { a, b }, Payload::Vector(g)) => {
                    if self.needs(*a) {
                        accumulate_vec(&mut adj[a.0], g);
                    }
                    if self.needs(*b) {
                        accumulate_vec(&mut adj[b.0], g);
                    }
                }
                (Op::Sub { a, b }, Payload::Vector(g)) => {
                    if self.needs(*a) {
                        accumulate_vec(&mut adj[a.0], g);
                    }
                    if self.needs(*b) {
                        accumulate_vec_scaled(&mut adj[b.0], g, -1.0);
                    }
                }
                (Op::Axpy { a, b, alpha }, Payload::Vector(g)) => {
                    if self.needs(*a) {
                        accumulate_vec(&mut adj[a.0], g);
                    }
                    if self.needs(*b) {
                        accumulate_vec_scaled(&mut adj[b.0], g, *alpha);
                    }
                }
                (Op::Scale { x, alpha }, Payload::Vector(g)) => {
                    if self.needs(*x) {
                        accumulate_vec_scaled(&mut adj[x.0], g, *alpha);
                    }
                }
                (Op::Relu { x }, Payload::Vector(g)) => {
                    if self.needs(*x) {
                        let masked: Vector = self
                            .vector(*x)
                            .iter()
                            .zip(g.iter())
                            .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                            .collect::<Vec<_>>()
                            .into();
                        accumulate_vec(&mut adj[x.0], &masked);
                    }
                }
                (Op::Gate { x, gate }, Payload::Vector(g)) => {
                    if self.needs(*x) {
                        let masked: Vector = self
                            .vector(*gate)
                            .iter()
                            .zip(g.iter())
                            .map(|(&gv, &gi)| if gv > 0.0 { gi } else { 0.0 })
                            .collect::<Vec<_>>()
                            .into();
                        accumulate_vec(&mut adj[x.0], &masked);
                    }
                }
                (Op::SumSq { x }, Payload::Scalar(g)) => {
                    if self.needs(*x) {
                        let delta = self.vector(*x).scale(2.0 * g);
                        accumulate_vec(&mut adj[x.0], &delta);
                    }
                }
                (Op::ScalarAdd { a, b }, Payload::Scalar(g)) => {
                    if self.needs(*a) {
                        accumulate_scalar(&mut adj[a.0], *g);
                    }
                    if self.needs(*b) {
                        accumulate_scalar(&mut adj[b.0], *g);
                    }
                }
                (Op::ScalarScale { x, alpha }, Payload::Scalar(g)) => {
                    if self.needs(*x) {
                        accumulate_scalar(&mut adj[x.0], g * alpha);
                    }
                }
                _ => panic!("adjoint payload kind does not match op"),
            }
        }

        // Validate parameter gradients before handing them out.
        for (id, name) in &self.params {
            let finite = match adj.get(id.0).and_then(|a| a.as_ref()) {
                Some(Payload::Vector(v)) => v.is_finite(),
                Some(Payload::Matrix(m)) => m.is_finite(),
                Some(Payload::Scalar(s)) => s.is_finite(),
                None => true, // parameter unused by this loss: zero gradient
            };
            if !finite {
                return Err(Error::NonFinite(format!("gradient of parameter {name}")));
            }
        }

        Ok(Gradients { adj })
    }
}

fn accumulate_vec(slot: &mut Option<Payload>, delta: &Vector) {
    match slot {
        Some(Payload::Vector(acc)) => {
            for (a, d) in acc.as_mut_slice().iter_mut().zip(delta.iter()) {
                *a += d;
            }
        }
        None => *slot = Some(Payload::Vector(delta.clone())),
        _ => unreachable!(),
    }
}

fn accumulate_vec_scaled(slot: &mut Option<Payload>, delta: &Vector, alpha: f64) {
    match slot {
        Some(Payload::Vector(acc)) => {
            for (a, d) in acc.as_mut_slice().iter_mut().zip(delta.iter()) {
                *a += alpha * d;
            }
        }
        None => *slot = Some(Payload::Vector(delta.scale(alpha))),
        _ => unreachable!(),
    }
}

fn accumulate_scalar(slot: &mut Option<Payload>, delta: f64) {
    match slot {
        Some(Payload::Scalar(acc)) => *acc += delta,
        None => *slot = Some(Payload::Scalar(delta)),
        _ => unreachable!(),
    }
}

/// Parameter partials from one reverse sweep.
pub struct Gradients {
    adj: Vec<Option<Payload>>,
}

impl Gradients {
    /// Gradient of a matrix parameter; zero if the loss never touched it.
    pub fn matrix(&self, id: NodeId, rows: usize, cols: usize) -> Matrix {
        match self.adj.get(id.0).and_then(|a| a.as_ref()) {
            Some(Payload::Matrix(m)) => m.clone(),
            None => Matrix::zeros(rows, cols),
            _ => panic!("gradient payload is not a matrix"),
        }
    }

    /// Gradient of a vector parameter; zero if the loss never touched it.
    pub fn vector(&self, id: NodeId, len: usize) -> Vector {
        match self.adj.get(id.0).and_then(|a| a.as_ref()) {
            Some(Payload::Vector(v)) => v.clone(),
            None => Vector::zeros(len),
            _ => panic!("gradient payload is not a vector"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_half_norm_sq_is_theta() {
        // loss(θ) = ½||θ||² → ∂loss/∂θ = θ
        let mut g = Graph::new();
        let theta: Vector = vec![1.0, -2.0, 3.5].into();
        let p = g.param_vector(theta.clone(), "theta");
        let s = g.sum_sq(p);
        let loss = g.scalar_scale(s, 0.5);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.vector(p, 3), theta);
    }

    #[test]
    fn grad_of_constant_loss_is_zero() {
        let mut g = Graph::new();
        let p = g.param_vector(vec![1.0, 2.0].into(), "theta");
        let c = g.constant(vec![5.0, 6.0].into());
        let s = g.sum_sq(c);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.vector(p, 2), Vector::zeros(2));
    }

    #[test]
    fn matvec_gradient_is_outer_product() {
        // loss = ||W x||², dL/dW = 2 (Wx) xᵀ
        let mut g = Graph::new();
        let w = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let wp = g.param_matrix(w.clone(), "w");
        let x: Vector = vec![0.5, -1.0].into();
        let xc = g.constant(x.clone());
        let y = g.matvec(wp, xc);
        let loss = g.sum_sq(y);
        let grads = g.backward(loss).unwrap();
        let wx = w.matvec(&x);
        let mut expected = Matrix::zeros(2, 2);
        expected.add_outer_scaled(&wx, &x, 2.0);
        let got = grads.matrix(wp, 2, 2);
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_blocks_gradient_when_inactive() {
        let mut g = Graph::new();
        let p = g.param_vector(vec![-1.0, 2.0].into(), "p");
        let r = g.relu(p);
        let loss = g.sum_sq(r);
        let grads = g.backward(loss).unwrap();
        let got = grads.vector(p, 2);
        assert_eq!(got.as_slice(), &[0.0, 4.0]);
    }

    #[test]
    fn gate_passes_no_gradient_to_gate_source() {
        let mut g = Graph::new();
        let p = g.param_vector(vec![3.0].into(), "p");
        let gate_src = g.param_vector(vec![1.0].into(), "gate_src");
        let gated = g.gate(p, gate_src);
        let loss = g.sum_sq(gated);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.vector(p, 1).as_slice(), &[6.0]);
        assert_eq!(grads.vector(gate_src, 1).as_slice(), &[0.0]);
    }

    #[test]
    fn finite_difference_check_composite() {
        // loss(θ) = ||relu(Wθ + b) - c||² checked against central differences
        let w = Matrix::new(2, 2, vec![0.3, -0.7, 1.2, 0.4]).unwrap();
        let b: Vector = vec![0.1, -0.2].into();
        let c: Vector = vec![0.5, 0.5].into();
        let eval = |theta: &Vector| -> f64 {
            let z = w.matvec(theta).add(&b);
            let r: Vector = z
                .iter()
                .map(|&a| if a > 0.0 { a } else { 0.0 })
                .collect::<Vec<_>>()
                .into();
            r.sub(&c).sq_norm()
        };
        let theta: Vector = vec![0.9, -0.3].into();

        let mut g = Graph::new();
        let tp = g.param_vector(theta.clone(), "theta");
        let wc = g.param_matrix(w.clone(), "w");
        let bc = g.constant(b.clone());
        let cc = g.constant(c.clone());
        let z0 = g.matvec(wc, tp);
        let z = g.add(z0, bc);
        let r = g.relu(z);
        let d = g.sub(r, cc);
        let loss = g.sum_sq(d);
        assert!((loss.value - eval(&theta)).abs() < 1e-14);
        let grads = g.backward(loss).unwrap();
        let got = grads.vector(tp, 2);

        let h = 1e-6;
        for j in 0..2 {
            let mut tp_ = theta.clone();
            tp_[j] += h;
            let up = eval(&tp_);
            tp_[j] -= 2.0 * h;
            let dn = eval(&tp_);
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (got[j] - fd).abs() / fd.abs().max(1e-9) < 1e-6,
                "j={j} got {} fd {fd}",
                got[j]
            );
        }
    }
}
