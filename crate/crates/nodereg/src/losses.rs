//! Training objectives: short-rollout trajectory loss, Jacobian matching
//! against the true dynamics via directional derivatives, and the
//! unsupervised finite-difference variant that needs only trajectory data.

use serde::{Deserialize, Serialize};

use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrate::{rollout_nodes, Chunk};
use crate::model::{MlpNodes, MlpParams};
use crate::numerics::graph::{DiffScalar, Graph, NodeId};
use crate::numerics::vector::Vector;

/// Which regularizer (if any) is added to the trajectory loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    None,
    Ad,
    Fd,
}

/// The pieces of one combined-loss evaluation. `total = traj + lambda·reg`
/// holds exactly by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub traj: f64,
    pub reg: f64,
    pub lambda: f64,
    pub total: f64,
}

/// A dynamics model whose evaluations can be recorded on the reverse-mode
/// graph. The MLP is the real implementation; the true right-hand side
/// implements it too (gradient-free) so losses can be tested at their
/// exact zeros.
pub trait GraphDynamics {
    /// F(x) where x is already a graph node (used inside rollouts).
    fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId>;

    /// J_F(x)·v for each direction, at a fixed data point x.
    fn jvp_batch(&self, g: &mut Graph, x: &Vector, dirs: &[Vector]) -> Result<Vec<NodeId>>;
}

/// The trainable MLP registered on a graph.
pub struct MlpGraphModel<'a> {
    pub nodes: MlpNodes,
    pub params: &'a MlpParams,
}

impl GraphDynamics for MlpGraphModel<'_> {
    fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        Ok(self.nodes.forward_nodes(g, x))
    }

    fn jvp_batch(&self, g: &mut Graph, x: &Vector, dirs: &[Vector]) -> Result<Vec<NodeId>> {
        // ReLU masks depend only on x: compute once, share across directions.
        let pre = self.nodes.preacts(g, self.params, x);
        Ok(dirs
            .iter()
            .map(|v| {
                let vn = g.constant(v.clone());
                self.nodes.jvp_nodes(g, pre, vn)
            })
            .collect())
    }
}

/// The true dynamics wrapped as a (constant, gradient-free) graph model.
/// Lets tests drive every loss to its exact zero.
pub struct TrueGraphModel(pub System);

impl GraphDynamics for TrueGraphModel {
    fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let y = self.0.rhs_f64(g.vector(x))?;
        Ok(g.constant(y))
    }

    fn jvp_batch(&self, g: &mut Graph, x: &Vector, dirs: &[Vector]) -> Result<Vec<NodeId>> {
        dirs.iter()
            .map(|v| Ok(g.constant(self.0.true_jvp(x, v)?)))
            .collect()
    }
}

/// Σᵢ₌₁ᴺ ‖x(tᵢ) − x̃(tᵢ)‖² where x̃ is the model rollout from the chunk's
/// first state (the i=0 term is identically zero and skipped). `n_steps`
/// may be shorter than the chunk when it carries lookahead states.
pub fn traj_loss<M: GraphDynamics>(
    g: &mut Graph,
    model: &M,
    chunk: &Chunk,
    n_steps: usize,
) -> Result<DiffScalar> {
    assert!(n_steps >= 1 && n_steps + 1 <= chunk.states.len());
    let x0 = g.constant(chunk.states[0].clone());
    let mut f = |g: &mut Graph, x: NodeId| model.forward(g, x);
    let nodes = rollout_nodes(g, &mut f, x0, chunk.dt, n_steps)?;
    let mut acc = g.scalar_zero();
    for (i, node) in nodes.iter().enumerate().skip(1) {
        let data = g.constant(chunk.states[i].clone());
        let diff = g.sub(*node, data);
        let term = g.sum_sq(diff);
        acc = g.scalar_add(acc, term);
    }
    Ok(acc)
}

/// (1/V)·Σᵥ ‖J_{F_θ}(x)·v − J_F(x)·v‖² at one data point, with the true
/// Jacobian-vector product supplied by the known dynamics.
pub fn loss_ad<M: GraphDynamics>(
    g: &mut Graph,
    model: &M,
    sys: &System,
    x: &Vector,
    dirs: &[Vector],
) -> Result<DiffScalar> {
    assert!(!dirs.is_empty());
    let model_jvps = model.jvp_batch(g, x, dirs)?;
    let mut acc = g.scalar_zero();
    for (v, mj) in dirs.iter().zip(model_jvps) {
        let truth = g.constant(sys.true_jvp(x, v)?);
        let diff = g.sub(mj, truth);
        let term = g.sum_sq(diff);
        acc = g.scalar_add(acc, term);
    }
    Ok(g.scalar_scale(acc, 1.0 / dirs.len() as f64))
}

/// ‖(F_θ(x₁) − F_θ(x₀)) − (x₂ − 2x₁ + x₀)/dt‖² / ‖x₁ − x₀‖², the
/// unsupervised directional-derivative residual built from three
/// consecutive data states — the true dynamics never appear.
pub fn loss_fd<M: GraphDynamics>(
    g: &mut Graph,
    model: &M,
    x_t: &Vector,
    x_t1: &Vector,
    x_t2: &Vector,
    dt: f64,
) -> Result<DiffScalar> {
    let step = x_t1.sub(x_t);
    let denom = step.sq_norm();
    if denom.sqrt() < 1e-14 {
        return Err(Error::DegeneratePair {
            norm: denom.sqrt(),
        });
    }
    let x0 = g.constant(x_t.clone());
    let x1 = g.constant(x_t1.clone());
    let f0 = model.forward(g, x0)?;
    let f1 = model.forward(g, x1)?;
    let model_diff = g.sub(f1, f0);
    // Second difference of the data: (x₂ − 2x₁ + x₀)/dt
    let dd: Vector = x_t2.sub(&x_t1.scale(2.0)).add(x_t).scale(1.0 / dt);
    let ddn = g.constant(dd);
    let resid = g.sub(model_diff, ddn);
    let num = g.sum_sq(resid);
    Ok(g.scalar_scale(num, 1.0 / denom))
}

/// Trajectory loss plus λ times the chosen regularizer, summed over the
/// chunk's data points. With `RegMode::None` or λ = 0 the regularizer path
/// is never built, so those runs are bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss<M: GraphDynamics>(
    g: &mut Graph,
    model: &M,
    sys: &System,
    chunk: &Chunk,
    mode: RegMode,
    lambda: f64,
    dirs: &[Vector],
) -> Result<(DiffScalar, LossBreakdown)> {
    // FD chunks carry one lookahead state beyond the rollout window.
    let n_steps = match mode {
        RegMode::Fd => chunk.states.len() - 2,
        _ => chunk.states.len() - 1,
    };
    let traj = traj_loss(g, model, chunk, n_steps)?;

    if mode == RegMode::None || lambda == 0.0 {
        return Ok((
            traj,
            LossBreakdown {
                traj: traj.value,
                reg: 0.0,
                lambda,
                total: traj.value,
            },
        ));
    }

    let mut reg = g.scalar_zero();
    match mode {
        RegMode::None => unreachable!(),
        RegMode::Ad => {
            for x in &chunk.states[..=n_steps] {
                let term = loss_ad(g, model, sys, x, dirs)?;
                reg = g.scalar_add(reg, term);
            }
        }
        RegMode::Fd => {
            for i in 0..n_steps {
                let term = loss_fd(
                    g,
                    model,
                    &chunk.states[i],
                    &chunk.states[i + 1],
                    &chunk.states[i + 2],
                    chunk.dt,
                )?;
                reg = g.scalar_add(reg, term);
            }
        }
    }
    let scaled = g.scalar_scale(reg, lambda);
    let total = g.scalar_add(traj, scaled);
    Ok((
        total,
        LossBreakdown {
            traj: traj.value,
            reg: reg.value,
            lambda,
            total: total.value,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemId;
    use crate::integrate::{chunk_trajectories, rollout};
    use crate::model::{init_params, model_jvp, MlpParams};
    use crate::numerics::dual::full_jacobian;
    use crate::numerics::sampler::DirectionSampler;
    use crate::numerics::vector::Matrix;

    fn tb_chunk(n: usize) -> Chunk {
        let x0: Vector = vec![0.4, 0.0, 0.0, 2.0].into();
        let traj = rollout(
            |v: &Vector| System::TwoBody.rhs_f64(v),
            &x0,
            0.01,
            3 * n,
            SystemId::TwoBody,
        )
        .unwrap();
        chunk_trajectories(std::slice::from_ref(&traj), n)
            .into_iter()
            .next()
            .unwrap()
    }

    #[test]
    fn traj_loss_zero_for_true_dynamics() {
        let chunk = tb_chunk(4);
        let model = TrueGraphModel(System::TwoBody);
        let mut g = Graph::new();
        let loss = traj_loss(&mut g, &model, &chunk, 4).unwrap();
        // Data was produced by the identical integrator, so exactly zero.
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn traj_loss_zero_model_on_moving_data() {
        // Model ≡ 0 never moves; RK4 of zero rhs is the identity, so with
        // N = 1 the loss is exactly ||x(t₁) − x(t₀)||².
        let chunk = tb_chunk(1);
        let p = MlpParams::zeros(4, 8);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let loss = traj_loss(&mut g, &model, &chunk, 1).unwrap();
        let expected = chunk.states[1].sub(&chunk.states[0]).sq_norm();
        assert!((loss.value - expected).abs() < 1e-15);
        assert!(loss.value > 0.0);
    }

    #[test]
    fn loss_ad_zero_when_model_is_truth() {
        let sys = System::TwoBody;
        let model = TrueGraphModel(sys.clone());
        let s = DirectionSampler::new(1, 4);
        let x: Vector = vec![0.7, -0.2, 0.1, 1.3].into();
        let mut g = Graph::new();
        let loss = loss_ad(&mut g, &model, &sys, &x, &s.directions(0, 10)).unwrap();
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn loss_ad_zero_model_rb_equilibrium_basis_direction() {
        // At (1,0,0) the first column of the true Jacobian is zero, and the
        // zero model has zero JVP too.
        let sys = SystemId::RigidBody.system();
        let p = MlpParams::zeros(3, 8);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let x: Vector = vec![1.0, 0.0, 0.0].into();
        let loss = loss_ad(&mut g, &model, &sys, &x, &[Vector::basis(3, 0)]).unwrap();
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn loss_ad_matches_plain_f64_oracle() {
        let sys = System::TwoBody;
        let p = init_params(3, 4, 16);
        let x: Vector = vec![0.9, 0.4, -0.3, 1.1].into();
        let s = DirectionSampler::new(8, 4);
        let dirs = s.directions(0, 10);

        let expected: f64 = dirs
            .iter()
            .map(|v| {
                model_jvp(&p, &x, v)
                    .sub(&sys.true_jvp(&x, v).unwrap())
                    .sq_norm()
            })
            .sum::<f64>()
            / dirs.len() as f64;

        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let loss = loss_ad(&mut g, &model, &sys, &x, &dirs).unwrap();
        assert!((loss.value - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn loss_ad_monte_carlo_approximates_frobenius_gap() {
        // Over many isotropic directions the mean of ||ΔJ·v||² converges to
        // ||J_F − J_{F_θ}||_F².
        let sys = System::TwoBody;
        let p = init_params(3, 4, 16);
        let x: Vector = vec![0.9, 0.4, -0.3, 1.1].into();
        let jf = full_jacobian(|z| sys.rhs(z), &x).unwrap();
        let jm = {
            let cols: Vec<Vector> = (0..4)
                .map(|j| model_jvp(&p, &x, &Vector::basis(4, j)))
                .collect();
            Matrix::from_columns(&cols)
        };
        let exact = jf.sub(&jm).frobenius_sq();

        let s = DirectionSampler::new(77, 4);
        let dirs = s.directions(0, 10_000);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let loss = loss_ad(&mut g, &model, &sys, &x, &dirs).unwrap();
        assert!(
            (loss.value - exact).abs() / exact < 0.05,
            "estimate {} exact {exact}",
            loss.value
        );
    }

    #[test]
    fn loss_fd_zero_on_linear_data_constant_model() {
        // Data moving at constant velocity has zero second difference, and a
        // constant-output model has zero forward difference.
        let mut p = MlpParams::zeros(2, 4);
        p.b3 = vec![0.3, -0.1].into();
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let x0: Vector = vec![0.0, 0.0].into();
        let x1: Vector = vec![0.1, 0.2].into();
        let x2: Vector = vec![0.2, 0.4].into();
        let loss = loss_fd(&mut g, &model, &x0, &x1, &x2, 0.1).unwrap();
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn loss_fd_degenerate_pair_rejected() {
        let p = MlpParams::zeros(2, 4);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let x: Vector = vec![1.0, 2.0].into();
        let err = loss_fd(&mut g, &model, &x, &x, &x, 0.1).unwrap_err();
        assert!(matches!(err, Error::DegeneratePair { .. }));
    }

    #[test]
    fn loss_fd_shrinks_quadratically_with_dt() {
        // ẋ = −x with the true dynamics as model: the residual is the
        // second-order finite-difference error, so the loss drops ~dt²·dt²
        // … measure only that the empirical rate is at least O(dt).
        let run = |dt: f64| {
            let x0: Vector = vec![1.0].into();
            let f = |v: &Vector| -> Result<Vector> { Ok(v.scale(-1.0)) };
            let traj = rollout(f, &x0, dt, 2, SystemId::RigidBody).unwrap();
            // 1-D linear system expressed exactly by a hand-built MLP:
            // W1=(1,-1)ᵀ, W3=(-1,1) computes -x for every sign of x.
            let mut p = MlpParams::zeros(1, 2);
            p.w1 = Matrix::new(2, 1, vec![1.0, -1.0]).unwrap();
            p.w2 = Matrix::identity(2);
            p.w3 = Matrix::new(1, 2, vec![-1.0, 1.0]).unwrap();
            let mut g = Graph::new();
            let nodes = MlpNodes::register(&mut g, &p);
            let model = MlpGraphModel {
                nodes,
                params: &p,
            };
            loss_fd(
                &mut g,
                &model,
                &traj.states[0],
                &traj.states[1],
                &traj.states[2],
                dt,
            )
            .unwrap()
            .value
        };
        let (l1, l2, l3) = (run(0.1), run(0.05), run(0.025));
        assert!(l2 < l1 && l3 < l2, "losses {l1} {l2} {l3}");
        // Empirical order from successive halvings; expect about 2.
        let rate = (l1 / l2).log2();
        assert!(rate >= 1.0, "rate {rate}");
        let rate2 = (l2 / l3).log2();
        assert!(rate2 >= 1.0, "rate {rate2}");
    }

    #[test]
    fn combined_loss_lambda_zero_equals_traj() {
        let chunk = tb_chunk(2);
        let p = init_params(5, 4, 8);
        let sys = System::TwoBody;
        let s = DirectionSampler::new(2, 4);
        let dirs = s.directions(0, 4);

        let eval = |mode: RegMode, lambda: f64| {
            let mut g = Graph::new();
            let nodes = MlpNodes::register(&mut g, &p);
            let model = MlpGraphModel {
                nodes,
                params: &p,
            };
            combined_loss(&mut g, &model, &sys, &chunk, mode, lambda, &dirs)
                .unwrap()
                .1
        };

        let none = eval(RegMode::None, 0.0);
        let zero_lambda = eval(RegMode::Ad, 0.0);
        assert_eq!(none.total, none.traj);
        // λ = 0 is bit-identical to mode = none.
        assert_eq!(none, LossBreakdown { lambda: 0.0, ..zero_lambda });
        assert_eq!(zero_lambda.total.to_bits(), none.total.to_bits());
    }

    #[test]
    fn combined_loss_composition_is_exact() {
        let chunk = tb_chunk(2);
        let p = init_params(5, 4, 8);
        let sys = System::TwoBody;
        let s = DirectionSampler::new(2, 4);
        let dirs = s.directions(0, 4);
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let lambda = 5e-13;
        let (_, bd) =
            combined_loss(&mut g, &model, &sys, &chunk, RegMode::Ad, lambda, &dirs).unwrap();
        assert_eq!(bd.total, bd.traj + lambda * bd.reg);
        assert!(bd.traj >= 0.0 && bd.reg >= 0.0);
    }

    #[test]
    fn combined_loss_fd_uses_lookahead_state() {
        // FD chunks carry N+2 states; the rollout covers only the first N+1.
        let x0: Vector = vec![0.4, 0.0, 0.0, 2.0].into();
        let traj = rollout(
            |v: &Vector| System::TwoBody.rhs_f64(v),
            &x0,
            0.01,
            10,
            SystemId::TwoBody,
        )
        .unwrap();
        let chunks =
            crate::integrate::chunk_trajectories_lookahead(std::slice::from_ref(&traj), 2);
        let chunk = &chunks[0];
        assert_eq!(chunk.states.len(), 4);
        let p = init_params(5, 4, 8);
        let sys = System::TwoBody;
        let mut g = Graph::new();
        let nodes = MlpNodes::register(&mut g, &p);
        let model = MlpGraphModel {
            nodes,
            params: &p,
        };
        let (_, bd) =
            combined_loss(&mut g, &model, &sys, chunk, RegMode::Fd, 1e-3, &[]).unwrap();
        assert!(bd.reg > 0.0);
        assert_eq!(bd.total, bd.traj + 1e-3 * bd.reg);
    }

    // Gradient checks: every loss differentiated w.r.t. θ must match
    // central finite differences on a small network.
    fn grad_check<F>(build: F)
    where
        F: Fn(&mut Graph, &MlpParams) -> DiffScalar,
    {
        let base = init_params(19, 4, 4);
        let eval = |p: &MlpParams| {
            let mut g = Graph::new();
            build(&mut g, p).value
        };
        let mut g = Graph::new();
        let loss = build(&mut g, &base);
        let grads = g.backward(loss).unwrap();
        // Identify the registered nodes again: rebuild to fetch handles.
        let mut g2 = Graph::new();
        let nodes = MlpNodes::register(&mut g2, &base);
        let _ = nodes; // handles in g2 mirror ids 0..6 in g (same order)
        let mp = nodes; // ids valid for g because registration order is fixed
        let gp = MlpParams {
            w1: grads.matrix(mp.w1, 4, 4),
            b1: grads.vector(mp.b1, 4),
            w2: grads.matrix(mp.w2, 4, 4),
            b2: grads.vector(mp.b2, 4),
            w3: grads.matrix(mp.w3, 4, 4),
            b3: grads.vector(mp.b3, 4),
        };

        let h = 1e-6;
        let probes = [(0usize, 0usize, 1usize), (1, 2, 0), (2, 1, 2)];
        for &(tensor, i, j) in &probes {
            let mut p = base.clone();
            let (analytic, fd) = {
                let set = |p: &mut MlpParams, delta: f64| match tensor {
                    0 => p.w1.set(i, j, p.w1.get(i, j) + delta),
                    1 => p.w2.set(i, j, p.w2.get(i, j) + delta),
                    _ => p.w3.set(i, j, p.w3.get(i, j) + delta),
                };
                set(&mut p, h);
                let up = eval(&p);
                set(&mut p, -2.0 * h);
                let dn = eval(&p);
                let a = match tensor {
                    0 => gp.w1.get(i, j),
                    1 => gp.w2.get(i, j),
                    _ => gp.w3.get(i, j),
                };
                (a, (up - dn) / (2.0 * h))
            };
            assert!(
                (analytic - fd).abs() / fd.abs().max(1e-7) < 1e-4,
                "tensor {tensor} ({i},{j}): analytic {analytic} fd {fd}"
            );
        }
    }

    #[test]
    fn traj_loss_gradient_matches_finite_differences() {
        let chunk = tb_chunk(2);
        grad_check(|g, p| {
            let nodes = MlpNodes::register(g, p);
            let model = MlpGraphModel { nodes, params: p };
            traj_loss(g, &model, &chunk, 2).unwrap()
        });
    }

    #[test]
    fn loss_ad_gradient_matches_finite_differences() {
        let sys = System::TwoBody;
        let x: Vector = vec![0.9, 0.4, -0.3, 1.1].into();
        let s = DirectionSampler::new(4, 4);
        let dirs = s.directions(0, 3);
        grad_check(|g, p| {
            let nodes = MlpNodes::register(g, p);
            let model = MlpGraphModel { nodes, params: p };
            loss_ad(g, &model, &sys, &x, &dirs).unwrap()
        });
    }

    #[test]
    fn loss_fd_gradient_matches_finite_differences() {
        let chunk = tb_chunk(3);
        grad_check(|g, p| {
            let nodes = MlpNodes::register(g, p);
            let model = MlpGraphModel { nodes, params: p };
            loss_fd(
                g,
                &model,
                &chunk.states[0],
                &chunk.states[1],
                &chunk.states[2],
                chunk.dt,
            )
            .unwrap()
        });
    }
}
