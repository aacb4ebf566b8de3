//! Dense linear algebra and the differentiation engine: forward-mode dual
//! numbers, a reverse-mode graph, and stochastic Frobenius-norm estimation.

pub mod dual;
pub mod fft;
pub mod graph;
pub mod sampler;
pub mod vector;

pub use dual::{full_jacobian, jvp, Dual, DualVector, Scalar};
pub use graph::{DiffScalar, Gradients, Graph, NodeId};
pub use sampler::{frobenius_sq_hutchinson, CounterRng, DirectionSampler};
pub use vector::{Matrix, Vector};
