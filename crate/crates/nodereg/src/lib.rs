//! Neural ODEs trained on short rollouts, with Jacobian regularization via
//! directional derivatives to stabilize long-horizon integration.

pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod integrate;
pub mod io;
pub mod losses;
pub mod model;
pub mod train;
pub mod numerics;

pub use error::{Error, Result};
