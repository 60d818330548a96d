//! Kelley, fully corrective Frank-Wolfe and a fixed-accuracy proximal
//! bundle method for `min ½xᵀQx + qᵀx + r + max_{(v,b) ∈ V} vᵀx + b`.

pub mod densela;
pub mod duality;
pub mod error;
pub mod harness;
pub mod io;
pub mod kelley_fcfw;
pub mod lmo;
pub mod lp;
pub mod model;
pub mod mpbfa;
pub mod subqp;
pub mod synth;

pub use error::{Error, Result};
pub use lmo::LmoDescriptor;
pub use model::{Affine, Bundle, PolicyKind, ProblemInstance, QuadraticObjective, SolverConfig};
