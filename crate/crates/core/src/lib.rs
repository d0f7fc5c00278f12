//! Compound mixed renewal processes: simulation, progressively equivalent
//! changes of measure, importance-sampled ruin probabilities and premium
//! principles.

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod exec;
pub mod expr;
pub mod model;
pub mod premium;
pub mod presets;
pub mod quad;
pub mod rng;
pub mod ruin;
pub mod stats;
pub mod tilt;

pub use dist::Law;
pub use error::{Error, Result};
pub use exec::Exec;
pub use expr::Expr;
pub use stats::{CheckReport, Estimate};
pub use model::{Kernel, Mixing, Path, RiskModel, StopRule, Theta};
pub use tilt::Tilt;
