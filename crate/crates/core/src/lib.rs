//! Lossy dynamical flow networks with finite cell capacities.
//!
//! The state `x` (commodity per cell) follows
//!
//! ```text
//! dx/dt = S_0^w(R'x + c) - x
//! ```
//!
//! where `R` is a sub-stochastic routing matrix, `w` the cell capacities,
//! `c` the exogenous net demand and `S_0^w` the entrywise clamp to
//! `[0, w]`. The crate simulates this flow, computes its equilibrium set
//! (a point or a segment along the invariant vector of `R`), and sweeps
//! demand along affine paths to find where the equilibrium jumps.
//!
//! ```
//! use flownet::{equilibria, NetworkSpec};
//!
//! let spec = NetworkSpec::new(
//!     vec![vec![0.0, 0.75, 0.25], vec![0.0, 0.0, 1.0], vec![0.3, 0.7, 0.0]],
//!     vec![5.0, 4.0, 6.0],
//!     vec![0.0, -1.0, 1.0],
//! )?;
//! let set = equilibria::equilibrium_set(&spec)?;
//! assert_eq!(set.kind, equilibria::EquilibriumKind::Segment);
//! # Ok::<(), flownet::FlowError>(())
//! ```

pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod exec;
pub mod io;
pub mod linalg;
pub mod netmodel;
pub mod transitions;

pub use dynamics::{integrate, IntegratorConfig, State, Trajectory};
pub use equilibria::{equilibrium_set, EquilibriumKind, EquilibriumSet};
pub use error::{FlowError, Result, ValidationError};
pub use exec::ExecMode;
pub use linalg::RoutingMatrix;
pub use netmodel::{NetworkSpec, RawNetworkSpec, RoutingClass, RoutingTag};
pub use transitions::{DemandPath, SweepResult};
