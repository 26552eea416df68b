//! Agent-based opinion dynamics with pairwise interactions, the ordinary and
//! stochastic differential equations they converge to as the timestep shrinks,
//! and tools for checking that convergence numerically.
//!
//! The crate is organised around the flow of an experiment:
//!
//! * [`kernel`]: interaction probabilities `p_ij(x)` and networks.
//! * [`noise`]: timestep-indexed noise families and their moment scalings.
//! * [`abm`]: the discrete-time agent-based engine.
//! * [`dem`]: drift/diffusion of the limiting equations and fixed-step integrators.
//! * [`limitcheck`]: one-step drift/diffusion coefficients of the agent-based chain.
//! * [`analysis`]: trajectory errors and ensemble statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abm;
pub mod analysis;
pub mod dem;
mod error;
pub mod kernel;
pub mod limitcheck;
pub mod noise;
pub mod rng;
mod trajectory;

pub use abm::{ModelSpec, OpinionState, SelectionScheme, UpdateMode};
pub use analysis::{EnsembleAccumulator, EnsembleStats, ErrorNorm};
pub use dem::{Dynamics, IntegratorSpec, LimitModel, LimitRow, Scheme};
pub use error::{Error, Result};
pub use kernel::{Interaction, InteractionKernel, Mollifier, Network};
pub use limitcheck::{CoefficientReport, Method, SweepRow};
pub use noise::{NoiseFamily, NoiseKind, NoiseLaw};
pub use trajectory::{format_float, time_grid, write_table, Trajectory};
