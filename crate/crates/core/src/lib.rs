//! Operator growth in noisy quantum dynamics.
//!
//! Heisenberg-picture operators are tracked through their Pauli-string
//! decomposition. The crate provides:
//!
//! - [`pauli`]: bit-packed Pauli strings, products, commutation and size.
//! - [`size`]: size distributions `P(S)`, moments and generating functions.
//! - [`ruc`]: Monte-Carlo operator spreading in noisy random circuits.
//! - [`exact`]: exact small-system evolution (unitary, Lindblad, size-damped),
//!   OTOCs and echo identities.
//! - [`phenom`]: closed-form and ODE predictions for size growth and echo decay.
//! - [`protocol`]: randomized Pauli-insertion measurement of the size
//!   generating function.
//! - [`fit`] and [`analysis`]: growth-constant fits and curve diagnostics.
//! - [`criteria`]: named acceptance thresholds and their evaluation.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod criteria;
pub mod exact;
pub mod fit;
pub mod ode;
pub mod pauli;
pub mod phenom;
pub mod protocol;
pub mod rng;
pub mod ruc;
pub mod size;

pub use pauli::{Pauli, PauliError, PauliString, Phase, PhasedString};
pub use ruc::{CircuitConfig, Geometry, GrowthCurve};
pub use size::{SizeDistribution, WeightedEnsemble};
