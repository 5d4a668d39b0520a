//! Kähler-Ricci flow on Hirzebruch surfaces in the fiber-collapse regime.
//!
//! The crate evolves U(2)-symmetric metrics on `F_k = P(O ⊕ O(-k))` by the
//! parabolic complex Monge-Ampère equation, monitors the a priori estimates
//! along the run, and measures the Gromov-Hausdorff collapse of the total
//! space onto the base `P¹` on sampled graph metrics.
//!
//! Module map:
//!
//! - [`geometry`]: cohomology classes, class trajectory and singular time.
//! - [`calabi`]: momentum-profile representation of symmetric metrics.
//! - [`flow`]: the gauge-fixed Monge-Ampère solver.
//! - [`estimates`]: Schwarz, trace, diameter-decay and `H` monitors.
//! - [`fsgeom`]: Fubini-Study pullbacks under linear maps.
//! - [`metricspace`]: graph geodesics, limit distances and GH correspondences.
//! - [`scenario`], [`pipeline`], [`output`], [`plot`]: scenario files, run
//!   orchestration and artifact emission.
//! - [`verify`]: executable acceptance criteria.
//!
//! All periods are measured in first-Chern-class units: the hyperplane class
//! of `P¹` has period 1, and Kähler forms carry the `i/2π` normalization.

pub mod calabi;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod fsgeom;
pub mod geometry;
pub mod metricspace;
pub mod output;
pub mod pipeline;
pub mod plot;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
