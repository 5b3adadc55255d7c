//! Coding of hyperbolic three-dimensional flows by topological Markov flows,
//! at desk scale.
//!
//! The crate builds, for explicit suspension models over hyperbolic toral
//! automorphisms, the full chain
//!
//! sections -> hyperbolicity parameters -> Pesin charts -> pseudo-orbits and
//! invariant curves -> coarse-grained alphabet -> Markov cover -> refined
//! partition -> second (finite-to-one) coding,
//!
//! together with the symbolic side: countable-state Markov shifts, suspension
//! flows, the Bowen-Walters metric and irreducible components.
//!
//! All dynamical quantities are computed for the IEEE-754 realization of the
//! model: orbits are the exactly computed `f64` orbits, and all closeness
//! conditions are evaluated on those values. Sample-cloud operations on
//! rectangles use an explicit tolerance in chart coordinates; everything else
//! is exact arithmetic on the computed orbit.

pub mod charts;
pub mod coarse;
pub mod gpo;
pub mod markov;
pub mod model;
pub mod nuh;
pub mod pipeline;
pub mod sections;
pub mod symbolic;

pub use model::{ModelFlow, PointM, RoofProfile};
pub use pipeline::PipelineConfig;
