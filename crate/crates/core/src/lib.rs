//! Motion-planning complexity for control-affine systems.
//!
//! The crate is organised bottom-up: [`expr`] and [`field`] hold symbolic
//! vector fields, [`ode`] integrates their flows, [`structure`] computes
//! flags and adapted frames, [`charts`] builds privileged coordinates,
//! [`planner`] steers between points and [`complexity`] marches along
//! curves to estimate how many pieces of a given cost are needed.

pub mod error;
pub mod expr;
pub mod field;
pub mod ode;

pub use error::{Error, ParseError, Result};
pub use field::{lie_bracket, parse_field, ControlAffineSystem, VectorField};
pub use ode::{flow, flow_compose, flow_pushforward, Tolerance};
pub mod ballbox;
pub mod charts;
pub mod complexity;
pub mod harness;
pub mod path;
pub mod structure;
pub mod planner;
pub mod systems;
