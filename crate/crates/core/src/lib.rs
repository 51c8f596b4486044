//! Core of a desk-scale vehicle–cloud robustness testbed.
//!
//! Everything in this crate is deterministic pure computation over value
//! types: a toy world with unicycle kinematics, a synthetic front-camera
//! renderer, a small grid-cell object detector with hand-rolled forward and
//! reverse passes, FGSM/PGD adversarial example generation, a seeded
//! delay/jitter/loss channel with a binary wire protocol, PID lane-keeping
//! control, a closed-loop episode scheduler, and detection/driving metrics.
//!
//! The crate is `no_std` (with `alloc`); transports, file formats and the
//! experiment CLI live in the companion `advloop` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod bbox;
pub mod closed_loop;
pub mod codec;
pub mod control;
pub mod geom;
pub(crate) mod math;
pub mod metrics;
pub mod netchan;
pub mod perception;
pub mod render;
pub mod rng;
pub mod scene;

pub use bbox::BBox;
pub use control::ControlCommand;
pub use perception::Detection;
pub use render::{ImageTensor, LabelSet};
pub use scene::VehicleState;
