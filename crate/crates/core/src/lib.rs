//! Stability and synchronization of networks of identical linear subsystems.
//!
//! Subsystems may be finite-dimensional state-space models ([`lti`]),
//! 1-D parabolic equations discretized in space ([`parabolic`]) or delay
//! differential equations ([`delay`]). Each verdict is computed from the
//! spectrum of the coupling matrix and can be cross-checked by simulating
//! the coupled network ([`netsim`]).

pub mod error;
pub mod linalg;
pub mod lti;
pub mod parabolic;
pub mod delay;
pub mod netsim;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
