//! Link-level simulation of ambient backscatter communication with a
//! multi-antenna Tag and a multi-antenna Reader.
//!
//! The Tag reflects an unknown ambient signal; the Reader averages received
//! power over `N` ambient symbols per Tag symbol. [`phy`] produces those
//! averages, [`model`] holds the fading and the linearized effective
//! channel, [`codec`] the real orthogonal space-time block codes and their
//! differential variant, [`detect`] the four detectors, [`analysis`] the
//! closed-form BERs, and [`harness`] runs seeded, parallel BER sweeps.

pub mod analysis;
pub mod codec;
pub mod detect;
pub mod error;
pub mod harness;
pub mod model;
pub mod phy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
