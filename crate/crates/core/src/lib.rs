//! Polar-coded modulation over ASK constellations: bit-permuted coded
//! modulation (BPCM) with per-symbol decode-order permutations, BICM,
//! SBP and PBP baselines, Gaussian-approximation density evolution and
//! Monte-Carlo AWGN link simulation.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precision.

// Guards like `!(x > 0.0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod constellation;
pub mod construction;
pub mod error;
pub mod mapping;
pub mod polar;
pub mod quadrature;
pub mod scalar;
pub mod sim;

pub use channel::{AwgnSpec, SnrConvention};
pub use constellation::{Constellation, Labeling};
pub use construction::ChannelProfile;
pub use error::{Error, Result};
pub use mapping::{BicmSystem, BitPermutationMap, BpcmSystem, Interleaver, SymbolLayout};
pub use polar::PolarCode;
pub use scalar::Real;
pub use sim::{LinkResult, Scheme, SimConfig};

pub type Constellation64 = Constellation<f64>;
pub type Constellation32 = Constellation<f32>;
pub type AwgnSpec64 = AwgnSpec<f64>;
pub type AwgnSpec32 = AwgnSpec<f32>;
pub type ChannelProfile64 = ChannelProfile<f64>;
pub type ChannelProfile32 = ChannelProfile<f32>;
pub type BpcmSystem64 = BpcmSystem<f64>;
pub type BpcmSystem32 = BpcmSystem<f32>;
pub type BicmSystem64 = BicmSystem<f64>;
pub type BicmSystem32 = BicmSystem<f32>;
