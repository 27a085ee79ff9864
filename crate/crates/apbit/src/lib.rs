//! Arbitrary-precision integer matrix multiply and convolution built from
//! 1-bit primitives.
//!
//! Everything reduces to one compute quantum: an 8x8x128 binary
//! matrix-multiply-accumulate (bitwise AND/XOR plus population count into
//! 32-bit accumulators). A p-bit by q-bit product is decomposed into
//! `p * q` 1-bit plane products, executed as one virtually batched,
//! cache-blocked binary GEMM, and reassembled with `2^(s+t)` weights.
//! On top of that sit:
//!
//! * [`bitplane`] - packed bit-plane tensors, decomposition/combination,
//!   and the `.bpt` file format ([`bpt`])
//! * [`bmma`] - the tile primitive and the encoding-adaptive dot rules
//! * [`apmm`] - tiled matrix multiplication with a staging-traffic model
//!   and fused element-wise epilogues
//! * [`apconv`] - channel-major 2-D convolution with input-aware padding
//! * [`tuner`] - the TLP/CI analytic model, tile auto-tuner, and the
//!   emulate-vs-native precision switch
//! * [`apnn`] - layer-graph execution with packed interlayer activations
//!   and fused quantize/BN/ReLU/pool epilogues
//! * [`reference`] - scalar integer oracles everything is checked against

pub mod apconv;
pub mod apmm;
pub mod apnn;
pub mod bitplane;
pub mod bmma;
pub mod bpt;
pub mod counters;
pub mod error;
pub mod reference;
pub mod tuner;

pub use error::{Error, Result};
