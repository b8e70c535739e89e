//! The guide under `book/` is plain mdbook, which cannot link against this
//! workspace. Each chapter is pulled in here as module docs so that
//! `cargo test --doc` runs its listings.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/exact-arithmetic.md")]
pub mod exact_arithmetic {}
#[doc = include_str!("../../../book/src/sublayers.md")]
pub mod sublayers {}
#[doc = include_str!("../../../book/src/quantization.md")]
pub mod quantization {}
#[doc = include_str!("../../../book/src/contextual-mapping.md")]
pub mod contextual_mapping {}
#[doc = include_str!("../../../book/src/value-mapping.md")]
pub mod value_mapping {}
#[doc = include_str!("../../../book/src/annealing.md")]
pub mod annealing {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
