//! Residual sublayers and their composition into networks.

mod alternatives;
mod attention;
mod feedforward;
mod network;

pub use alternatives::{BProjSublayer, SepConvSublayer};
pub use attention::{AttentionHead, AttnSublayer, Normalizer};
pub use feedforward::{Activation, FFSublayer, Piece, PiecewiseLinear3};
pub use network::{Network, Sublayer};

use crate::error::Result;
use crate::matrix::SeqMatrix;
use crate::scalar::Scalar;

/// A sequence-to-sequence map `ℝ^{d×n} → ℝ^{d×n}`.
pub trait SeqMap<S: Scalar>: Sync {
    fn apply(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>>;
}

macro_rules! impl_seq_map {
    ($($ty:ident),*) => {$(
        impl<S: Scalar> SeqMap<S> for $ty<S> {
            fn apply(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
                self.forward(x)
            }
        }
    )*};
}

impl_seq_map!(AttnSublayer, FFSublayer, BProjSublayer, SepConvSublayer, Sublayer, Network);

impl<S: Scalar, F> SeqMap<S> for F
where
    F: Fn(&SeqMatrix<S>) -> Result<SeqMatrix<S>> + Sync,
{
    fn apply(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        self(x)
    }
}
