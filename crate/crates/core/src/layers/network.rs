use crate::error::{Error, Result};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::Scalar;

use super::{AttnSublayer, BProjSublayer, FFSublayer, SepConvSublayer};

#[derive(Debug, Clone, PartialEq)]
pub enum Sublayer<S> {
    Attention(AttnSublayer<S>),
    FeedForward(FFSublayer<S>),
    BProj(BProjSublayer<S>),
    SepConv(SepConvSublayer<S>),
}

impl<S: Scalar> Sublayer<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            Sublayer::Attention(_) => "attention",
            Sublayer::FeedForward(_) => "feed_forward",
            Sublayer::BProj(_) => "bproj",
            Sublayer::SepConv(_) => "sepconv",
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Sublayer::Attention(l) => l.d(),
            Sublayer::FeedForward(l) => l.d(),
            Sublayer::BProj(l) => l.d(),
            Sublayer::SepConv(l) => l.d(),
        }
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        match self {
            Sublayer::Attention(l) => l.forward(x),
            Sublayer::FeedForward(l) => l.forward(x),
            Sublayer::BProj(l) => l.forward(x),
            Sublayer::SepConv(l) => l.forward(x),
        }
    }

    pub fn to_f64(&self) -> Sublayer<f64> {
        match self {
            Sublayer::Attention(l) => Sublayer::Attention(l.to_f64()),
            Sublayer::FeedForward(l) => Sublayer::FeedForward(l.to_f64()),
            Sublayer::BProj(l) => Sublayer::BProj(l.to_f64()),
            Sublayer::SepConv(l) => Sublayer::SepConv(l.to_f64()),
        }
    }
}

impl<S> From<AttnSublayer<S>> for Sublayer<S> {
    fn from(l: AttnSublayer<S>) -> Self {
        Sublayer::Attention(l)
    }
}

impl<S> From<FFSublayer<S>> for Sublayer<S> {
    fn from(l: FFSublayer<S>) -> Self {
        Sublayer::FeedForward(l)
    }
}

impl<S> From<BProjSublayer<S>> for Sublayer<S> {
    fn from(l: BProjSublayer<S>) -> Self {
        Sublayer::BProj(l)
    }
}

impl<S> From<SepConvSublayer<S>> for Sublayer<S> {
    fn from(l: SepConvSublayer<S>) -> Self {
        Sublayer::SepConv(l)
    }
}

/// Ordered stack of residual sublayers, optionally preceded by adding a
/// positional encoding `E` to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    d: usize,
    sublayers: Vec<Sublayer<S>>,
    positional_encoding: Option<Matrix<S>>,
}

impl<S: Scalar> Network<S> {
    pub fn new(d: usize, sublayers: Vec<Sublayer<S>>) -> Result<Self> {
        if let Some(bad) = sublayers.iter().find(|l| l.d() != d) {
            return Err(Error::Shape {
                context: "network sublayer width",
                expected: (d, 0),
                actual: (bad.d(), 0),
            });
        }
        Ok(Self {
            d,
            sublayers,
            positional_encoding: None,
        })
    }

    pub fn with_positional_encoding(mut self, e: Matrix<S>) -> Result<Self> {
        if e.rows() != self.d || e.cols() < 2 {
            return Err(Error::Shape {
                context: "positional encoding",
                expected: (self.d, e.cols()),
                actual: e.shape(),
            });
        }
        self.positional_encoding = Some(e);
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sublayers(&self) -> &[Sublayer<S>] {
        &self.sublayers
    }

    pub fn len(&self) -> usize {
        self.sublayers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sublayers.is_empty()
    }

    pub fn positional_encoding(&self) -> Option<&Matrix<S>> {
        self.positional_encoding.as_ref()
    }

    pub fn push(&mut self, layer: impl Into<Sublayer<S>>) -> Result<()> {
        let layer = layer.into();
        if layer.d() != self.d {
            return Err(Error::Shape {
                context: "network sublayer width",
                expected: (self.d, 0),
                actual: (layer.d(), 0),
            });
        }
        self.sublayers.push(layer);
        Ok(())
    }

    fn encode(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        match &self.positional_encoding {
            Some(e) => SeqMatrix::new(x.as_matrix().add(e)?),
            None => Ok(x.clone()),
        }
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        let mut z = self.encode(x)?;
        for layer in &self.sublayers {
            z = layer.forward(&z)?;
        }
        Ok(z)
    }

    /// The encoded input followed by the output of every sublayer.
    pub fn trace(&self, x: &SeqMatrix<S>) -> Result<Vec<SeqMatrix<S>>> {
        let mut states = Vec::with_capacity(self.sublayers.len() + 1);
        states.push(self.encode(x)?);
        for layer in &self.sublayers {
            let next = layer.forward(states.last().expect("non-empty"))?;
            states.push(next);
        }
        Ok(states)
    }

    pub fn to_f64(&self) -> Network<f64> {
        Network {
            d: self.d,
            sublayers: self.sublayers.iter().map(Sublayer::to_f64).collect(),
            positional_encoding: self.positional_encoding.as_ref().map(Matrix::to_f64),
        }
    }
}
