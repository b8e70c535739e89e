//! Attention substitutes with input-independent token mixing.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::Scalar;

/// `X + W_O X W_P` with `W_O: d×d` and a sequence-length dependent `W_P: n×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BProjSublayer<S> {
    pub w_o: Matrix<S>,
    pub w_p: Matrix<S>,
}

impl<S: Scalar> BProjSublayer<S> {
    pub fn new(w_o: Matrix<S>, w_p: Matrix<S>) -> Result<Self> {
        if w_o.rows() != w_o.cols() || w_p.rows() != w_p.cols() {
            return Err(Error::InvalidParameter(
                "BProj weights must be square".into(),
            ));
        }
        Ok(Self { w_o, w_p })
    }

    pub fn d(&self) -> usize {
        self.w_o.rows()
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        if x.shape() != (self.w_o.rows(), self.w_p.rows()) {
            return Err(Error::Shape {
                context: "BProj input",
                expected: (self.w_o.rows(), self.w_p.rows()),
                actual: x.shape(),
            });
        }
        let mixed = self.w_o.matmul(x)?.matmul(&self.w_p)?;
        SeqMatrix::new(x.as_matrix().add(&mixed)?)
    }

    pub fn to_f64(&self) -> BProjSublayer<f64> {
        BProjSublayer {
            w_o: self.w_o.to_f64(),
            w_p: self.w_p.to_f64(),
        }
    }
}

/// Depth-wise separable convolution `X + W_O (X ∗ W_C)`; row `i` of `X` is
/// convolved with row `i` of the `d×k` filter bank `W_C`.
///
/// Boundaries are zero-padded and the output is centred so it keeps length `n`:
/// `(x ∗ w)[t] = Σ_s w[s] · x[t + ⌊(k−1)/2⌋ − s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SepConvSublayer<S> {
    pub w_o: Matrix<S>,
    pub w_c: Matrix<S>,
}

impl<S: Scalar> SepConvSublayer<S> {
    pub fn new(w_o: Matrix<S>, w_c: Matrix<S>) -> Result<Self> {
        if w_o.rows() != w_o.cols() || w_c.rows() != w_o.rows() {
            return Err(Error::Shape {
                context: "SepConv weights",
                expected: (w_o.rows(), w_c.cols()),
                actual: w_c.shape(),
            });
        }
        if w_c.cols() == 0 {
            return Err(Error::InvalidParameter("filter length must be at least 1".into()));
        }
        Ok(Self { w_o, w_c })
    }

    pub fn d(&self) -> usize {
        self.w_o.rows()
    }

    pub fn filter_len(&self) -> usize {
        self.w_c.cols()
    }

    pub fn convolve(&self, x: &Matrix<S>) -> Matrix<S> {
        let k = self.filter_len();
        let n = x.cols() as isize;
        let pad = ((k - 1) / 2) as isize;
        Matrix::from_fn(x.rows(), x.cols(), |i, t| {
            let mut acc = S::zero();
            for s in 0..k {
                let src = t as isize + pad - s as isize;
                if (0..n).contains(&src) {
                    acc = acc + self.w_c[(i, s)].clone() * x[(i, src as usize)].clone();
                }
            }
            acc
        })
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        if x.d() != self.d() {
            return Err(Error::Shape {
                context: "SepConv input",
                expected: (self.d(), x.n()),
                actual: x.shape(),
            });
        }
        if self.filter_len() > x.n() {
            return Err(Error::InvalidParameter(format!(
                "filter length {} exceeds sequence length {}",
                self.filter_len(),
                x.n()
            )));
        }
        let mixed = self.w_o.matmul(&self.convolve(x))?;
        SeqMatrix::new(x.as_matrix().add(&mixed)?)
    }

    pub fn to_f64(&self) -> SepConvSublayer<f64> {
        SepConvSublayer {
            w_o: self.w_o.to_f64(),
            w_c: self.w_c.to_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, Rational};

    fn x() -> SeqMatrix<Rational> {
        SeqMatrix::from_rows(vec![vec![int(1), int(2), int(3)], vec![int(-1), int(0), int(5)]])
            .unwrap()
    }

    #[test]
    fn bproj_zero_output_projection_is_identity() {
        let layer = BProjSublayer::new(
            Matrix::zeros(2, 2),
            Matrix::from_fn(3, 3, |i, j| int((i * 3 + j) as i64)),
        )
        .unwrap();
        assert_eq!(layer.forward(&x()).unwrap(), x());
    }

    #[test]
    fn sepconv_length_one_all_ones_doubles() {
        let layer = SepConvSublayer::new(Matrix::identity(2), Matrix::filled(2, 1, int(1))).unwrap();
        let out = layer.forward(&x()).unwrap();
        assert_eq!(*out.as_matrix(), x().scale(&int(2)));
    }

    #[test]
    fn sepconv_centred_three_tap_interior() {
        // interior column only: zero padding affects the borders
        let w_c = Matrix::from_rows(vec![vec![int(1), int(10), int(100)]; 2]).unwrap();
        let layer = SepConvSublayer::new(Matrix::identity(2), w_c).unwrap();
        let conv = layer.convolve(&x());
        // t = 1: w0·x[2] + w1·x[1] + w2·x[0]
        assert_eq!(conv[(0, 1)], int(3 + 20 + 100));
        assert_eq!(conv[(1, 1)], int(5 - 100));
    }

    #[test]
    fn sepconv_filter_longer_than_sequence_is_rejected() {
        let layer = SepConvSublayer::new(Matrix::identity(2), Matrix::filled(2, 4, int(1))).unwrap();
        assert!(layer.forward(&x()).is_err());
    }
}
