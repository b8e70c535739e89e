use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{hardmax_columns, softmax_columns, Matrix, SeqMatrix};
use crate::scalar::{Mode, Scalar};

/// Column normalizer applied to the attention score matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Normalizer {
    Hardmax,
    Softmax { lambda: f64 },
    /// Ignores the scores and mixes all tokens uniformly.
    Average,
}

/// One attention head: `W_O (d×m)`, `W_V, W_K, W_Q (m×d)` and a query bias of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead<S> {
    pub w_o: Matrix<S>,
    pub w_v: Matrix<S>,
    pub w_k: Matrix<S>,
    pub w_q: Matrix<S>,
    pub b_q: Vec<S>,
}

impl<S: Scalar> AttentionHead<S> {
    pub fn new(
        w_o: Matrix<S>,
        w_v: Matrix<S>,
        w_k: Matrix<S>,
        w_q: Matrix<S>,
        b_q: Vec<S>,
    ) -> Result<Self> {
        let (d, m) = w_o.shape();
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter("head size must be at least 1".into()));
        }
        for (name, w) in [("W_V", &w_v), ("W_K", &w_k), ("W_Q", &w_q)] {
            if w.shape() != (m, d) {
                return Err(Error::Shape {
                    context: name,
                    expected: (m, d),
                    actual: w.shape(),
                });
            }
        }
        if b_q.len() != m {
            return Err(Error::Shape {
                context: "b_Q",
                expected: (m, 1),
                actual: (b_q.len(), 1),
            });
        }
        Ok(Self {
            w_o,
            w_v,
            w_k,
            w_q,
            b_q,
        })
    }

    pub fn d(&self) -> usize {
        self.w_o.rows()
    }

    pub fn m(&self) -> usize {
        self.w_o.cols()
    }

    /// Score matrix `(W_K X)ᵀ (W_Q X − b_Q 1ᵀ)`; column `j` holds the scores of query `j`.
    pub fn scores(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let keys = self.w_k.matmul(x)?;
        let neg_bias: Vec<S> = self.b_q.iter().map(|b| -b.clone()).collect();
        let queries = self.w_q.matmul(x)?.add_column_broadcast(&neg_bias)?;
        keys.transpose().matmul(&queries)
    }

    /// `W_O W_V X · N[scores]`, the head's contribution before the residual.
    pub fn contribution(&self, x: &Matrix<S>, normalizer: Normalizer) -> Result<Matrix<S>> {
        let n = x.cols();
        let weights = match normalizer {
            Normalizer::Hardmax => hardmax_columns(&self.scores(x)?),
            Normalizer::Softmax { lambda } => {
                if S::MODE == Mode::Exact {
                    return Err(Error::Mode {
                        op: "softmax attention",
                        mode: Mode::Exact,
                    });
                }
                softmax_columns(&self.scores(x)?, lambda)?
            }
            Normalizer::Average => Matrix::filled(n, n, S::one() / S::from_i64(n as i64)),
        };
        self.w_o.matmul(&self.w_v.matmul(x)?)?.matmul(&weights)
    }

    pub fn to_f64(&self) -> AttentionHead<f64> {
        AttentionHead {
            w_o: self.w_o.to_f64(),
            w_v: self.w_v.to_f64(),
            w_k: self.w_k.to_f64(),
            w_q: self.w_q.to_f64(),
            b_q: self.b_q.iter().map(S::to_f64).collect(),
        }
    }
}

/// Residual multi-head attention sublayer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnSublayer<S> {
    pub heads: Vec<AttentionHead<S>>,
    pub normalizer: Normalizer,
}

impl<S: Scalar> AttnSublayer<S> {
    pub fn new(heads: Vec<AttentionHead<S>>, normalizer: Normalizer) -> Result<Self> {
        let Some(first) = heads.first() else {
            return Err(Error::InvalidParameter("attention needs at least one head".into()));
        };
        let d = first.d();
        if let Some(h) = heads.iter().find(|h| h.d() != d) {
            return Err(Error::Shape {
                context: "attention heads",
                expected: (d, h.m()),
                actual: (h.d(), h.m()),
            });
        }
        Ok(Self { heads, normalizer })
    }

    pub fn d(&self) -> usize {
        self.heads[0].d()
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        if x.d() != self.d() {
            return Err(Error::Shape {
                context: "attention input",
                expected: (self.d(), x.n()),
                actual: x.shape(),
            });
        }
        let mut out = x.as_matrix().clone();
        for head in &self.heads {
            out = out.add(&head.contribution(x, self.normalizer)?)?;
        }
        SeqMatrix::new(out)
    }

    pub fn to_f64(&self) -> AttnSublayer<f64> {
        AttnSublayer {
            heads: self.heads.iter().map(AttentionHead::to_f64).collect(),
            normalizer: self.normalizer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat, Rational};

    fn zero_head(d: usize, m: usize) -> AttentionHead<Rational> {
        AttentionHead::new(
            Matrix::zeros(d, m),
            Matrix::zeros(m, d),
            Matrix::zeros(m, d),
            Matrix::zeros(m, d),
            vec![int(0); m],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_identity() {
        let layer = AttnSublayer::new(vec![zero_head(2, 3)], Normalizer::Hardmax).unwrap();
        let x = SeqMatrix::from_rows(vec![vec![int(1), int(2)], vec![rat(1, 3), int(-4)]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_output_projection_ignores_scores() {
        let mut head = zero_head(1, 1);
        head.w_k = Matrix::from_rows(vec![vec![int(5)]]).unwrap();
        head.w_q = Matrix::from_rows(vec![vec![int(7)]]).unwrap();
        head.w_v = Matrix::from_rows(vec![vec![int(1)]]).unwrap();
        let layer = AttnSublayer::new(vec![head], Normalizer::Hardmax).unwrap();
        let x = SeqMatrix::from_rows(vec![vec![int(3), int(-1)]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn single_shift_head_on_two_tokens() {
        // ψ(Z; 1/4) with u = (1): column 1 has id 0 < b so it reads the min (0);
        // column 2 has id 1/2 > b so it reads the max (1/2).
        let u = Matrix::from_rows(vec![vec![int(1)]]).unwrap();
        let head = AttentionHead::new(u.clone(), u.clone(), u.clone(), u, vec![rat(1, 4)]).unwrap();
        let layer = AttnSublayer::new(vec![head], Normalizer::Hardmax).unwrap();
        let z = SeqMatrix::from_rows(vec![vec![int(0), rat(1, 2)]]).unwrap();
        let out = layer.forward(&z).unwrap();
        assert_eq!(out.row(0), vec![int(0), int(1)]);
    }

    #[test]
    fn softmax_in_exact_mode_is_rejected() {
        let layer = AttnSublayer::new(vec![zero_head(1, 1)], Normalizer::Softmax { lambda: 1.0 })
            .unwrap();
        let x = SeqMatrix::from_rows(vec![vec![int(0), int(1)]]).unwrap();
        assert!(matches!(layer.forward(&x), Err(Error::Mode { .. })));
    }

    #[test]
    fn average_attention_mixes_uniformly() {
        let one = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        let head = AttentionHead::new(one.clone(), one.clone(), one.clone(), one, vec![0.0]).unwrap();
        let layer = AttnSublayer::new(vec![head], Normalizer::Average).unwrap();
        let x = SeqMatrix::from_rows(vec![vec![1.0, 3.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().row(0), vec![3.0, 5.0]);
    }

    #[test]
    fn head_shape_validation() {
        let bad = AttentionHead::new(
            Matrix::<Rational>::zeros(2, 1),
            Matrix::zeros(1, 3),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 2),
            vec![int(0)],
        );
        assert!(matches!(bad, Err(Error::Shape { .. })));
        assert!(AttnSublayer::<Rational>::new(vec![], Normalizer::Hardmax).is_err());
    }
}
