use crate::error::{Error, Result};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::Scalar;

/// Affine piece `slope·t + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece<S> {
    pub slope: S,
    pub intercept: S,
}

impl<S: Scalar> Piece<S> {
    pub fn new(slope: S, intercept: S) -> Self {
        Self { slope, intercept }
    }

    pub fn constant(value: S) -> Self {
        Self::new(S::zero(), value)
    }

    pub fn eval(&self, t: &S) -> S {
        self.slope.clone() * t.clone() + self.intercept.clone()
    }

    pub fn is_constant(&self) -> bool {
        self.slope.is_zero()
    }

    pub fn to_f64(&self) -> Piece<f64> {
        Piece::new(self.slope.to_f64(), self.intercept.to_f64())
    }
}

/// Piecewise-linear activation with at most three pieces, one of them constant:
/// `pieces[0]` on `t < c1`, `pieces[1]` on `c1 ≤ t < c2`, `pieces[2]` on `t ≥ c2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear3<S> {
    c1: S,
    c2: S,
    pieces: [Piece<S>; 3],
}

impl<S: Scalar> PiecewiseLinear3<S> {
    pub fn new(c1: S, c2: S, pieces: [Piece<S>; 3]) -> Result<Self> {
        if c1 > c2 {
            return Err(Error::InvalidActivation(format!(
                "breakpoints out of order: {c1:?} > {c2:?}"
            )));
        }
        let middle_present = c1 < c2;
        let has_constant = pieces[0].is_constant()
            || pieces[2].is_constant()
            || (middle_present && pieces[1].is_constant());
        if !has_constant {
            return Err(Error::InvalidActivation(
                "at least one piece must be constant".into(),
            ));
        }
        Ok(Self { c1, c2, pieces })
    }

    /// Indicator of the half-open interval `[lo, hi)`, scaled by `value`.
    pub fn window(lo: S, hi: S, value: S) -> Result<Self> {
        Self::new(
            lo,
            hi,
            [
                Piece::constant(S::zero()),
                Piece::constant(value),
                Piece::constant(S::zero()),
            ],
        )
    }

    pub fn c1(&self) -> &S {
        &self.c1
    }

    pub fn c2(&self) -> &S {
        &self.c2
    }

    pub fn pieces(&self) -> &[Piece<S>; 3] {
        &self.pieces
    }

    pub fn eval(&self, t: &S) -> S {
        if *t < self.c1 {
            self.pieces[0].eval(t)
        } else if *t < self.c2 {
            self.pieces[1].eval(t)
        } else {
            self.pieces[2].eval(t)
        }
    }

    pub fn to_f64(&self) -> PiecewiseLinear3<f64> {
        PiecewiseLinear3 {
            c1: self.c1.to_f64(),
            c2: self.c2.to_f64(),
            pieces: [
                self.pieces[0].to_f64(),
                self.pieces[1].to_f64(),
                self.pieces[2].to_f64(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activation<S> {
    Relu,
    Phi(PiecewiseLinear3<S>),
}

impl<S: Scalar> Activation<S> {
    pub fn eval(&self, t: &S) -> S {
        match self {
            Activation::Relu => {
                if *t > S::zero() {
                    t.clone()
                } else {
                    S::zero()
                }
            }
            Activation::Phi(phi) => phi.eval(t),
        }
    }
}

/// Token-wise residual feed-forward sublayer `X + W2·act(W1 X + b1 1ᵀ) + b2 1ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FFSublayer<S> {
    pub w1: Matrix<S>,
    pub b1: Vec<S>,
    pub w2: Matrix<S>,
    pub b2: Vec<S>,
    pub activation: Activation<S>,
}

impl<S: Scalar> FFSublayer<S> {
    pub fn new(
        w1: Matrix<S>,
        b1: Vec<S>,
        w2: Matrix<S>,
        b2: Vec<S>,
        activation: Activation<S>,
    ) -> Result<Self> {
        let (r, d) = w1.shape();
        if r == 0 {
            return Err(Error::InvalidParameter("hidden width must be at least 1".into()));
        }
        if b1.len() != r {
            return Err(Error::Shape {
                context: "b1",
                expected: (r, 1),
                actual: (b1.len(), 1),
            });
        }
        if w2.shape() != (d, r) {
            return Err(Error::Shape {
                context: "W2",
                expected: (d, r),
                actual: w2.shape(),
            });
        }
        if b2.len() != d {
            return Err(Error::Shape {
                context: "b2",
                expected: (d, 1),
                actual: (b2.len(), 1),
            });
        }
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            activation,
        })
    }

    /// Width-one update `Z ↦ Z + direction · φ(readoutᵀ Z + offset)`.
    pub fn token_update(
        direction: Vec<S>,
        readout: Vec<S>,
        offset: S,
        phi: PiecewiseLinear3<S>,
    ) -> Result<Self> {
        let d = readout.len();
        Self::new(
            Matrix::row_vector(readout),
            vec![offset],
            Matrix::column_vector(direction),
            vec![S::zero(); d],
            Activation::Phi(phi),
        )
    }

    pub fn d(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn forward(&self, x: &SeqMatrix<S>) -> Result<SeqMatrix<S>> {
        if x.d() != self.d() {
            return Err(Error::Shape {
                context: "feed-forward input",
                expected: (self.d(), x.n()),
                actual: x.shape(),
            });
        }
        let pre = self.w1.matmul(x)?.add_column_broadcast(&self.b1)?;
        let act = pre.map(|t| self.activation.eval(t));
        let out = x
            .as_matrix()
            .add(&self.w2.matmul(&act)?)?
            .add_column_broadcast(&self.b2)?;
        SeqMatrix::new(out)
    }

    pub fn to_f64(&self) -> FFSublayer<f64> {
        FFSublayer {
            w1: self.w1.to_f64(),
            b1: self.b1.iter().map(S::to_f64).collect(),
            w2: self.w2.to_f64(),
            b2: self.b2.iter().map(S::to_f64).collect(),
            activation: match &self.activation {
                Activation::Relu => Activation::Relu,
                Activation::Phi(phi) => Activation::Phi(phi.to_f64()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat, Rational};

    fn quantizer_piece(step: Rational) -> PiecewiseLinear3<Rational> {
        PiecewiseLinear3::new(
            int(0),
            step,
            [
                Piece::constant(int(0)),
                Piece::new(int(-1), int(0)),
                Piece::constant(int(0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn activation_needs_a_constant_piece() {
        let p = |s| Piece::new(int(s), int(0));
        assert!(PiecewiseLinear3::new(int(0), int(1), [p(1), p(2), p(3)]).is_err());
        assert!(PiecewiseLinear3::new(int(0), int(1), [p(1), p(0), p(3)]).is_ok());
        // an empty middle piece cannot be the constant one
        assert!(PiecewiseLinear3::new(int(0), int(0), [p(1), p(0), p(3)]).is_err());
        assert!(PiecewiseLinear3::new(int(2), int(1), [p(0), p(0), p(0)]).is_err());
    }

    #[test]
    fn piecewise_evaluates_by_case() {
        let phi = PiecewiseLinear3::new(
            int(0),
            int(2),
            [
                Piece::constant(int(5)),
                Piece::new(int(1), int(0)),
                Piece::new(int(3), int(-1)),
            ],
        )
        .unwrap();
        assert_eq!(phi.eval(&int(-1)), int(5));
        assert_eq!(phi.eval(&int(0)), int(0));
        assert_eq!(phi.eval(&rat(3, 2)), rat(3, 2));
        assert_eq!(phi.eval(&int(2)), int(5));
    }

    #[test]
    fn zero_output_weights_give_identity() {
        let ff = FFSublayer::new(
            Matrix::from_rows(vec![vec![int(3), int(1)]]).unwrap(),
            vec![int(2)],
            Matrix::zeros(2, 1),
            vec![int(0), int(0)],
            Activation::Relu,
        )
        .unwrap();
        let x = SeqMatrix::from_rows(vec![vec![int(1), int(2)], vec![int(-3), rat(1, 7)]]).unwrap();
        assert_eq!(ff.forward(&x).unwrap(), x);
    }

    #[test]
    fn quantizer_layer_snaps_its_cell() {
        let layer = FFSublayer::token_update(
            vec![int(1)],
            vec![int(1)],
            -rat(1, 4),
            quantizer_piece(rat(1, 4)),
        )
        .unwrap();
        let x = SeqMatrix::from_rows(vec![vec![rat(3, 10), rat(7, 10)]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().row(0), vec![rat(1, 4), rat(7, 10)]);
    }

    #[test]
    fn identity_middle_piece_reproduces_shift() {
        // slope-1 middle piece: Z ↦ Z + (Z − 1) on [1, 3)
        let phi = PiecewiseLinear3::new(
            int(1),
            int(3),
            [
                Piece::constant(int(0)),
                Piece::new(int(1), int(0)),
                Piece::constant(int(0)),
            ],
        )
        .unwrap();
        let layer = FFSublayer::token_update(vec![int(1)], vec![int(1)], int(-1), phi).unwrap();
        let x = SeqMatrix::from_rows(vec![vec![int(2), rat(5, 2)]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().row(0), vec![int(3), int(4)]);
    }

    #[test]
    fn shape_checks() {
        assert!(FFSublayer::new(
            Matrix::<Rational>::zeros(1, 2),
            vec![int(0)],
            Matrix::zeros(1, 1),
            vec![int(0), int(0)],
            Activation::Relu,
        )
        .is_err());
    }
}
