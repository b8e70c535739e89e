//! Turning a modified network (hardmax, piecewise-linear activations) into an
//! ordinary one (softmax, ReLU).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{
    Activation, AttnSublayer, FFSublayer, Network, Normalizer, Piece, PiecewiseLinear3, Sublayer,
};
use crate::matrix::Matrix;
use crate::scalar::{format_rational, int, parse_rational, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionParams {
    pub lambda: f64,
    #[serde(serialize_with = "ser_rational")]
    pub epsilon: Rational,
}

fn ser_rational<Ser: serde::Serializer>(v: &Rational, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
    s.serialize_str(&format_rational(v))
}

impl ConversionParams {
    pub fn new(lambda: f64, epsilon: Rational) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if epsilon <= int(0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                format_rational(&epsilon)
            )));
        }
        Ok(Self { lambda, epsilon })
    }

    /// Parses `epsilon` exactly from text such as `"1e-4"` or `"1/1000"`.
    pub fn parse(lambda: f64, epsilon: &str) -> Result<Self> {
        Self::new(lambda, parse_rational(epsilon)?)
    }

    /// The paired schedule `λ = 10^k`, `ε = 10^{−k}` for `k = 1..=4`.
    pub fn default_schedule() -> Vec<Self> {
        (1..=4)
            .map(|k| {
                let lambda = 10f64.powi(k);
                let epsilon = Rational::new(1.into(), num_traits::pow(num_bigint::BigInt::from(10), k as usize));
                Self::new(lambda, epsilon).expect("positive")
            })
            .collect()
    }
}

/// `φ̃(t) = constant + Σ_k weights[k] · ReLU(signs[k] · (t − knots[k]))`.
///
/// `units` holds the same terms rescaled by `ε`: unit `k` is
/// `out · ReLU(scale · t + bias)` with `scale = signs[k]/ε`,
/// `bias = −signs[k]·knots[k]/ε` and `out = weights[k]·ε`. Evaluation goes through
/// the rescaled form, which keeps the large `1/ε` terms cancelling exactly in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluExpansion<S> {
    pub knots: [S; 4],
    pub signs: [i8; 4],
    pub weights: [S; 4],
    pub constant: S,
    pub units: [ReluUnit<S>; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReluUnit<S> {
    pub scale: S,
    pub bias: S,
    pub out: S,
}

impl<S: Scalar> ReluExpansion<S> {
    pub fn eval(&self, t: &S) -> S {
        let mut acc = self.constant.clone();
        for unit in &self.units {
            let x = unit.scale.clone() * t.clone() + unit.bias.clone();
            if x > S::zero() {
                acc = acc + unit.out.clone() * x;
            }
        }
        acc
    }
}

impl ReluExpansion<Rational> {
    pub fn to_f64(&self) -> ReluExpansion<f64> {
        let f = |v: &Rational| Scalar::to_f64(v);
        ReluExpansion {
            knots: self.knots.clone().map(|v| f(&v)),
            signs: self.signs,
            weights: self.weights.clone().map(|v| f(&v)),
            constant: f(&self.constant),
            units: self.units.clone().map(|u| ReluUnit {
                scale: f(&u.scale),
                bias: f(&u.bias),
                out: f(&u.out),
            }),
        }
    }
}

/// Four-ReLU surrogate of `φ`: equal to `φ` outside `(c1−ε, c1) ∪ (c2−ε, c2)` and
/// linear inside those bands.
///
/// The knots are `c1−ε, c1, c2−ε, c2`. Knots to the right of a constant piece
/// use `ReLU(t − κ)`, knots to its left use `ReLU(κ − t)`, so no unit is active
/// on that piece. The first constant piece is preferred, then the last, then the middle.
pub fn relu4_of_phi(phi: &PiecewiseLinear3<Rational>, epsilon: &Rational) -> Result<ReluExpansion<Rational>> {
    let (c1, c2) = (phi.c1().clone(), phi.c2().clone());
    if *epsilon <= int(0) || epsilon * int(2) >= &c2 - &c1 {
        return Err(Error::InvalidParameter(format!(
            "epsilon {} must be positive and below half the breakpoint gap {}",
            format_rational(epsilon),
            format_rational(&(&c2 - &c1))
        )));
    }
    let [p0, p1, p2] = phi.pieces().clone();
    let m1 = (p1.eval(&c1) - p0.eval(&(&c1 - epsilon))) / epsilon;
    let m2 = (p2.eval(&c2) - p1.eval(&(&c2 - epsilon))) / epsilon;
    let slopes = [p0.slope.clone(), m1, p1.slope.clone(), m2, p2.slope.clone()];
    let knots = [&c1 - epsilon, c1.clone(), &c2 - epsilon, c2.clone()];

    let (region, constant) = [(0usize, &p0), (4, &p2), (2, &p1)]
        .into_iter()
        .find(|(_, p)| p.is_constant())
        .map(|(r, p)| (r, p.intercept.clone()))
        .ok_or_else(|| Error::InvalidActivation("no constant piece".into()))?;

    let mut signs = [1i8; 4];
    let mut weights: [Rational; 4] = Default::default();
    for k in 0..4 {
        weights[k] = &slopes[k + 1] - &slopes[k];
        if k < region {
            signs[k] = -1;
        }
    }
    let units = std::array::from_fn(|k| {
        let scale = int(signs[k] as i64) / epsilon;
        ReluUnit {
            bias: -(&scale * &knots[k]),
            scale,
            out: &weights[k] * epsilon,
        }
    });
    Ok(ReluExpansion {
        knots,
        signs,
        weights,
        constant,
        units,
    })
}

/// Replaces a width-`r` `Φ` layer by a width-`4r` ReLU layer computing `φ̃` in each
/// unit, using the rescaled units of [`ReluExpansion`].
pub fn relu4_feedforward(layer: &FFSublayer<Rational>, epsilon: &Rational) -> Result<FFSublayer<f64>> {
    let phi = match &layer.activation {
        Activation::Phi(phi) => phi,
        Activation::Relu => return Ok(layer.to_f64()),
    };
    let expansion = relu4_of_phi(phi, epsilon)?;
    let (r, d) = layer.w1.shape();
    let mut w1 = Matrix::zeros(4 * r, d);
    let mut b1 = vec![int(0); 4 * r];
    let mut w2 = Matrix::zeros(d, 4 * r);
    let mut b2 = layer.b2.clone();
    for unit in 0..r {
        for k in 0..4 {
            let row = 4 * unit + k;
            let u = &expansion.units[k];
            for col in 0..d {
                w1[(row, col)] = &u.scale * &layer.w1[(unit, col)];
                w2[(col, row)] = &layer.w2[(col, unit)] * &u.out;
            }
            b1[row] = &u.scale * &layer.b1[unit] + &u.bias;
        }
        for (col, b) in b2.iter_mut().enumerate() {
            *b = &*b + &layer.w2[(col, unit)] * &expansion.constant;
        }
    }
    let exact = FFSublayer::new(w1, b1, w2, b2, Activation::Relu)?;
    Ok(exact.to_f64())
}

fn anneal_attention(layer: &AttnSublayer<Rational>, lambda: f64) -> Result<AttnSublayer<f64>> {
    match layer.normalizer {
        Normalizer::Hardmax => {
            let mut out = layer.to_f64();
            out.normalizer = Normalizer::Softmax { lambda };
            Ok(out)
        }
        Normalizer::Softmax { .. } => Err(Error::UnsupportedSublayer("softmax attention")),
        Normalizer::Average => Err(Error::UnsupportedSublayer("average attention")),
    }
}

/// Hardmax becomes softmax with temperature `λ`; every `Φ` activation becomes four ReLUs.
pub fn anneal_network(modified: &Network<Rational>, params: &ConversionParams) -> Result<Network<f64>> {
    let mut sublayers = Vec::with_capacity(modified.len());
    for layer in modified.sublayers() {
        sublayers.push(match layer {
            Sublayer::Attention(a) => Sublayer::Attention(anneal_attention(a, params.lambda)?),
            Sublayer::FeedForward(f) => Sublayer::FeedForward(relu4_feedforward(f, &params.epsilon)?),
            Sublayer::BProj(_) => return Err(Error::UnsupportedSublayer("bproj")),
            Sublayer::SepConv(_) => return Err(Error::UnsupportedSublayer("sepconv")),
        });
    }
    let net = Network::new(modified.d(), sublayers)?;
    match modified.positional_encoding() {
        Some(e) => net.with_positional_encoding(e.to_f64()),
        None => Ok(net),
    }
}

/// Constant-valued `φ` usable as a trivial example.
pub fn constant_phi(value: Rational) -> PiecewiseLinear3<Rational> {
    PiecewiseLinear3::new(
        int(0),
        int(1),
        [Piece::constant(value.clone()), Piece::constant(value.clone()), Piece::constant(value)],
    )
    .expect("constant")
}
