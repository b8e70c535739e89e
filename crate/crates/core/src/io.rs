//! JSON documents for scalars, matrices and networks.
//!
//! Exact scalars are written as `{"num": "k", "base_delta": "1/m"}` meaning
//! `k/m` in lowest terms; float scalars are plain JSON numbers. Readers also
//! accept strings such as `"3/8"` or `"-0.25"` and plain numbers in either mode.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    Activation, AttentionHead, AttnSublayer, BProjSublayer, FFSublayer, Network, Normalizer,
    Piece, PiecewiseLinear3, SepConvSublayer, Sublayer,
};
use crate::matrix::Matrix;
use crate::scalar::{parse_rational, Mode, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarDoc {
    Exact { num: String, base_delta: String },
    Number(serde_json::Number),
    Text(String),
}

/// Scalars that can be written to and read from a [`ScalarDoc`].
pub trait DocScalar: Scalar {
    fn to_doc(&self) -> Result<ScalarDoc>;
    fn from_doc(doc: &ScalarDoc) -> Result<Self>;
}

fn exact_from_doc(doc: &ScalarDoc) -> Result<Rational> {
    match doc {
        ScalarDoc::Exact { num, base_delta } => {
            let num: BigInt = num
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad numerator {num:?}")))?;
            Ok(Rational::from_integer(num) * parse_rational(base_delta)?)
        }
        ScalarDoc::Number(v) => parse_rational(&v.to_string()),
        ScalarDoc::Text(s) => parse_rational(s),
    }
}

impl DocScalar for Rational {
    fn to_doc(&self) -> Result<ScalarDoc> {
        Ok(ScalarDoc::Exact {
            num: self.numer().to_string(),
            base_delta: format!("1/{}", self.denom()),
        })
    }

    fn from_doc(doc: &ScalarDoc) -> Result<Self> {
        exact_from_doc(doc)
    }
}

impl DocScalar for f64 {
    fn to_doc(&self) -> Result<ScalarDoc> {
        serde_json::Number::from_f64(*self)
            .map(ScalarDoc::Number)
            .ok_or(Error::NonFinite)
    }

    fn from_doc(doc: &ScalarDoc) -> Result<Self> {
        let v = match doc {
            ScalarDoc::Number(v) => v.as_f64().ok_or(Error::NonFinite)?,
            ScalarDoc::Text(s) => match s.trim().parse::<f64>() {
                Ok(v) => v,
                Err(_) => Scalar::to_f64(&parse_rational(s)?),
            },
            exact => Scalar::to_f64(&exact_from_doc(exact)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite)
        }
    }
}

pub type MatrixDoc = Vec<Vec<ScalarDoc>>;

pub fn matrix_to_doc<S: DocScalar>(m: &Matrix<S>) -> Result<MatrixDoc> {
    m.to_rows()
        .iter()
        .map(|row| row.iter().map(DocScalar::to_doc).collect())
        .collect()
}

pub fn matrix_from_doc<S: DocScalar>(doc: &MatrixDoc) -> Result<Matrix<S>> {
    let rows: Vec<Vec<S>> = doc
        .iter()
        .map(|row| row.iter().map(S::from_doc).collect())
        .collect::<Result<_>>()?;
    Matrix::from_rows(rows)
}

fn vec_to_doc<S: DocScalar>(v: &[S]) -> Result<Vec<ScalarDoc>> {
    v.iter().map(DocScalar::to_doc).collect()
}

fn vec_from_doc<S: DocScalar>(v: &[ScalarDoc]) -> Result<Vec<S>> {
    v.iter().map(S::from_doc).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadDoc {
    pub w_o: MatrixDoc,
    pub w_v: MatrixDoc,
    pub w_k: MatrixDoc,
    pub w_q: MatrixDoc,
    pub b_q: Vec<ScalarDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceDoc {
    pub slope: ScalarDoc,
    pub intercept: ScalarDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ActivationDoc {
    Relu,
    Phi {
        c1: ScalarDoc,
        c2: ScalarDoc,
        pieces: Vec<PieceDoc>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SublayerDoc {
    Attention {
        normalizer: Normalizer,
        heads: Vec<HeadDoc>,
    },
    FeedForward {
        w1: MatrixDoc,
        b1: Vec<ScalarDoc>,
        w2: MatrixDoc,
        b2: Vec<ScalarDoc>,
        activation: ActivationDoc,
    },
    Bproj {
        w_o: MatrixDoc,
        w_p: MatrixDoc,
    },
    Sepconv {
        w_o: MatrixDoc,
        w_c: MatrixDoc,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub mode: Mode,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positional_encoding: Option<MatrixDoc>,
    pub sublayers: Vec<SublayerDoc>,
}

fn sublayer_to_doc<S: DocScalar>(layer: &Sublayer<S>) -> Result<SublayerDoc> {
    Ok(match layer {
        Sublayer::Attention(a) => SublayerDoc::Attention {
            normalizer: a.normalizer,
            heads: a
                .heads
                .iter()
                .map(|h| {
                    Ok(HeadDoc {
                        w_o: matrix_to_doc(&h.w_o)?,
                        w_v: matrix_to_doc(&h.w_v)?,
                        w_k: matrix_to_doc(&h.w_k)?,
                        w_q: matrix_to_doc(&h.w_q)?,
                        b_q: vec_to_doc(&h.b_q)?,
                    })
                })
                .collect::<Result<_>>()?,
        },
        Sublayer::FeedForward(f) => SublayerDoc::FeedForward {
            w1: matrix_to_doc(&f.w1)?,
            b1: vec_to_doc(&f.b1)?,
            w2: matrix_to_doc(&f.w2)?,
            b2: vec_to_doc(&f.b2)?,
            activation: match &f.activation {
                Activation::Relu => ActivationDoc::Relu,
                Activation::Phi(phi) => ActivationDoc::Phi {
                    c1: phi.c1().to_doc()?,
                    c2: phi.c2().to_doc()?,
                    pieces: phi
                        .pieces()
                        .iter()
                        .map(|p| {
                            Ok(PieceDoc {
                                slope: p.slope.to_doc()?,
                                intercept: p.intercept.to_doc()?,
                            })
                        })
                        .collect::<Result<_>>()?,
                },
            },
        },
        Sublayer::BProj(b) => SublayerDoc::Bproj {
            w_o: matrix_to_doc(&b.w_o)?,
            w_p: matrix_to_doc(&b.w_p)?,
        },
        Sublayer::SepConv(s) => SublayerDoc::Sepconv {
            w_o: matrix_to_doc(&s.w_o)?,
            w_c: matrix_to_doc(&s.w_c)?,
        },
    })
}

fn sublayer_from_doc<S: DocScalar>(doc: &SublayerDoc) -> Result<Sublayer<S>> {
    Ok(match doc {
        SublayerDoc::Attention { normalizer, heads } => {
            let heads = heads
                .iter()
                .map(|h| {
                    AttentionHead::new(
                        matrix_from_doc(&h.w_o)?,
                        matrix_from_doc(&h.w_v)?,
                        matrix_from_doc(&h.w_k)?,
                        matrix_from_doc(&h.w_q)?,
                        vec_from_doc(&h.b_q)?,
                    )
                })
                .collect::<Result<_>>()?;
            AttnSublayer::new(heads, *normalizer)?.into()
        }
        SublayerDoc::FeedForward {
            w1,
            b1,
            w2,
            b2,
            activation,
        } => {
            let activation = match activation {
                ActivationDoc::Relu => Activation::Relu,
                ActivationDoc::Phi { c1, c2, pieces } => {
                    let pieces: Vec<Piece<S>> = pieces
                        .iter()
                        .map(|p| Ok(Piece::new(S::from_doc(&p.slope)?, S::from_doc(&p.intercept)?)))
                        .collect::<Result<_>>()?;
                    let pieces: [Piece<S>; 3] = pieces.try_into().map_err(|_| {
                        Error::InvalidActivation("expected exactly three pieces".into())
                    })?;
                    Activation::Phi(PiecewiseLinear3::new(S::from_doc(c1)?, S::from_doc(c2)?, pieces)?)
                }
            };
            FFSublayer::new(
                matrix_from_doc(w1)?,
                vec_from_doc(b1)?,
                matrix_from_doc(w2)?,
                vec_from_doc(b2)?,
                activation,
            )?
            .into()
        }
        SublayerDoc::Bproj { w_o, w_p } => {
            BProjSublayer::new(matrix_from_doc(w_o)?, matrix_from_doc(w_p)?)?.into()
        }
        SublayerDoc::Sepconv { w_o, w_c } => {
            SepConvSublayer::new(matrix_from_doc(w_o)?, matrix_from_doc(w_c)?)?.into()
        }
    })
}

pub fn network_to_doc<S: DocScalar>(net: &Network<S>) -> Result<NetworkDoc> {
    Ok(NetworkDoc {
        mode: S::MODE,
        d: net.d(),
        positional_encoding: net.positional_encoding().map(matrix_to_doc).transpose()?,
        sublayers: net.sublayers().iter().map(sublayer_to_doc).collect::<Result<_>>()?,
    })
}

/// Rebuilds a network; an exact document may be read as floats, but not the reverse.
pub fn network_from_doc<S: DocScalar>(doc: &NetworkDoc) -> Result<Network<S>> {
    if doc.mode == Mode::Float && S::MODE == Mode::Exact {
        return Err(Error::Mode {
            op: "reading a float network as exact",
            mode: Mode::Exact,
        });
    }
    let sublayers = doc.sublayers.iter().map(sublayer_from_doc).collect::<Result<_>>()?;
    let net = Network::new(doc.d, sublayers)?;
    match &doc.positional_encoding {
        Some(e) => net.with_positional_encoding(matrix_from_doc(e)?),
        None => Ok(net),
    }
}

pub fn network_to_json<S: DocScalar>(net: &Network<S>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&network_to_doc(net)?)?)
}

pub fn network_from_json<S: DocScalar>(text: &str) -> Result<Network<S>> {
    network_from_doc(&serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    #[test]
    fn exact_scalar_roundtrip() {
        let v = rat(-3, 8);
        let doc = v.to_doc().unwrap();
        assert_eq!(
            doc,
            ScalarDoc::Exact {
                num: "-3".into(),
                base_delta: "1/8".into()
            }
        );
        assert_eq!(Rational::from_doc(&doc).unwrap(), v);
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(text, r#"{"num":"-3","base_delta":"1/8"}"#);
    }

    #[test]
    fn loose_scalar_forms() {
        let docs: Vec<ScalarDoc> = serde_json::from_str(r#"["3/8", 0.1, -2, "0.25"]"#).unwrap();
        let vals: Vec<Rational> = docs.iter().map(|d| Rational::from_doc(d).unwrap()).collect();
        assert_eq!(vals, vec![rat(3, 8), rat(1, 10), int(-2), rat(1, 4)]);
        assert_eq!(f64::from_doc(&docs[0]).unwrap(), 0.375);
        assert!(f64::NAN.to_doc().is_err());
    }

    #[test]
    fn network_roundtrip_all_kinds() {
        let one = Matrix::from_rows(vec![vec![int(1)]]).unwrap();
        let attn = AttnSublayer::new(
            vec![AttentionHead::new(one.clone(), one.clone(), one.clone(), one.clone(), vec![rat(1, 4)]).unwrap()],
            Normalizer::Hardmax,
        )
        .unwrap();
        let ff = FFSublayer::token_update(
            vec![int(1)],
            vec![int(1)],
            rat(-1, 2),
            PiecewiseLinear3::window(rat(-1, 4), rat(1, 4), int(1)).unwrap(),
        )
        .unwrap();
        let bproj = BProjSublayer::new(one.clone(), Matrix::identity(2)).unwrap();
        let sep = SepConvSublayer::new(one.clone(), Matrix::filled(1, 2, rat(1, 3))).unwrap();
        let net = Network::new(1, vec![attn.into(), ff.into(), bproj.into(), sep.into()])
            .unwrap()
            .with_positional_encoding(Matrix::from_rows(vec![vec![int(0), int(1)]]).unwrap())
            .unwrap();
        let text = network_to_json(&net).unwrap();
        let back: Network<Rational> = network_from_json(&text).unwrap();
        assert_eq!(back, net);
        let float: Network<f64> = network_from_json(&text).unwrap();
        assert_eq!(float, net.to_f64());
        let float_text = network_to_json(&float).unwrap();
        assert!(network_from_json::<Rational>(&float_text).is_err());
    }
}
