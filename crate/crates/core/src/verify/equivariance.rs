use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;
use crate::grid::permutations;
use crate::layers::{
    Activation, AttentionHead, AttnSublayer, BProjSublayer, FFSublayer, Normalizer, Piece,
    PiecewiseLinear3, SepConvSublayer, SeqMap,
};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{rat, Mode, Rational, Scalar};

use super::report::{float_metric, Counterexample, VerificationReport};

/// Float-mode tolerance for `f(XP) = f(X)P`.
pub const FLOAT_EQUIVARIANCE_TOL: f64 = 1e-9;

/// Largest `n` for which all `n!` permutations are checked.
pub const MAX_EXHAUSTIVE_N: usize = 4;

/// Random sample of permutations used above [`MAX_EXHAUSTIVE_N`].
const SAMPLED_PERMUTATIONS: usize = 24;

/// Entry in `[−1, 2)` on a `1/16` lattice, so that in-range and out-of-range
/// behaviour of constructed networks are both exercised.
fn random_entry<S: Scalar>(rng: &mut ChaCha8Rng) -> S {
    S::from_rational(&rat(rng.gen_range(-16..32), 16))
}

pub fn random_input<S: Scalar>(rng: &mut ChaCha8Rng, d: usize, n: usize) -> SeqMatrix<S> {
    SeqMatrix::new(Matrix::from_fn(d, n, |_, _| random_entry(rng))).expect("n >= 1")
}

fn perms_for(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if n <= MAX_EXHAUSTIVE_N {
        return permutations(n);
    }
    (0..SAMPLED_PERMUTATIONS)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            p
        })
        .collect()
}

fn agree<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> (bool, f64) {
    match S::MODE {
        Mode::Exact => (a == b, if a == b { 0.0 } else { a.max_abs_diff(b) }),
        Mode::Float => {
            let diff = a.max_abs_diff(b);
            (diff <= FLOAT_EQUIVARIANCE_TOL, diff)
        }
    }
}

/// Checks `f(XP) = f(X)P` for every permutation (all of them when `n ≤ 4`) and
/// `trials` seeded random inputs. Exact mode compares with equality.
pub fn check_equivariance<S, F>(
    name: &str,
    f: &F,
    d: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<VerificationReport>
where
    S: Scalar + std::fmt::Display,
    F: SeqMap<S> + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms = perms_for(n, &mut rng);
    let inputs: Vec<SeqMatrix<S>> = (0..trials).map(|_| random_input(&mut rng, d, n)).collect();

    let outcomes = inputs
        .par_iter()
        .map(|x| -> Result<Option<(Vec<usize>, f64)>> {
            let fx = f.apply(x)?;
            let mut worst: Option<(Vec<usize>, f64)> = None;
            for p in &perms {
                let lhs = f.apply(&x.permute_columns(p))?;
                let rhs = fx.permute_columns(p);
                let (ok, diff) = agree(lhs.as_matrix(), rhs.as_matrix());
                if !ok {
                    worst = Some((p.clone(), diff));
                    break;
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;

    let report = VerificationReport::new(format!("equivariance/{name}"))
        .with_scope("d", d)
        .with_scope("n", n)
        .with_scope("trials", trials)
        .with_scope("permutations", perms.len())
        .with_scope("mode", format!("{:?}", S::MODE).to_lowercase())
        .with_seed(seed);
    let violations = outcomes.iter().filter(|o| o.is_some()).count();
    let report = report.with_metric("violations", violations);
    match outcomes.iter().position(Option::is_some) {
        None => Ok(report),
        Some(k) => {
            let (p, diff) = outcomes[k].clone().expect("found");
            Ok(report
                .with_metric("witness_diff", float_metric(diff))
                .fail(Counterexample::new(
                    inputs[k].as_matrix(),
                    format!("f(XP) != f(X)P for P = {p:?}"),
                )))
        }
    }
}

fn small_rational(rng: &mut ChaCha8Rng) -> Rational {
    rat(rng.gen_range(-8..=8), 4)
}

/// Two-head hardmax attention with small random exact weights and query biases.
pub fn random_attention(d: usize, m: usize, heads: usize, normalizer: Normalizer, seed: u64) -> AttnSublayer<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = (0..heads)
        .map(|_| {
            let mut mat = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| small_rational(&mut rng));
            let (w_o, w_v, w_k, w_q) = (mat(d, m), mat(m, d), mat(m, d), mat(m, d));
            let b_q = (0..m).map(|_| small_rational(&mut rng)).collect();
            AttentionHead::new(w_o, w_v, w_k, w_q, b_q).expect("consistent shapes")
        })
        .collect();
    AttnSublayer::new(heads, normalizer).expect("at least one head")
}

/// Random exact feed-forward sublayer of width `r`; `phi` selects a `Φ`
/// activation instead of ReLU.
pub fn random_feedforward(d: usize, r: usize, phi: bool, seed: u64) -> FFSublayer<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |rows: usize, cols: usize| Matrix::from_fn(rows, cols, |_, _| small_rational(&mut rng));
    let (w1, w2) = (mat(r, d), mat(d, r));
    let b1 = (0..r).map(|_| small_rational(&mut rng)).collect();
    let b2 = (0..d).map(|_| small_rational(&mut rng)).collect();
    let activation = if phi {
        Activation::Phi(
            PiecewiseLinear3::new(
                rat(-1, 2),
                rat(3, 2),
                [
                    Piece::new(rat(2, 1), rat(1, 1)),
                    Piece::constant(rat(1, 3)),
                    Piece::new(rat(-1, 1), rat(5, 1)),
                ],
            )
            .expect("middle piece is constant"),
        )
    } else {
        Activation::Relu
    };
    FFSublayer::new(w1, b1, w2, b2, activation).expect("consistent shapes")
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// BProj with Gaussian `W_O` and `W_P`.
pub fn random_bproj(d: usize, n: usize, seed: u64) -> BProjSublayer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_o = gaussian(&mut rng, d, d);
    let w_p = gaussian(&mut rng, n, n);
    BProjSublayer::new(w_o, w_p).expect("square weights")
}

/// SepConv with Gaussian `W_O` and a random `d×k` filter bank.
pub fn random_sepconv(d: usize, k: usize, seed: u64) -> SepConvSublayer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_o = gaussian(&mut rng, d, d);
    let w_c = gaussian(&mut rng, d, k);
    SepConvSublayer::new(w_o, w_c).expect("valid filter bank")
}

/// Outcome of the sparse-difference distinctness check for one draw of BProj weights.
fn bproj_separates(d: usize, n: usize, seed: u64) -> bool {
    let layer = random_bproj(d, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let base: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let context = |mask: usize| {
        SeqMatrix::new(Matrix::from_fn(d, n, |i, j| {
            base[i] + if i == 0 && mask >> j & 1 == 1 { 1.0 } else { 0.0 }
        }))
        .expect("n >= 1")
    };
    let tol = FLOAT_EQUIVARIANCE_TOL;
    for a in 0..1usize << n {
        for k in 0..n {
            let b = a ^ (1 << k);
            if b < a {
                continue;
            }
            let (xa, xb) = (context(a), context(b));
            let diff = xa.as_matrix().sub(xb.as_matrix()).expect("same shape");
            let projected = diff.matmul(&layer.w_p).expect("n×n");
            let row = projected.row(0);
            if row.iter().any(|v| v.abs() <= tol) {
                return false;
            }
            for i in 0..n {
                for j in i + 1..n {
                    if (row[i] - row[j]).abs() <= tol {
                        return false;
                    }
                }
            }
            let (ya, yb) = (layer.forward(&xa).expect("shape"), layer.forward(&xb).expect("shape"));
            for j in 0..n {
                let col_diff = ya
                    .column(j)
                    .iter()
                    .zip(yb.column(j))
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                if col_diff <= tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Over the `2^n` contexts whose tokens are `b` or `b + e₁`, every pair differing in
/// one token must have a dense difference `(X₁ − X₂)W_P` with pairwise distinct
/// entries, and must differ in every output column. Passes when the success rate
/// over `seeds` independent weight draws is at least `min_rate`.
pub fn check_bproj_distinctness(d: usize, n: usize, seeds: usize, base_seed: u64, min_rate: f64) -> VerificationReport {
    let outcomes: Vec<bool> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| bproj_separates(d, n, base_seed.wrapping_add(s)))
        .collect();
    let successes = outcomes.iter().filter(|ok| **ok).count();
    let rate = successes as f64 / seeds as f64;
    let report = VerificationReport::new("bproj/sparse-difference-distinctness")
        .with_scope("d", d)
        .with_scope("n", n)
        .with_scope("contexts", 1usize << n)
        .with_scope("seeds", seeds)
        .with_metric("rate", float_metric(rate))
        .with_metric("min_rate", float_metric(min_rate))
        .with_seed(base_seed);
    if rate >= min_rate {
        return report;
    }
    let first = outcomes.iter().position(|ok| !ok).expect("rate below 1");
    let seed = base_seed.wrapping_add(first as u64);
    report.fail(Counterexample::new(
        &random_bproj(d, n, seed).w_p,
        format!("W_P of seed {seed}; success rate {rate} below {min_rate}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Network, Sublayer};

    #[test]
    fn identity_network_passes() {
        let net: Network<Rational> = Network::new(2, vec![]).unwrap();
        let r = check_equivariance("identity", &net, 2, 3, 5, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.scope["permutations"], 6);
    }

    #[test]
    fn exact_sublayers_pass() {
        for normalizer in [Normalizer::Hardmax, Normalizer::Average] {
            let attn = random_attention(2, 1, 2, normalizer, 3);
            assert!(check_equivariance("attention", &attn, 2, 4, 20, 9).unwrap().passed);
        }
        let ff = random_feedforward(2, 3, true, 4);
        assert!(check_equivariance("ff", &ff, 2, 4, 20, 9).unwrap().passed);
    }

    #[test]
    fn alternatives_fail_with_witness() {
        let bproj = random_bproj(2, 3, 1);
        let r = check_equivariance("bproj", &bproj, 2, 3, 20, 2).unwrap();
        assert!(!r.passed);
        let w = r.counterexample.as_ref().unwrap();
        assert_eq!(w.input.len(), 2);
        assert_eq!(w.input[0].len(), 3);

        let conv = random_sepconv(2, 3, 1);
        assert!(!check_equivariance("sepconv", &conv, 2, 4, 20, 2).unwrap().passed);
    }

    #[test]
    fn stored_witness_reproduces() {
        let bproj = random_bproj(1, 3, 5);
        let r = check_equivariance("bproj", &bproj, 1, 3, 20, 6).unwrap();
        let cx = r.counterexample.unwrap();
        let x: Vec<Vec<f64>> = cx.input.iter().map(|row| row.iter().map(|s| s.parse().unwrap()).collect()).collect();
        let x = SeqMatrix::from_rows(x).unwrap();
        let p: Vec<usize> = cx.detail.split('[').nth(1).unwrap().trim_end_matches(']').split(", ").map(|s| s.parse().unwrap()).collect();
        let lhs = bproj.forward(&x.permute_columns(&p)).unwrap();
        let rhs = bproj.forward(&x).unwrap().permute_columns(&p);
        assert!(lhs.max_abs_diff(&rhs) > FLOAT_EQUIVARIANCE_TOL);
    }

    #[test]
    fn sublayer_enum_and_closures_are_checkable() {
        let layer: Sublayer<Rational> = random_feedforward(1, 2, false, 8).into();
        assert!(check_equivariance("sublayer", &layer, 1, 3, 4, 0).unwrap().passed);
        let swap_first = |x: &SeqMatrix<Rational>| -> Result<SeqMatrix<Rational>> {
            let mut m = x.as_matrix().clone();
            m[(0, 0)] = m[(0, 0)].clone() + rat(1, 1);
            SeqMatrix::new(m)
        };
        assert!(!check_equivariance("bump-first", &swap_first, 1, 3, 4, 0).unwrap().passed);
    }

    #[test]
    fn bproj_distinctness_rate() {
        let r = check_bproj_distinctness(2, 4, 20, 0, 0.99);
        assert!(r.passed, "{:?}", r.metrics);
    }
}
