use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::convert::{anneal_network, relu4_of_phi, ConversionParams};
use crate::error::Result;
use crate::grid::GridParams;
use crate::layers::{Activation, Network, PiecewiseLinear3, Sublayer};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{format_rational, int, rat, Rational, Scalar};

use super::report::{float_metric, Counterexample, VerificationReport};

/// Sup-error the annealed network must reach at the end of the schedule.
pub const ANNEALING_TARGET: f64 = 1e-3;

/// Off-band samples per activation in the relu4 exactness check.
pub const RELU4_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub lambda: f64,
    pub epsilon: String,
    pub sup_error: f64,
}

/// Three points (`δ/2`, `δ/8`, `7δ/8` offsets) in every cube of `G_δ`.
pub fn cube_test_set(grid: &GridParams, cap: u128) -> Result<Vec<SeqMatrix<Rational>>> {
    Ok(grid
        .enumerate(cap)?
        .iter()
        .flat_map(|codes| grid.sample_offsets().map(|off| grid.cube_point(codes, &off)))
        .collect())
}

pub fn sup_error(modified: &Network<Rational>, annealed: &Network<f64>, inputs: &[SeqMatrix<Rational>]) -> Result<f64> {
    let errors = inputs
        .par_iter()
        .map(|x| {
            let want = modified.forward(x)?.to_f64();
            let got = annealed.forward(&x.to_f64())?;
            Ok(got.max_abs_diff(&want))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

/// Sup-error between the modified network and its annealed version along a schedule.
pub fn convergence_table(
    modified: &Network<Rational>,
    schedule: &[ConversionParams],
    inputs: &[SeqMatrix<Rational>],
) -> Result<Vec<ConvergenceRow>> {
    schedule
        .iter()
        .map(|params| {
            let annealed = anneal_network(modified, params)?;
            Ok(ConvergenceRow {
                lambda: params.lambda,
                epsilon: format_rational(&params.epsilon),
                sup_error: sup_error(modified, &annealed, inputs)?,
            })
        })
        .collect()
}

/// Same sublayer count, every converted `Φ` unit widened to four ReLUs, every
/// attention sublayer now softmax.
pub fn structure_matches(modified: &Network<Rational>, annealed: &Network<f64>) -> bool {
    modified.len() == annealed.len()
        && modified
            .sublayers()
            .iter()
            .zip(annealed.sublayers())
            .all(|(m, a)| match (m, a) {
                (Sublayer::Attention(m), Sublayer::Attention(a)) => {
                    m.heads.len() == a.heads.len()
                        && matches!(a.normalizer, crate::layers::Normalizer::Softmax { .. })
                }
                (Sublayer::FeedForward(m), Sublayer::FeedForward(a)) => match m.activation {
                    Activation::Phi(_) => a.hidden() == 4 * m.hidden() && a.activation == Activation::Relu,
                    Activation::Relu => a.hidden() == m.hidden(),
                },
                _ => false,
            })
}

/// Non-increasing sup-error along the schedule, below [`ANNEALING_TARGET`] at its
/// end, and the expected structure at every step.
pub fn check_annealing(
    grid: &GridParams,
    modified: &Network<Rational>,
    schedule: &[ConversionParams],
    cap: u128,
) -> Result<VerificationReport> {
    let inputs = cube_test_set(grid, cap)?;
    let table = convergence_table(modified, schedule, &inputs)?;
    let mut report = VerificationReport::new("conversion/annealing")
        .with_grid(grid)
        .with_scope("test_points", inputs.len())
        .with_scope("schedule_len", schedule.len());
    for row in &table {
        report.set_metric(&format!("sup_error@lambda={}", row.lambda), float_metric(row.sup_error));
    }
    let structural = schedule
        .iter()
        .map(|p| anneal_network(modified, p).map(|a| structure_matches(modified, &a)))
        .collect::<Result<Vec<bool>>>()?;
    let witness = || Counterexample::new(inputs[0].as_matrix(), String::new());
    let fail = |msg: String| {
        let mut cx = witness();
        cx.detail = msg;
        cx
    };
    if let Some(k) = structural.iter().position(|ok| !ok) {
        return Ok(report.fail(fail(format!("annealed network {k} has the wrong structure"))));
    }
    if let Some(w) = table.windows(2).find(|w| w[1].sup_error > w[0].sup_error) {
        return Ok(report.fail(fail(format!(
            "sup-error rises from {} (lambda={}) to {} (lambda={})",
            w[0].sup_error, w[0].lambda, w[1].sup_error, w[1].lambda
        ))));
    }
    match table.last() {
        Some(last) if last.sup_error < ANNEALING_TARGET => Ok(report),
        Some(last) => Ok(report.fail(fail(format!(
            "final sup-error {} not below {}",
            last.sup_error, ANNEALING_TARGET
        )))),
        None => Ok(report.fail(fail("empty schedule".into()))),
    }
}

/// Distinct `Φ` activations used by a network.
pub fn phi_activations(network: &Network<Rational>) -> Vec<PiecewiseLinear3<Rational>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for layer in network.sublayers() {
        if let Sublayer::FeedForward(ff) = layer {
            if let Activation::Phi(phi) = &ff.activation {
                if seen.insert(format!("{phi:?}")) {
                    out.push(phi.clone());
                }
            }
        }
    }
    out
}

fn in_band(t: &Rational, phi: &PiecewiseLinear3<Rational>, eps: &Rational) -> bool {
    (*t > phi.c1() - eps && t < phi.c1()) || (*t > phi.c2() - eps && t < phi.c2())
}

/// `relu4_of_phi` equals `φ` exactly at `samples` random points outside the two
/// bands, for every activation of the network, and in `f64` to `1e−12`.
pub fn check_relu4_off_band(
    network: &Network<Rational>,
    epsilon: &Rational,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let phis = phi_activations(network);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerificationReport::new("conversion/relu4-off-band")
        .with_scope("activations", phis.len())
        .with_scope("samples", samples)
        .with_scope("epsilon", format_rational(epsilon))
        .with_seed(seed);
    let mut worst_float = 0.0f64;
    for phi in &phis {
        let exp = relu4_of_phi(phi, epsilon)?;
        let exp_f = exp.to_f64();
        let span = phi.c2() - phi.c1();
        let lo = phi.c1() - &span;
        let mut checked = 0;
        while checked < samples {
            // uniform on a 1/4096 lattice over [c1 − span, c2 + span)
            let t = &lo + &span * rat(rng.gen_range(0..3 * 4096), 4096);
            if in_band(&t, phi, epsilon) {
                continue;
            }
            let want = phi.eval(&t);
            if exp.eval(&t) != want {
                let x = Matrix::from_fn(1, 1, |_, _| t.clone());
                return Ok(report.fail(Counterexample::new(&x, format!("relu4 differs from phi {phi:?}"))));
            }
            let tf = Scalar::to_f64(&t);
            let wf = Scalar::to_f64(&want);
            let err = (exp_f.eval(&tf) - wf).abs() / wf.abs().max(1.0);
            worst_float = worst_float.max(err);
            checked += 1;
        }
    }
    report.set_metric("worst_float_rel_error", float_metric(worst_float));
    if worst_float > 1e-12 {
        let x = Matrix::from_fn(1, 1, |_, _| int(0));
        return Ok(report.fail(Counterexample::new(&x, "float relu4 beyond 1e-12")));
    }
    Ok(report)
}
