use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{has_distinct_columns, GridParams};
use crate::layers::Network;
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{format_rational, int, Rational, Scalar};
use crate::target::PiecewiseConstantFn;

use super::report::{float_metric, Counterexample, VerificationReport};

/// What `ḡ` must return on cube `L`: `A_L` when the columns are distinct, `0` otherwise.
pub fn expected_output(grid: &GridParams, target: &PiecewiseConstantFn, codes: &[usize]) -> Matrix<Rational> {
    if has_distinct_columns(codes) {
        target.value(codes)
    } else {
        Matrix::zeros(grid.d(), grid.n())
    }
}

/// Sample inputs per cube: the three in-cube offsets, and the same point with its
/// first entry pushed to `1 + offset` (outside the unit cube).
fn samples(grid: &GridParams, codes: &[usize]) -> Vec<(SeqMatrix<Rational>, bool)> {
    let mut out = Vec::with_capacity(6);
    for off in grid.sample_offsets() {
        let x = grid.cube_point(codes, &off);
        let mut outside = x.as_matrix().clone();
        outside[(0, 0)] = int(1) + &off;
        out.push((x, true));
        out.push((SeqMatrix::new(outside).expect("n >= 2"), false));
    }
    out
}

/// `ḡ(X) = A_L` at three points of every distinct-column cube (all orderings),
/// `ḡ = 0` on duplicate-column cubes and outside `[0,1)^{d×n}`. The counted
/// fraction of duplicate-column cubes must equal its closed form, and the
/// fraction of cubes where `ḡ` and `f̄` disagree is recorded.
pub fn check_end_to_end(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    network: &Network<Rational>,
    cap: u128,
) -> Result<VerificationReport> {
    let points = grid.enumerate(cap)?;
    let outcomes = points
        .par_iter()
        .map(|codes| -> Result<(Option<Counterexample>, bool)> {
            let want = expected_output(grid, target, codes);
            let zero = Matrix::zeros(grid.d(), grid.n());
            for (x, inside) in samples(grid, codes) {
                let got = network.forward(&x)?.into_matrix();
                let expected = if inside { &want } else { &zero };
                if got != *expected {
                    let which = if inside { "in-cube" } else { "out-of-range" };
                    return Ok((Some(Counterexample::new(x.as_matrix(), format!("{which} output differs"))), false));
                }
            }
            let centre = network.forward(&grid.cube_center(codes))?.into_matrix();
            Ok((None, centre != target.value(codes)))
        })
        .collect::<Result<Vec<_>>>()?;

    let total = points.len() as i64;
    let duplicates = points.iter().filter(|c| !has_distinct_columns(c)).count() as i64;
    let mismatched = outcomes.iter().filter(|(_, m)| *m).count() as i64;
    let counted = Rational::new(duplicates.into(), total.into());
    let closed_form = PiecewiseConstantFn::duplicate_fraction(grid);
    let mismatch = Rational::new(mismatched.into(), total.into());

    let report = VerificationReport::new("end-to-end")
        .with_grid(grid)
        .with_scope("cubes", points.len())
        .with_scope("samples_per_cube", 3)
        .with_metric("duplicate_fraction", format_rational(&counted))
        .with_metric("duplicate_fraction_closed_form", format_rational(&closed_form))
        .with_metric("mismatch_fraction", float_metric(Scalar::to_f64(&mismatch)))
        .with_metric("mismatch_fraction_exact", format_rational(&mismatch));
    if let Some((Some(cx), _)) = outcomes.iter().find(|(cx, _)| cx.is_some()).cloned() {
        return Ok(report.fail(cx));
    }
    if counted != closed_form {
        let x = grid.point(&vec![0; grid.n()]);
        return Ok(report.fail(Counterexample::new(
            x.as_matrix(),
            format!(
                "counted duplicate fraction {} differs from closed form {}",
                format_rational(&counted),
                format_rational(&closed_form)
            ),
        )));
    }
    Ok(report)
}
