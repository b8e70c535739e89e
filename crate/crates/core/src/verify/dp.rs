//! The `d_p` distance `(∫ ‖f(X) − g(X)‖_p^p dX)^{1/p}`, estimated by Monte Carlo
//! and, for functions constant on grid cubes, summed exactly.

use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::layers::Network;
use crate::matrix::{entrywise_lp_pow, Matrix, SeqMatrix};
use crate::scalar::{format_rational, int, Rational, Scalar};
use crate::target::PiecewiseConstantFn;

use super::report::{float_metric, Counterexample, VerificationReport};

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Agreement required between Monte Carlo and the exact sum, in standard errors.
pub const MC_STANDARD_ERRORS: f64 = 3.0;

/// Bounded shell used for the integral over all of `ℝ^{d×n}`.
pub const SHELL: (i64, i64) = (-1, 2);

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p must lie in [1, inf), got {p}")))
    }
}

/// `Σ |M_ij|^p` in exact arithmetic, for integer `p`.
pub fn lp_pow_exact(m: &Matrix<Rational>, p: u32) -> Rational {
    m.data()
        .iter()
        .fold(int(0), |acc, v| acc + num_traits::pow(Signed::abs(v), p as usize))
}

fn integer_p(p: f64) -> Option<u32> {
    (p.fract() == 0.0 && p <= u32::MAX as f64).then_some(p as u32)
}

/// Exact `Σ_L δ^{dn} ‖f(C_L) − g(C_L)‖_p^p` over all cubes, for integer `p`.
pub fn cube_sum_pow_exact<F, G>(grid: &GridParams, p: u32, f: &F, g: &G, cap: u128) -> Result<Rational>
where
    F: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
    G: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
{
    let volume = num_traits::pow(grid.delta(), grid.d() * grid.n());
    let terms = grid
        .enumerate(cap)?
        .par_iter()
        .map(|codes| {
            let c = grid.cube_center(codes);
            Ok(lp_pow_exact(&f(&c)?.sub(&g(&c)?)?, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.into_iter().fold(int(0), |a, t| a + t) * volume)
}

/// Float cube sum for arbitrary `p ≥ 1`.
pub fn cube_sum_pow<F, G>(grid: &GridParams, p: f64, f: &F, g: &G, cap: u128) -> Result<f64>
where
    F: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
    G: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
{
    check_p(p)?;
    if let Some(k) = integer_p(p) {
        return Ok(Scalar::to_f64(&cube_sum_pow_exact(grid, k, f, g, cap)?));
    }
    let volume = Scalar::to_f64(&grid.delta()).powi((grid.d() * grid.n()) as i32);
    let terms = grid
        .enumerate(cap)?
        .par_iter()
        .map(|codes| {
            let c = grid.cube_center(codes);
            entrywise_lp_pow(&f(&c)?.sub(&g(&c)?)?.to_f64(), p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum::<f64>() * volume)
}

/// Monte Carlo mean and standard error of `∫_{[lo,hi]^{d×n}} ‖f − g‖_p^p`.
///
/// Samples are exact rationals `lo + (hi − lo)·k/2^32`, drawn from a seeded stream
/// before evaluation so the result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_pow<F, G>(
    d: usize,
    n: usize,
    p: f64,
    f: &F,
    g: &G,
    (lo, hi): (i64, i64),
    seed: u64,
    samples: usize,
) -> Result<(f64, f64)>
where
    F: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
    G: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
{
    check_p(p)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = int(hi - lo);
    let scale = Rational::new(1.into(), (1u64 << 32).into());
    let points: Vec<SeqMatrix<Rational>> = (0..samples)
        .map(|_| {
            SeqMatrix::new(Matrix::from_fn(d, n, |_, _| {
                int(lo) + &width * int(rng.gen::<u32>() as i64) * &scale
            }))
            .expect("n >= 1")
        })
        .collect();
    let values = points
        .par_iter()
        .map(|x| entrywise_lp_pow(&f(x)?.sub(&g(x)?)?.to_f64(), p))
        .collect::<Result<Vec<f64>>>()?;
    let volume = ((hi - lo) as f64).powi((d * n) as i32);
    let m = samples as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if samples > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok((mean * volume, volume * (var / m).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpEstimate {
    pub p: f64,
    pub exact: f64,
    pub exact_pow: f64,
    pub monte_carlo: f64,
    pub monte_carlo_pow: f64,
    pub standard_error: f64,
    pub shell_monte_carlo_pow: f64,
    pub shell_standard_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl DpEstimate {
    fn agrees(est: f64, se: f64, exact: f64) -> bool {
        (est - exact).abs() <= MC_STANDARD_ERRORS * se || (est - exact).abs() <= 1e-12 * exact.abs().max(1.0)
    }

    pub fn monte_carlo_agrees(&self) -> bool {
        Self::agrees(self.monte_carlo_pow, self.standard_error, self.exact_pow)
    }

    pub fn shell_agrees(&self) -> bool {
        Self::agrees(self.shell_monte_carlo_pow, self.shell_standard_error, self.exact_pow)
    }
}

/// Both estimates of `d_p(f, g)`; `f` and `g` must be constant on every grid cube
/// and vanish outside `[0,1)^{d×n}` for the exact value to be meaningful.
pub fn estimate_dp<F, G>(f: &F, g: &G, p: f64, grid: &GridParams, seed: u64, samples: usize, cap: u128) -> Result<DpEstimate>
where
    F: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
    G: Fn(&SeqMatrix<Rational>) -> Result<Matrix<Rational>> + Sync,
{
    let exact_pow = cube_sum_pow(grid, p, f, g, cap)?;
    let (d, n) = (grid.d(), grid.n());
    let (mc, se) = monte_carlo_pow(d, n, p, f, g, (0, 1), seed, samples)?;
    let (shell, shell_se) = monte_carlo_pow(d, n, p, f, g, SHELL, seed.wrapping_add(1), samples)?;
    Ok(DpEstimate {
        p,
        exact: exact_pow.powf(1.0 / p),
        exact_pow,
        monte_carlo: mc.max(0.0).powf(1.0 / p),
        monte_carlo_pow: mc,
        standard_error: se,
        shell_monte_carlo_pow: shell,
        shell_standard_error: shell_se,
        samples,
        seed,
    })
}

/// `d_p(f̄, ḡ)` for a target and its constructed network.
pub fn estimate_target_dp(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    network: &Network<Rational>,
    p: f64,
    seed: u64,
    samples: usize,
    cap: u128,
) -> Result<DpEstimate> {
    let f = |x: &SeqMatrix<Rational>| Ok(target.eval(x.as_matrix()));
    let g = |x: &SeqMatrix<Rational>| Ok(network.forward(x)?.into_matrix());
    estimate_dp(&f, &g, p, grid, seed, samples, cap)
}

/// Exact `d_p(f̄, ḡ) ≤ (B^p · mismatch fraction)^{1/p}` with `B = max_L ‖A_L‖_p`,
/// the measure of `{f̄ ≠ ḡ}` equal to the combinatorial count of nonzero
/// duplicate-column cubes, and Monte Carlo within three standard errors of the
/// exact value on `[0,1]^{d×n}` and on the shell `[−1,2]^{d×n}`.
pub fn check_dp_bound(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    network: &Network<Rational>,
    p: u32,
    seed: u64,
    samples: usize,
    cap: u128,
) -> Result<VerificationReport> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must lie in [1, inf), got 0".into()));
    }
    let f = |x: &SeqMatrix<Rational>| Ok(target.eval(x.as_matrix()));
    let g = |x: &SeqMatrix<Rational>| Ok(network.forward(x)?.into_matrix());
    let exact_pow = cube_sum_pow_exact(grid, p, &f, &g, cap)?;
    let est = estimate_dp(&f, &g, p as f64, grid, seed, samples, cap)?;

    let points = grid.enumerate(cap)?;
    let total = int(points.len() as i64);
    let b_pow = points
        .iter()
        .map(|c| lp_pow_exact(&target.value(c), p))
        .max()
        .unwrap_or_else(|| int(0));
    let fraction = PiecewiseConstantFn::duplicate_fraction(grid);
    let bound_pow = &b_pow * &fraction;

    // measure of {f̄ ≠ ḡ}: from network outputs, and from the target alone
    let differs = points
        .par_iter()
        .map(|c| {
            let x = grid.cube_center(c);
            Ok(f(&x)? != g(&x)?)
        })
        .collect::<Result<Vec<bool>>>()?;
    let measured = int(differs.iter().filter(|d| **d).count() as i64) / &total;
    let expected = int(points
        .iter()
        .filter(|c| !crate::grid::has_distinct_columns(c) && !target.value(c).data().iter().all(|v| *v == int(0)))
        .count() as i64)
        / &total;

    let report = VerificationReport::new(format!("dp/p={p}"))
        .with_grid(grid)
        .with_scope("samples", samples)
        .with_metric("dp_exact", float_metric(est.exact))
        .with_metric("dp_exact_pow", format_rational(&exact_pow))
        .with_metric("dp_bound", float_metric(Scalar::to_f64(&bound_pow).powf(1.0 / p as f64)))
        .with_metric("dp_bound_pow", format_rational(&bound_pow))
        .with_metric("mismatch_measure", format_rational(&measured))
        .with_metric("mismatch_count_fraction", format_rational(&expected))
        .with_metric("duplicate_fraction", format_rational(&fraction))
        .with_metric("monte_carlo", float_metric(est.monte_carlo))
        .with_metric("monte_carlo_pow", float_metric(est.monte_carlo_pow))
        .with_metric("standard_error", float_metric(est.standard_error))
        .with_metric("shell_monte_carlo_pow", float_metric(est.shell_monte_carlo_pow))
        .with_metric("shell_standard_error", float_metric(est.shell_standard_error))
        .with_seed(seed);
    let witness = || grid.point(&vec![0; grid.n()]).into_matrix();
    let problem = if exact_pow > bound_pow {
        Some("exact d_p exceeds the bound")
    } else if measured != expected {
        Some("mismatch measure differs from the combinatorial count")
    } else if !est.monte_carlo_agrees() {
        Some("Monte Carlo disagrees with the exact cube sum")
    } else if !est.shell_agrees() {
        Some("shell Monte Carlo disagrees with the exact cube sum")
    } else {
        None
    };
    Ok(match problem {
        Some(msg) => report.fail(Counterexample::new(&witness(), msg)),
        None => report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{assemble_modified_network, Limits};
    use crate::scalar::rat;
    use crate::target::random_target;

    #[test]
    fn distance_to_self_is_zero() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let t = random_target(grid, true, 2).unwrap();
        let f = |x: &SeqMatrix<Rational>| Ok(t.eval(x.as_matrix()));
        let est = estimate_dp(&f, &f, 2.0, &grid, 1, 100, 100).unwrap();
        assert_eq!(est.exact, 0.0);
        assert_eq!(est.monte_carlo, 0.0);
        assert!(est.monte_carlo_agrees() && est.shell_agrees());
    }

    #[test]
    fn exact_sum_on_a_hand_example() {
        // f ≡ 1 on the unit square, g ≡ 0: ∫ ‖(1,1)‖_1 = 2, ∫ ‖(1,1)‖_2^2 = 2
        let grid = GridParams::new(2, 1, 2).unwrap();
        let one = |x: &SeqMatrix<Rational>| Ok(Matrix::filled(1, 2, int(1)).scale(&int(if x.data().iter().all(|v| *v >= int(0) && *v < int(1)) { 1 } else { 0 })));
        let zero = |_: &SeqMatrix<Rational>| Ok(Matrix::zeros(1, 2));
        assert_eq!(cube_sum_pow_exact(&grid, 1, &one, &zero, 100).unwrap(), int(2));
        assert_eq!(cube_sum_pow_exact(&grid, 3, &one, &zero, 100).unwrap(), int(2));
        let est = estimate_dp(&one, &zero, 1.5, &grid, 4, 2000, 100).unwrap();
        assert!((est.exact_pow - 2.0).abs() < 1e-12);
        assert!(est.monte_carlo_agrees(), "{est:?}");
    }

    #[test]
    fn bound_holds_for_constructed_network() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let t = random_target(grid, true, 9).unwrap();
        let built = assemble_modified_network(&grid, &t, Limits::default()).unwrap();
        for p in [1, 2] {
            let r = check_dp_bound(&grid, &t, &built.network, p, 5, 2000, 100).unwrap();
            assert!(r.passed, "{:?} {:?}", r.counterexample, r.metrics);
            assert_eq!(r.metrics["mismatch_measure"], "1/2");
        }
    }

    #[test]
    fn invalid_p_is_rejected() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let z = |_: &SeqMatrix<Rational>| Ok(Matrix::zeros(1, 2));
        assert!(estimate_dp(&z, &z, 0.5, &grid, 0, 10, 100).is_err());
        assert!(lp_pow_exact(&Matrix::from_rows(vec![vec![rat(-1, 2)]]).unwrap(), 2) == rat(1, 4));
    }
}
