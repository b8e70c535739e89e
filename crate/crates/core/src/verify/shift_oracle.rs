//! Direct evaluation of the selective-shift case formulas, used as an oracle for
//! the attention-matrix forward pass.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::construct::ContextualMapper;
use crate::error::Result;
use crate::grid::GridParams;
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{format_rational, int, Rational};

use super::contextual::sentinel_points;
use super::report::{Counterexample, VerificationReport};

/// Random exact inputs checked per configuration on top of the enumerated ones.
pub const RANDOM_EXACT_INPUTS: usize = 100;

fn q_pow(q: u64, e: usize) -> Rational {
    (0..e).fold(int(1), |acc, _| acc * int(q as i64))
}

/// `ψ(Z; b)` read off the ids: the largest id for columns above `b`, the smallest
/// below `b`, and the mean of all ids when the column sits exactly on `b`.
pub fn psi(ids: &[Rational], b: &Rational) -> Vec<Rational> {
    let max = ids.iter().max().expect("n >= 1").clone();
    let min = ids.iter().min().expect("n >= 1").clone();
    let mean = ids.iter().fold(int(0), |a, v| a + v) / int(ids.len() as i64);
    ids.iter()
        .map(|id| match id.cmp(b) {
            std::cmp::Ordering::Greater => max.clone(),
            std::cmp::Ordering::Less => min.clone(),
            std::cmp::Ordering::Equal => mean.clone(),
        })
        .collect()
}

/// `Ψ(Z; b, b′) = ψ(Z; b) − ψ(Z; b′)`.
pub fn big_psi(ids: &[Rational], b: &Rational, b_prime: &Rational) -> Vec<Rational> {
    psi(ids, b)
        .into_iter()
        .zip(psi(ids, b_prime))
        .map(|(x, y)| x - y)
        .collect()
}

/// Oracle description of the contextual mapper: windows and scales derived
/// straight from the grid definition.
#[derive(Debug, Clone)]
pub struct ShiftOracle {
    /// `u = (1, q, …, q^{d−1})`.
    pub u: Vec<Rational>,
    pub windows: Vec<(Rational, Rational)>,
    pub shift_scale: Rational,
    pub global_scale: Rational,
}

impl ShiftOracle {
    pub fn new(grid: &GridParams) -> Self {
        let (q, d, n) = (grid.q(), grid.d(), grid.n());
        let u: Vec<Rational> = (0..d).map(|i| q_pow(q, i)).collect();
        let step = Rational::new(1.into(), (q as i64).into());
        // every column id over every column of the grid, deduplicated
        let mut ids = BTreeSet::new();
        let mut digits = vec![0u64; d];
        loop {
            let id = digits
                .iter()
                .zip(&u)
                .fold(int(0), |acc, (&k, w)| acc + int(k as i64) * &step * w);
            ids.insert(id);
            let Some(pos) = digits.iter().position(|&k| k + 1 < q) else { break };
            digits[pos] += 1;
            digits[..pos].iter_mut().for_each(|k| *k = 0);
        }
        let half = &step / int(2);
        let windows = ids.iter().map(|c| (c - &half, c + &half)).collect();
        Self {
            u,
            windows,
            shift_scale: q_pow(q, d),
            global_scale: q_pow(q, (n + 1) * d),
        }
    }

    pub fn ids(&self, z: &Matrix<Rational>) -> Vec<Rational> {
        (0..z.cols())
            .map(|j| (0..z.rows()).fold(int(0), |acc, i| acc + &self.u[i] * &z[(i, j)]))
            .collect()
    }

    /// Layer `k` evaluated by the case formula: windows first, then the global shift.
    pub fn apply_layer(&self, k: usize, z: &Matrix<Rational>) -> Matrix<Rational> {
        let ids = self.ids(z);
        let delta = if k < self.windows.len() {
            let (b, b_prime) = &self.windows[k];
            big_psi(&ids, b, b_prime)
                .into_iter()
                .map(|v| v * &self.shift_scale)
                .collect::<Vec<_>>()
        } else {
            psi(&ids, &int(0))
                .into_iter()
                .map(|v| v * &self.global_scale)
                .collect()
        };
        let mut out = z.clone();
        for (j, v) in delta.into_iter().enumerate() {
            out[(0, j)] = &out[(0, j)] + v;
        }
        out
    }

    pub fn layer_count(&self) -> usize {
        self.windows.len() + 1
    }

    /// Sweeps sorted ids through every window; returns the shifted ids.
    pub fn sweep_ids(&self, ids: &[Rational]) -> Vec<Rational> {
        let mut ids = ids.to_vec();
        for (b, b_prime) in &self.windows {
            let shift = big_psi(&ids, b, b_prime);
            for (id, s) in ids.iter_mut().zip(shift) {
                *id = &*id + s * &self.shift_scale;
            }
        }
        ids
    }
}

/// Entries `a/p` with `p` an odd prime not dividing `q`, so scores never sit on a
/// window edge by accident.
pub fn random_exact_inputs(grid: &GridParams, count: usize, seed: u64) -> Vec<SeqMatrix<Rational>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primes: Vec<i64> = [3, 5, 7, 11, 13, 17, 19, 23]
        .into_iter()
        .filter(|p| !grid.q().is_multiple_of(*p as u64))
        .collect();
    (0..count)
        .map(|_| {
            SeqMatrix::new(Matrix::from_fn(grid.d(), grid.n(), |_, _| {
                let p = primes[rng.gen_range(0..primes.len())];
                Rational::new(rng.gen_range(-p..2 * p).into(), p.into())
            }))
            .expect("n >= 2")
        })
        .collect()
}

/// Runs one input through every mapper layer, comparing each forward pass with the
/// case formula. Returns the index of the first disagreeing layer.
fn first_disagreement(mapper: &ContextualMapper, oracle: &ShiftOracle, x: &SeqMatrix<Rational>) -> Result<Option<usize>> {
    let mut z = x.clone();
    for (k, layer) in mapper.layers.iter().enumerate() {
        let next = layer.forward(&z)?;
        if *next.as_matrix() != oracle.apply_layer(k, z.as_matrix()) {
            return Ok(Some(k));
        }
        z = next;
    }
    Ok(None)
}

/// Matrix-form attention equals the case formulas on every grid point, on the
/// sentinel-bearing points, and on random exact inputs.
pub fn check_oracle_equivalence(
    grid: &GridParams,
    mapper: &ContextualMapper,
    cap: u128,
    seed: u64,
) -> Result<VerificationReport> {
    let oracle = ShiftOracle::new(grid);
    let mut inputs: Vec<SeqMatrix<Rational>> = grid.enumerate(cap)?.iter().map(|c| grid.point(c)).collect();
    let enumerated = inputs.len();
    let (sentinels, _) = sentinel_points(grid, cap, seed)?;
    let sentinel_count = sentinels.len();
    inputs.extend(sentinels);
    inputs.extend(random_exact_inputs(grid, RANDOM_EXACT_INPUTS, seed));

    let report = VerificationReport::new("shift-oracle/equivalence")
        .with_grid(grid)
        .with_scope("grid_points", enumerated)
        .with_scope("sentinel_points", sentinel_count)
        .with_scope("random_inputs", RANDOM_EXACT_INPUTS)
        .with_metric("layers", mapper.layers.len())
        .with_seed(seed);
    if oracle.layer_count() != mapper.layers.len() {
        let x = grid.point(&vec![0; grid.n()]);
        return Ok(report.fail(Counterexample::new(
            x.as_matrix(),
            format!("mapper has {} layers, oracle expects {}", mapper.layers.len(), oracle.layer_count()),
        )));
    }
    let outcomes = inputs
        .par_iter()
        .map(|x| first_disagreement(mapper, &oracle, x))
        .collect::<Result<Vec<_>>>()?;
    let report = report.with_metric("comparisons", inputs.len() * mapper.layers.len());
    Ok(match outcomes.iter().position(Option::is_some) {
        None => report,
        Some(i) => report.fail(Counterexample::new(
            inputs[i].as_matrix(),
            format!("layer {} differs from the case formula", outcomes[i].expect("some")),
        )),
    })
}

/// One row of the injectivity table: sorted ids and the shifted last id `l̃_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectivityRow {
    pub codes: Vec<usize>,
    pub sorted_ids: Vec<Rational>,
    pub shifted_last: Rational,
}

/// `l̃_n` for every strictly increasing code tuple, computed by the oracle.
pub fn injectivity_table(grid: &GridParams, cap: u128) -> Result<Vec<InjectivityRow>> {
    let oracle = ShiftOracle::new(grid);
    let reps = grid.distinct_representatives(cap)?;
    Ok(reps
        .into_par_iter()
        .map(|codes| {
            let sorted_ids = oracle.ids(grid.point(&codes).as_matrix());
            let shifted = oracle.sweep_ids(&sorted_ids);
            InjectivityRow {
                codes,
                sorted_ids,
                shifted_last: shifted.into_iter().max().expect("n >= 2"),
            }
        })
        .collect())
}

/// `l̃_n` is one-to-one over sorted distinct tuples and within the closed-form
/// bounds; duplicate tuples fall strictly below the lower bound; the network's
/// sweep agrees with the oracle's.
pub fn check_injectivity(grid: &GridParams, mapper: &ContextualMapper, cap: u128) -> Result<VerificationReport> {
    let oracle = ShiftOracle::new(grid);
    let (lower, upper) = grid.shifted_id_bounds();
    let table = injectivity_table(grid, cap)?;
    let mut report = VerificationReport::new("shift-oracle/injectivity")
        .with_grid(grid)
        .with_scope("sorted_tuples", table.len())
        .with_metric("lower_bound", format_rational(&lower))
        .with_metric("upper_bound", format_rational(&upper));

    let fail_at = |codes: &[usize], msg: String| Counterexample::new(grid.point(codes).as_matrix(), msg);
    let mut failure = None;
    let mut seen: BTreeMap<&Rational, &[usize]> = BTreeMap::new();
    for row in &table {
        if row.shifted_last < lower || row.shifted_last > upper {
            failure = failure.or_else(|| {
                Some(fail_at(&row.codes, format!("l~_n = {} outside bounds", format_rational(&row.shifted_last))))
            });
        }
        if let Some(prev) = seen.insert(&row.shifted_last, &row.codes) {
            failure = failure.or_else(|| {
                Some(fail_at(&row.codes, format!("l~_n = {} also reached by {:?}", format_rational(&row.shifted_last), prev)))
            });
        }
        let network_max = mapper
            .sweep(&grid.point(&row.codes))
            .map(|z| oracle.ids(z.as_matrix()).into_iter().max().expect("n >= 2"))?;
        if network_max != row.shifted_last {
            failure = failure.or_else(|| {
                Some(fail_at(&row.codes, format!("network sweep gives {}", format_rational(&network_max))))
            });
        }
    }

    // duplicate-column tuples never reach the distinct-column range
    let mut duplicate_max: Option<Rational> = None;
    for codes in grid.orbit_representatives(cap)? {
        if crate::grid::has_distinct_columns(&codes) {
            continue;
        }
        let ids = oracle.ids(grid.point(&codes).as_matrix());
        let last = oracle.sweep_ids(&ids).into_iter().max().expect("n >= 2");
        if last >= lower {
            failure = failure.or_else(|| {
                Some(fail_at(&codes, format!("duplicate tuple reaches {}", format_rational(&last))))
            });
        }
        if duplicate_max.as_ref().is_none_or(|m| last > *m) {
            duplicate_max = Some(last);
        }
    }

    if let (Some(lo), Some(hi)) = (
        table.iter().map(|r| &r.shifted_last).min(),
        table.iter().map(|r| &r.shifted_last).max(),
    ) {
        report.set_metric("min_shifted_last", format_rational(lo));
        report.set_metric("max_shifted_last", format_rational(hi));
    }
    if let Some(m) = duplicate_max {
        report.set_metric("max_duplicate_shifted_last", format_rational(&m));
    }
    report.set_metric("distinct_values", seen.len());
    Ok(match failure {
        Some(cx) => report.fail(cx),
        None => report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::build_contextual_mapper;
    use crate::scalar::rat;

    #[test]
    fn psi_cases() {
        let ids = [int(0), rat(1, 2), int(3)];
        assert_eq!(psi(&ids, &rat(1, 4)), vec![int(0), int(3), int(3)]);
        assert_eq!(psi(&ids, &rat(1, 2)), vec![int(0), rat(7, 6), int(3)]);
        assert_eq!(big_psi(&ids, &rat(1, 4), &rat(3, 4)), vec![int(0), int(3), int(0)]);
    }

    #[test]
    fn oracle_windows_match_grid() {
        let o = ShiftOracle::new(&GridParams::new(2, 2, 2).unwrap());
        assert_eq!(o.windows.len(), 4);
        assert_eq!(o.windows[1], (rat(1, 4), rat(3, 4)));
        assert_eq!(o.windows[3], (rat(5, 4), rat(7, 4)));
        assert_eq!(o.shift_scale, int(4));
        assert_eq!(o.global_scale, int(64));
    }

    #[test]
    fn small_grid_table() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let table = injectivity_table(&grid, 1000).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].shifted_last, rat(3, 2));
        let mapper = build_contextual_mapper(&grid).unwrap();
        assert!(check_injectivity(&grid, &mapper, 1000).unwrap().passed);
        assert!(check_oracle_equivalence(&grid, &mapper, 1000, 3).unwrap().passed);
    }

    #[test]
    fn three_token_bounds() {
        let grid = GridParams::new(3, 1, 3).unwrap();
        let table = injectivity_table(&grid, 1000).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].shifted_last, rat(44, 3));
        assert_eq!(grid.shifted_id_bounds(), (int(6), rat(50, 3)));
    }

    #[test]
    fn tampered_layer_is_detected() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mut mapper = build_contextual_mapper(&grid).unwrap();
        mapper.layers[1].heads[0].b_q[0] = rat(-1, 4);
        let r = check_oracle_equivalence(&grid, &mapper, 1000, 3).unwrap();
        assert!(!r.passed);
        assert!(r.counterexample.unwrap().detail.contains("layer 1"));
    }

    #[test]
    fn random_inputs_avoid_window_edges() {
        let grid = GridParams::new(3, 2, 2).unwrap();
        for x in random_exact_inputs(&grid, 50, 1) {
            for v in x.data() {
                assert!(!(v.denom() % 2u32 == 0.into() || v.denom() % 3u32 == 0.into()));
            }
        }
    }
}
