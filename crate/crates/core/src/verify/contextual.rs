use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::construct::ContextualMapper;
use crate::error::Result;
use crate::grid::{has_distinct_columns, GridParams};
use crate::matrix::SeqMatrix;
use crate::scalar::{format_rational, Rational};

use super::report::{Counterexample, VerificationReport};

/// Number of random multi-sentinel points used when `G⁺_δ` is too large to enumerate.
pub const MULTI_SENTINEL_SAMPLES: usize = 100;

/// Extended grids up to this size are enumerated in full.
pub const FULL_EXTENDED_LIMIT: u128 = 100_000;

fn inside(id: &Rational, lo: &Rational, hi: &Rational) -> bool {
    id >= lo && id <= hi
}

/// Points of `G⁺_δ` that contain a sentinel entry, and how they were chosen.
pub fn sentinel_points(grid: &GridParams, cap: u128, seed: u64) -> Result<(Vec<SeqMatrix<Rational>>, &'static str)> {
    if grid.extended_grid_size() <= FULL_EXTENDED_LIMIT.min(cap) {
        return Ok((grid.enumerate_sentinel_points(cap)?, "exhaustive"));
    }
    let mut points = grid.one_sentinel_column_points(cap)?;
    points.extend(grid.random_multi_sentinel_points(MULTI_SENTINEL_SAMPLES, seed));
    Ok((points, "one-sentinel-column+random"))
}

/// Exhaustive check of the four contextual-mapping properties over every grid
/// point (all orderings), plus sentinel-bearing points:
///
/// 1. ids within a distinct-column point are pairwise distinct;
/// 2. ids of distinct-column points that are not column permutations of each other never coincide;
/// 3. ids of distinct-column points lie in `[t_l, t_r]`;
/// 4. ids of every other point of `G⁺_δ` lie outside `[t_l, t_r]`.
pub fn check_contextual_properties(
    grid: &GridParams,
    mapper: &ContextualMapper,
    cap: u128,
    seed: u64,
) -> Result<VerificationReport> {
    let (t_l, t_r) = (&mapper.t_l, &mapper.t_r);
    let points = grid.enumerate(cap)?;
    let ids = points
        .par_iter()
        .map(|codes| mapper.ids(&grid.point(codes)))
        .collect::<Result<Vec<_>>>()?;
    let (extra, extra_mode) = sentinel_points(grid, cap, seed)?;
    let extra_ids = extra
        .par_iter()
        .map(|x| mapper.ids(x))
        .collect::<Result<Vec<_>>>()?;

    let mut report = VerificationReport::new("contextual-mapping")
        .with_grid(grid)
        .with_scope("grid_points", points.len())
        .with_scope("sentinel_points", extra.len())
        .with_scope("sentinel_coverage", extra_mode)
        .with_metric("t_l", format_rational(t_l))
        .with_metric("t_r", format_rational(t_r))
        .with_seed(seed);

    let mut owner: BTreeMap<&Rational, Vec<usize>> = BTreeMap::new();
    let mut orbits: BTreeSet<Vec<usize>> = BTreeSet::new();
    let (mut distinct, mut duplicate) = (0usize, 0usize);
    let mut failure: Option<Counterexample> = None;
    let mut cat1_range: Option<(Rational, Rational)> = None;

    for (codes, q) in points.iter().zip(&ids) {
        let fail = |msg: String| Some(Counterexample::new(grid.point(codes).as_matrix(), msg));
        if has_distinct_columns(codes) {
            distinct += 1;
            let mut key = codes.clone();
            key.sort_unstable();
            orbits.insert(key.clone());
            let mut sorted_ids = q.clone();
            sorted_ids.sort();
            if let Some(w) = sorted_ids.windows(2).find(|w| w[0] == w[1]) {
                failure = failure.or_else(|| fail(format!("property 1: repeated id {}", format_rational(&w[0]))));
            }
            for id in q {
                if !inside(id, t_l, t_r) {
                    failure = failure.or_else(|| fail(format!("property 3: id {} outside [t_l, t_r]", format_rational(id))));
                }
                let (lo, hi) = cat1_range.get_or_insert_with(|| (id.clone(), id.clone()));
                if id < lo {
                    *lo = id.clone();
                }
                if id > hi {
                    *hi = id.clone();
                }
            }
            // property 2: an id may only be shared with column permutations of this point
            for id in q {
                match owner.get(id) {
                    Some(prev) if *prev != key => {
                        failure = failure.or_else(|| {
                            fail(format!(
                                "property 2: id {} also produced by orbit {:?}",
                                format_rational(id),
                                prev
                            ))
                        });
                    }
                    Some(_) => {}
                    None => {
                        owner.insert(id, key.clone());
                    }
                }
            }
        } else {
            duplicate += 1;
            if let Some(id) = q.iter().find(|id| inside(id, t_l, t_r)) {
                failure = failure.or_else(|| {
                    fail(format!("property 4: duplicate-column id {} inside [t_l, t_r]", format_rational(id)))
                });
            }
        }
    }
    for (x, q) in extra.iter().zip(&extra_ids) {
        if let Some(id) = q.iter().find(|id| inside(id, t_l, t_r)) {
            failure = failure.or_else(|| {
                Some(Counterexample::new(
                    x.as_matrix(),
                    format!("property 4: sentinel-point id {} inside [t_l, t_r]", format_rational(id)),
                ))
            });
        }
    }

    report.set_metric("distinct_points", distinct);
    report.set_metric("duplicate_points", duplicate);
    report.set_metric("orbits", orbits.len());
    report.set_metric("distinct_ids", owner.len());
    if let Some((lo, hi)) = cat1_range {
        report.set_metric("min_distinct_id", format_rational(&lo));
        report.set_metric("max_distinct_id", format_rational(&hi));
    }
    Ok(match failure {
        Some(cx) => report.fail(cx),
        None => report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::build_contextual_mapper;
    use crate::verify::DEFAULT_SEED;

    #[test]
    fn small_grids_pass() {
        for (q, d, n, orbits) in [(2, 1, 2, 1), (3, 1, 3, 1), (2, 2, 2, 6)] {
            let grid = GridParams::new(q, d, n).unwrap();
            let mapper = build_contextual_mapper(&grid).unwrap();
            let r = check_contextual_properties(&grid, &mapper, 1_000_000, DEFAULT_SEED).unwrap();
            assert!(r.passed, "{:?}", r.counterexample);
            assert_eq!(r.metrics["orbits"], orbits);
        }
    }

    #[test]
    fn small_grid_metrics() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mapper = build_contextual_mapper(&grid).unwrap();
        let r = check_contextual_properties(&grid, &mapper, 1_000_000, 1).unwrap();
        assert_eq!(r.metrics["min_distinct_id"], "13");
        assert_eq!(r.metrics["max_distinct_id"], "27/2");
        assert_eq!(r.metrics["t_l"], "8");
        assert_eq!(r.metrics["t_r"], "16");
        assert_eq!(r.scope["sentinel_coverage"], "exhaustive");
    }

    #[test]
    fn broken_mapper_is_caught() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mut mapper = build_contextual_mapper(&grid).unwrap();
        // without the global shift, distinct ids fall below t_l
        mapper.layers.pop();
        let r = check_contextual_properties(&grid, &mapper, 1_000_000, 1).unwrap();
        assert!(!r.passed);
        assert!(r.counterexample.unwrap().detail.starts_with("property 3"));
    }
}
