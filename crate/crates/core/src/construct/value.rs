use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::layers::{FFSublayer, Piece, PiecewiseLinear3};
use crate::matrix::Matrix;
use crate::scalar::{format_rational, int, Rational, Scalar};
use crate::target::PiecewiseConstantFn;

use super::contextual::{column_ids, ContextualMapper};

/// One memorization layer: columns whose id is within `δ/2` of `id` receive `+direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEntry {
    pub id: Rational,
    pub direction: Vec<Rational>,
    /// Id of the column after the layer fires, `uᵀA_{:,j}`.
    pub output_id: Rational,
}

/// Builds the entries for every distinct-column point in `points`, sorted by id.
///
/// `grid_point` maps a code tuple to the quantized input fed to the mapper
/// (the positional pipeline shifts it by `E`).
pub fn value_entries(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    mapper: &ContextualMapper,
    points: &[Vec<usize>],
    grid_point: impl Fn(&[usize]) -> Matrix<Rational>,
) -> Result<Vec<ValueEntry>> {
    let mut entries = Vec::with_capacity(points.len() * grid.n());
    for codes in points {
        let input = crate::matrix::SeqMatrix::new(grid_point(codes))?;
        let gc = mapper.apply(&input)?.into_matrix();
        let ids = column_ids(&mapper.u, &gc);
        let a = target.value(codes);
        let out_ids = column_ids(&mapper.u, &a);
        for j in 0..grid.n() {
            let direction: Vec<Rational> = a
                .column(j)
                .into_iter()
                .zip(gc.column(j))
                .map(|(t, g)| t - g)
                .collect();
            entries.push(ValueEntry {
                id: ids[j].clone(),
                direction,
                output_id: out_ids[j].clone(),
            });
        }
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    check_windows(grid, &entries)?;
    Ok(entries)
}

/// Windows must be pairwise disjoint, and no mapped column may land in a later window.
fn check_windows(grid: &GridParams, entries: &[ValueEntry]) -> Result<()> {
    let delta = grid.delta();
    let half = &delta / int(2);
    for pair in entries.windows(2) {
        if &pair[1].id - &pair[0].id < delta {
            return Err(Error::WindowCollision {
                first: format_rational(&pair[0].id),
                second: format_rational(&pair[1].id),
            });
        }
    }
    for (k, entry) in entries.iter().enumerate() {
        let out = &entry.output_id;
        // first later window whose upper edge lies above the output id
        let later = &entries[k + 1..];
        let pos = later.partition_point(|e| &e.id + &half <= *out);
        if let Some(hit) = later.get(pos) {
            if &hit.id - &half <= *out {
                return Err(Error::OutputCollision {
                    id: format_rational(out),
                    window: format_rational(&hit.id),
                });
            }
        }
    }
    Ok(())
}

pub fn memorize_layer(u: &[Rational], half_delta: &Rational, entry: &ValueEntry) -> FFSublayer<Rational> {
    let phi = PiecewiseLinear3::window(-half_delta.clone(), half_delta.clone(), int(1))
        .expect("window pieces are constant");
    FFSublayer::token_update(entry.direction.clone(), u.to_vec(), -entry.id.clone(), phi)
        .expect("shapes agree")
}

/// `Z ↦ Z − (M+1)·1 φ(uᵀZ)` with `φ = 0` on `[t_l, t_r]` and `1` elsewhere.
///
/// Ids lie on the `δ` lattice, so the closed right end is realised as `t_r + δ/2`.
pub fn range_layer(grid: &GridParams, mapper: &ContextualMapper, max_entry: &Rational) -> FFSublayer<Rational> {
    let half = grid.delta() / int(2);
    let phi = PiecewiseLinear3::new(
        mapper.t_l.clone(),
        &mapper.t_r + &half,
        [
            Piece::constant(int(1)),
            Piece::constant(int(0)),
            Piece::constant(int(1)),
        ],
    )
    .expect("constant pieces");
    let shift = -(max_entry + int(1));
    FFSublayer::token_update(vec![shift; grid.d()], mapper.u.clone(), int(0), phi)
        .expect("shapes agree")
}

/// `Z ↦ Z + e_i φ(e_iᵀZ)` with `φ(t) = −t` for `t < 0`, else `0`.
pub fn zeroing_layer(grid: &GridParams, row: usize) -> FFSublayer<Rational> {
    let phi = PiecewiseLinear3::new(
        int(0),
        int(1),
        [
            Piece::new(int(-1), int(0)),
            Piece::constant(int(0)),
            Piece::constant(int(0)),
        ],
    )
    .expect("constant pieces");
    let e: Vec<Rational> = (0..grid.d()).map(|k| if k == row { int(1) } else { int(0) }).collect();
    FFSublayer::token_update(e.clone(), e, int(0), phi).expect("shapes agree")
}

/// Largest entry of `g_c(L)` over the whole extended grid `G⁺_δ`.
pub fn max_mapped_entry(grid: &GridParams, mapper: &ContextualMapper, cap: u128) -> Result<Rational> {
    let mut best: Option<Rational> = None;
    let mut consider = |m: &Matrix<Rational>| {
        if let Some(v) = Rational::max_of(m.data()) {
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
    };
    for codes in grid.enumerate(cap)? {
        consider(mapper.apply(&grid.point(&codes))?.as_matrix());
    }
    for point in grid.enumerate_sentinel_points(cap)? {
        consider(mapper.apply(&point)?.as_matrix());
    }
    Ok(best.unwrap_or_else(|| int(0)))
}

/// Closed-form size of the equivariant value stack: `1 + d + n·C(δ^{−d}, n)`.
pub fn value_layer_count(grid: &GridParams) -> u128 {
    let reps = grid.distinct_grid_size() / (1..=grid.n() as u128).product::<u128>();
    1 + grid.d() as u128 + grid.n() as u128 * reps
}

/// Range layer, `d` zeroing layers, then one memorization layer per distinct id of
/// the distinct-column orbit representatives, in increasing id order.
pub fn build_value_mapper(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    mapper: &ContextualMapper,
    budget: usize,
    enumeration_cap: u128,
) -> Result<Vec<FFSublayer<Rational>>> {
    if !target.is_equivariant() {
        return Err(Error::NotEquivariant(
            "the value mapper over orbit representatives needs an equivariant target".into(),
        ));
    }
    if target.grid() != grid {
        return Err(Error::InvalidParameter(format!(
            "target grid ({}) differs from construction grid ({})",
            target.grid(),
            grid
        )));
    }
    let needed = value_layer_count(grid);
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: needed.min(usize::MAX as u128) as usize,
            cap: budget,
        });
    }
    let reps = grid.distinct_representatives(enumeration_cap)?;
    let entries = value_entries(grid, target, mapper, &reps, |codes| {
        grid.point(codes).into_matrix()
    })?;
    let max_entry = max_mapped_entry(grid, mapper, enumeration_cap)?;
    let half = grid.delta() / int(2);

    let mut layers = Vec::with_capacity(needed as usize);
    layers.push(range_layer(grid, mapper, &max_entry));
    layers.extend((0..grid.d()).map(|row| zeroing_layer(grid, row)));
    layers.extend(entries.iter().map(|e| memorize_layer(&mapper.u, &half, e)));
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::contextual::build_contextual_mapper;
    use crate::layers::{Network, Sublayer};
    use crate::scalar::rat;
    use crate::target::{constant_target, random_target};

    #[test]
    fn counts_on_small_grids() {
        for (q, expected) in [(2, 4), (3, 8), (4, 14)] {
            let grid = GridParams::new(q, 1, 2).unwrap();
            assert_eq!(value_layer_count(&grid), expected);
            let mapper = build_contextual_mapper(&grid).unwrap();
            let target = random_target(grid, true, 1).unwrap();
            let layers = build_value_mapper(&grid, &target, &mapper, 100, 10_000).unwrap();
            assert_eq!(layers.len() as u128, expected);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let grid = GridParams::new(4, 1, 2).unwrap();
        let mapper = build_contextual_mapper(&grid).unwrap();
        let target = random_target(grid, true, 1).unwrap();
        assert!(matches!(
            build_value_mapper(&grid, &target, &mapper, 13, 10_000),
            Err(Error::BudgetExceeded { needed: 14, cap: 13 })
        ));
    }

    #[test]
    fn maps_contexts_to_targets_and_zeroes_the_rest() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mapper = build_contextual_mapper(&grid).unwrap();
        let target = constant_target(grid, rat(5, 4)).unwrap();
        let layers = build_value_mapper(&grid, &target, &mapper, 100, 10_000).unwrap();
        let net = Network::new(1, layers.into_iter().map(Sublayer::from).collect()).unwrap();
        for codes in grid.enumerate(100).unwrap() {
            let out = net.forward(&mapper.apply(&grid.point(&codes)).unwrap()).unwrap();
            let expected = if codes[0] != codes[1] { target.value(&codes) } else { Matrix::zeros(1, 2) };
            assert_eq!(*out.as_matrix(), expected);
        }
    }

    #[test]
    fn output_landing_in_a_later_window_is_detected() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mk = |id: Rational, out: Rational| ValueEntry { id, direction: vec![int(0)], output_id: out };
        let entries = vec![mk(int(13), int(27) / int(2)), mk(int(27) / int(2), int(0))];
        assert!(matches!(check_windows(&grid, &entries), Err(Error::OutputCollision { .. })));
        let entries = vec![mk(int(13), int(0)), mk(int(13), int(0))];
        assert!(matches!(check_windows(&grid, &entries), Err(Error::WindowCollision { .. })));
    }
}
