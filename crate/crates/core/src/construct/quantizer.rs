use crate::grid::GridParams;
use crate::layers::{FFSublayer, Piece, PiecewiseLinear3};
use crate::scalar::{int, rat, Rational};

fn basis(d: usize, i: usize) -> Vec<Rational> {
    (0..d).map(|k| if k == i { int(1) } else { int(0) }).collect()
}

/// `Z ↦ Z + e_i φ(e_iᵀZ)` with `φ(t) = −t − δ^{−nd}` off `[0, 1)` and `0` on it.
pub fn clip_layer(grid: &GridParams, row: usize) -> FFSublayer<Rational> {
    let s = grid.sentinel();
    let outside = Piece::new(int(-1), s);
    let phi = PiecewiseLinear3::new(int(0), int(1), [outside.clone(), Piece::constant(int(0)), outside])
        .expect("middle piece is constant");
    let e = basis(grid.d(), row);
    FFSublayer::token_update(e.clone(), e, int(0), phi).expect("shapes agree")
}

/// `Z ↦ Z + e_i φ(e_iᵀZ − g)` with `φ(t) = −t` on `[0, δ)` and `0` elsewhere:
/// snaps row `i` entries in `[g, g + δ)` down to `g`.
pub fn snap_layer(grid: &GridParams, row: usize, value: Rational) -> FFSublayer<Rational> {
    let phi = PiecewiseLinear3::new(
        int(0),
        grid.delta(),
        [
            Piece::constant(int(0)),
            Piece::new(int(-1), int(0)),
            Piece::constant(int(0)),
        ],
    )
    .expect("outer pieces are constant");
    let e = basis(grid.d(), row);
    FFSublayer::token_update(e.clone(), e, -value, phi).expect("shapes agree")
}

/// `d/δ + d` layers mapping every `X ∈ S_L` to `L` and every entry outside
/// `[0, 1)` to the sentinel `−δ^{−nd}`.
pub fn build_quantizer(grid: &GridParams) -> Vec<FFSublayer<Rational>> {
    let q = grid.q() as i64;
    let mut layers = Vec::with_capacity(grid.d() * (grid.q() as usize + 1));
    for row in 0..grid.d() {
        layers.push(clip_layer(grid, row));
        for k in 0..q {
            layers.push(snap_layer(grid, row, rat(k, q)));
        }
    }
    layers
}

/// `dn/δ` snapping layers over `{0, δ, …, n − δ}`, without clipping.
pub fn build_positional_quantizer(grid: &GridParams) -> Vec<FFSublayer<Rational>> {
    let q = grid.q() as i64;
    let top = q * grid.n() as i64;
    (0..grid.d())
        .flat_map(|row| (0..top).map(move |k| snap_layer(grid, row, rat(k, q))))
        .collect()
}
