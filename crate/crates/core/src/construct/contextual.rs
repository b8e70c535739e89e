use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::layers::{AttentionHead, AttnSublayer, Normalizer};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{format_rational, int, Rational};

/// Hardmax head `scale · e⁽¹⁾ uᵀZ σ_H[(uᵀZ)ᵀ(uᵀZ − b 1ᵀ)]`, i.e. `scale · ψ(Z; b)`.
pub fn shift_head(u: &[Rational], b: Rational, scale: Rational) -> AttentionHead<Rational> {
    let d = u.len();
    let w_o = Matrix::from_fn(d, 1, |i, _| if i == 0 { scale.clone() } else { int(0) });
    let row = Matrix::row_vector(u.to_vec());
    AttentionHead::new(w_o, row.clone(), row.clone(), row, vec![b]).expect("consistent shapes")
}

/// `Z ↦ Z + scale · (ψ(Z; b) − ψ(Z; b′))`: shifts the first entry of every column whose
/// id lies in `(b, b′)` by `scale · (max id − min id)`.
pub fn build_selective_shift_layer(
    u: &[Rational],
    b: Rational,
    b_prime: Rational,
    out_scale: Rational,
) -> Result<AttnSublayer<Rational>> {
    if b >= b_prime {
        return Err(Error::InvalidParameter(format!(
            "selective shift needs b < b', got ({}, {})",
            format_rational(&b),
            format_rational(&b_prime)
        )));
    }
    let low = shift_head(u, b, out_scale.clone());
    let high = shift_head(u, b_prime, -out_scale);
    AttnSublayer::new(vec![low, high], Normalizer::Hardmax)
}

/// `Z ↦ Z + scale · ψ(Z; 0)`.
pub fn build_global_shift_layer(u: &[Rational], scale: Rational) -> AttnSublayer<Rational> {
    AttnSublayer::new(vec![shift_head(u, int(0), scale)], Normalizer::Hardmax)
        .expect("one head")
}

/// The attention stack `g_c`: one selective shift per window centre, in
/// increasing order, followed by one global shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualMapper {
    pub u: Vec<Rational>,
    /// Window centres `l`; layer `k` shifts ids in `(l_k − δ/2, l_k + δ/2)`.
    pub centres: Vec<Rational>,
    pub shift_scale: Rational,
    pub global_scale: Rational,
    pub t_l: Rational,
    pub t_r: Rational,
    pub layers: Vec<AttnSublayer<Rational>>,
}

impl ContextualMapper {
    pub fn new(
        grid: &GridParams,
        centres: Vec<Rational>,
        shift_scale: Rational,
        global_scale: Rational,
    ) -> Result<Self> {
        let u = grid.u();
        let half = grid.delta() / int(2);
        let mut layers = Vec::with_capacity(centres.len() + 1);
        for l in &centres {
            layers.push(build_selective_shift_layer(
                &u,
                l - &half,
                l + &half,
                shift_scale.clone(),
            )?);
        }
        layers.push(build_global_shift_layer(&u, global_scale.clone()));
        Ok(Self {
            u,
            centres,
            shift_scale,
            global_scale,
            t_l: grid.t_l(),
            t_r: grid.t_r(),
            layers,
        })
    }

    pub fn apply(&self, z: &SeqMatrix<Rational>) -> Result<SeqMatrix<Rational>> {
        let mut z = z.clone();
        for layer in &self.layers {
            z = layer.forward(&z)?;
        }
        Ok(z)
    }

    /// The state after the selective-shift sweep, before the global shift.
    pub fn sweep(&self, z: &SeqMatrix<Rational>) -> Result<SeqMatrix<Rational>> {
        let mut z = z.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            z = layer.forward(&z)?;
        }
        Ok(z)
    }

    /// `q(L) = uᵀ g_c(L)`.
    pub fn ids(&self, z: &SeqMatrix<Rational>) -> Result<Vec<Rational>> {
        let out = self.apply(z)?;
        Ok(column_ids(&self.u, out.as_matrix()))
    }
}

pub fn column_ids(u: &[Rational], z: &Matrix<Rational>) -> Vec<Rational> {
    (0..z.cols())
        .map(|j| (0..z.rows()).fold(int(0), |acc, i| acc + &u[i] * &z[(i, j)]))
        .collect()
}

/// `δ^{−d}` selective shifts over `l ∈ {0, δ, …, δ^{−d+1} − δ}` with scale `δ^{−d}`,
/// then a global shift with scale `δ^{−(n+1)d}`.
pub fn build_contextual_mapper(grid: &GridParams) -> Result<ContextualMapper> {
    let centres = (0..grid.column_count()).map(|c| grid.id_of_code(c)).collect();
    ContextualMapper::new(
        grid,
        centres,
        grid.inv_delta_pow(grid.d()),
        grid.inv_delta_pow((grid.n() + 1) * grid.d()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn row(v: Vec<Rational>) -> SeqMatrix<Rational> {
        SeqMatrix::from_rows(vec![v]).unwrap()
    }

    #[test]
    fn shift_outside_window_is_identity() {
        let layer = build_selective_shift_layer(&[int(1)], rat(3, 4), rat(5, 4), int(2)).unwrap();
        let z = row(vec![int(0), rat(1, 2)]);
        assert_eq!(layer.forward(&z).unwrap(), z);
    }

    #[test]
    fn two_step_sweep_small_grid() {
        let u = [int(1)];
        let first = build_selective_shift_layer(&u, rat(-1, 4), rat(1, 4), int(2)).unwrap();
        let z = first.forward(&row(vec![int(0), rat(1, 2)])).unwrap();
        assert_eq!(z.row(0), vec![int(1), rat(1, 2)]);
        let second = build_selective_shift_layer(&u, rat(1, 4), rat(3, 4), int(2)).unwrap();
        assert_eq!(second.forward(&z).unwrap().row(0), vec![int(1), rat(3, 2)]);
    }

    #[test]
    fn reversed_window_is_rejected() {
        assert!(build_selective_shift_layer(&[int(1)], int(1), int(1), int(1)).is_err());
    }

    #[test]
    fn mapper_small_grid_values() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mapper = build_contextual_mapper(&grid).unwrap();
        assert_eq!(mapper.layers.len(), 3);
        let l = row(vec![int(0), rat(1, 2)]);
        assert_eq!(mapper.sweep(&l).unwrap().row(0), vec![int(1), rat(3, 2)]);
        assert_eq!(mapper.ids(&l).unwrap(), vec![int(13), rat(27, 2)]);
        let dup = row(vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(mapper.ids(&dup).unwrap(), vec![rat(9, 2), rat(9, 2)]);
        let with_sentinel = row(vec![int(0), int(-4)]);
        assert_eq!(mapper.ids(&with_sentinel).unwrap(), vec![int(72), int(-36)]);
    }
}
