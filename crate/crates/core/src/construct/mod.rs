//! Exact constructions of modified Transformer networks (hardmax attention,
//! piecewise-linear activations) that memorize a piecewise-constant target:
//! `ḡ = g_v ∘ g_c ∘ g_q`.

pub mod contextual;
pub mod quantizer;
pub mod value;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::layers::{Network, Sublayer};
use crate::matrix::Matrix;
use crate::scalar::{int, Rational};
use crate::target::PiecewiseConstantFn;

pub use contextual::{
    build_contextual_mapper, build_global_shift_layer, build_selective_shift_layer, column_ids,
    ContextualMapper,
};
pub use quantizer::{build_positional_quantizer, build_quantizer};
pub use value::{build_value_mapper, value_layer_count};

/// Default cap on the number of sublayers a construction may emit.
pub const DEFAULT_LAYER_BUDGET: usize = 100_000;

/// Budget and enumeration limits shared by the builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub layer_budget: usize,
    pub enumeration_cap: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            layer_budget: DEFAULT_LAYER_BUDGET,
            enumeration_cap: crate::grid::DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub quantizer: usize,
    pub contextual: usize,
    pub value: usize,
}

impl LayerCounts {
    pub fn total(&self) -> usize {
        self.quantizer + self.contextual + self.value
    }
}

#[derive(Debug, Clone)]
pub struct ConstructionResult {
    pub network: Network<Rational>,
    pub layer_counts: LayerCounts,
    pub u: Vec<Rational>,
    pub t_l: Rational,
    pub t_r: Rational,
    pub grid: GridParams,
    pub mapper: ContextualMapper,
}

fn check_total(needed: u128, limits: &Limits) -> Result<()> {
    if needed > limits.layer_budget as u128 {
        Err(Error::BudgetExceeded {
            needed: needed.min(usize::MAX as u128) as usize,
            cap: limits.layer_budget,
        })
    } else {
        Ok(())
    }
}

fn assemble(
    grid: GridParams,
    quant: Vec<crate::layers::FFSublayer<Rational>>,
    mapper: ContextualMapper,
    value: Vec<crate::layers::FFSublayer<Rational>>,
) -> Result<Network<Rational>> {
    let mut sublayers: Vec<Sublayer<Rational>> =
        Vec::with_capacity(quant.len() + mapper.layers.len() + value.len());
    sublayers.extend(quant.into_iter().map(Sublayer::from));
    sublayers.extend(mapper.layers.iter().cloned().map(Sublayer::from));
    sublayers.extend(value.into_iter().map(Sublayer::from));
    Network::new(grid.d(), sublayers)
}

/// Builds `ḡ` for an equivariant target: `ḡ(X) = A_L` on distinct-column cubes and
/// `0` on duplicate-column cubes and outside `[0,1)^{d×n}`.
pub fn assemble_modified_network(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    limits: Limits,
) -> Result<ConstructionResult> {
    let shift_layers = grid.column_count() as u128 + 1;
    let quant_layers = grid.d() as u128 * (grid.q() as u128 + 1);
    check_total(quant_layers + shift_layers + value_layer_count(grid), &limits)?;

    let quant = build_quantizer(grid);
    let mapper = build_contextual_mapper(grid)?;
    let value = build_value_mapper(grid, target, &mapper, limits.layer_budget, limits.enumeration_cap)?;
    let layer_counts = LayerCounts {
        quantizer: quant.len(),
        contextual: mapper.layers.len(),
        value: value.len(),
    };
    let network = assemble(*grid, quant, mapper.clone(), value)?;
    Ok(ConstructionResult {
        network,
        layer_counts,
        u: mapper.u.clone(),
        t_l: mapper.t_l.clone(),
        t_r: mapper.t_r.clone(),
        grid: *grid,
        mapper,
    })
}

/// `E` with every row equal to `(0, 1, …, n−1)`.
pub fn positional_encoding(grid: &GridParams) -> Matrix<Rational> {
    Matrix::from_fn(grid.d(), grid.n(), |_, j| int(j as i64))
}

/// `s_j = (j−1)·Σ_{k<d} δ^{−k}`, the smallest id of column `j` after adding `E`.
pub fn positional_offset(grid: &GridParams, j: usize) -> Rational {
    let sum = (0..grid.d()).fold(int(0), |acc, k| acc + grid.inv_delta_pow(k));
    int(j as i64) * sum
}

/// The positional-encoding variant for arbitrary (not necessarily equivariant) targets.
pub fn build_positional_pipeline(
    grid: &GridParams,
    target: &PiecewiseConstantFn,
    limits: Limits,
) -> Result<ConstructionResult> {
    let (d, n) = (grid.d(), grid.n());
    let quant_layers = (d * n) as u128 * grid.q() as u128;
    let shift_layers = n as u128 * grid.column_count() as u128 + 1;
    let value_layers = n as u128 * grid.grid_size();
    check_total(quant_layers + shift_layers + value_layers, &limits)?;
    if target.grid() != grid {
        return Err(Error::InvalidParameter(format!(
            "target grid ({}) differs from construction grid ({})",
            target.grid(),
            grid
        )));
    }

    let quant = build_positional_quantizer(grid);
    let centres: Vec<Rational> = (0..n)
        .flat_map(|j| {
            let s = positional_offset(grid, j);
            (0..grid.column_count()).map(move |c| &s + grid.id_of_code(c))
        })
        .collect();
    let global = int(n as i64) * grid.inv_delta_pow((n + 1) * d + 1);
    let mapper = ContextualMapper::new(grid, centres, grid.inv_delta_pow(d), global)?;

    let e = positional_encoding(grid);
    let points = grid.enumerate(limits.enumeration_cap)?;
    let entries = value::value_entries(grid, target, &mapper, &points, |codes| {
        grid.point(codes).as_matrix().add(&e).expect("same shape")
    })?;
    let half = grid.delta() / int(2);
    let value: Vec<_> = entries
        .iter()
        .map(|entry| value::memorize_layer(&mapper.u, &half, entry))
        .collect();

    let layer_counts = LayerCounts {
        quantizer: quant.len(),
        contextual: mapper.layers.len(),
        value: value.len(),
    };
    let network = assemble(*grid, quant, mapper.clone(), value)?.with_positional_encoding(e)?;
    Ok(ConstructionResult {
        network,
        layer_counts,
        u: mapper.u.clone(),
        t_l: mapper.t_l.clone(),
        t_r: mapper.t_r.clone(),
        grid: *grid,
        mapper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SeqMatrix;
    use crate::scalar::rat;
    use crate::target::random_target;

    #[test]
    fn small_grid_counts_and_memorization() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let target = random_target(grid, true, 7).unwrap();
        let built = assemble_modified_network(&grid, &target, Limits::default()).unwrap();
        assert_eq!(
            built.layer_counts,
            LayerCounts {
                quantizer: 3,
                contextual: 3,
                value: 4
            }
        );
        for codes in [[0usize, 1], [1, 0]] {
            let out = built.network.forward(&grid.cube_center(&codes)).unwrap();
            assert_eq!(*out.as_matrix(), target.value(&codes));
        }
        let far = SeqMatrix::from_rows(vec![vec![int(2), int(2)]]).unwrap();
        assert_eq!(*built.network.forward(&far).unwrap().as_matrix(), Matrix::zeros(1, 2));
    }

    #[test]
    fn positional_pipeline_small_grid() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let target = random_target(grid, false, 11).unwrap();
        assert!(target.has_order_dependence());
        let built = build_positional_pipeline(&grid, &target, Limits::default()).unwrap();
        assert_eq!(built.layer_counts.quantizer, 4);
        assert_eq!(built.layer_counts.contextual, 5);
        assert_eq!(built.layer_counts.value, 8);
        for codes in grid.enumerate(100).unwrap() {
            let out = built.network.forward(&grid.cube_center(&codes)).unwrap();
            assert_eq!(*out.as_matrix(), target.value(&codes), "at {codes:?}");
        }
        let e = built.network.positional_encoding().unwrap();
        assert_eq!(e.column(1), vec![int(1)]);
        assert_eq!(positional_offset(&grid, 1), int(1));
        assert_eq!(built.mapper.centres, vec![int(0), rat(1, 2), int(1), rat(3, 2)]);
    }

    #[test]
    fn budget_applies_to_the_whole_stack() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let target = random_target(grid, true, 7).unwrap();
        let limits = Limits {
            layer_budget: 9,
            ..Limits::default()
        };
        assert!(matches!(
            assemble_modified_network(&grid, &target, limits),
            Err(Error::BudgetExceeded { needed: 10, cap: 9 })
        ));
    }
}
