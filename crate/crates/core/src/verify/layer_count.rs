use serde::Serialize;

use crate::construct::{assemble_modified_network, build_positional_pipeline, value_layer_count, Limits};
use crate::error::Result;
use crate::grid::GridParams;
use crate::target::PiecewiseConstantFn;

use super::report::{float_metric, Counterexample, VerificationReport};

/// Constant `c` in the value-stack bound `c · n · (1/δ)^{dn} / n!`.
pub const VALUE_BOUND_CONSTANT: u128 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCountRow {
    pub variant: &'static str,
    pub component: &'static str,
    pub measured: u128,
    pub closed_form: u128,
    /// Asymptotic bound the measured size is compared against, when one applies.
    pub bound: Option<u128>,
}

impl LayerCountRow {
    pub fn holds(&self) -> bool {
        self.measured == self.closed_form && self.bound.is_none_or(|b| self.measured <= b)
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// `c · n · q^{dn} / n!`, rounded down.
pub fn value_bound(grid: &GridParams) -> u128 {
    VALUE_BOUND_CONSTANT * grid.n() as u128 * grid.grid_size() / factorial(grid.n())
}

/// Measured sizes of both pipelines, built with the zero target, against their closed forms.
pub fn layer_count_table(grid: &GridParams, limits: Limits) -> Result<Vec<LayerCountRow>> {
    let (q, d, n) = (grid.q() as u128, grid.d() as u128, grid.n() as u128);
    let c = grid.column_count() as u128;
    let standard = assemble_modified_network(grid, &PiecewiseConstantFn::zero(*grid, true), limits)?;
    let mut rows = vec![
        LayerCountRow {
            variant: "equivariant",
            component: "quantizer",
            measured: standard.layer_counts.quantizer as u128,
            closed_form: d * q + d,
            bound: None,
        },
        LayerCountRow {
            variant: "equivariant",
            component: "contextual",
            measured: standard.layer_counts.contextual as u128,
            closed_form: c + 1,
            bound: None,
        },
        LayerCountRow {
            variant: "equivariant",
            component: "value",
            measured: standard.layer_counts.value as u128,
            closed_form: value_layer_count(grid),
            bound: Some(value_bound(grid)),
        },
    ];
    let positional = build_positional_pipeline(grid, &PiecewiseConstantFn::zero(*grid, false), limits)?;
    rows.extend([
        LayerCountRow {
            variant: "positional",
            component: "quantizer",
            measured: positional.layer_counts.quantizer as u128,
            closed_form: d * n * q,
            bound: None,
        },
        LayerCountRow {
            variant: "positional",
            component: "contextual",
            measured: positional.layer_counts.contextual as u128,
            closed_form: n * c + 1,
            bound: None,
        },
        LayerCountRow {
            variant: "positional",
            component: "value",
            measured: positional.layer_counts.value as u128,
            closed_form: n * grid.grid_size(),
            bound: None,
        },
    ]);
    Ok(rows)
}

pub fn check_layer_counts(grid: &GridParams, limits: Limits) -> Result<VerificationReport> {
    let rows = layer_count_table(grid, limits)?;
    let mut report = VerificationReport::new("layer-count").with_grid(grid);
    for row in &rows {
        report.set_metric(&format!("{}_{}", row.variant, row.component), row.measured as u64);
    }
    report.set_metric("value_bound", value_bound(grid) as u64);
    let value = rows.iter().find(|r| r.component == "value").expect("value row");
    report.set_metric(
        "value_ratio_to_bound",
        float_metric(value.measured as f64 / value_bound(grid).max(1) as f64),
    );
    Ok(match rows.iter().find(|r| !r.holds()) {
        None => report,
        Some(r) => {
            let x = grid.point(&vec![0; grid.n()]);
            report.fail(Counterexample::new(
                x.as_matrix(),
                format!(
                    "{} {}: measured {}, closed form {}, bound {:?}",
                    r.variant, r.component, r.measured, r.closed_form, r.bound
                ),
            ))
        }
    })
}
