//! Piecewise-constant target functions on the grid `G_δ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sorting_permutation, GridParams, DEFAULT_ENUMERATION_CAP};
use crate::io::{matrix_from_doc, matrix_to_doc, MatrixDoc};
use crate::matrix::{entrywise_lp_norm, Matrix, SeqMatrix};
use crate::scalar::{int, Rational, Scalar};

/// `f̄(X) = A_L` for `X ∈ S_L`, and `0` outside `[0,1)^{d×n}`.
///
/// Grid points without an explicit entry map to the zero matrix. When the
/// function is equivariant, values are stored only for sorted code tuples and
/// other points are answered by permuting columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantFn {
    grid: GridParams,
    equivariant: bool,
    table: BTreeMap<Vec<usize>, Matrix<Rational>>,
}

impl PiecewiseConstantFn {
    pub fn zero(grid: GridParams, equivariant: bool) -> Self {
        Self {
            grid,
            equivariant,
            table: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    pub fn is_equivariant(&self) -> bool {
        self.equivariant
    }

    /// Stored `(key, A)` pairs; keys are sorted code tuples when equivariant.
    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, &Matrix<Rational>)> {
        self.table.iter()
    }

    pub fn insert(&mut self, codes: &[usize], a: Matrix<Rational>) -> Result<()> {
        let (d, n) = (self.grid.d(), self.grid.n());
        if codes.len() != n || codes.iter().any(|&c| c >= self.grid.column_count()) {
            return Err(Error::InvalidParameter(format!("{codes:?} is not a grid point")));
        }
        if a.shape() != (d, n) {
            return Err(Error::Shape {
                context: "target value",
                expected: (d, n),
                actual: a.shape(),
            });
        }
        let (key, value) = if self.equivariant {
            let perm = sorting_permutation(codes);
            let key: Vec<usize> = perm.iter().map(|&j| codes[j]).collect();
            let value = a.permute_columns(&perm);
            for j in 1..n {
                if key[j] == key[j - 1] && value.column(j) != value.column(j - 1) {
                    return Err(Error::NotEquivariant(format!(
                        "equal columns of {codes:?} are assigned different outputs"
                    )));
                }
            }
            (key, value)
        } else {
            (codes.to_vec(), a)
        };
        if let Some(existing) = self.table.get(&key) {
            if *existing != value {
                return Err(Error::NotEquivariant(format!(
                    "conflicting outputs for the orbit of {codes:?}"
                )));
            }
        }
        self.table.insert(key, value);
        Ok(())
    }

    /// `A_L` for the grid point with the given column codes.
    pub fn value(&self, codes: &[usize]) -> Matrix<Rational> {
        let (d, n) = (self.grid.d(), self.grid.n());
        if self.equivariant {
            let perm = sorting_permutation(codes);
            let key: Vec<usize> = perm.iter().map(|&j| codes[j]).collect();
            match self.table.get(&key) {
                Some(sorted) => {
                    let mut out = Matrix::zeros(d, n);
                    for (k, &j) in perm.iter().enumerate() {
                        out.set_column(j, &sorted.column(k));
                    }
                    out
                }
                None => Matrix::zeros(d, n),
            }
        } else {
            self.table
                .get(codes)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(d, n))
        }
    }

    pub fn eval(&self, x: &Matrix<Rational>) -> Matrix<Rational> {
        match self.grid.quantize(x) {
            Some(codes) => self.value(&codes),
            None => Matrix::zeros(self.grid.d(), self.grid.n()),
        }
    }

    pub fn eval_f64(&self, x: &Matrix<f64>) -> Matrix<f64> {
        match self.grid.quantize_f64(x) {
            Some(codes) => self.value(&codes).to_f64(),
            None => Matrix::zeros(self.grid.d(), self.grid.n()),
        }
    }

    /// `B = max_L ‖A_L‖_p` over all stored values.
    pub fn lp_bound(&self, p: f64) -> Result<f64> {
        self.table
            .values()
            .map(|a| entrywise_lp_norm(&a.to_f64(), p))
            .try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
    }

    /// Checks `f̄(LP) = f̄(L)P` for every grid point and permutation.
    pub fn check_equivariance(&self, cap: u128) -> Result<()> {
        let perms = crate::grid::permutations(self.grid.n());
        for codes in self.grid.enumerate(cap)? {
            let base = self.value(&codes);
            for perm in &perms {
                let permuted: Vec<usize> = perm.iter().map(|&j| codes[j]).collect();
                if self.value(&permuted) != base.permute_columns(perm) {
                    return Err(Error::NotEquivariant(format!(
                        "f(LP) != f(L)P at L = {codes:?}, P = {perm:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when some `L` and permutation `P` give `f̄(LP) ≠ f̄(L)P`.
    pub fn has_order_dependence(&self) -> bool {
        self.check_equivariance(DEFAULT_ENUMERATION_CAP).is_err()
    }
}

fn table_keys(grid: &GridParams, equivariant: bool) -> Result<Vec<Vec<usize>>> {
    if equivariant {
        grid.orbit_representatives(DEFAULT_ENUMERATION_CAP)
    } else {
        grid.enumerate(DEFAULT_ENUMERATION_CAP)
    }
}

/// Samples `f` at every cube centre: `A_L = f(L + (δ/2)·1 1ᵀ)`.
pub fn piecewise_constant_approx<F>(
    grid: GridParams,
    equivariant: bool,
    f: F,
) -> Result<PiecewiseConstantFn>
where
    F: Fn(&SeqMatrix<f64>) -> SeqMatrix<f64>,
{
    piecewise_constant_approx_exact(grid, equivariant, |x| {
        let y = f(&x.to_f64());
        let vals = y.as_matrix().data().iter();
        if vals.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        SeqMatrix::new(y.as_matrix().map(|v| <Rational as Scalar>::from_f64(*v)))
    })
}

pub fn piecewise_constant_approx_exact<F>(
    grid: GridParams,
    equivariant: bool,
    f: F,
) -> Result<PiecewiseConstantFn>
where
    F: Fn(&SeqMatrix<Rational>) -> Result<SeqMatrix<Rational>>,
{
    let mut out = PiecewiseConstantFn::zero(grid, equivariant);
    for codes in table_keys(&grid, equivariant)? {
        let value = f(&grid.cube_center(&codes))?;
        out.insert(&codes, value.into_matrix())?;
    }
    Ok(out)
}

/// Seeded random nonzero values in `{±1/4, ±2/4, …, ±2}`.
///
/// Equivariant targets draw one output column per distinct input column, so
/// equal input columns always receive equal outputs.
pub fn random_target(grid: GridParams, equivariant: bool, seed: u64) -> Result<PiecewiseConstantFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n) = (grid.d(), grid.n());
    let draw = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(1..=8i64);
        let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
        Rational::new((sign * k).into(), 4.into())
    };
    let mut out = PiecewiseConstantFn::zero(grid, equivariant);
    for codes in table_keys(&grid, equivariant)? {
        let mut a = Matrix::zeros(d, n);
        let mut by_code: BTreeMap<usize, Vec<Rational>> = BTreeMap::new();
        for (j, &c) in codes.iter().enumerate() {
            let col = if equivariant {
                by_code
                    .entry(c)
                    .or_insert_with(|| (0..d).map(|_| draw(&mut rng)).collect())
                    .clone()
            } else {
                (0..d).map(|_| draw(&mut rng)).collect()
            };
            a.set_column(j, &col);
        }
        out.insert(&codes, a)?;
    }
    Ok(out)
}

/// `f̄(X) = C_L`, the cube centre of the cube containing `X`.
pub fn identity_target(grid: GridParams) -> Result<PiecewiseConstantFn> {
    piecewise_constant_approx_exact(grid, true, |x| Ok(x.clone()))
}

pub fn constant_target(grid: GridParams, value: Rational) -> Result<PiecewiseConstantFn> {
    piecewise_constant_approx_exact(grid, true, |x| {
        SeqMatrix::new(Matrix::filled(x.d(), x.n(), value.clone()))
    })
}

/// File format for targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetDoc {
    pub delta: String,
    pub d: usize,
    pub n: usize,
    pub equivariant: bool,
    pub entries: Vec<TargetEntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetEntryDoc {
    #[serde(rename = "L")]
    pub l: MatrixDoc,
    #[serde(rename = "A")]
    pub a: MatrixDoc,
}

impl PiecewiseConstantFn {
    pub fn from_doc(doc: &TargetDoc) -> Result<Self> {
        let grid = GridParams::parse(&doc.delta, doc.d, doc.n)?;
        let mut out = Self::zero(grid, doc.equivariant);
        for entry in &doc.entries {
            let l: Matrix<Rational> = matrix_from_doc(&entry.l)?;
            let codes = grid.codes_of(&l).ok_or_else(|| {
                Error::InvalidParameter(format!("L = {:?} is not a point of the grid", l.to_strings()))
            })?;
            out.insert(&codes, matrix_from_doc(&entry.a)?)?;
        }
        Ok(out)
    }

    pub fn to_doc(&self) -> Result<TargetDoc> {
        let entries = self
            .table
            .iter()
            .map(|(codes, a)| {
                Ok(TargetEntryDoc {
                    l: matrix_to_doc(self.grid.point(codes).as_matrix())?,
                    a: matrix_to_doc(a)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TargetDoc {
            delta: self.grid.delta_string(),
            d: self.grid.d(),
            n: self.grid.n(),
            equivariant: self.equivariant,
            entries,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc()?)?)
    }

    /// Fraction of grid cubes whose point has a repeated column: `|G_δ \ G̃_δ| / |G_δ|`.
    pub fn duplicate_fraction(grid: &GridParams) -> Rational {
        let total = grid.grid_size();
        let distinct = grid.distinct_grid_size();
        Rational::new(((total - distinct) as i64).into(), (total as i64).into())
    }

    pub fn is_zero(&self) -> bool {
        self.table.values().all(|a| a.data().iter().all(|v| *v == int(0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn grid() -> GridParams {
        GridParams::new(2, 1, 2).unwrap()
    }

    #[test]
    fn zero_target_is_zero_everywhere() {
        let f = piecewise_constant_approx(grid(), true, |x| SeqMatrix::new(Matrix::zeros(x.d(), x.n())).unwrap()).unwrap();
        for codes in grid().enumerate(100).unwrap() {
            assert_eq!(f.value(&codes), Matrix::zeros(1, 2));
        }
    }

    #[test]
    fn identity_target_takes_cube_centres() {
        let f = piecewise_constant_approx(grid(), true, |x| x.clone()).unwrap();
        assert_eq!(f.value(&[0, 1]).row(0), vec![rat(1, 4), rat(3, 4)]);
        assert_eq!(f.value(&[1, 0]).row(0), vec![rat(3, 4), rat(1, 4)]);
        assert_eq!(f.entries().count(), 3);
        assert_eq!(f, identity_target(grid()).unwrap());
    }

    #[test]
    fn non_finite_outputs_are_rejected() {
        let r = piecewise_constant_approx(grid(), false, |x| {
            SeqMatrix::new(Matrix::filled(x.d(), x.n(), f64::NAN)).unwrap()
        });
        assert!(matches!(r, Err(Error::NonFinite)));
    }

    #[test]
    fn random_equivariant_target_is_equivariant_and_nonzero() {
        let g = GridParams::new(2, 2, 3).unwrap();
        let f = random_target(g, true, 7).unwrap();
        f.check_equivariance(10_000).unwrap();
        for codes in g.enumerate(10_000).unwrap() {
            assert!(f.value(&codes).data().iter().all(|v| *v != int(0)));
        }
        assert_eq!(f, random_target(g, true, 7).unwrap());
    }

    #[test]
    fn random_plain_target_depends_on_order() {
        let f = random_target(grid(), false, 3).unwrap();
        assert!(f.has_order_dependence());
    }

    #[test]
    fn conflicting_equivariant_entries_are_rejected() {
        let mut f = PiecewiseConstantFn::zero(grid(), true);
        f.insert(&[0, 1], Matrix::from_rows(vec![vec![int(1), int(2)]]).unwrap()).unwrap();
        f.insert(&[1, 0], Matrix::from_rows(vec![vec![int(2), int(1)]]).unwrap()).unwrap();
        assert!(f
            .insert(&[1, 0], Matrix::from_rows(vec![vec![int(1), int(2)]]).unwrap())
            .is_err());
        assert!(f
            .insert(&[1, 1], Matrix::from_rows(vec![vec![int(1), int(2)]]).unwrap())
            .is_err());
    }

    #[test]
    fn json_roundtrip_and_missing_entries() {
        let text = r#"{"delta": "1/2", "d": 1, "n": 2, "equivariant": false,
            "entries": [{"L": [["0", "1/2"]], "A": [[1, "-0.5"]]}]}"#;
        let f = PiecewiseConstantFn::from_json(text).unwrap();
        assert_eq!(f.value(&[0, 1]).row(0), vec![int(1), rat(-1, 2)]);
        assert_eq!(f.value(&[1, 0]), Matrix::zeros(1, 2));
        let back = PiecewiseConstantFn::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let off_grid = text.replace(r#""1/2"]]"#, r#""1/3"]]"#);
        assert!(PiecewiseConstantFn::from_json(&off_grid).is_err());
    }

    #[test]
    fn evaluation_outside_unit_cube_is_zero() {
        let f = constant_target(grid(), int(3)).unwrap();
        let inside = Matrix::from_rows(vec![vec![rat(1, 10), rat(9, 10)]]).unwrap();
        assert_eq!(f.eval(&inside), Matrix::filled(1, 2, int(3)));
        let outside = Matrix::from_rows(vec![vec![int(1), rat(9, 10)]]).unwrap();
        assert_eq!(f.eval(&outside), Matrix::zeros(1, 2));
        assert_eq!(f.eval_f64(&Matrix::from_rows(vec![vec![-0.1, 0.5]]).unwrap()), Matrix::zeros(1, 2));
    }

    #[test]
    fn duplicate_fractions() {
        assert_eq!(PiecewiseConstantFn::duplicate_fraction(&grid()), rat(1, 2));
        let g = GridParams::new(4, 1, 2).unwrap();
        assert_eq!(PiecewiseConstantFn::duplicate_fraction(&g), rat(1, 4));
    }
}
