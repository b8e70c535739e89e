//! The uniform grid `{0, δ, …, 1−δ}^{d×n}`, its sentinel extension and the
//! derived constants used by the constructions.
//!
//! A quantized column is identified with its *code* `c = Σ_i k_i q^i`, where
//! `L_{i,j} = k_i/q` and `q = 1/δ`. The column id `uᵀL_{:,j}` is then `c/q`.

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SeqMatrix};
use crate::scalar::{int, parse_rational, pow_int, rat, Rational};

/// Largest number of grid points any exhaustive routine will enumerate by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridParams {
    q: u64,
    d: usize,
    n: usize,
}

/// Serialized form: `{"delta": "1/q", "d": .., "n": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridDoc {
    delta: String,
    d: usize,
    n: usize,
}

impl Serialize for GridParams {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        GridDoc {
            delta: self.delta_string(),
            d: self.d,
            n: self.n,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridParams {
    fn deserialize<De: serde::Deserializer<'de>>(de: De) -> std::result::Result<Self, De::Error> {
        let doc = GridDoc::deserialize(de)?;
        GridParams::parse(&doc.delta, doc.d, doc.n).map_err(serde::de::Error::custom)
    }
}

/// Parses a step of the form `"1/q"` (or an equivalent such as `"0.25"`) and returns `q`.
pub fn parse_delta(s: &str) -> Result<u64> {
    let delta = parse_rational(s)?;
    let bad = || Error::InvalidGrid(format!("delta must be 1/q for an integer q >= 2, got {s:?}"));
    if delta <= int(0) {
        return Err(bad());
    }
    let inv = delta.recip();
    if !inv.is_integer() {
        return Err(bad());
    }
    let q: u64 = inv.to_integer().try_into().map_err(|_| bad())?;
    if q < 2 {
        return Err(bad());
    }
    Ok(q)
}

impl GridParams {
    pub fn new(q: u64, d: usize, n: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidGrid(format!("1/delta must be at least 2, got {q}")));
        }
        if d == 0 {
            return Err(Error::InvalidGrid("d must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::SequenceTooShort(n));
        }
        if (d * n) as u64 > 64 || q > u32::MAX as u64 {
            return Err(Error::InvalidGrid(format!(
                "grid (1/{q}, d={d}, n={n}) is far beyond any enumerable size"
            )));
        }
        Ok(Self { q, d, n })
    }

    pub fn parse(delta: &str, d: usize, n: usize) -> Result<Self> {
        Self::new(parse_delta(delta)?, d, n)
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> Rational {
        rat(1, self.q as i64)
    }

    pub fn delta_string(&self) -> String {
        format!("1/{}", self.q)
    }

    /// `q^e = δ^{−e}` as an exact integer.
    pub fn inv_delta_pow(&self, e: usize) -> Rational {
        pow_int(self.q, e as u32)
    }

    /// `−δ^{−nd}`.
    pub fn sentinel(&self) -> Rational {
        -self.inv_delta_pow(self.n * self.d)
    }

    /// `u = (1, δ^{−1}, …, δ^{−d+1})`.
    pub fn u(&self) -> Vec<Rational> {
        (0..self.d).map(|i| self.inv_delta_pow(i)).collect()
    }

    /// `δ^{−d} − 1`.
    fn span(&self) -> Rational {
        self.inv_delta_pow(self.d) - int(1)
    }

    /// `t_l = δ^{−2nd+1}(δ^{−d} − 1)`.
    pub fn t_l(&self) -> Rational {
        self.inv_delta_pow(2 * self.n * self.d - 1) * self.span()
    }

    /// `t_r = δ^{−(2n+1)d+1}(δ^{−d} − 1)`.
    pub fn t_r(&self) -> Rational {
        self.inv_delta_pow((2 * self.n + 1) * self.d - 1) * self.span()
    }

    /// Lower and upper bounds on the last shifted id `l̃_n` of a distinct-column point.
    pub fn shifted_id_bounds(&self) -> (Rational, Rational) {
        let (n, d) = (self.n, self.d);
        let lower = self.inv_delta_pow((n - 1) * d - 1) * self.span();
        let upper = self.inv_delta_pow(n * d - 1) * self.span()
            - self.delta() * self.span() * self.span();
        (lower, upper)
    }

    /// Number of distinct quantized columns, `δ^{−d}`.
    pub fn column_count(&self) -> usize {
        (self.q as usize).pow(self.d as u32)
    }

    /// `|G_δ| = δ^{−dn}`, saturating.
    pub fn grid_size(&self) -> u128 {
        (self.q as u128)
            .checked_pow((self.d * self.n) as u32)
            .unwrap_or(u128::MAX)
    }

    /// `|G⁺_δ| = (δ^{−1} + 1)^{dn}`, saturating.
    pub fn extended_grid_size(&self) -> u128 {
        (self.q as u128 + 1)
            .checked_pow((self.d * self.n) as u32)
            .unwrap_or(u128::MAX)
    }

    /// Number of points of `G̃_δ`, the subgrid with pairwise distinct columns.
    pub fn distinct_grid_size(&self) -> u128 {
        let c = self.column_count() as u128;
        (0..self.n as u128).fold(1u128, |acc, k| acc.saturating_mul(c.saturating_sub(k)))
    }

    pub fn column(&self, code: usize) -> Vec<Rational> {
        let q = self.q as usize;
        let mut rest = code;
        (0..self.d)
            .map(|_| {
                let k = rest % q;
                rest /= q;
                rat(k as i64, self.q as i64)
            })
            .collect()
    }

    /// Column id `uᵀL_{:,j} = c/q`.
    pub fn id_of_code(&self, code: usize) -> Rational {
        rat(code as i64, self.q as i64)
    }

    /// Inverse of [`GridParams::column`]; `None` if an entry is off the grid.
    pub fn code_of_column(&self, col: &[Rational]) -> Option<usize> {
        if col.len() != self.d {
            return None;
        }
        let q = BigInt::from(self.q);
        let mut code = 0usize;
        for (i, v) in col.iter().enumerate() {
            let scaled = v * Rational::from_integer(q.clone());
            if !scaled.is_integer() {
                return None;
            }
            let k: i64 = scaled.to_integer().try_into().ok()?;
            if k < 0 || k as u64 >= self.q {
                return None;
            }
            code += k as usize * (self.q as usize).pow(i as u32);
        }
        Some(code)
    }

    pub fn codes_of(&self, l: &Matrix<Rational>) -> Option<Vec<usize>> {
        if l.shape() != (self.d, self.n) {
            return None;
        }
        (0..self.n).map(|j| self.code_of_column(&l.column(j))).collect()
    }

    pub fn point(&self, codes: &[usize]) -> SeqMatrix<Rational> {
        let cols: Vec<Vec<Rational>> = codes.iter().map(|&c| self.column(c)).collect();
        SeqMatrix::new(Matrix::from_fn(self.d, codes.len(), |i, j| cols[j][i].clone()))
            .expect("grid points have n >= 2 columns")
    }

    /// `L + s·1 1ᵀ`: a point inside the cube `S_L` for `0 ≤ s < δ`.
    pub fn cube_point(&self, codes: &[usize], offset: &Rational) -> SeqMatrix<Rational> {
        let l = self.point(codes);
        SeqMatrix::new(l.as_matrix().map(|v| v + offset)).expect("same shape")
    }

    /// Cube centre `C_L = L + (δ/2)·1 1ᵀ`.
    pub fn cube_center(&self, codes: &[usize]) -> SeqMatrix<Rational> {
        self.cube_point(codes, &(self.delta() / int(2)))
    }

    /// Centre, near-low-corner and near-high-corner offsets: `δ/2`, `δ/8`, `7δ/8`.
    pub fn sample_offsets(&self) -> [Rational; 3] {
        let delta = self.delta();
        [
            delta.clone() / int(2),
            delta.clone() / int(8),
            delta * int(7) / int(8),
        ]
    }

    /// Quantizes an exact input entrywise; `None` if any entry lies outside `[0, 1)`.
    pub fn quantize(&self, x: &Matrix<Rational>) -> Option<Vec<usize>> {
        if x.shape() != (self.d, self.n) {
            return None;
        }
        let q = Rational::from_integer(BigInt::from(self.q));
        let floored = x.map(|v| (v * &q).floor());
        let snapped = floored.map(|v| v / &q);
        self.codes_of(&snapped)
    }

    /// Float version of [`GridParams::quantize`].
    pub fn quantize_f64(&self, x: &Matrix<f64>) -> Option<Vec<usize>> {
        if x.shape() != (self.d, self.n) {
            return None;
        }
        let q = self.q as f64;
        let mut codes = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let mut code = 0usize;
            for i in 0..self.d {
                let v = x[(i, j)];
                if !(0.0..1.0).contains(&v) {
                    return None;
                }
                let k = ((v * q).floor() as usize).min(self.q as usize - 1);
                code += k * (self.q as usize).pow(i as u32);
            }
            codes.push(code);
        }
        Some(codes)
    }

    fn check_budget(&self, needed: u128, cap: u128) -> Result<()> {
        if needed > cap {
            Err(Error::EnumerationBudget { needed, cap })
        } else {
            Ok(())
        }
    }

    /// Every point of `G_δ` as a code tuple, in lexicographic order.
    pub fn enumerate(&self, cap: u128) -> Result<Vec<Vec<usize>>> {
        self.check_budget(self.grid_size(), cap)?;
        let c = self.column_count();
        let mut out = Vec::with_capacity(self.grid_size() as usize);
        let mut codes = vec![0usize; self.n];
        loop {
            out.push(codes.clone());
            let mut pos = self.n;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                codes[pos] += 1;
                if codes[pos] < c {
                    break;
                }
                codes[pos] = 0;
            }
        }
    }

    /// Sorted (non-decreasing) code tuples: one representative per column-permutation orbit of `G_δ`.
    pub fn orbit_representatives(&self, cap: u128) -> Result<Vec<Vec<usize>>> {
        self.check_budget(self.grid_size(), cap)?;
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(self.n);
        non_decreasing(self.column_count(), self.n, 0, &mut current, &mut out, false);
        Ok(out)
    }

    /// Strictly increasing code tuples: the orbit representatives of `G̃_δ`.
    pub fn distinct_representatives(&self, cap: u128) -> Result<Vec<Vec<usize>>> {
        self.check_budget(self.grid_size(), cap)?;
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(self.n);
        non_decreasing(self.column_count(), self.n, 0, &mut current, &mut out, true);
        Ok(out)
    }

    /// Values an entry of a point in `G⁺_δ` may take: the sentinel, then `0, δ, …, 1−δ`.
    fn extended_values(&self) -> Vec<Rational> {
        std::iter::once(self.sentinel())
            .chain((0..self.q).map(|k| rat(k as i64, self.q as i64)))
            .collect()
    }

    /// Every point of `G⁺_δ` that contains at least one sentinel entry.
    pub fn enumerate_sentinel_points(&self, cap: u128) -> Result<Vec<SeqMatrix<Rational>>> {
        self.check_budget(self.extended_grid_size(), cap)?;
        let values = self.extended_values();
        let entries = self.d * self.n;
        let mut idx = vec![0usize; entries];
        let mut out = Vec::new();
        loop {
            if idx.contains(&0) {
                out.push(self.extended_point(&values, &idx));
            }
            let mut pos = entries;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < values.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    /// Points with exactly one column containing a sentinel; the other columns range over the grid.
    pub fn one_sentinel_column_points(&self, cap: u128) -> Result<Vec<SeqMatrix<Rational>>> {
        let c = self.column_count() as u128;
        let sentinel_cols = (self.q as u128 + 1).pow(self.d as u32) - c;
        let needed = (self.n as u128)
            .saturating_mul(sentinel_cols)
            .saturating_mul(c.saturating_pow(self.n as u32 - 1));
        self.check_budget(needed, cap)?;
        let values = self.extended_values();
        let sentinel_columns: Vec<Vec<Rational>> = (0..(self.q as usize + 1).pow(self.d as u32))
            .filter_map(|mut code| {
                let col: Vec<usize> = (0..self.d)
                    .map(|_| {
                        let k = code % (self.q as usize + 1);
                        code /= self.q as usize + 1;
                        k
                    })
                    .collect();
                col.contains(&0)
                    .then(|| col.iter().map(|&k| values[k].clone()).collect())
            })
            .collect();
        let reduced = GridParams {
            n: self.n - 1,
            ..*self
        };
        let mut others = vec![vec![]];
        if reduced.n > 0 {
            others = enumerate_tuples(self.column_count(), reduced.n);
        }
        let mut out = Vec::new();
        for pos in 0..self.n {
            for scol in &sentinel_columns {
                for rest in &others {
                    let mut cols: Vec<Vec<Rational>> =
                        rest.iter().map(|&c| self.column(c)).collect();
                    cols.insert(pos, scol.clone());
                    out.push(self.point_from_columns(&cols));
                }
            }
        }
        Ok(out)
    }

    /// Seeded random points of `G⁺_δ` with at least two sentinel-bearing columns.
    pub fn random_multi_sentinel_points(&self, count: usize, seed: u64) -> Vec<SeqMatrix<Rational>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = self.extended_values();
        (0..count)
            .map(|_| {
                let first = rng.gen_range(0..self.n);
                let mut second = rng.gen_range(0..self.n - 1);
                if second >= first {
                    second += 1;
                }
                let mut idx: Vec<usize> = (0..self.d * self.n)
                    .map(|_| rng.gen_range(0..values.len()))
                    .collect();
                for col in [first, second] {
                    let row = rng.gen_range(0..self.d);
                    idx[col * self.d + row] = 0;
                }
                self.extended_point(&values, &idx)
            })
            .collect()
    }

    /// `idx` is column-major: entry `(i, j)` is `values[idx[j·d + i]]`.
    fn extended_point(&self, values: &[Rational], idx: &[usize]) -> SeqMatrix<Rational> {
        SeqMatrix::new(Matrix::from_fn(self.d, self.n, |i, j| {
            values[idx[j * self.d + i]].clone()
        }))
        .expect("n >= 2")
    }

    fn point_from_columns(&self, cols: &[Vec<Rational>]) -> SeqMatrix<Rational> {
        SeqMatrix::new(Matrix::from_fn(self.d, cols.len(), |i, j| cols[j][i].clone()))
            .expect("n >= 2")
    }

    /// `uᵀZ` for every column of `Z`.
    pub fn ids(&self, z: &Matrix<Rational>) -> Vec<Rational> {
        let u = self.u();
        (0..z.cols())
            .map(|j| {
                (0..z.rows()).fold(int(0), |acc, i| acc + &u[i] * &z[(i, j)])
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        format!("delta={} d={} n={}", self.delta_string(), self.d, self.n)
    }
}

impl std::fmt::Display for GridParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

/// True when all codes are pairwise distinct, i.e. the point lies in `G̃_δ`.
pub fn has_distinct_columns(codes: &[usize]) -> bool {
    let mut sorted = codes.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// Stable permutation `perm` with `codes[perm[0]] ≤ codes[perm[1]] ≤ …`.
pub fn sorting_permutation(codes: &[usize]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..codes.len()).collect();
    perm.sort_by_key(|&j| codes[j]);
    perm
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).expect("pivot");
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

fn enumerate_tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |c| {
                    let mut t = prefix.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
    }
    out
}

fn non_decreasing(
    base: usize,
    len: usize,
    start: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    strict: bool,
) {
    if current.len() == len {
        out.push(current.clone());
        return;
    }
    for c in start..base {
        current.push(c);
        non_decreasing(base, len, if strict { c + 1 } else { c }, current, out, strict);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(q: u64, d: usize, n: usize) -> GridParams {
        GridParams::new(q, d, n).unwrap()
    }

    #[test]
    fn derived_constants_small_grid() {
        let grid = g(2, 1, 2);
        assert_eq!(grid.sentinel(), int(-4));
        assert_eq!(grid.u(), vec![int(1)]);
        assert_eq!(grid.t_l(), int(8));
        assert_eq!(grid.t_r(), int(16));
        assert!(grid.t_l() < grid.t_r());
        let grid = g(2, 2, 2);
        assert_eq!(grid.u(), vec![int(1), int(2)]);
        assert_eq!(grid.sentinel(), int(-16));
    }

    #[test]
    fn delta_parsing() {
        assert_eq!(parse_delta("1/3").unwrap(), 3);
        assert_eq!(parse_delta("0.25").unwrap(), 4);
        assert_eq!(parse_delta("2/8").unwrap(), 4);
        assert!(parse_delta("2/3").is_err());
        assert!(parse_delta("1").is_err());
        assert!(parse_delta("-1/2").is_err());
        assert!(GridParams::new(2, 1, 1).is_err());
        assert!(GridParams::new(2, 0, 2).is_err());
    }

    #[test]
    fn columns_and_ids_are_a_bijection() {
        let grid = g(3, 2, 2);
        for code in 0..grid.column_count() {
            let col = grid.column(code);
            assert_eq!(grid.code_of_column(&col), Some(code));
            let id = grid.u().iter().zip(&col).fold(int(0), |acc, (a, b)| acc + a * b);
            assert_eq!(id, grid.id_of_code(code));
        }
        assert_eq!(grid.code_of_column(&[int(1), int(0)]), None);
    }

    #[test]
    fn orbit_counts() {
        let grid = g(2, 1, 2);
        assert_eq!(grid.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().len(), 4);
        assert_eq!(grid.orbit_representatives(DEFAULT_ENUMERATION_CAP).unwrap().len(), 3);
        assert_eq!(grid.distinct_representatives(DEFAULT_ENUMERATION_CAP).unwrap(), vec![vec![0, 1]]);
        assert_eq!(g(2, 2, 2).distinct_representatives(1000).unwrap().len(), 6);
        assert_eq!(g(3, 1, 3).distinct_representatives(1000).unwrap().len(), 1);
        assert_eq!(g(4, 1, 2).distinct_grid_size(), 12);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        assert!(matches!(
            g(10, 3, 3).enumerate(1000),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn sentinel_point_counts() {
        let grid = g(2, 1, 2);
        assert_eq!(grid.enumerate_sentinel_points(100).unwrap().len(), 9 - 4);
        assert_eq!(grid.one_sentinel_column_points(100).unwrap().len(), 4);
        let grid = g(2, 2, 2);
        assert_eq!(grid.enumerate_sentinel_points(100).unwrap().len(), 81 - 16);
        assert_eq!(grid.one_sentinel_column_points(100).unwrap().len(), 2 * 5 * 4);
        for p in grid.random_multi_sentinel_points(10, 1) {
            let cols_with_sentinel = (0..2)
                .filter(|&j| p.column(j).contains(&grid.sentinel()))
                .count();
            assert_eq!(cols_with_sentinel, 2);
        }
    }

    #[test]
    fn quantize_half_open_cubes() {
        let grid = g(2, 1, 2);
        let x = Matrix::from_rows(vec![vec![rat(3, 10), rat(7, 10)]]).unwrap();
        assert_eq!(grid.quantize(&x), Some(vec![0, 1]));
        let x = Matrix::from_rows(vec![vec![int(1), rat(1, 5)]]).unwrap();
        assert_eq!(grid.quantize(&x), None);
        assert_eq!(grid.quantize_f64(&Matrix::from_rows(vec![vec![0.5, 0.49]]).unwrap()), Some(vec![1, 0]));
    }

    #[test]
    fn permutations_are_complete() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(sorting_permutation(&[2, 0, 1]), vec![1, 2, 0]);
        assert!(has_distinct_columns(&[0, 2, 1]));
        assert!(!has_distinct_columns(&[1, 0, 1]));
    }

    #[test]
    fn shifted_id_bounds_match_hand_values() {
        // d=1, n=3, q=3: [3·2, 9·2 − (1/3)·2²]
        let (lo, hi) = g(3, 1, 3).shifted_id_bounds();
        assert_eq!(lo, int(6));
        assert_eq!(hi, rat(50, 3));
    }
}
