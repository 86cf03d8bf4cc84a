//! Matrices over `F_p` and the image-preserving moves that bring a corank-one
//! map into the canonical form `[c | I]` with `c` a 0/1 column.
//!
//! Three moves never change the image size of `(map, grid)`:
//!
//! * left-multiplying by an invertible `R` (the image is mapped bijectively by `R`);
//! * scaling column `i` by `d` while dilating `A_i` by `d⁻¹` (the image is unchanged);
//! * swapping columns `i`, `j` together with `A_i`, `A_j` (the image is unchanged).
//!
//! All indices (rows, columns, supports) are zero-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{dilate, PrimeModulus};
use crate::image::GridFamily;

/// A linear map `F_p^n -> F_p^m`, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct MatrixFp {
    modulus: PrimeModulus,
    rows: usize,
    cols: usize,
    entries: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    p: PrimeModulus,
    rows: Vec<Vec<u32>>,
}

impl TryFrom<MatrixRepr> for MatrixFp {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        MatrixFp::from_rows(r.p, r.rows)
    }
}

impl From<MatrixFp> for MatrixRepr {
    fn from(m: MatrixFp) -> Self {
        MatrixRepr {
            p: m.modulus,
            rows: (0..m.rows).map(|r| m.row(r).to_vec()).collect(),
        }
    }
}

impl MatrixFp {
    pub fn from_rows(modulus: PrimeModulus, rows: Vec<Vec<u32>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::MalformedMatrix(
                "need at least one row and column".into(),
            ));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::MalformedMatrix(format!(
                "row {r} has {} entries, expected {n}",
                rows[r].len()
            )));
        }
        let entries: Vec<u32> = rows.into_iter().flatten().collect();
        if let Some(&v) = entries.iter().find(|&&v| v >= modulus.get()) {
            return Err(Error::ResidueOutOfRange {
                value: v as u64,
                p: modulus.get(),
            });
        }
        Ok(MatrixFp {
            modulus,
            rows: m,
            cols: n,
            entries,
        })
    }

    fn from_fn(
        modulus: PrimeModulus,
        rows: usize,
        cols: usize,
        f: impl Fn(usize, usize) -> u32,
    ) -> Self {
        let entries = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        MatrixFp {
            modulus,
            rows,
            cols,
            entries,
        }
    }

    pub fn identity(modulus: PrimeModulus, m: usize) -> Self {
        Self::from_fn(modulus, m, m, |r, c| (r == c) as u32)
    }

    /// `(x_1, ..., x_n) -> (x_1 + x_n, ..., x_{n-1} + x_n)`, i.e. `[I | 1]`.
    pub fn star(modulus: PrimeModulus, n: usize) -> Self {
        assert!(n >= 2, "star map needs at least two coordinates");
        Self::from_fn(modulus, n - 1, n, |r, c| (r == c || c == n - 1) as u32)
    }

    /// Diagonal matrix, used for row scalings.
    pub fn diagonal(modulus: PrimeModulus, diag: &[u32]) -> Self {
        Self::from_fn(modulus, diag.len(), diag.len(), |r, c| {
            if r == c {
                diag[r]
            } else {
                0
            }
        })
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.entries[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: u32) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (0..self.cols).all(|c| self.get(r, c) == (r == c) as u32))
    }

    /// Exact entry-pattern match against [`MatrixFp::star`].
    pub fn is_star(&self) -> bool {
        let n = self.cols;
        n >= 2
            && self.rows + 1 == n
            && (0..self.rows)
                .all(|r| (0..n).all(|c| self.get(r, c) == (r == c || c == n - 1) as u32))
    }

    pub fn mul(&self, rhs: &MatrixFp) -> Result<MatrixFp> {
        if self.modulus != rhs.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.get(),
                rhs.modulus.get(),
            ));
        }
        if self.cols != rhs.rows {
            return Err(Error::MalformedMatrix(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let p = self.modulus;
        Ok(Self::from_fn(p, self.rows, rhs.cols, |r, c| {
            (0..self.cols).fold(0, |acc, k| p.add(acc, p.mul(self.get(r, k), rhs.get(k, c))))
        }))
    }

    pub fn apply(&self, x: &[u32]) -> Vec<u32> {
        assert_eq!(x.len(), self.cols);
        let p = self.modulus;
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(0, |acc, (&a, &b)| p.add(acc, p.mul(a, b % p.get())))
            })
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> MatrixFp {
        Self::from_fn(self.modulus, self.rows, cols.len(), |r, c| {
            self.get(r, cols[c])
        })
    }

    pub fn inverse(&self) -> Result<MatrixFp> {
        if !self.is_square() {
            return Err(Error::MalformedMatrix(format!(
                "{}x{} matrix has no inverse",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let p = self.modulus;
        let augmented = Self::from_fn(p, n, 2 * n, |r, c| {
            if c < n {
                self.get(r, c)
            } else {
                (c - n == r) as u32
            }
        });
        let echelon = Echelon::of(&augmented);
        if echelon.pivots.len() < n || echelon.pivots.iter().any(|&c| c >= n) {
            return Err(Error::Singular);
        }
        Ok(Self::from_fn(p, n, n, |r, c| echelon.reduced.get(r, n + c)))
    }
}

impl fmt::Debug for MatrixFp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `p=5; [[2,1,0],[1,0,1]]`
impl fmt::Display for MatrixFp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={}; [", self.modulus)?;
        for r in 0..self.rows {
            if r > 0 {
                f.write_str(",")?;
            }
            f.write_str("[")?;
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

impl std::str::FromStr for MatrixFp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        crate::parse::parse_matrix_literal(s)
    }
}

/// Reduced row echelon form.
struct Echelon {
    reduced: MatrixFp,
    pivots: Vec<usize>,
}

impl Echelon {
    fn of(m: &MatrixFp) -> Echelon {
        let p = m.modulus;
        let mut a = m.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..a.cols {
            if row == a.rows {
                break;
            }
            let Some(pivot) = (row..a.rows).find(|&r| a.get(r, col) != 0) else {
                continue;
            };
            if pivot != row {
                for c in 0..a.cols {
                    a.entries.swap(pivot * a.cols + c, row * a.cols + c);
                }
            }
            let inv = p.inv(a.get(row, col)).expect("pivot is nonzero");
            for c in col..a.cols {
                let v = p.mul(a.get(row, c), inv);
                a.set(row, c, v);
            }
            for r in 0..a.rows {
                let factor = a.get(r, col);
                if r == row || factor == 0 {
                    continue;
                }
                for c in col..a.cols {
                    let v = p.sub(a.get(r, c), p.mul(factor, a.get(row, c)));
                    a.set(r, c, v);
                }
            }
            pivots.push(col);
            row += 1;
        }
        Echelon { reduced: a, pivots }
    }

    /// One null-space vector per free column.
    fn null_space(&self) -> Vec<Vec<u32>> {
        let a = &self.reduced;
        let p = a.modulus;
        (0..a.cols)
            .filter(|c| !self.pivots.contains(c))
            .map(|free| {
                let mut v = vec![0u32; a.cols];
                v[free] = 1;
                for (r, &pc) in self.pivots.iter().enumerate() {
                    v[pc] = p.neg(a.get(r, free));
                }
                v
            })
            .collect()
    }
}

pub fn rank(m: &MatrixFp) -> usize {
    Echelon::of(m).pivots.len()
}

/// Null space of a map together with a min-support vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDescription {
    pub basis: Vec<Vec<u32>>,
    /// `None` iff the kernel is trivial.
    pub min_support_vector: Option<Vec<u32>>,
    pub support: Vec<usize>,
    pub co_support: Vec<usize>,
}

impl KernelDescription {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Null-space basis and min-support vector.
///
/// The min-support vector is found as the first minimal dependent column set:
/// column subsets are scanned by size, then lexicographically, and the first
/// dependent one is a circuit whose (one-dimensional) dependency has full
/// support on it. The vector is scaled so its first nonzero entry is 1. When the
/// kernel is one-dimensional this is the normalized generator.
pub fn kernel_basis(m: &MatrixFp) -> KernelDescription {
    let echelon = Echelon::of(m);
    let basis = echelon.null_space();
    let n = m.cols;
    let min_support_vector = if basis.is_empty() {
        None
    } else if basis.len() == 1 {
        Some(normalize_leading(m.modulus, basis[0].clone()))
    } else {
        Some(first_circuit(m))
    };
    let support: Vec<usize> = min_support_vector
        .as_ref()
        .map(|v| (0..n).filter(|&i| v[i] != 0).collect())
        .unwrap_or_default();
    let co_support = (0..n).filter(|i| !support.contains(i)).collect();
    KernelDescription {
        basis,
        min_support_vector,
        support,
        co_support,
    }
}

fn normalize_leading(p: PrimeModulus, mut v: Vec<u32>) -> Vec<u32> {
    if let Some(&lead) = v.iter().find(|&&x| x != 0) {
        let inv = p.inv(lead).expect("nonzero");
        for x in &mut v {
            *x = p.mul(*x, inv);
        }
    }
    v
}

fn first_circuit(m: &MatrixFp) -> Vec<u32> {
    let n = m.cols;
    for size in 1..=n {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let sub = m.select_columns(&subset);
            let echelon = Echelon::of(&sub);
            if echelon.pivots.len() < size {
                let local = &echelon.null_space()[0];
                let mut v = vec![0u32; n];
                for (k, &c) in subset.iter().enumerate() {
                    v[c] = local[k];
                }
                return normalize_leading(m.modulus, v);
            }
            if !next_combination(&mut subset, n) {
                break;
            }
        }
    }
    unreachable!("caller guarantees a nontrivial kernel")
}

/// Advances `subset` (strictly increasing, values `< n`) to the next
/// combination in lexicographic order.
pub(crate) fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let Some(i) = (0..k).rev().find(|&i| subset[i] < n - k + i) else {
        return false;
    };
    subset[i] += 1;
    for j in i + 1..k {
        subset[j] = subset[j - 1] + 1;
    }
    true
}

/// `R·M` for an invertible `R`.
pub fn row_transform(m: &MatrixFp, r: &MatrixFp) -> Result<MatrixFp> {
    if !r.is_square() || r.rows != m.rows {
        return Err(Error::MalformedMatrix(format!(
            "row multiplier must be {0}x{0}, got {1}x{2}",
            m.rows, r.rows, r.cols
        )));
    }
    if rank(r) < r.rows {
        return Err(Error::Singular);
    }
    r.mul(m)
}

fn check_grid(m: &MatrixFp, grid: &GridFamily) -> Result<()> {
    if grid.modulus() != m.modulus {
        return Err(Error::ModulusMismatch(
            m.modulus.get(),
            grid.modulus().get(),
        ));
    }
    if grid.arity() != m.cols {
        return Err(Error::ArityMismatch {
            expected: m.cols,
            got: grid.arity(),
        });
    }
    Ok(())
}

fn check_column(m: &MatrixFp, i: usize) -> Result<()> {
    if i >= m.cols {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: m.cols,
        });
    }
    Ok(())
}

/// Scales column `i` by `d` and replaces `A_i` by `d⁻¹·A_i`, which leaves the image unchanged.
pub fn column_scale(
    m: &MatrixFp,
    grid: &GridFamily,
    i: usize,
    d: u32,
) -> Result<(MatrixFp, GridFamily)> {
    check_grid(m, grid)?;
    check_column(m, i)?;
    let p = m.modulus;
    let d = d % p.get();
    let d_inv = p.inv(d).ok_or(Error::ZeroScalar(p.get()))?;
    let mut out = m.clone();
    for r in 0..m.rows {
        out.set(r, i, p.mul(m.get(r, i), d));
    }
    let grid = grid.replace(i, dilate(grid.set(i), d_inv)?)?;
    Ok((out, grid))
}

/// Swaps columns `i`, `j` and the sets `A_i`, `A_j`.
pub fn column_swap(
    m: &MatrixFp,
    grid: &GridFamily,
    i: usize,
    j: usize,
) -> Result<(MatrixFp, GridFamily)> {
    check_grid(m, grid)?;
    check_column(m, i)?;
    check_column(m, j)?;
    if i == j {
        return Err(Error::SameIndex(i));
    }
    let mut out = m.clone();
    for r in 0..m.rows {
        out.set(r, i, m.get(r, j));
        out.set(r, j, m.get(r, i));
    }
    Ok((out, grid.swap(i, j)))
}

/// One recorded step of [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    RowOp { multiplier: MatrixFp },
    ColumnScale { column: usize, factor: u32 },
    ColumnSwap { i: usize, j: usize },
}

impl Transform {
    pub fn apply(&self, m: &MatrixFp, grid: &GridFamily) -> Result<(MatrixFp, GridFamily)> {
        match self {
            Transform::RowOp { multiplier } => Ok((row_transform(m, multiplier)?, grid.clone())),
            Transform::ColumnScale { column, factor } => column_scale(m, grid, *column, *factor),
            Transform::ColumnSwap { i, j } => column_swap(m, grid, *i, *j),
        }
    }
}

pub fn replay(
    m: &MatrixFp,
    grid: &GridFamily,
    transcript: &[Transform],
) -> Result<(MatrixFp, GridFamily)> {
    transcript
        .iter()
        .try_fold((m.clone(), grid.clone()), |(m, g), t| t.apply(&m, &g))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub canonical: MatrixFp,
    pub transformed_grid: GridFamily,
    /// Rows whose first canonical entry is 1.
    pub first_column_ones: Vec<usize>,
    pub transcript: Vec<Transform>,
}

impl NormalizationResult {
    /// `-e_0 + Σ_{i in first_column_ones} e_{i+1}`, a kernel vector of the canonical map.
    pub fn kernel_witness(&self) -> Vec<u32> {
        let p = self.canonical.modulus;
        let mut v = vec![0u32; self.canonical.cols];
        v[0] = p.neg(1);
        for &i in &self.first_column_ones {
            v[i + 1] = 1;
        }
        v
    }
}

/// Reduces a rank-`m`, `m × (m+1)` map to `[c | I]` with `c ∈ {0,1}^m`, carrying the grid along.
///
/// If the last `m` columns are singular, the lexicographically smallest invertible
/// `m`-subset of columns is moved to the back by one swap with column 0. Then the
/// map is multiplied by the inverse of its last block, rows with a nonzero first
/// entry are scaled to make it 1, and the diagonal of the last block is scaled
/// back to 1 by column scalings (which dilate the matching sets).
pub fn normalize(m: &MatrixFp, grid: &GridFamily) -> Result<NormalizationResult> {
    check_grid(m, grid)?;
    if m.cols != m.rows + 1 {
        return Err(Error::NotCorank1 {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if let Some(i) = grid.sets().iter().position(|s| s.is_empty()) {
        return Err(Error::EmptySet(i));
    }
    let r = rank(m);
    if r < m.rows {
        return Err(Error::RankDeficient {
            rank: r,
            rows: m.rows,
        });
    }
    let p = m.modulus;
    let rows = m.rows;
    let mut transcript = Vec::new();
    let mut current = (m.clone(), grid.clone());
    let mut push = |t: Transform, current: &mut (MatrixFp, GridFamily)| -> Result<()> {
        *current = t.apply(&current.0, &current.1)?;
        transcript.push(t);
        Ok(())
    };

    let tail: Vec<usize> = (1..=rows).collect();
    if rank(&m.select_columns(&tail)) < rows {
        // m + 1 columns, so each m-subset leaves out exactly one column.
        let mut subset: Vec<usize> = (0..rows).collect();
        let excluded = loop {
            if rank(&m.select_columns(&subset)) == rows {
                break (0..=rows)
                    .find(|c| !subset.contains(c))
                    .expect("one column left out");
            }
            if !next_combination(&mut subset, rows + 1) {
                unreachable!("rank m guarantees an invertible m-subset");
            }
        };
        push(Transform::ColumnSwap { i: 0, j: excluded }, &mut current)?;
    }

    let block = current.0.select_columns(&tail);
    if !block.is_identity() {
        push(
            Transform::RowOp {
                multiplier: block.inverse()?,
            },
            &mut current,
        )?;
    }

    let first = current.0.column(0);
    if first.iter().any(|&c| c > 1) {
        let diag: Vec<u32> = first
            .iter()
            .map(|&c| {
                if c == 0 {
                    1
                } else {
                    p.inv(c).expect("nonzero")
                }
            })
            .collect();
        push(
            Transform::RowOp {
                multiplier: MatrixFp::diagonal(p, &diag),
            },
            &mut current,
        )?;
    }

    for i in 0..rows {
        let d = current.0.get(i, i + 1);
        if d != 1 {
            push(
                Transform::ColumnScale {
                    column: i + 1,
                    factor: p.inv(d).expect("diagonal is nonzero"),
                },
                &mut current,
            )?;
        }
    }

    let (canonical, transformed_grid) = current;
    let first_column_ones = (0..rows).filter(|&i| canonical.get(i, 0) == 1).collect();
    Ok(NormalizationResult {
        canonical,
        transformed_grid,
        first_column_ones,
        transcript,
    })
}
