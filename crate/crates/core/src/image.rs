//! Exact images of linear maps on product sets.
//!
//! An image in `F_p^m` is a bit vector of length `p^m`; the point
//! `(y_1, ..., y_m)` lives at the little-endian mixed-radix index
//! `y_1 + y_2·p + ... + y_m·p^(m-1)`. Because the first coordinate is the
//! least significant digit, every run of `p` consecutive cells is one "row"
//! `{(*, y_2, ..., y_m)}`, which is what the star-map fast path exploits.

use std::fmt;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{PrimeModulus, ResidueSet};
use crate::linmap::MatrixFp;

/// Default ceiling on `p^m`: 2^30 cells, i.e. 128 MiB of bits.
pub const DEFAULT_CELL_CAP: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageOptions {
    pub cell_cap: u64,
    /// Worker threads; the split is over the residues of the last coordinate.
    pub workers: usize,
}

impl Default for ImageOptions {
    fn default() -> Self {
        ImageOptions {
            cell_cap: DEFAULT_CELL_CAP,
            workers: 1,
        }
    }
}

/// The product-set domain `A_1 × ... × A_n`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridFamily {
    modulus: PrimeModulus,
    sets: Vec<ResidueSet>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    p: PrimeModulus,
    sets: Vec<Vec<u32>>,
}

impl TryFrom<GridRepr> for GridFamily {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        let sets = r
            .sets
            .into_iter()
            .map(|s| ResidueSet::new(r.p, s))
            .collect::<Result<Vec<_>>>()?;
        GridFamily::new(r.p, sets)
    }
}

impl From<GridFamily> for GridRepr {
    fn from(g: GridFamily) -> Self {
        GridRepr {
            p: g.modulus,
            sets: g.sets.iter().map(|s| s.iter().collect()).collect(),
        }
    }
}

impl GridFamily {
    pub fn new(modulus: PrimeModulus, sets: Vec<ResidueSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::ArityMismatch {
                expected: 1,
                got: 0,
            });
        }
        if let Some(s) = sets.iter().find(|s| s.modulus() != modulus) {
            return Err(Error::ModulusMismatch(modulus.get(), s.modulus().get()));
        }
        Ok(GridFamily { modulus, sets })
    }

    /// Zero-based intervals `{0, ..., k_i - 1}`.
    pub fn intervals(modulus: PrimeModulus, sizes: &[usize]) -> Result<Self> {
        let sets = sizes
            .iter()
            .map(|&k| crate::fp::interval_set(modulus, k))
            .collect::<Result<Vec<_>>>()?;
        GridFamily::new(modulus, sets)
    }

    pub(crate) fn from_masks(modulus: PrimeModulus, masks: &[u64]) -> Self {
        GridFamily {
            modulus,
            sets: masks
                .iter()
                .map(|&b| ResidueSet::from_bits_unchecked(modulus, b))
                .collect(),
        }
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn arity(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[ResidueSet] {
        &self.sets
    }

    pub fn set(&self, i: usize) -> &ResidueSet {
        &self.sets[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(ResidueSet::len).collect()
    }

    pub(crate) fn masks(&self) -> Vec<u64> {
        self.sets.iter().map(ResidueSet::bits).collect()
    }

    pub fn replace(&self, i: usize, set: ResidueSet) -> Result<GridFamily> {
        if i >= self.sets.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.sets.len(),
            });
        }
        if set.modulus() != self.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.get(),
                set.modulus().get(),
            ));
        }
        let mut sets = self.sets.clone();
        sets[i] = set;
        Ok(GridFamily {
            modulus: self.modulus,
            sets,
        })
    }

    pub fn swap(&self, i: usize, j: usize) -> GridFamily {
        let mut sets = self.sets.clone();
        sets.swap(i, j);
        GridFamily {
            modulus: self.modulus,
            sets,
        }
    }

    /// Translates `A_i` by `offsets[i]`.
    pub fn translate(&self, offsets: &[u32]) -> Result<GridFamily> {
        if offsets.len() != self.sets.len() {
            return Err(Error::ArityMismatch {
                expected: self.sets.len(),
                got: offsets.len(),
            });
        }
        Ok(GridFamily {
            modulus: self.modulus,
            sets: self
                .sets
                .iter()
                .zip(offsets)
                .map(|(s, &c)| s.translate(c))
                .collect(),
        })
    }

    fn check_nonempty(&self) -> Result<()> {
        match self.sets.iter().position(ResidueSet::is_empty) {
            Some(i) => Err(Error::EmptySet(i)),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for GridFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// One `A<i> = {...}` per line after `p = <p>`, the grid file format.
impl fmt::Display for GridFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p = {}", self.modulus)?;
        for (i, s) in self.sets.iter().enumerate() {
            write!(f, "A{} = ", i + 1)?;
            crate::fp::write_members(f, s)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

/// `p^m`, or `None` on overflow.
pub fn cell_count(modulus: PrimeModulus, dim: usize) -> Option<u128> {
    (modulus.get() as u128).checked_pow(dim as u32)
}

/// A subset of `F_p^m`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageSet {
    modulus: PrimeModulus,
    dim: usize,
    cells: u64,
    words: Vec<u64>,
}

impl ImageSet {
    pub fn new(modulus: PrimeModulus, dim: usize, cell_cap: u64) -> Result<Self> {
        let required = cell_count(modulus, dim).unwrap_or(u128::MAX);
        if required > cell_cap as u128 {
            return Err(Error::CellCapExceeded {
                required,
                cap: cell_cap,
            });
        }
        let cells = required as u64;
        Ok(ImageSet {
            modulus,
            dim,
            cells,
            words: vec![0; cells.div_ceil(64) as usize],
        })
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `p^m`.
    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn size(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_full(&self) -> bool {
        self.size() == self.cells
    }

    pub fn index_of(&self, point: &[u32]) -> Option<u64> {
        if point.len() != self.dim || point.iter().any(|&y| y >= self.modulus.get()) {
            return None;
        }
        let p = self.modulus.get() as u64;
        Some(point.iter().rev().fold(0u64, |acc, &y| acc * p + y as u64))
    }

    pub fn point_of(&self, mut index: u64) -> Vec<u32> {
        let p = self.modulus.get() as u64;
        (0..self.dim)
            .map(|_| {
                let y = (index % p) as u32;
                index /= p;
                y
            })
            .collect()
    }

    pub fn contains(&self, point: &[u32]) -> bool {
        self.index_of(point).is_some_and(|i| self.contains_index(i))
    }

    #[inline]
    pub fn contains_index(&self, index: u64) -> bool {
        index < self.cells && self.words[(index / 64) as usize] >> (index % 64) & 1 == 1
    }

    pub fn insert(&mut self, point: &[u32]) -> bool {
        match self.index_of(point) {
            Some(i) => {
                self.set_index(i);
                true
            }
            None => false,
        }
    }

    #[inline]
    fn set_index(&mut self, index: u64) {
        self.words[(index / 64) as usize] |= 1 << (index % 64);
    }

    /// Mixed-radix indices of the members, ascending.
    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| crate::fp::Members(word).map(move |b| w as u64 * 64 + b as u64))
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        self.indices().map(|i| self.point_of(i))
    }

    fn union_with(&mut self, other: &ImageSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }
}

impl fmt::Debug for ImageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageSet")
            .field("p", &self.modulus.get())
            .field("m", &self.dim)
            .field("size", &self.size())
            .finish()
    }
}

/// Full serialized form `{p, m, size, points}`; the CLI trims `points` on its own.
#[derive(Serialize, Deserialize)]
struct ImageRepr {
    p: PrimeModulus,
    m: usize,
    size: u64,
    points: Vec<Vec<u32>>,
}

impl Serialize for ImageSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ImageRepr {
            p: self.modulus,
            m: self.dim,
            size: self.size(),
            points: self.points().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ImageSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ImageRepr::deserialize(d)?;
        let cap = cell_count(r.p, r.m)
            .unwrap_or(u128::MAX)
            .min(u64::MAX as u128) as u64;
        let mut image = ImageSet::new(r.p, r.m, cap).map_err(D::Error::custom)?;
        for point in r.points {
            let i = image.index_of(&point).ok_or_else(|| {
                D::Error::custom(format!("point {point:?} is not in F_{}^{}", r.p, r.m))
            })?;
            image.set_index(i);
        }
        if image.size() != r.size {
            return Err(D::Error::custom("size does not match points"));
        }
        Ok(image)
    }
}

/// `t_a` for every `a in F_p`: the number of pairs `(x, y) in X × Y` with `x + y = a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberProfile {
    pub counts: Vec<u64>,
}

impl FiberProfile {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of `a` with `t_a > 0`, i.e. `|X + Y|`.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&t| t > 0).count()
    }
}

/// `t_a = |Y ∩ (a - X)|`, one AND-popcount per `a`.
pub fn fiber_counts(x: &ResidueSet, y: &ResidueSet) -> Result<FiberProfile> {
    let p = x.modulus();
    if y.modulus() != p {
        return Err(Error::ModulusMismatch(p.get(), y.modulus().get()));
    }
    let neg_x = x.negate().bits();
    let counts = (0..p.get())
        .map(|a| (p.rotate(neg_x, a) & y.bits()).count_ones() as u64)
        .collect();
    Ok(FiberProfile { counts })
}

pub fn image(map: &MatrixFp, grid: &GridFamily) -> Result<ImageSet> {
    image_with(map, grid, &ImageOptions::default())
}

/// Generic image by depth-first accumulation of partial sums.
pub fn image_with(map: &MatrixFp, grid: &GridFamily, opts: &ImageOptions) -> Result<ImageSet> {
    let eval = Evaluator::generic(map, opts.cell_cap)?;
    eval.image(grid, opts.workers)
}

pub fn star_image_fast(grid: &GridFamily) -> Result<ImageSet> {
    star_image_fast_with(grid, &ImageOptions::default())
}

/// Image of `(x_1 + x_n, ..., x_{n-1} + x_n)` as the union over `z in A_n` of the
/// translated boxes `(A_1 + z) × ... × (A_{n-1} + z)`.
pub fn star_image_fast_with(grid: &GridFamily, opts: &ImageOptions) -> Result<ImageSet> {
    if grid.arity() < 2 {
        return Err(Error::ArityMismatch {
            expected: 2,
            got: grid.arity(),
        });
    }
    let eval = Evaluator::star(grid.modulus(), grid.arity(), opts.cell_cap)?;
    eval.image(grid, opts.workers)
}

pub fn image_size(map: &MatrixFp, grid: &GridFamily) -> Result<u64> {
    image_size_with(map, grid, &ImageOptions::default())
}

/// Image cardinality; star-shaped maps take the row-OR fast path.
pub fn image_size_with(map: &MatrixFp, grid: &GridFamily, opts: &ImageOptions) -> Result<u64> {
    let eval = Evaluator::new(map, opts.cell_cap)?;
    Ok(eval.image(grid, opts.workers)?.size())
}

#[derive(Debug, Clone)]
enum Kernel {
    Generic {
        /// `columns[j][i]` is the entry in row `i`, column `j`.
        columns: Vec<Vec<u32>>,
    },
    Star,
}

/// Precomputed image machinery for one map, reusable across many grids.
#[derive(Debug, Clone)]
pub(crate) struct Evaluator {
    modulus: PrimeModulus,
    rows: usize,
    arity: usize,
    cell_cap: u64,
    radix: Vec<u64>,
    kernel: Kernel,
}

impl Evaluator {
    pub(crate) fn new(map: &MatrixFp, cell_cap: u64) -> Result<Self> {
        if map.is_star() {
            Self::star(map.modulus(), map.cols(), cell_cap)
        } else {
            Self::generic(map, cell_cap)
        }
    }

    fn generic(map: &MatrixFp, cell_cap: u64) -> Result<Self> {
        let columns = (0..map.cols()).map(|j| map.column(j)).collect();
        Self::build(
            map.modulus(),
            map.rows(),
            map.cols(),
            cell_cap,
            Kernel::Generic { columns },
        )
    }

    fn star(modulus: PrimeModulus, arity: usize, cell_cap: u64) -> Result<Self> {
        Self::build(modulus, arity - 1, arity, cell_cap, Kernel::Star)
    }

    fn build(
        modulus: PrimeModulus,
        rows: usize,
        arity: usize,
        cell_cap: u64,
        kernel: Kernel,
    ) -> Result<Self> {
        // Validates the cap once up front.
        ImageSet::new(modulus, rows, cell_cap)?;
        let p = modulus.get() as u64;
        let radix = (0..rows).map(|i| p.pow(i as u32)).collect();
        Ok(Evaluator {
            modulus,
            rows,
            arity,
            cell_cap,
            radix,
            kernel,
        })
    }

    pub(crate) fn empty_image(&self) -> ImageSet {
        ImageSet::new(self.modulus, self.rows, self.cell_cap).expect("cap checked at build")
    }

    fn check_grid(&self, grid: &GridFamily) -> Result<()> {
        if grid.modulus() != self.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.get(),
                grid.modulus().get(),
            ));
        }
        if grid.arity() != self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                got: grid.arity(),
            });
        }
        grid.check_nonempty()
    }

    fn image(&self, grid: &GridFamily, workers: usize) -> Result<ImageSet> {
        self.check_grid(grid)?;
        let masks = grid.masks();
        let last = *masks.last().expect("arity >= 1");
        let chunks = split_members(last, workers.max(1));
        if chunks.len() <= 1 {
            let mut out = self.empty_image();
            self.mark(&masks, &mut out);
            return Ok(out);
        }
        let partials: Vec<ImageSet> = thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|&chunk| {
                    let mut local = masks.clone();
                    *local.last_mut().unwrap() = chunk;
                    scope.spawn(move || {
                        let mut out = self.empty_image();
                        self.mark(&local, &mut out);
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("image worker panicked"))
                .collect()
        });
        let mut iter = partials.into_iter();
        let mut out = iter.next().expect("at least one chunk");
        for part in iter {
            out.union_with(&part);
        }
        Ok(out)
    }

    /// Size of the image of the grid given by raw masks, reusing `scratch`.
    /// Masks must be nonempty and match the arity.
    pub(crate) fn size_of(&self, masks: &[u64], scratch: &mut ImageSet) -> u64 {
        debug_assert_eq!(masks.len(), self.arity);
        scratch.words.fill(0);
        self.mark(masks, scratch);
        scratch.size()
    }

    fn mark(&self, masks: &[u64], out: &mut ImageSet) {
        match &self.kernel {
            Kernel::Star => self.mark_star(masks, out),
            Kernel::Generic { columns } => {
                let members: Vec<Vec<u32>> = masks
                    .iter()
                    .map(|&b| crate::fp::Members(b).collect())
                    .collect();
                let mut sums = vec![0u32; (self.arity + 1) * self.rows];
                self.descend(columns, &members, 0, &mut sums, out);
            }
        }
    }

    fn descend(
        &self,
        columns: &[Vec<u32>],
        members: &[Vec<u32>],
        depth: usize,
        sums: &mut [u32],
        out: &mut ImageSet,
    ) {
        let m = self.rows;
        let p = self.modulus;
        let column = &columns[depth];
        let base = depth * m;
        if depth + 1 == self.arity {
            for &a in &members[depth] {
                let mut index = 0u64;
                for i in 0..m {
                    let y = p.add(sums[base + i], p.mul(a, column[i]));
                    index += y as u64 * self.radix[i];
                }
                out.set_index(index);
            }
            return;
        }
        for &a in &members[depth] {
            for i in 0..m {
                sums[base + m + i] = p.add(sums[base + i], p.mul(a, column[i]));
            }
            self.descend(columns, members, depth + 1, sums, out);
        }
    }

    fn mark_star(&self, masks: &[u64], out: &mut ImageSet) {
        let p = self.modulus;
        let (centers, boxes) = masks.split_last().expect("arity >= 2");
        let mut shifted = vec![0u64; boxes.len()];
        for z in crate::fp::Members(*centers) {
            for (s, &b) in shifted.iter_mut().zip(boxes) {
                *s = p.rotate(b, z);
            }
            self.mark_rows(&shifted, shifted.len() - 1, 0, out);
        }
    }

    /// ORs the first-coordinate row for every choice of the higher coordinates.
    fn mark_rows(&self, shifted: &[u64], level: usize, base: u64, out: &mut ImageSet) {
        if level == 0 {
            or_row(&mut out.words, base, shifted[0], self.modulus.get());
            return;
        }
        for y in crate::fp::Members(shifted[level]) {
            self.mark_rows(shifted, level - 1, base + y as u64 * self.radix[level], out);
        }
    }
}

#[inline]
fn or_row(words: &mut [u64], base: u64, row: u64, width: u32) {
    let word = (base / 64) as usize;
    let offset = (base % 64) as u32;
    words[word] |= row << offset;
    if offset + width > 64 {
        words[word + 1] |= row >> (64 - offset);
    }
}

/// Splits the members of `mask` into at most `parts` contiguous nonempty chunks.
fn split_members(mask: u64, parts: usize) -> Vec<u64> {
    let members: Vec<u32> = crate::fp::Members(mask).collect();
    if parts <= 1 || members.len() <= 1 {
        return vec![mask];
    }
    let per = members.len().div_ceil(parts.min(members.len()));
    members
        .chunks(per)
        .map(|c| c.iter().fold(0u64, |acc, &r| acc | 1 << r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    use proptest::prelude::*;

    fn p(n: u32) -> PrimeModulus {
        PrimeModulus::new(n).unwrap()
    }

    fn set(q: u32, xs: &[u32]) -> ResidueSet {
        ResidueSet::new(p(q), xs.iter().copied()).unwrap()
    }

    fn grid(q: u32, sets: &[&[u32]]) -> GridFamily {
        GridFamily::new(p(q), sets.iter().map(|s| set(q, s)).collect()).unwrap()
    }

    fn matrix(q: u32, rows: &[&[u32]]) -> MatrixFp {
        MatrixFp::from_rows(p(q), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Enumerates the full product; independent of the DFS and row-OR paths.
    fn brute_image(map: &MatrixFp, grid: &GridFamily) -> HashSet<Vec<u32>> {
        let q = map.modulus();
        let members: Vec<Vec<u32>> = grid.sets().iter().map(|s| s.iter().collect()).collect();
        let mut out = HashSet::new();
        let mut idx = vec![0usize; members.len()];
        loop {
            let x: Vec<u32> = idx.iter().zip(&members).map(|(&i, m)| m[i]).collect();
            let y: Vec<u32> = (0..map.rows())
                .map(|r| (0..map.cols()).fold(0, |acc, c| q.add(acc, q.mul(map.get(r, c), x[c]))))
                .collect();
            out.insert(y);
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return out;
                }
                idx[d] += 1;
                if idx[d] < members[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    fn as_points(image: &ImageSet) -> HashSet<Vec<u32>> {
        image.points().collect()
    }

    #[test]
    fn star_on_two_point_sets() {
        let g = grid(5, &[&[0, 1], &[0, 1], &[0, 1]]);
        let star = matrix(5, &[&[1, 0, 1], &[0, 1, 1]]);
        let img = image(&star, &g).unwrap();
        assert_eq!(img.size(), 7);
        let expected: HashSet<Vec<u32>> = [[0, 0], [1, 0], [0, 1], [1, 1], [1, 2], [2, 1], [2, 2]]
            .iter()
            .map(|p| p.to_vec())
            .collect();
        assert_eq!(as_points(&img), expected);
        assert_eq!(star_image_fast(&g).unwrap(), img);
        assert_eq!(image_size(&star, &g).unwrap(), 7);
    }

    #[test]
    fn identity_map_gives_product() {
        let g = grid(5, &[&[0, 1], &[0, 2]]);
        let id = matrix(5, &[&[1, 0], &[0, 1]]);
        let img = image(&id, &g).unwrap();
        assert_eq!(img.size(), 4);
        for x in [0, 1] {
            for y in [0, 2] {
                assert!(img.contains(&[x, y]));
            }
        }
    }

    #[test]
    fn partially_coupled_map() {
        let g = grid(5, &[&[0, 1], &[0, 1], &[0, 1]]);
        assert_eq!(
            image_size(&matrix(5, &[&[1, 0, 1], &[0, 1, 0]]), &g).unwrap(),
            6
        );
    }

    #[test]
    fn star_examples() {
        let g = grid(5, &[&[0, 1, 2, 3], &[0, 1, 2, 3], &[0, 1, 2, 3]]);
        assert_eq!(image_size(&MatrixFp::star(p(5), 3), &g).unwrap(), 25);
        let single = grid(7, &[&[0, 3], &[1, 2, 5], &[0]]);
        let img = star_image_fast(&single).unwrap();
        assert_eq!(img.size(), 6);
        assert!(img.contains(&[3, 5]));
    }

    #[test]
    fn full_field_is_surjective() {
        let q = p(5);
        let g = GridFamily::new(q, vec![ResidueSet::full(q); 3]).unwrap();
        let m = matrix(5, &[&[2, 1, 0], &[1, 0, 1]]);
        assert_eq!(image_size(&m, &g).unwrap(), 25);
    }

    #[test]
    fn errors() {
        let g = grid(5, &[&[0, 1], &[0, 1]]);
        let star = MatrixFp::star(p(5), 3);
        assert_eq!(
            image(&star, &g),
            Err(Error::ArityMismatch {
                expected: 3,
                got: 2
            })
        );
        let with_empty = grid(5, &[&[0, 1], &[], &[1]]);
        assert_eq!(image(&star, &with_empty), Err(Error::EmptySet(1)));
        let opts = ImageOptions {
            cell_cap: 24,
            workers: 1,
        };
        let g3 = grid(5, &[&[0], &[0], &[0]]);
        assert_eq!(
            image_with(&star, &g3, &opts),
            Err(Error::CellCapExceeded {
                required: 25,
                cap: 24
            })
        );
        assert!(star_image_fast(&grid(5, &[&[0]])).is_err());
    }

    #[test]
    fn oracle_exhaustive_p3_n3() {
        let q = p(3);
        let star = MatrixFp::star(q, 3);
        let mut seen = 0;
        for a in 1..8u64 {
            for b in 1..8u64 {
                for c in 1..8u64 {
                    let g = GridFamily::from_masks(q, &[a, b, c]);
                    let fast = star_image_fast(&g).unwrap();
                    assert_eq!(fast, image(&star, &g).unwrap());
                    assert_eq!(as_points(&fast), brute_image(&star, &g));
                    seen += 1;
                }
            }
        }
        assert_eq!(seen, 343);
    }

    #[test]
    fn fiber_examples() {
        let x = set(5, &[0, 1]);
        assert_eq!(fiber_counts(&x, &x).unwrap().counts, vec![1, 2, 1, 0, 0]);
        let y = set(7, &[1, 4, 5]);
        let f = fiber_counts(&ResidueSet::full(p(7)), &y).unwrap();
        assert!(f.counts.iter().all(|&t| t == 3));
        assert!(fiber_counts(&x, &y).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let g = grid(7, &[&[0, 1, 3], &[2, 6]]);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"p":7,"sets":[[0,1,3],[2,6]]}"#);
        assert_eq!(serde_json::from_str::<GridFamily>(&json).unwrap(), g);
        let img = image(&matrix(7, &[&[1, 1]]), &g).unwrap();
        let json = serde_json::to_string(&img).unwrap();
        assert_eq!(serde_json::from_str::<ImageSet>(&json).unwrap(), img);
    }

    #[test]
    fn mixed_radix_is_little_endian() {
        let mut img = ImageSet::new(p(5), 3, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(img.index_of(&[1, 2, 3]), Some(1 + 2 * 5 + 3 * 25));
        assert_eq!(img.point_of(86), vec![1, 2, 3]);
        assert!(img.insert(&[4, 4, 4]));
        assert_eq!(img.indices().collect::<Vec<_>>(), vec![124]);
        assert!(!img.insert(&[5, 0, 0]));
    }

    fn small_prime() -> impl Strategy<Value = PrimeModulus> {
        prop::sample::select(vec![2u32, 3, 5, 7, 11, 13]).prop_map(p)
    }

    fn grid_of(q: PrimeModulus, n: usize) -> impl Strategy<Value = GridFamily> {
        prop::collection::vec(1..=q.mask(), n).prop_map(move |m| GridFamily::from_masks(q, &m))
    }

    fn map_of(q: PrimeModulus, rows: usize, cols: usize) -> impl Strategy<Value = MatrixFp> {
        prop::collection::vec(0..q.get(), rows * cols).prop_map(move |e| {
            MatrixFp::from_rows(q, e.chunks(cols).map(<[u32]>::to_vec).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn star_fast_matches_generic(
            g in (small_prime(), 2usize..=4).prop_flat_map(|(q, n)| grid_of(q, n))
        ) {
            let star = MatrixFp::star(g.modulus(), g.arity());
            prop_assert_eq!(star_image_fast(&g).unwrap(), image(&star, &g).unwrap());
        }

        #[test]
        fn fiber_profile_identities(
            (x, y) in small_prime().prop_flat_map(|q| (0..=q.mask(), 0..=q.mask()).prop_map(move |(a, b)| {
                (ResidueSet::from_bits(q, a).unwrap(), ResidueSet::from_bits(q, b).unwrap())
            }))
        ) {
            let f = fiber_counts(&x, &y).unwrap();
            prop_assert_eq!(f.total(), (x.len() * y.len()) as u64);
            let q = x.modulus().order();
            let lo = (x.len() + y.len()).saturating_sub(q) as u64;
            let hi = x.len().min(y.len()) as u64;
            for (a, &t) in f.counts.iter().enumerate() {
                prop_assert!(lo <= t && t <= hi);
                let direct = x.iter().filter(|&u| y.contains(((a + q) as u32 - u) % q as u32)).count();
                prop_assert_eq!(t, direct as u64);
            }
            prop_assert_eq!(f.support(), crate::fp::sumset(&x, &y).unwrap().len());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn generic_matches_brute_force(
            (map, g) in (small_prime(), 1usize..=3, 1usize..=4).prop_flat_map(|(q, m, n)| {
                (map_of(q, m, n), grid_of(q, n))
            })
        ) {
            prop_assert_eq!(as_points(&image(&map, &g).unwrap()), brute_image(&map, &g));
        }

        #[test]
        fn worker_count_does_not_change_image(
            (map, g, workers) in (small_prime(), 1usize..=3, 2usize..=4).prop_flat_map(|(q, m, n)| {
                (map_of(q, m, n), grid_of(q, n), 1usize..=6)
            })
        ) {
            let opts = ImageOptions { workers, ..ImageOptions::default() };
            prop_assert_eq!(image_with(&map, &g, &opts).unwrap(), image(&map, &g).unwrap());
            let star = MatrixFp::star(g.modulus(), g.arity());
            prop_assert_eq!(star_image_fast_with(&g, &opts).unwrap(), image(&star, &g).unwrap());
        }

        #[test]
        fn translation_preserves_size(
            (map, g, offsets) in (small_prime(), 1usize..=3, 2usize..=4).prop_flat_map(|(q, m, n)| {
                (map_of(q, m, n), grid_of(q, n), prop::collection::vec(0..q.get(), n))
            })
        ) {
            let moved = g.translate(&offsets).unwrap();
            prop_assert_eq!(image_size(&map, &moved).unwrap(), image_size(&map, &g).unwrap());
        }

        #[test]
        fn growing_a_set_never_shrinks_the_image(
            (map, g, extra, at) in (small_prime(), 1usize..=3, 2usize..=4).prop_flat_map(|(q, m, n)| {
                (map_of(q, m, n), grid_of(q, n), 0..q.get(), 0..n)
            })
        ) {
            let before = image(&map, &g).unwrap();
            let mut bigger = g.set(at).iter().collect::<Vec<_>>();
            bigger.push(extra);
            let grown = g.replace(at, ResidueSet::new(g.modulus(), bigger).unwrap()).unwrap();
            let after = image(&map, &grown).unwrap();
            prop_assert!(after.size() >= before.size());
            prop_assert!(before.indices().all(|i| after.contains_index(i)));
        }

        #[test]
        fn sumset_map_meets_cauchy_davenport(
            g in small_prime().prop_flat_map(|q| grid_of(q, 2))
        ) {
            let q = g.modulus();
            let size = image_size(&MatrixFp::from_rows(q, vec![vec![1, 1]]).unwrap(), &g).unwrap();
            let bound = crate::fp::cd_lower_bound(g.set(0).len(), g.set(1).len(), q).unwrap();
            prop_assert!(size >= bound as u64);
        }
    }
}
