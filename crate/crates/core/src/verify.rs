//! Self-checking suites. Each runs a family of exact checks against the
//! library and reports pass/fail with timing. Random suites are seeded.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{cover_condition, fiber_bounds, large_k_bound, main_theorem_bound, star_bound};
use crate::error::{Error, Result};
use crate::explorer::{
    conjecture_gap_report, conjecture_window, verify_tightness, ConjectureOptions,
};
use crate::fp::{cd_lower_bound, sumset, PrimeModulus, ResidueSet};
use crate::image::{fiber_counts, image, star_image_fast, GridFamily};
use crate::linmap::{
    column_scale, column_swap, kernel_basis, normalize, rank, replay, row_transform, MatrixFp,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

const SMALL_PRIMES: [u32; 6] = [2, 3, 5, 7, 11, 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Cd,
    Tightness,
    Invariance,
    MainTheorem,
    LargeK,
    BoundaryIdentity,
    Cover,
    Fiber,
    Oracle,
    Conjecture,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Cd,
        Suite::Tightness,
        Suite::Invariance,
        Suite::MainTheorem,
        Suite::LargeK,
        Suite::BoundaryIdentity,
        Suite::Cover,
        Suite::Fiber,
        Suite::Oracle,
        Suite::Conjecture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cd => "cd",
            Suite::Tightness => "tightness",
            Suite::Invariance => "invariance",
            Suite::MainTheorem => "main-theorem",
            Suite::LargeK => "large-k",
            Suite::BoundaryIdentity => "boundary-identity",
            Suite::Cover => "cover",
            Suite::Fiber => "fiber",
            Suite::Oracle => "oracle",
            Suite::Conjecture => "conjecture",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                format!(
                    "unknown suite '{s}'; expected one of {}, all",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            cases: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub elapsed_ms: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn cases(&self) -> u64 {
        self.checks.iter().map(|c| c.cases).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: DEFAULT_SEED,
            workers: 1,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = match suite {
        Suite::Cd => cauchy_davenport()?,
        Suite::Tightness => tightness()?,
        Suite::Invariance => invariance(&mut rng)?,
        Suite::MainTheorem => main_theorem(&mut rng)?,
        Suite::LargeK => large_k(&mut rng)?,
        Suite::BoundaryIdentity => vec![boundary_identity(1_000_000)],
        Suite::Cover => cover(&mut rng)?,
        Suite::Fiber => fiber(&mut rng)?,
        Suite::Oracle => oracle(&mut rng)?,
        Suite::Conjecture => conjecture(opts)?,
    };
    Ok(SuiteReport {
        suite,
        seed: opts.seed,
        checks,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    Suite::ALL.iter().map(|&s| run_suite(s, opts)).collect()
}

fn modulus(p: u32) -> PrimeModulus {
    PrimeModulus::new(p).expect("prime below the cap")
}

fn random_set<R: Rng>(rng: &mut R, p: PrimeModulus, k: usize) -> ResidueSet {
    let bits = sample(rng, p.order(), k)
        .iter()
        .fold(0u64, |acc, r| acc | 1 << r);
    ResidueSet::from_bits(p, bits).expect("in range")
}

fn random_nonempty_set<R: Rng>(rng: &mut R, p: PrimeModulus) -> ResidueSet {
    let k = rng.gen_range(1..=p.order());
    random_set(rng, p, k)
}

fn random_grid<R: Rng>(rng: &mut R, p: PrimeModulus, n: usize) -> GridFamily {
    let sets = (0..n).map(|_| random_nonempty_set(rng, p)).collect();
    GridFamily::new(p, sets).expect("nonempty sets")
}

fn uniform_grid<R: Rng>(rng: &mut R, p: PrimeModulus, sizes: &[usize]) -> GridFamily {
    let sets = sizes.iter().map(|&k| random_set(rng, p, k)).collect();
    GridFamily::new(p, sets).expect("nonempty sets")
}

fn random_matrix<R: Rng>(rng: &mut R, p: PrimeModulus, rows: usize, cols: usize) -> MatrixFp {
    let entries = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0..p.get())).collect())
        .collect();
    MatrixFp::from_rows(p, entries).expect("well formed")
}

fn random_full_rank<R: Rng>(rng: &mut R, p: PrimeModulus, rows: usize, cols: usize) -> MatrixFp {
    loop {
        let m = random_matrix(rng, p, rows, cols);
        if rank(&m) == rows {
            return m;
        }
    }
}

fn random_invertible<R: Rng>(rng: &mut R, p: PrimeModulus, n: usize) -> MatrixFp {
    random_full_rank(rng, p, n, n)
}

fn random_unit<R: Rng>(rng: &mut R, p: PrimeModulus) -> u32 {
    rng.gen_range(1..p.get())
}

/// Every pair of nonempty subsets of `F_7`.
fn cauchy_davenport() -> Result<Vec<Check>> {
    let p = modulus(7);
    let mut bound = Check::new("sumset size >= min(|A|+|B|-1, p) for all nonempty A, B in F_7");
    let mut naive = Check::new("bitwise sumset equals pairwise sums");
    for a_bits in 1..=p.mask() {
        let a = ResidueSet::from_bits(p, a_bits)?;
        for b_bits in 1..=p.mask() {
            let b = ResidueSet::from_bits(p, b_bits)?;
            let s = sumset(&a, &b)?;
            let floor = cd_lower_bound(a.len(), b.len(), p)?;
            bound.record(s.len() >= floor, || format!("A={a}, B={b}"));
            let mut pairwise = 0u64;
            for x in a.iter() {
                for y in b.iter() {
                    pairwise |= 1 << ((x + y) % 7);
                }
            }
            naive.record(pairwise == s.bits(), || format!("A={a}, B={b}"));
        }
    }
    Ok(vec![bound, naive])
}

fn tightness() -> Result<Vec<Check>> {
    let mut check = Check::new("interval grids meet k^(m+1) - (k-1)^(m+1) exactly");
    for p in [5, 7, 11, 13] {
        let q = modulus(p);
        for m in [2usize, 3] {
            for k in (1..).take_while(|k| 2 * k <= p as usize + 1) {
                let sizes = vec![k; m + 1];
                let record = verify_tightness(q, m, &sizes)?;
                let expected = (k as u64).pow(m as u32 + 1) - (k as u64 - 1).pow(m as u32 + 1);
                check.record(
                    record.tight
                        && record.image_size == expected
                        && record.bound_value == Some(expected),
                    || {
                        format!(
                            "p={p} m={m} k={k}: image {} expected {expected}",
                            record.image_size
                        )
                    },
                );
            }
        }
    }
    Ok(vec![check])
}

fn invariance<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut rows = Check::new("row transform preserves image size");
    let mut scale = Check::new("column scale with inverse dilation preserves image size");
    let mut swap = Check::new("column swap preserves the image set");
    for _ in 0..10_000 {
        let p = modulus(SMALL_PRIMES[rng.gen_range(0..SMALL_PRIMES.len())]);
        let kind = rng.gen_range(0..3);
        let m = rng.gen_range(1..=3usize);
        let n = rng.gen_range(if kind == 2 { 2 } else { 1 }..=4usize);
        let map = random_matrix(rng, p, m, n);
        let grid = random_grid(rng, p, n);
        let before = image(&map, &grid)?;
        match kind {
            0 => {
                let r = random_invertible(rng, p, m);
                let after = image(&row_transform(&map, &r)?, &grid)?;
                rows.record(after.size() == before.size(), || {
                    format!("{map} R={r} grid {grid:?}")
                });
            }
            1 => {
                let i = rng.gen_range(0..n);
                let d = random_unit(rng, p);
                let (map2, grid2) = column_scale(&map, &grid, i, d)?;
                let after = image(&map2, &grid2)?;
                scale.record(after.size() == before.size(), || {
                    format!("{map} column {i} by {d}")
                });
            }
            _ => {
                let i = rng.gen_range(0..n);
                let j = (i + rng.gen_range(1..n)) % n;
                let (map2, grid2) = column_swap(&map, &grid, i, j)?;
                let after = image(&map2, &grid2)?;
                swap.record(after == before, || format!("{map} swap {i},{j}"));
            }
        }
    }
    let mut support = Check::new("min-support size unchanged by invertible row multipliers");
    for _ in 0..1_000 {
        let p = modulus(SMALL_PRIMES[rng.gen_range(1..SMALL_PRIMES.len())]);
        let m = rng.gen_range(1..=3usize);
        let n = m + rng.gen_range(1..=3usize);
        let map = random_full_rank(rng, p, m, n);
        let r = random_invertible(rng, p, m);
        let a = kernel_basis(&map).support.len();
        let b = kernel_basis(&row_transform(&map, &r)?).support.len();
        support.record(a == b, || format!("{map} R={r}: {a} vs {b}"));
    }
    Ok(vec![rows, scale, swap, support])
}

/// All shapes of length 3 over `1..=p` with `min + max < p`.
fn main_theorem_shapes(p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 1..p {
        for b in 1..p {
            for c in 1..p {
                let s = [a, b, c];
                if s.iter().min().unwrap() + s.iter().max().unwrap() < p {
                    out.push(s.to_vec());
                }
            }
        }
    }
    out
}

/// Every grid whose shape satisfies the size condition, for 20 random rank-2
/// maps per prime, evaluated through the normalized form.
fn main_theorem<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut sound = Check::new("image size >= main theorem bound on every admissible grid");
    let mut preserved = Check::new("normalization preserves image size");
    for p in [3u32, 5] {
        let q = modulus(p);
        let shapes = main_theorem_shapes(p as usize);
        for _ in 0..20 {
            let map = random_full_rank(rng, q, 2, 3);
            let probe = GridFamily::intervals(q, &[1, 1, 1])?;
            let normal = normalize(&map, &probe)?;
            let support = kernel_basis(&map).support;
            for shape in &shapes {
                let bound = main_theorem_bound(shape, &support, q)?;
                let floor = bound.bound().expect("shape satisfies the condition");
                for_each_grid(q, shape, |grid| {
                    let (canonical, moved) = replay(&map, grid, &normal.transcript)?;
                    let size = star_or_generic(&canonical, &moved)?;
                    let direct = image(&map, grid)?.size();
                    preserved.record(size == direct, || format!("{map} {grid:?}"));
                    sound.record(size >= floor, || {
                        format!("{map} {grid:?}: {size} < {floor}")
                    });
                    Ok(())
                })?;
            }
        }
    }
    Ok(vec![sound, preserved])
}

fn star_or_generic(map: &MatrixFp, grid: &GridFamily) -> Result<u64> {
    Ok(if map.is_star() {
        star_image_fast(grid)?.size()
    } else {
        image(map, grid)?.size()
    })
}

/// Calls `f` on every grid of the given shape.
fn for_each_grid(
    p: PrimeModulus,
    shape: &[usize],
    mut f: impl FnMut(&GridFamily) -> Result<()>,
) -> Result<()> {
    let choices: Vec<Vec<ResidueSet>> = shape
        .iter()
        .map(|&k| {
            (1..=p.mask())
                .filter(|b: &u64| b.count_ones() as usize == k)
                .map(|b| ResidueSet::from_bits(p, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut digits = vec![0usize; shape.len()];
    loop {
        let sets = digits
            .iter()
            .zip(&choices)
            .map(|(&d, c)| c[d])
            .collect();
        f(&GridFamily::new(p, sets)?)?;
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(());
            }
            digits[i] += 1;
            if digits[i] < choices[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

fn large_k<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut check = Check::new(
        "image size >= min(p^2 + 3k^2 - (2p+1)k, p^2) on random uniform grids in the window",
    );
    for p in [7u32, 11, 13] {
        let q = modulus(p);
        let (lo, hi) = conjecture_window(q);
        for k in lo..=hi {
            let formula = (p as i64).pow(2) + 3 * (k as i64).pow(2) - (2 * p as i64 + 1) * k as i64;
            let bound = large_k_bound(q, k)?
                .bound()
                .expect("window is above the threshold");
            check.record(bound as i64 == formula.min((p as i64).pow(2)), || {
                format!("p={p} k={k}: bound {bound} vs formula {formula}")
            });
            let floor = formula.min((p as i64).pow(2));
            for _ in 0..1_000 {
                let grid = uniform_grid(rng, q, &[k, k, k]);
                let size = star_image_fast(&grid)?.size() as i64;
                check.record(size >= floor, || {
                    format!("p={p} {grid:?}: {size} < {floor}")
                });
            }
        }
    }
    Ok(vec![check])
}

/// `p^2 + 3k^2 - (2p+1)k = k^3 - (k-1)^3` for every odd prime `p = 2k - 1` below `limit`.
pub fn boundary_identity(limit: u64) -> Check {
    let mut check = Check::new(format!(
        "boundary identity at p = 2k-1 for all primes below {limit}"
    ));
    let mut composite = vec![false; limit as usize];
    for n in 2..limit as usize {
        if composite[n] {
            continue;
        }
        let mut multiple = n * n;
        while multiple < limit as usize {
            composite[multiple] = true;
            multiple += n;
        }
        if n == 2 {
            continue;
        }
        let p = n as i128;
        let k = (p + 1) / 2;
        let left = p * p + 3 * k * k - (2 * p + 1) * k;
        let right = k.pow(3) - (k - 1).pow(3);
        check.record(left == right, || format!("p={p}: {left} vs {right}"));
    }
    check
}

fn cover<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let p = modulus(5);
    let full = 25u64;
    let mut uniform = Check::new("p=5, n=3, k=k'=4 grids cover F_5^2");
    for _ in 0..1_000 {
        let grid = uniform_grid(rng, p, &[4, 4, 4]);
        let size = star_image_fast(&grid)?.size();
        uniform.record(size == full, || format!("{grid:?}: {size}"));
    }
    let base = GridFamily::intervals(p, &[4, 4, 4])?;
    for a in 0..5 {
        for b in 0..5 {
            for c in 0..5 {
                let grid = base.translate(&[a, b, c])?;
                let size = star_image_fast(&grid)?.size();
                uniform.record(size == full, || format!("{grid:?}: {size}"));
            }
        }
    }

    let mut mixed = Check::new("every shape meeting the cover condition covers");
    let mut condition = Check::new("cover condition matches (n-1)k + k' >= (n-1)p + 1");
    for (p, n) in [(5u32, 3usize), (5, 4), (7, 3), (3, 4)] {
        let q = modulus(p);
        let cells = (p as u64).pow(n as u32 - 1);
        for k in 1..=p as usize {
            for k_last in 1..=p as usize {
                let mut sizes = vec![k; n - 1];
                sizes.push(k_last);
                let report = cover_condition(q, n, &sizes)?;
                let expected = (n - 1) * k + k_last > (n - 1) * p as usize;
                condition.record(report.applicable == expected, || {
                    format!("p={p} sizes {sizes:?}")
                });
                if !expected {
                    continue;
                }
                for _ in 0..50 {
                    let grid = uniform_grid(rng, q, &sizes);
                    let size = star_image_fast(&grid)?.size();
                    mixed.record(size == cells, || format!("{grid:?}: {size} of {cells}"));
                }
            }
        }
    }
    Ok(vec![uniform, mixed, condition])
}

fn fiber<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut bounds = Check::new("max(0, |X|+|Y|-p) <= t_a <= min(|X|, |Y|) for every a");
    let mut total = Check::new("sum of t_a equals |X||Y|");
    let mut naive = Check::new("t_a equals |X ∩ (a - Y)|");
    for _ in 0..10_000 {
        let p = modulus(SMALL_PRIMES[rng.gen_range(0..SMALL_PRIMES.len())]);
        let (kx, ky) = (rng.gen_range(0..=p.order()), rng.gen_range(0..=p.order()));
        let x = random_set(rng, p, kx);
        let y = random_set(rng, p, ky);
        let profile = fiber_counts(&x, &y)?;
        let (lo, hi) = fiber_bounds(x.len(), y.len(), p)?;
        bounds.record(
            profile
                .counts
                .iter()
                .all(|&t| lo as u64 <= t && t <= hi as u64),
            || format!("X={x} Y={y} {:?}", profile.counts),
        );
        total.record(profile.total() == (x.len() * y.len()) as u64, || {
            format!("X={x} Y={y}")
        });
        let direct = (0..p.get()).all(|a| {
            let count = x.iter().filter(|&v| y.contains(p.sub(a, v))).count() as u64;
            profile.counts[a as usize] == count
        });
        naive.record(direct, || format!("X={x} Y={y}"));
    }
    Ok(vec![bounds, total, naive])
}

fn oracle<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut exhaustive =
        Check::new("star fast path equals generic image on all 343 grids at p=3, n=3");
    let p = modulus(3);
    let star = MatrixFp::star(p, 3);
    for a in 1..8u64 {
        for b in 1..8u64 {
            for c in 1..8u64 {
                let sets = [a, b, c]
                    .iter()
                    .map(|&m| ResidueSet::from_bits(p, m))
                    .collect::<Result<_>>()?;
                let grid = GridFamily::new(p, sets)?;
                let fast = star_image_fast(&grid)?;
                exhaustive.record(fast == image(&star, &grid)?, || format!("{grid:?}"));
            }
        }
    }
    let mut random =
        Check::new("star fast path equals generic image on random grids at p <= 13, n <= 4");
    for _ in 0..1_000 {
        let p = modulus(SMALL_PRIMES[rng.gen_range(0..SMALL_PRIMES.len())]);
        let n = rng.gen_range(2..=4usize);
        let grid = random_grid(rng, p, n);
        let fast = star_image_fast(&grid)?;
        random.record(fast == image(&MatrixFp::star(p, n), &grid)?, || {
            format!("{grid:?}")
        });
    }
    Ok(vec![exhaustive, random])
}

fn conjecture(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut endpoints =
        Check::new("interval image equals the large-k bound at both window endpoints");
    let mut sound = Check::new("search minima never fall below the large-k bound");
    let conj = ConjectureOptions {
        workers: opts.workers,
        ..ConjectureOptions::default()
    };
    for p in [7u32, 11, 13] {
        let q = modulus(p);
        let (lo, hi) = conjecture_window(q);
        for k in [lo, hi] {
            let report = conjecture_gap_report(q, k, 1_000, opts.seed, &conj)?;
            endpoints.record(report.interval_gap == 0, || {
                format!(
                    "p={p} k={k}: interval {} bound {}",
                    report.interval_image, report.theorem_bound
                )
            });
            let exhaustive_ok = report
                .exhaustive
                .as_ref()
                .is_none_or(|e| e.image_size >= report.theorem_bound);
            sound.record(report.search_gap >= 0 && exhaustive_ok, || {
                format!("p={p} k={k}")
            });
        }
    }
    Ok(vec![endpoints, sound])
}

/// Exhaustive star-lemma soundness for small instances, used by tests.
pub fn star_lemma_exhaustive(p: PrimeModulus, shape: &[usize]) -> Result<bool> {
    let report = star_bound(shape, p)?;
    let Some(floor) = report.bound() else {
        return Err(Error::PreconditionFailed(format!(
            "{shape:?} outside the star lemma range"
        )));
    };
    let mut ok = true;
    for_each_grid(p, shape, |grid| {
        ok &= star_image_fast(grid)?.size() >= floor;
        Ok(())
    })?;
    Ok(ok)
}
