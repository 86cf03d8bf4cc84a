//! Extremal search over grids of a fixed shape.
//!
//! Exhaustive mode walks every family: each coordinate runs through the
//! `k`-subsets of `F_p` in colexicographic order (which is increasing order of
//! the bit masks), and coordinates form an odometer with coordinate 0 fastest.
//! The family index in that order identifies the minimizer, so results do not
//! depend on how the range is split across workers.
//!
//! Random mode runs independent hill-descent chains of `restart_steps`
//! evaluations. Chain `c` draws from ChaCha8 stream `c` of the seed, so the
//! chain decomposition, and therefore the result, is fixed by the config alone.

use std::fs;
use std::path::Path;
use std::thread;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{best_bound, large_k_bound, star_bound, BoundReport, Theorem};
use crate::error::{Error, Result};
use crate::fp::PrimeModulus;
use crate::image::{star_image_fast, Evaluator, GridFamily, DEFAULT_CELL_CAP};
use crate::linmap::MatrixFp;

/// Default ceiling on the number of families an exhaustive run may visit.
pub const EXH_CAP: u64 = 100_000_000;
pub const DEFAULT_RESTART_STEPS: u64 = 250;
/// Families per checkpointed chunk.
pub const CHECKPOINT_CHUNK: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub p: PrimeModulus,
    pub shape: Vec<usize>,
    pub mode: SearchMode,
    pub iterations: u64,
    pub seed: u64,
    pub parallelism: usize,
    #[serde(default = "default_restart_steps")]
    pub restart_steps: u64,
    #[serde(default = "default_exhaustive_cap")]
    pub exhaustive_cap: u64,
    #[serde(default = "default_cell_cap")]
    pub cell_cap: u64,
}

fn default_restart_steps() -> u64 {
    DEFAULT_RESTART_STEPS
}

fn default_exhaustive_cap() -> u64 {
    EXH_CAP
}

fn default_cell_cap() -> u64 {
    DEFAULT_CELL_CAP
}

impl SearchConfig {
    pub fn exhaustive(p: PrimeModulus, shape: Vec<usize>) -> Self {
        SearchConfig {
            p,
            shape,
            mode: SearchMode::Exhaustive,
            iterations: 0,
            seed: 0,
            parallelism: 1,
            restart_steps: DEFAULT_RESTART_STEPS,
            exhaustive_cap: EXH_CAP,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }

    pub fn random(p: PrimeModulus, shape: Vec<usize>, iterations: u64, seed: u64) -> Self {
        SearchConfig {
            mode: SearchMode::Random,
            iterations,
            seed,
            ..Self::exhaustive(p, shape)
        }
    }

    pub fn with_parallelism(mut self, workers: usize) -> Self {
        self.parallelism = workers;
        self
    }

    fn validate(&self, map: &MatrixFp) -> Result<()> {
        if map.modulus() != self.p {
            return Err(Error::ModulusMismatch(self.p.get(), map.modulus().get()));
        }
        if self.shape.len() != map.cols() {
            return Err(Error::ArityMismatch {
                expected: map.cols(),
                got: self.shape.len(),
            });
        }
        if let Some(&size) = self.shape.iter().find(|&&k| k == 0 || k > self.p.order()) {
            return Err(Error::SizeOutOfRange {
                size,
                min: 1,
                max: self.p.order(),
            });
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidConfig(
                "parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Identifies everything that determines a search result (parallelism does not).
    pub fn fingerprint(&self, map: &MatrixFp) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            config: SearchConfig,
            map: &'a MatrixFp,
        }
        let key = Key {
            config: SearchConfig {
                parallelism: 0,
                ..self.clone()
            },
            map,
        };
        let bytes = serde_json::to_vec(&key).expect("serializable");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `Π C(p, k_i)`, saturating.
pub fn family_count(p: PrimeModulus, shape: &[usize]) -> u128 {
    shape
        .iter()
        .map(|&k| binomial(p.order(), k))
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Mask of the `rank`-th `k`-subset in colex order.
fn colex_unrank(k: usize, mut rank: u128) -> u64 {
    let mut mask = 0u64;
    for i in (1..=k).rev() {
        let mut c = i - 1;
        while binomial(c + 1, i) <= rank {
            c += 1;
        }
        mask |= 1 << c;
        rank -= binomial(c, i);
    }
    mask
}

/// Next mask with the same popcount (Gosper's hack).
#[inline]
fn next_colex(x: u64) -> u64 {
    let low = x & x.wrapping_neg();
    let ripple = x + low;
    ripple | (((x ^ ripple) >> 2) / low)
}

struct Odometer {
    masks: Vec<u64>,
    digits: Vec<u64>,
    radices: Vec<u64>,
    firsts: Vec<u64>,
}

impl Odometer {
    fn at(p: PrimeModulus, shape: &[usize], mut index: u64) -> Self {
        let radices: Vec<u64> = shape
            .iter()
            .map(|&k| binomial(p.order(), k) as u64)
            .collect();
        let firsts: Vec<u64> = shape.iter().map(|&k| (1u64 << k) - 1).collect();
        let mut digits = Vec::with_capacity(shape.len());
        let mut masks = Vec::with_capacity(shape.len());
        for (&k, &radix) in shape.iter().zip(&radices) {
            let d = index % radix;
            index /= radix;
            digits.push(d);
            masks.push(colex_unrank(k, d as u128));
        }
        Odometer {
            masks,
            digits,
            radices,
            firsts,
        }
    }

    fn advance(&mut self) {
        for i in 0..self.masks.len() {
            self.digits[i] += 1;
            if self.digits[i] < self.radices[i] {
                self.masks[i] = next_colex(self.masks[i]);
                return;
            }
            self.digits[i] = 0;
            self.masks[i] = self.firsts[i];
        }
    }
}

/// A grid together with its exact image size and the best applicable bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalRecord {
    pub grid: GridFamily,
    pub image_size: u64,
    pub theorem: Theorem,
    pub bound_value: Option<u64>,
    pub tight: bool,
    /// Family index (exhaustive) or global evaluation index (random) where this grid was found.
    pub found_at: u64,
}

impl ExtremalRecord {
    /// Fails with [`Error::SoundnessViolation`] if the image undercuts the bound.
    pub fn new(
        grid: GridFamily,
        image_size: u64,
        bound: &BoundReport,
        found_at: u64,
    ) -> Result<Self> {
        let bound_value = bound.bound();
        if let Some(b) = bound_value {
            if image_size < b {
                return Err(Error::SoundnessViolation {
                    theorem: format!("{:?}", bound.theorem),
                    image_size,
                    bound: b,
                });
            }
        }
        Ok(ExtremalRecord {
            grid,
            image_size,
            theorem: bound.theorem,
            bound_value,
            tight: bound_value == Some(image_size),
            found_at,
        })
    }
}

/// Star map on `m + 1` intervals of the given sizes, compared with the star bound.
pub fn verify_tightness(p: PrimeModulus, m: usize, sizes: &[usize]) -> Result<ExtremalRecord> {
    if sizes.len() != m + 1 {
        return Err(Error::ArityMismatch {
            expected: m + 1,
            got: sizes.len(),
        });
    }
    let bound = star_bound(sizes, p)?;
    if !bound.applicable {
        return Err(Error::PreconditionFailed(format!(
            "sizes {sizes:?} need min + max <= {}",
            p.order() + 1
        )));
    }
    let grid = GridFamily::intervals(p, sizes)?;
    let size = star_image_fast(&grid)?.size();
    ExtremalRecord::new(grid, size, &bound, 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Candidate {
    size: u64,
    index: u64,
    masks: Vec<u64>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        (self.size, self.index) < (other.size, other.index)
    }
}

fn keep_best(best: Option<Candidate>, next: Option<Candidate>) -> Option<Candidate> {
    match (best, next) {
        (Some(a), Some(b)) => Some(if b.better_than(&a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    position: u64,
    best: Option<Candidate>,
}

pub fn exhaustive_min_image(config: &SearchConfig, map: &MatrixFp) -> Result<ExtremalRecord> {
    exhaustive_min_image_resumable(config, map, None)
}

/// Exhaustive minimization, optionally checkpointing after every chunk of
/// [`CHECKPOINT_CHUNK`] families and resuming from an existing checkpoint.
pub fn exhaustive_min_image_resumable(
    config: &SearchConfig,
    map: &MatrixFp,
    checkpoint: Option<&Path>,
) -> Result<ExtremalRecord> {
    config.validate(map)?;
    if config.mode != SearchMode::Exhaustive {
        return Err(Error::InvalidConfig(
            "exhaustive search needs exhaustive mode".into(),
        ));
    }
    let families = family_count(config.p, &config.shape);
    if families > config.exhaustive_cap as u128 {
        return Err(Error::FamilyCapExceeded {
            families,
            cap: config.exhaustive_cap as u128,
        });
    }
    let families = families as u64;
    let bound = best_bound(map, &config.shape)?;
    let floor = bound.bound();
    let eval = Evaluator::new(map, config.cell_cap)?;
    let fingerprint = config.fingerprint(map);

    let (mut position, mut best) = match checkpoint.filter(|path| path.exists()) {
        Some(path) => {
            let saved: Checkpoint = fs::read(path)
                .map_err(|e| Error::Checkpoint(e.to_string()))
                .and_then(|b| {
                    serde_json::from_slice(&b).map_err(|e| Error::Checkpoint(e.to_string()))
                })?;
            if saved.fingerprint != fingerprint {
                return Err(Error::Checkpoint(
                    "checkpoint belongs to a different search".into(),
                ));
            }
            (saved.position, saved.best)
        }
        None => (0, None),
    };
    let chunk = if checkpoint.is_some() {
        CHECKPOINT_CHUNK
    } else {
        families.max(1)
    };

    while position < families {
        if let (Some(b), Some(f)) = (&best, floor) {
            // Nothing later can be smaller, and ties lose on index.
            if b.size == f {
                break;
            }
        }
        let end = (position + chunk).min(families);
        let found = scan_parallel(&eval, config, position, end, floor);
        best = keep_best(best, found);
        position = end;
        if let Some(path) = checkpoint {
            let state = Checkpoint {
                fingerprint: fingerprint.clone(),
                position,
                best: best.clone(),
            };
            let bytes = serde_json::to_vec(&state).expect("serializable");
            fs::write(path, bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
    }
    let best = best.expect("at least one family");
    ExtremalRecord::new(
        GridFamily::from_masks(config.p, &best.masks),
        best.size,
        &bound,
        best.index,
    )
}

fn scan_parallel(
    eval: &Evaluator,
    config: &SearchConfig,
    start: u64,
    end: u64,
    floor: Option<u64>,
) -> Option<Candidate> {
    let workers = (config.parallelism as u64).clamp(1, (end - start).max(1));
    if workers == 1 {
        return scan(eval, config, start, end, floor);
    }
    let per = (end - start).div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = start + w * per;
                let hi = (lo + per).min(end);
                scope.spawn(move || {
                    if lo < hi {
                        scan(eval, config, lo, hi, floor)
                    } else {
                        None
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("search worker panicked"))
            .fold(None, keep_best)
    })
}

fn scan(
    eval: &Evaluator,
    config: &SearchConfig,
    start: u64,
    end: u64,
    floor: Option<u64>,
) -> Option<Candidate> {
    let mut odometer = Odometer::at(config.p, &config.shape, start);
    let mut scratch = eval.empty_image();
    let mut best: Option<Candidate> = None;
    for index in start..end {
        let size = eval.size_of(&odometer.masks, &mut scratch);
        if best.as_ref().is_none_or(|b| size < b.size) {
            best = Some(Candidate {
                size,
                index,
                masks: odometer.masks.clone(),
            });
            if Some(size) == floor {
                break;
            }
        }
        odometer.advance();
    }
    best
}

/// Seeded hill descent with single-element swaps inside one coordinate.
pub fn random_search(config: &SearchConfig, map: &MatrixFp) -> Result<ExtremalRecord> {
    config.validate(map)?;
    if config.mode != SearchMode::Random {
        return Err(Error::InvalidConfig(
            "random search needs random mode".into(),
        ));
    }
    if config.iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be at least 1".into()));
    }
    if config.restart_steps == 0 {
        return Err(Error::InvalidConfig(
            "restart_steps must be at least 1".into(),
        ));
    }
    let bound = best_bound(map, &config.shape)?;
    let floor = bound.bound();
    let eval = Evaluator::new(map, config.cell_cap)?;
    let chains = config.iterations.div_ceil(config.restart_steps);
    let workers = (config.parallelism as u64).clamp(1, chains);

    let run = |worker: u64| {
        (worker..chains)
            .step_by(workers as usize)
            .map(|c| run_chain(&eval, config, c, floor))
            .fold(None, keep_best)
    };
    let best = if workers == 1 {
        run(0)
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|w| scope.spawn(move || run(w))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("search worker panicked"))
                .fold(None, keep_best)
        })
    };
    let best = best.expect("at least one chain");
    ExtremalRecord::new(
        GridFamily::from_masks(config.p, &best.masks),
        best.size,
        &bound,
        best.index,
    )
}

fn random_subset<R: Rng>(rng: &mut R, p: PrimeModulus, k: usize) -> u64 {
    sample(rng, p.order(), k)
        .iter()
        .fold(0u64, |acc, r| acc | 1 << r)
}

/// Picks a uniformly random set bit of `mask` (nonempty).
fn random_member<R: Rng>(rng: &mut R, mask: u64) -> u32 {
    let mut skip = rng.gen_range(0..mask.count_ones());
    let mut m = mask;
    loop {
        let bit = m.trailing_zeros();
        if skip == 0 {
            return bit;
        }
        skip -= 1;
        m &= m - 1;
    }
}

fn run_chain(
    eval: &Evaluator,
    config: &SearchConfig,
    chain: u64,
    floor: Option<u64>,
) -> Option<Candidate> {
    let p = config.p;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain);
    let first = chain * config.restart_steps;
    let steps = config.restart_steps.min(config.iterations - first);
    let movable: Vec<usize> = (0..config.shape.len())
        .filter(|&i| config.shape[i] < p.order())
        .collect();

    let mut scratch = eval.empty_image();
    let mut masks: Vec<u64> = config
        .shape
        .iter()
        .map(|&k| random_subset(&mut rng, p, k))
        .collect();
    let mut current = eval.size_of(&masks, &mut scratch);
    let mut best = Candidate {
        size: current,
        index: first,
        masks: masks.clone(),
    };
    for step in 1..steps {
        if movable.is_empty() || Some(best.size) == floor {
            break;
        }
        let i = movable[rng.gen_range(0..movable.len())];
        let out = random_member(&mut rng, masks[i]);
        let into = random_member(&mut rng, !masks[i] & p.mask());
        let saved = masks[i];
        masks[i] = saved & !(1 << out) | 1 << into;
        let size = eval.size_of(&masks, &mut scratch);
        if size <= current {
            current = size;
            if size < best.size {
                best = Candidate {
                    size,
                    index: first + step,
                    masks: masks.clone(),
                };
            }
        } else {
            masks[i] = saved;
        }
    }
    Some(best)
}

/// Sizes `k` with `(p+1)/2 <= k <= ⌈2p/3⌉`.
pub fn conjecture_window(p: PrimeModulus) -> (usize, usize) {
    let p = p.order();
    ((p + 1).div_ceil(2), (2 * p).div_ceil(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConjectureOptions {
    pub workers: usize,
    /// Exhaustive minimization runs only when the family count is at most this.
    pub exhaustive_cap: u64,
    pub restart_steps: u64,
}

impl Default for ConjectureOptions {
    fn default() -> Self {
        ConjectureOptions {
            workers: 1,
            exhaustive_cap: 1_000_000,
            restart_steps: DEFAULT_RESTART_STEPS,
        }
    }
}

/// Interval value, large-`k` bound, and search minima side by side for the
/// two-row star map on three sets of size `k`. Evidence only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub p: PrimeModulus,
    pub k: usize,
    pub interval_image: u64,
    pub theorem_bound: u64,
    /// `interval_image - theorem_bound`.
    pub interval_gap: i64,
    pub search: ExtremalRecord,
    /// `search.image_size - theorem_bound`.
    pub search_gap: i64,
    pub exhaustive: Option<ExtremalRecord>,
    /// Grid families of this shape (saturating).
    pub families: u64,
    pub seed: u64,
    pub iterations: u64,
}

pub fn conjecture_gap_report(
    p: PrimeModulus,
    k: usize,
    iterations: u64,
    seed: u64,
    opts: &ConjectureOptions,
) -> Result<ConjectureReport> {
    let (lo, hi) = conjecture_window(p);
    if k < lo || k > hi {
        return Err(Error::OutsideWindow {
            p: p.get(),
            k,
            lo,
            hi,
        });
    }
    let shape = vec![k; 3];
    let star = MatrixFp::star(p, 3);
    let interval_image = star_image_fast(&GridFamily::intervals(p, &shape)?)?.size();
    let theorem_bound = large_k_bound(p, k)?
        .bound()
        .expect("window lies above the large-k threshold");
    let config = SearchConfig {
        restart_steps: opts.restart_steps,
        ..SearchConfig::random(p, shape.clone(), iterations, seed).with_parallelism(opts.workers)
    };
    let search = random_search(&config, &star)?;
    let families = family_count(p, &shape);
    let exhaustive = if families <= opts.exhaustive_cap as u128 {
        let config = SearchConfig::exhaustive(p, shape).with_parallelism(opts.workers);
        Some(exhaustive_min_image(&config, &star)?)
    } else {
        None
    };
    Ok(ConjectureReport {
        p,
        k,
        interval_image,
        theorem_bound,
        interval_gap: interval_image as i64 - theorem_bound as i64,
        search_gap: search.image_size as i64 - theorem_bound as i64,
        search,
        exhaustive,
        families: u64::try_from(families).unwrap_or(u64::MAX),
        seed,
        iterations,
    })
}

/// One row of the tabular summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub p: u32,
    pub shape: String,
    pub theorem: String,
    pub bound: Option<u64>,
    pub min_found: u64,
    pub interval_value: Option<u64>,
    pub tight: bool,
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
}

impl SummaryRow {
    pub fn from_record(
        record: &ExtremalRecord,
        interval_value: Option<u64>,
        config: &SearchConfig,
    ) -> Self {
        let random = config.mode == SearchMode::Random;
        SummaryRow {
            p: config.p.get(),
            shape: shape_label(&config.shape),
            theorem: format!("{:?}", record.theorem),
            bound: record.bound_value,
            min_found: record.image_size,
            interval_value,
            tight: record.tight,
            seed: random.then_some(config.seed),
            iterations: random.then_some(config.iterations),
        }
    }

    pub fn from_conjecture(report: &ConjectureReport) -> Self {
        let min_found = report
            .exhaustive
            .as_ref()
            .map_or(report.search.image_size, |e| {
                e.image_size.min(report.search.image_size)
            });
        SummaryRow {
            p: report.p.get(),
            shape: shape_label(&[report.k; 3]),
            theorem: format!("{:?}", Theorem::LargeK),
            bound: Some(report.theorem_bound),
            min_found,
            interval_value: Some(report.interval_image),
            tight: min_found == report.theorem_bound,
            seed: Some(report.seed),
            iterations: Some(report.iterations),
        }
    }
}

fn shape_label(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::image_size;

    fn p(n: u32) -> PrimeModulus {
        PrimeModulus::new(n).unwrap()
    }

    #[test]
    fn colex_order_is_mask_order() {
        for (n, k) in [(5usize, 2usize), (7, 3), (7, 7), (13, 1), (11, 5)] {
            let total = binomial(n, k) as u64;
            let mut mask = (1u64 << k) - 1;
            let mut seen = 0;
            for r in 0..total {
                assert_eq!(colex_unrank(k, r as u128), mask, "n={n} k={k} r={r}");
                assert_eq!(mask.count_ones() as usize, k);
                assert!(mask < 1 << n);
                seen += 1;
                let next = next_colex(mask);
                if r + 1 < total {
                    assert!(next > mask);
                }
                mask = next;
            }
            assert_eq!(seen, total);
        }
    }

    #[test]
    fn odometer_visits_every_family_once() {
        let q = p(5);
        let shape = [2usize, 1, 3];
        let total = family_count(q, &shape) as u64;
        assert_eq!(total, 10 * 5 * 10);
        let mut odo = Odometer::at(q, &shape, 0);
        let mut seen = std::collections::HashSet::new();
        for i in 0..total {
            let fresh = Odometer::at(q, &shape, i);
            assert_eq!(fresh.masks, odo.masks);
            assert!(seen.insert(odo.masks.clone()));
            odo.advance();
        }
    }

    #[test]
    fn tightness_examples() {
        let r = verify_tightness(p(5), 2, &[2, 2, 2]).unwrap();
        assert_eq!((r.image_size, r.bound_value, r.tight), (7, Some(7), true));
        let r = verify_tightness(p(7), 2, &[4, 4, 4]).unwrap();
        assert_eq!((r.image_size, r.bound_value, r.tight), (37, Some(37), true));
        let r = verify_tightness(p(11), 3, &[2, 2, 2, 2]).unwrap();
        assert_eq!((r.image_size, r.bound_value, r.tight), (15, Some(15), true));
        assert!(matches!(
            verify_tightness(p(7), 2, &[5, 4, 4]),
            Err(Error::PreconditionFailed(_))
        ));
        assert!(verify_tightness(p(7), 2, &[2, 2]).is_err());
    }

    #[test]
    fn exhaustive_examples() {
        let star = MatrixFp::star(p(3), 3);
        let r =
            exhaustive_min_image(&SearchConfig::exhaustive(p(3), vec![2, 2, 2]), &star).unwrap();
        assert_eq!(r.image_size, 7);
        assert!(r.tight);

        let sum = MatrixFp::from_rows(p(5), vec![vec![1, 1]]).unwrap();
        let r = exhaustive_min_image(&SearchConfig::exhaustive(p(5), vec![2, 2]), &sum).unwrap();
        assert_eq!(r.image_size, 3);
        assert_eq!(r.found_at, 0);

        let star5 = MatrixFp::star(p(5), 3);
        let r =
            exhaustive_min_image(&SearchConfig::exhaustive(p(5), vec![2, 5, 1]), &star5).unwrap();
        assert_eq!(r.image_size, 10);
    }

    /// Plain scan over every family with no early exit; the reference for the minimizer.
    fn reference_minimum(config: &SearchConfig, map: &MatrixFp) -> (u64, u64) {
        let total = family_count(config.p, &config.shape) as u64;
        let mut odo = Odometer::at(config.p, &config.shape, 0);
        let mut best = (u64::MAX, 0);
        for i in 0..total {
            let g = GridFamily::from_masks(config.p, &odo.masks);
            let s = image_size(map, &g).unwrap();
            if s < best.0 {
                best = (s, i);
            }
            odo.advance();
        }
        best
    }

    #[test]
    fn exhaustive_is_worker_independent() {
        let q = p(5);
        let map = MatrixFp::from_rows(q, vec![vec![1, 2, 0], vec![0, 1, 3]]).unwrap();
        let config = SearchConfig::exhaustive(q, vec![3, 2, 3]);
        let reference = reference_minimum(&config, &map);
        for workers in [1, 2, 3, 7] {
            let r = exhaustive_min_image(&config.clone().with_parallelism(workers), &map).unwrap();
            assert_eq!((r.image_size, r.found_at), reference);
        }
    }

    #[test]
    fn exhaustive_cap_and_mode() {
        let star = MatrixFp::star(p(13), 3);
        let mut config = SearchConfig::exhaustive(p(13), vec![6, 6, 6]);
        assert!(matches!(
            exhaustive_min_image(&config, &star),
            Err(Error::FamilyCapExceeded { .. })
        ));
        config.mode = SearchMode::Random;
        assert!(exhaustive_min_image(&config, &star).is_err());
    }

    #[test]
    fn checkpoint_resume_matches_one_shot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let q = p(7);
        let map = MatrixFp::from_rows(q, vec![vec![1, 3, 0], vec![0, 2, 1]]).unwrap();
        let config = SearchConfig::exhaustive(q, vec![3, 3, 3]);
        let one_shot = exhaustive_min_image(&config, &map).unwrap();
        let first = exhaustive_min_image_resumable(&config, &map, Some(&path)).unwrap();
        assert_eq!(first, one_shot);
        let saved: Checkpoint = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(saved.best.unwrap().index, one_shot.found_at);
        let resumed = exhaustive_min_image_resumable(&config, &map, Some(&path)).unwrap();
        assert_eq!(resumed, one_shot);
        let other = SearchConfig::exhaustive(q, vec![3, 3, 2]);
        assert!(matches!(
            exhaustive_min_image_resumable(&other, &map, Some(&path)),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn random_search_is_deterministic() {
        let star = MatrixFp::star(p(7), 3);
        let config = SearchConfig::random(p(7), vec![3, 4, 3], 2000, 11);
        let a = random_search(&config, &star).unwrap();
        let b = random_search(&config, &star).unwrap();
        assert_eq!(a, b);
        for workers in [2, 3, 8] {
            assert_eq!(
                random_search(&config.clone().with_parallelism(workers), &star).unwrap(),
                a
            );
        }
        let other = random_search(
            &SearchConfig {
                seed: 12,
                ..config.clone()
            },
            &star,
        )
        .unwrap();
        assert!(other.image_size >= a.bound_value.unwrap_or(0));
    }

    #[test]
    fn random_search_finds_the_large_k_minimum() {
        let star = MatrixFp::star(p(7), 3);
        let config = SearchConfig::random(p(7), vec![4, 4, 4], 10_000, 1);
        let r = random_search(&config, &star).unwrap();
        assert_eq!(r.image_size, 37);
        assert!(r.tight);
    }

    #[test]
    fn random_never_beats_exhaustive() {
        let q = p(3);
        let maps = [
            MatrixFp::star(q, 3),
            MatrixFp::from_rows(q, vec![vec![1, 2, 0], vec![0, 1, 1]]).unwrap(),
        ];
        for map in &maps {
            for shape in [vec![1, 2, 2], vec![2, 2, 2], vec![3, 1, 2]] {
                let exact =
                    exhaustive_min_image(&SearchConfig::exhaustive(q, shape.clone()), map).unwrap();
                for seed in 0..5 {
                    let config = SearchConfig::random(q, shape.clone(), 200, seed);
                    assert!(random_search(&config, map).unwrap().image_size >= exact.image_size);
                }
            }
        }
    }

    #[test]
    fn random_config_validation() {
        let star = MatrixFp::star(p(7), 3);
        let zero = SearchConfig::random(p(7), vec![3, 3, 3], 0, 1);
        assert!(matches!(
            random_search(&zero, &star),
            Err(Error::InvalidConfig(_))
        ));
        let wrong = SearchConfig::random(p(7), vec![3, 3], 10, 1);
        assert!(random_search(&wrong, &star).is_err());
        let big = SearchConfig::random(p(7), vec![3, 8, 3], 10, 1);
        assert!(random_search(&big, &star).is_err());
    }

    #[test]
    fn conjecture_examples() {
        let opts = ConjectureOptions::default();
        let r = conjecture_gap_report(p(7), 4, 2000, 1, &opts).unwrap();
        assert_eq!(
            (r.interval_image, r.theorem_bound, r.interval_gap),
            (37, 37, 0)
        );
        assert_eq!(r.exhaustive.as_ref().map(|e| e.image_size), Some(37));
        let r = conjecture_gap_report(p(7), 5, 500, 1, &opts).unwrap();
        assert_eq!(
            (r.interval_image, r.theorem_bound, r.interval_gap),
            (49, 49, 0)
        );
        let r = conjecture_gap_report(p(13), 8, 500, 1, &opts).unwrap();
        assert_eq!(r.theorem_bound, 145);
        assert!(r.interval_gap >= 0);
        assert!(r.search_gap >= 0);
        assert!(matches!(
            conjecture_gap_report(p(7), 3, 10, 1, &opts),
            Err(Error::OutsideWindow { lo: 4, hi: 5, .. })
        ));
        assert!(conjecture_gap_report(p(7), 6, 10, 1, &opts).is_err());
    }

    #[test]
    fn window_bounds() {
        assert_eq!(conjecture_window(p(7)), (4, 5));
        assert_eq!(conjecture_window(p(11)), (6, 8));
        assert_eq!(conjecture_window(p(13)), (7, 9));
        assert_eq!(conjecture_window(p(2)), (2, 2));
    }
}
