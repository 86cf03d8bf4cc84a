//! Lower bounds on image sizes and a dispatcher that picks the strongest one.
//!
//! Every value is an exact integer. A report that is not applicable never
//! carries a value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::PrimeModulus;
use crate::linmap::{kernel_basis, rank, MatrixFp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// `|A + B| >= min(|A| + |B| - 1, p)`.
    CauchyDavenport,
    /// Product over the co-support times the star bound over the kernel support.
    MainTheorem,
    /// `Π s_i - Π (s_i - 1)` for the star map when `min + max <= p + 1`.
    StarLemma,
    /// `min(p² + 3k² - (2p+1)k, p²)` for the two-row star map with `2k >= p + 1`.
    LargeK,
    /// Full cover `p^(n-1)` when `(n-1)k + k' >= (n-1)p + 1`.
    Cover,
    #[serde(rename = "None")]
    NoTheorem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precondition {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl Precondition {
    fn new(name: &str, holds: bool, detail: String) -> Self {
        Precondition {
            name: name.to_string(),
            holds,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub applicable: bool,
    pub reason: String,
    pub value: Option<u64>,
    pub preconditions: Vec<Precondition>,
    #[serde(default)]
    pub candidates: Vec<BoundReport>,
}

impl BoundReport {
    fn evaluated(theorem: Theorem, preconditions: Vec<Precondition>, value: u64) -> Self {
        let failed: Vec<&str> = preconditions
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.name.as_str())
            .collect();
        let applicable = failed.is_empty();
        BoundReport {
            theorem,
            applicable,
            reason: if applicable {
                "all preconditions hold".to_string()
            } else {
                format!("precondition failed: {}", failed.join(", "))
            },
            value: applicable.then_some(value),
            preconditions,
            candidates: Vec::new(),
        }
    }

    fn none(reason: impl Into<String>, candidates: Vec<BoundReport>) -> Self {
        BoundReport {
            theorem: Theorem::NoTheorem,
            applicable: false,
            reason: reason.into(),
            value: None,
            preconditions: Vec::new(),
            candidates,
        }
    }

    /// The claimed lower bound, if any.
    pub fn bound(&self) -> Option<u64> {
        if self.applicable {
            self.value
        } else {
            None
        }
    }
}

fn check_sizes(sizes: &[usize], p: PrimeModulus, min: usize) -> Result<()> {
    match sizes.iter().find(|&&s| s < min || s > p.order()) {
        Some(&size) => Err(Error::SizeOutOfRange {
            size,
            min,
            max: p.order(),
        }),
        None => Ok(()),
    }
}

fn product(values: impl IntoIterator<Item = usize>) -> Result<u64> {
    values
        .into_iter()
        .try_fold(1u64, |acc, v| acc.checked_mul(v as u64))
        .ok_or(Error::Overflow("size product"))
}

/// `Π s - Π (s - 1)` over the given sizes.
fn star_value(sizes: impl Iterator<Item = usize> + Clone) -> Result<u64> {
    Ok(product(sizes.clone())? - product(sizes.map(|s| s - 1))?)
}

fn min_max(sizes: &[usize]) -> (usize, usize) {
    let min = *sizes.iter().min().expect("nonempty");
    let max = *sizes.iter().max().expect("nonempty");
    (min, max)
}

/// Bound for `(x_1 + x_n, ..., x_{n-1} + x_n)` on sets of the given sizes.
pub fn star_bound(sizes: &[usize], p: PrimeModulus) -> Result<BoundReport> {
    if sizes.len() < 2 {
        return Err(Error::ArityMismatch {
            expected: 2,
            got: sizes.len(),
        });
    }
    check_sizes(sizes, p, 1)?;
    let (min, max) = min_max(sizes);
    let value = star_value(sizes.iter().copied())?;
    let pre = vec![Precondition::new(
        "min_plus_max_at_most_p_plus_1",
        min + max <= p.order() + 1,
        format!("{min} + {max} <= {}", p.order() + 1),
    )];
    Ok(BoundReport::evaluated(Theorem::StarLemma, pre, value))
}

/// Bound for a rank-`m` map `F_p^(m+1) -> F_p^m` whose kernel has support `support` (zero-based).
pub fn main_theorem_bound(
    sizes: &[usize],
    support: &[usize],
    p: PrimeModulus,
) -> Result<BoundReport> {
    if sizes.is_empty() {
        return Err(Error::ArityMismatch {
            expected: 1,
            got: 0,
        });
    }
    check_sizes(sizes, p, 1)?;
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&index) = support.iter().find(|&&i| i >= sizes.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: sizes.len(),
        });
    }
    let in_support = |i: &usize| support.contains(i);
    let outside = product(
        (0..sizes.len())
            .filter(|i| !in_support(i))
            .map(|i| sizes[i]),
    )?;
    let inside = star_value(support.iter().map(|&i| sizes[i]))?;
    let value = outside
        .checked_mul(inside)
        .ok_or(Error::Overflow("main theorem bound"))?;
    let (min, max) = min_max(sizes);
    let on_support: Vec<usize> = support.iter().map(|&i| sizes[i]).collect();
    let (s_min, s_max) = min_max(&on_support);
    let pre = vec![
        Precondition::new(
            "min_plus_max_below_p",
            min + max < p.order(),
            format!("{min} + {max} < {}", p.order()),
        ),
        // The bound reduces to the star lemma on the support coordinates, which
        // needs its own size condition; a small set off the support can mask a
        // violation of it (p=7, support {0,2}, sizes (4,1,5): bound 8, image 7).
        Precondition::new(
            "support_min_plus_max_at_most_p_plus_1",
            s_min + s_max <= p.order() + 1,
            format!("{s_min} + {s_max} <= {}", p.order() + 1),
        ),
    ];
    Ok(BoundReport::evaluated(Theorem::MainTheorem, pre, value))
}

/// Bound for the two-row star map on three sets of common size `k`.
pub fn large_k_bound(p: PrimeModulus, k: usize) -> Result<BoundReport> {
    check_sizes(&[k], p, 1)?;
    let (pi, ki) = (p.get() as i128, k as i128);
    let square = pi * pi;
    let value = (square + 3 * ki * ki - (2 * pi + 1) * ki).min(square);
    let pre = vec![Precondition::new(
        "two_k_at_least_p_plus_1",
        2 * k > p.order(),
        format!("2·{k} >= {}", p.order() + 1),
    )];
    // Below the threshold the formula can go negative; it is never reported there.
    Ok(BoundReport::evaluated(
        Theorem::LargeK,
        pre,
        value.max(0) as u64,
    ))
}

/// Full-cover condition for the star map with `k` for the first `n-1` sets and `k'` for the last.
pub fn cover_condition(p: PrimeModulus, n: usize, sizes: &[usize]) -> Result<BoundReport> {
    if n < 2 || sizes.len() != n {
        return Err(Error::ArityMismatch {
            expected: n.max(2),
            got: sizes.len(),
        });
    }
    check_sizes(sizes, p, 1)?;
    let (head, &[last]) = sizes.split_at(n - 1) else {
        unreachable!()
    };
    let k = head[0];
    if head.iter().any(|&s| s != k) {
        return Err(Error::NonUniformCover(sizes.to_vec()));
    }
    let lhs = (n - 1) * k + last;
    let rhs = (n - 1) * p.order() + 1;
    let uniform = last == k;
    let threshold = uniform && n * k > (n - 1) * p.order();
    let value = (p.get() as u64)
        .checked_pow((n - 1) as u32)
        .ok_or(Error::Overflow("p^(n-1)"))?;
    let mut report = BoundReport::evaluated(
        Theorem::Cover,
        vec![Precondition::new(
            "cover_size_condition",
            lhs >= rhs,
            format!("({})·{k} + {last} = {lhs} >= {rhs}", n - 1),
        )],
        value,
    );
    // Informational: the uniform form k > (n-1)p/n, equivalent to the above when k' = k.
    report.preconditions.push(Precondition::new(
        "uniform_threshold",
        threshold,
        if uniform {
            format!("{n}·{k} > {}", (n - 1) * p.order())
        } else {
            "sizes are not uniform".to_string()
        },
    ));
    Ok(report)
}

/// `(max(0, |X| + |Y| - p), min(|X|, |Y|))`, the range of every fiber count `t_a`.
pub fn fiber_bounds(x_size: usize, y_size: usize, p: PrimeModulus) -> Result<(usize, usize)> {
    check_sizes(&[x_size, y_size], p, 0)?;
    Ok((
        (x_size + y_size).saturating_sub(p.order()),
        x_size.min(y_size),
    ))
}

/// Evaluates every bound that applies to `map` on sets of the given sizes and
/// returns the largest applicable one, with all evaluated candidates attached.
///
/// When the kernel has full support the map is equivalent (by row operations,
/// column scalings with matching dilations, and column swaps, none of which
/// change set sizes) to the star map with any chosen coordinate as the shared
/// one, so the star-specific bounds are evaluated too.
pub fn best_bound(map: &MatrixFp, sizes: &[usize]) -> Result<BoundReport> {
    let p = map.modulus();
    let (m, n) = (map.rows(), map.cols());
    if sizes.len() != n {
        return Err(Error::ArityMismatch {
            expected: n,
            got: sizes.len(),
        });
    }
    check_sizes(sizes, p, 1)?;
    let r = rank(map);
    if r < m {
        return Ok(BoundReport::none(
            format!("out of theorem scope: rank {r} < {m}"),
            Vec::new(),
        ));
    }
    if n != m + 1 {
        return Ok(BoundReport::none(
            format!("out of theorem scope: {m}x{n} map is not {m}x{}", m + 1),
            Vec::new(),
        ));
    }
    let support = kernel_basis(map).support;
    let mut candidates = Vec::new();
    if m == 1 && support.len() == 2 {
        let value = crate::fp::cd_lower_bound(sizes[0], sizes[1], p)? as u64;
        candidates.push(BoundReport::evaluated(
            Theorem::CauchyDavenport,
            Vec::new(),
            value,
        ));
    }
    candidates.push(main_theorem_bound(sizes, &support, p)?);
    if support.len() == n {
        candidates.push(star_bound(sizes, p)?);
        if m == 2 && sizes.iter().all(|&s| s == sizes[0]) {
            candidates.push(large_k_bound(p, sizes[0])?);
        }
        // Any coordinate can play the shared one; prefer the last.
        let center = (0..n).rev().find(|&c| {
            let mut rest = (0..n).filter(|&i| i != c).map(|i| sizes[i]);
            let first = rest.next().expect("n >= 2");
            rest.all(|s| s == first)
        });
        if let Some(c) = center {
            let mut ordered: Vec<usize> = (0..n).filter(|&i| i != c).map(|i| sizes[i]).collect();
            ordered.push(sizes[c]);
            candidates.push(cover_condition(p, n, &ordered)?);
        }
    }
    let best = candidates
        .iter()
        .filter(|c| c.applicable)
        .fold(None::<&BoundReport>, |best, c| match best {
            Some(b) if b.value >= c.value => Some(b),
            _ => Some(c),
        });
    Ok(match best {
        Some(best) => BoundReport {
            candidates: candidates.clone(),
            ..best.clone()
        },
        None => BoundReport::none(
            "no theorem's preconditions hold for these sizes",
            candidates,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{image_size, GridFamily};
    use proptest::prelude::*;

    fn p(n: u32) -> PrimeModulus {
        PrimeModulus::new(n).unwrap()
    }

    fn mat(q: u32, rows: &[&[u32]]) -> MatrixFp {
        MatrixFp::from_rows(p(q), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn star_bound_examples() {
        let r = star_bound(&[2, 2, 2], p(5)).unwrap();
        assert_eq!(
            (r.theorem, r.applicable, r.value),
            (Theorem::StarLemma, true, Some(7))
        );
        for (a, b) in [(1, 1), (2, 5), (3, 4)] {
            assert_eq!(
                star_bound(&[a, b], p(7)).unwrap().value,
                Some((a + b - 1) as u64)
            );
        }
        let r = star_bound(&[4, 4, 4], p(7)).unwrap();
        assert_eq!((r.applicable, r.value), (true, Some(37)));
        let r = star_bound(&[5, 4, 4], p(7)).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.value, None);
        assert!(star_bound(&[0, 2], p(7)).is_err());
        assert!(star_bound(&[8, 2], p(7)).is_err());
        assert!(star_bound(&[2], p(7)).is_err());
    }

    #[test]
    fn main_theorem_examples() {
        assert_eq!(
            main_theorem_bound(&[2, 2, 2], &[0, 1, 2], p(7))
                .unwrap()
                .value,
            Some(7)
        );
        assert_eq!(
            main_theorem_bound(&[2, 2, 2], &[0, 2], p(7)).unwrap().value,
            Some(6)
        );
        assert_eq!(
            main_theorem_bound(&[1, 1, 1], &[0, 1, 2], p(7))
                .unwrap()
                .value,
            Some(1)
        );
        let r = main_theorem_bound(&[5, 2, 3], &[0, 1, 2], p(7)).unwrap();
        assert!(!r.applicable);
        assert_eq!(
            main_theorem_bound(&[2, 2], &[], p(7)),
            Err(Error::EmptySupport)
        );
        assert!(main_theorem_bound(&[2, 2], &[2], p(7)).is_err());
    }

    #[test]
    fn main_theorem_needs_the_support_condition() {
        let r = main_theorem_bound(&[4, 1, 5], &[0, 2], p(7)).unwrap();
        assert!(r.preconditions[0].holds);
        assert!(!r.preconditions[1].holds);
        assert!(!r.applicable);
        let map = mat(7, &[&[5, 0, 5], &[6, 1, 6]]);
        let grid = GridFamily::intervals(p(7), &[4, 1, 5]).unwrap();
        assert_eq!(image_size(&map, &grid).unwrap(), 7);
        assert!(best_bound(&map, &[4, 1, 5])
            .unwrap()
            .bound()
            .is_none_or(|b| b <= 7));
    }

    #[test]
    fn large_k_examples() {
        let r = large_k_bound(p(7), 4).unwrap();
        assert_eq!((r.applicable, r.value), (true, Some(37)));
        assert_eq!(large_k_bound(p(7), 5).unwrap().value, Some(49));
        let r = large_k_bound(p(7), 3).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.value, None);
        assert!(large_k_bound(p(7), 0).is_err());
        assert!(large_k_bound(p(7), 8).is_err());
        // p = 2k - 1 boundary against the star bound.
        for k in [2usize, 3, 4, 6, 7] {
            let q = p(2 * k as u32 - 1);
            assert_eq!(
                large_k_bound(q, k).unwrap().value,
                star_bound(&[k, k, k], q).unwrap().value
            );
        }
    }

    #[test]
    fn cover_examples() {
        let r = cover_condition(p(5), 3, &[4, 4, 4]).unwrap();
        assert_eq!((r.applicable, r.value), (true, Some(25)));
        assert!(r
            .preconditions
            .iter()
            .any(|c| c.name == "uniform_threshold" && c.holds));
        assert!(!cover_condition(p(5), 3, &[4, 4, 2]).unwrap().applicable);
        let r = cover_condition(p(7), 2, &[4, 4]).unwrap();
        assert_eq!(r.value, Some(7));
        assert_eq!(
            cover_condition(p(5), 3, &[4, 3, 4]),
            Err(Error::NonUniformCover(vec![4, 3, 4]))
        );
        assert!(cover_condition(p(5), 3, &[4, 4]).is_err());
    }

    #[test]
    fn fiber_bound_examples() {
        assert_eq!(fiber_bounds(4, 4, p(7)), Ok((1, 4)));
        assert_eq!(fiber_bounds(2, 3, p(7)), Ok((0, 2)));
        assert_eq!(fiber_bounds(7, 5, p(7)), Ok((5, 5)));
        assert!(fiber_bounds(8, 1, p(7)).is_err());
    }

    #[test]
    fn best_bound_examples() {
        let star = MatrixFp::star(p(7), 3);
        let r = best_bound(&star, &[2, 2, 2]).unwrap();
        assert_eq!((r.theorem, r.value), (Theorem::MainTheorem, Some(7)));

        let r = best_bound(&star, &[5, 5, 5]).unwrap();
        assert!(matches!(r.theorem, Theorem::LargeK | Theorem::Cover));
        assert_eq!(r.value, Some(49));

        let r = best_bound(&star, &[4, 4, 4]).unwrap();
        assert_eq!(r.value, Some(37));
        assert!(r
            .candidates
            .iter()
            .any(|c| c.theorem == Theorem::LargeK && c.value == Some(37)));

        let r = best_bound(&mat(5, &[&[1, 1], &[2, 2]]), &[2, 2]).unwrap();
        assert_eq!(r.theorem, Theorem::NoTheorem);
        assert!(!r.applicable);
        assert!(r.reason.contains("out of theorem scope"));

        let r = best_bound(&mat(7, &[&[1, 3]]), &[4, 5]).unwrap();
        assert_eq!((r.theorem, r.value), (Theorem::CauchyDavenport, Some(7)));
    }

    #[test]
    fn report_json_shape() {
        let r = best_bound(&MatrixFp::star(p(7), 3), &[2, 2, 2]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "theorem",
            "applicable",
            "reason",
            "value",
            "preconditions",
            "candidates",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(serde_json::from_value::<BoundReport>(v).unwrap(), r);
        let none = best_bound(&mat(5, &[&[1, 1], &[2, 2]]), &[2, 2]).unwrap();
        assert_eq!(serde_json::to_value(&none).unwrap()["theorem"], "None");
    }

    proptest! {
        #[test]
        fn full_support_main_equals_star(
            (q, sizes) in prop::sample::select(vec![3u32, 5, 7, 11, 13]).prop_flat_map(|q| {
                (Just(q), prop::collection::vec(1..=q as usize, 2..=5))
            })
        ) {
            let all: Vec<usize> = (0..sizes.len()).collect();
            let main = main_theorem_bound(&sizes, &all, p(q)).unwrap();
            let star = star_bound(&sizes, p(q)).unwrap();
            if main.applicable {
                prop_assert_eq!(main.value, star.value);
            }
        }

        #[test]
        fn applicable_values_fit_the_codomain(
            (q, sizes) in prop::sample::select(vec![3u32, 5, 7, 11, 13]).prop_flat_map(|q| {
                (Just(q), prop::collection::vec(1..=q as usize, 2..=4))
            })
        ) {
            let star = MatrixFp::star(p(q), sizes.len());
            let r = best_bound(&star, &sizes).unwrap();
            let cells = (q as u64).pow(sizes.len() as u32 - 1);
            for c in r.candidates.iter().chain([&r]) {
                if let Some(v) = c.bound() {
                    prop_assert!(v <= cells);
                }
                prop_assert!(c.applicable || c.value.is_none());
            }
        }

        #[test]
        fn best_bound_is_sound_on_random_maps(
            (map, masks) in prop::sample::select(vec![3u32, 5, 7]).prop_flat_map(|q| {
                let q = p(q);
                (
                    prop::collection::vec(0..q.get(), 6).prop_map(move |e| {
                        MatrixFp::from_rows(q, e.chunks(3).map(<[u32]>::to_vec).collect()).unwrap()
                    }),
                    prop::collection::vec(1..=q.mask(), 3),
                )
            })
        ) {
            let grid = GridFamily::from_masks(map.modulus(), &masks);
            let r = best_bound(&map, &grid.sizes()).unwrap();
            if let Some(v) = r.bound() {
                prop_assert!(image_size(&map, &grid).unwrap() >= v, "{:?} on {:?}: {:?}", map, grid, r);
            }
        }
    }
}
