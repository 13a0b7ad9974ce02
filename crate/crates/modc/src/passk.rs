//! Exact and Monte-Carlo pass@k analytics.
//!
//! Covers the standard closed form `1-(1-p)^k`, the per-mode allocation form,
//! the mixture form under a random mode weight, expectations of the mixture
//! over a weight distribution (for the Jensen-gap comparison), the unbiased
//! finite-sample estimator, and exhaustive budget-allocation search.
//!
//! Failure masses are computed in log space once exponents get large, so
//! curves out to k = 1024 keep their sign structure instead of rounding to 1.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;

/// Cap for the exhaustive allocation search.
pub const ALLOCATION_SEARCH_MAX_K: u64 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PasskError {
    #[error("allocation has {alloc} modes but {probs} probabilities were given")]
    AllocationMismatch { probs: usize, alloc: usize },
    #[error("pass@{k} needs at least k samples, have {n}")]
    BudgetExceedsSamples { k: u64, n: u64 },
    #[error("successes {c} exceed samples {n}")]
    SuccessesExceedSamples { c: u64, n: u64 },
    #[error("exhaustive allocation search capped at k = {cap}, got {k}")]
    AllocationSearchTooLarge { k: u64, cap: u64 },
    #[error("k values must be ascending and distinct")]
    KsNotAscending,
    #[error("curve value {value} at k = {k} is outside [0, 1]")]
    ValueOutOfRange { k: u64, value: f64 },
}

/// `(1-p)^k`, switching to log space for large k.
pub fn failure_mass(p: f64, k: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if k == 0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    if k <= 64 {
        (1.0 - p).powi(k as i32)
    } else {
        (k as f64 * (-p).ln_1p()).exp()
    }
}

/// `k * ln(1-p)`: the log failure mass of standard sampling. Negative
/// infinity when p = 1.
pub fn log_failure_std(p: f64, k: u64) -> f64 {
    if p >= 1.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * (-p).ln_1p()
    }
}

/// pass@k of k independent samples at success probability p.
pub fn passk_std(p: f64, k: u64) -> f64 {
    1.0 - failure_mass(p, k)
}

/// How a budget of k samples is split across modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationSpec {
    k: u64,
    per_mode: Vec<u64>,
}

impl AllocationSpec {
    pub fn new(per_mode: Vec<u64>) -> Self {
        let k = per_mode.iter().sum();
        AllocationSpec { k, per_mode }
    }

    /// Splits k as evenly as possible; earlier modes take the remainder
    /// (so a two-mode odd split is `[ceil(k/2), floor(k/2)]`).
    pub fn even_split(k: u64, n_modes: usize) -> Self {
        assert!(n_modes >= 1);
        let base = k / n_modes as u64;
        let rem = (k % n_modes as u64) as usize;
        let per_mode = (0..n_modes)
            .map(|i| base + u64::from(i < rem))
            .collect();
        AllocationSpec { k, per_mode }
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn per_mode(&self) -> &[u64] {
        &self.per_mode
    }
}

/// pass@k when `alloc.per_mode[i]` samples are drawn from mode i with success
/// probability `probs[i]`: one minus the product of per-mode failure masses.
pub fn passk_modc(probs: &[f64], alloc: &AllocationSpec) -> Result<f64, PasskError> {
    if probs.len() != alloc.per_mode.len() {
        return Err(PasskError::AllocationMismatch {
            probs: probs.len(),
            alloc: alloc.per_mode.len(),
        });
    }
    let mut failure = 1.0;
    for (&p, &ki) in probs.iter().zip(&alloc.per_mode) {
        failure *= failure_mass(p, ki);
    }
    Ok(1.0 - failure)
}

/// Log failure mass of the allocated form: `sum_i k_i * ln(1-p_i)`.
pub fn log_failure_modc(probs: &[f64], alloc: &AllocationSpec) -> Result<f64, PasskError> {
    if probs.len() != alloc.per_mode.len() {
        return Err(PasskError::AllocationMismatch {
            probs: probs.len(),
            alloc: alloc.per_mode.len(),
        });
    }
    Ok(probs
        .iter()
        .zip(&alloc.per_mode)
        .map(|(&p, &ki)| log_failure_std(p, ki))
        .sum())
}

/// pass@k when every sample independently uses mode 1 with probability w:
/// `1 - (1 - w p1 - (1-w) p2)^k`.
pub fn passk_mixture(p1: f64, p2: f64, w: f64, k: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&w), "weight out of range: {w}");
    let p = (w * p1 + (1.0 - w) * p2).clamp(0.0, 1.0);
    passk_std(p, k)
}

/// A distribution over the per-problem mode weight w.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightDistribution {
    PointMass(f64),
    Beta { alpha: f64, beta: f64 },
    UniformInterval { lo: f64, hi: f64 },
    Empirical(Vec<f64>),
}

impl WeightDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            WeightDistribution::PointMass(w) => *w,
            WeightDistribution::Beta { alpha, beta } => alpha / (alpha + beta),
            WeightDistribution::UniformInterval { lo, hi } => 0.5 * (lo + hi),
            WeightDistribution::Empirical(samples) => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            WeightDistribution::PointMass(w) => *w,
            WeightDistribution::Beta { alpha, beta } => {
                let dist = rand_distr::Beta::new(*alpha, *beta).expect("valid beta parameters");
                dist.sample(rng)
            }
            WeightDistribution::UniformInterval { lo, hi } => {
                if hi > lo {
                    rng.random_range(*lo..=*hi)
                } else {
                    *lo
                }
            }
            WeightDistribution::Empirical(samples) => samples[rng.random_range(0..samples.len())],
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightDistribution::PointMass(w) => format!("pointmass({w})"),
            WeightDistribution::Beta { alpha, beta } => format!("beta({alpha},{beta})"),
            WeightDistribution::UniformInterval { lo, hi } => format!("uniform({lo},{hi})"),
            WeightDistribution::Empirical(samples) => format!("empirical({})", samples.len()),
        }
    }

    /// E[v^j] for v = 1 - w, computed for j = 0..=k.
    ///
    /// Beta moments come from the closed-form product (v ~ Beta(beta, alpha));
    /// uniform moments integrate v^j directly. Both are evaluated in log space
    /// so high-order moments degrade to zero instead of garbage.
    fn complement_log_moments(&self, k: u64) -> Option<Vec<f64>> {
        let n = (k + 1) as usize;
        match self {
            WeightDistribution::Beta { alpha, beta } => {
                let mut logs = Vec::with_capacity(n);
                let mut acc = 0.0f64;
                logs.push(0.0);
                for j in 0..k {
                    let i = j as f64;
                    acc += ((beta + i) / (alpha + beta + i)).ln();
                    logs.push(acc);
                }
                Some(logs)
            }
            WeightDistribution::UniformInterval { lo, hi } => {
                if hi <= lo {
                    return None; // degenerate: treat as a point mass
                }
                let (a, b) = (1.0 - hi, 1.0 - lo); // v ~ Uniform[a, b]
                let mut logs = Vec::with_capacity(n);
                for j in 0..n {
                    // E[v^j] = (b^{j+1} - a^{j+1}) / ((b-a)(j+1))
                    let e = j as f64 + 1.0;
                    let num = (e * b.ln()).exp() - if a > 0.0 { (e * a.ln()).exp() } else { 0.0 };
                    let m = num / ((b - a) * e);
                    logs.push(if m > 0.0 { m.ln() } else { f64::NEG_INFINITY });
                }
                Some(logs)
            }
            _ => None,
        }
    }
}

/// E_w[(1 - w p1 - (1-w) p2)^k]: the expected failure mass of the mixture.
///
/// Point masses and empirical samples are evaluated directly. Beta and
/// uniform weights use the exact binomial-moment series: with q the larger
/// probability, failure = (1-q) + |p1-p2| v for v the complement of the
/// weight on q's mode, and each series term is non-negative, so the sum is
/// numerically stable at any k.
pub fn expected_mixture_failure(p1: f64, p2: f64, k: u64, dist: &WeightDistribution) -> f64 {
    match dist {
        WeightDistribution::PointMass(w) => failure_mass((w * p1 + (1.0 - w) * p2).clamp(0.0, 1.0), k),
        WeightDistribution::Empirical(samples) => {
            let total: f64 = samples
                .iter()
                .map(|&w| failure_mass((w * p1 + (1.0 - w) * p2).clamp(0.0, 1.0), k))
                .sum();
            total / samples.len() as f64
        }
        _ => {
            // Orient so the weight distribution applies to mode 1; v = 1 - w.
            // failure(w) = C + B v with C = 1 - p_hi >= 0, B = |p1 - p2|.
            let (c, b, flipped) = if p1 >= p2 {
                (1.0 - p1, p1 - p2, false)
            } else {
                (1.0 - p2, p2 - p1, true)
            };
            let dist = if flipped { &flip(dist) } else { dist };
            if b == 0.0 {
                return failure_mass(p1, k);
            }
            let Some(log_m) = dist.complement_log_moments(k) else {
                // Degenerate interval: fall back to its mean as a point mass.
                return expected_mixture_failure(p1, p2, k, &WeightDistribution::PointMass(dist.mean()));
            };
            if c == 0.0 {
                // Only the j = k term survives.
                return (k as f64 * b.ln() + log_m[k as usize]).exp();
            }
            // log-sum-exp over t_j = C(k,j) c^{k-j} b^j m_j
            let kf = k as f64;
            let (ln_c, ln_b) = (c.ln(), b.ln());
            let mut ln_binom = 0.0f64;
            let mut terms = Vec::with_capacity((k + 1) as usize);
            for j in 0..=k {
                if j > 0 {
                    ln_binom += ((kf - (j as f64) + 1.0) / j as f64).ln();
                }
                terms.push(ln_binom + (kf - j as f64) * ln_c + j as f64 * ln_b + log_m[j as usize]);
            }
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return 0.0;
            }
            let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
            (max + sum.ln()).exp()
        }
    }
}

/// Mirrors a weight distribution around 1/2 (v = 1 - w).
fn flip(dist: &WeightDistribution) -> WeightDistribution {
    match dist {
        WeightDistribution::PointMass(w) => WeightDistribution::PointMass(1.0 - w),
        WeightDistribution::Beta { alpha, beta } => WeightDistribution::Beta {
            alpha: *beta,
            beta: *alpha,
        },
        WeightDistribution::UniformInterval { lo, hi } => WeightDistribution::UniformInterval {
            lo: 1.0 - hi,
            hi: 1.0 - lo,
        },
        WeightDistribution::Empirical(samples) => {
            WeightDistribution::Empirical(samples.iter().map(|w| 1.0 - w).collect())
        }
    }
}

/// E_w[pass@k(w)] under the weight distribution.
pub fn expected_passk_mixture(p1: f64, p2: f64, k: u64, dist: &WeightDistribution) -> f64 {
    1.0 - expected_mixture_failure(p1, p2, k, dist)
}

/// Monte-Carlo estimate of E_w[pass@k(w)]; returns (mean, stderr).
pub fn expected_passk_mixture_mc(
    p1: f64,
    p2: f64,
    k: u64,
    dist: &WeightDistribution,
    n_draws: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n_draws >= 2);
    let mut rng = stream(seed, &["jensen-mc", &dist.label()]);
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for _ in 0..n_draws {
        let w = dist.sample(&mut rng).clamp(0.0, 1.0);
        let v = passk_mixture(p1, p2, w, k);
        sum += v;
        sumsq += v * v;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// The three quantities the Jensen comparison orders: the expected standard
/// pass@k under the weight distribution, the standard pass@k at the mean
/// weight, and the even-split allocated pass@k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenGapReport {
    pub expected_std: f64,
    pub std_at_mean: f64,
    pub modc_even: f64,
}

/// Evaluates the Jensen comparison at one (p1, p2, k, distribution) point.
/// The ordering `expected_std <= std_at_mean < modc_even` is a theorem for
/// mean-1/2 distributions and p1 != p2; this reports all three values.
pub fn jensen_gap(p1: f64, p2: f64, k: u64, dist: &WeightDistribution) -> JensenGapReport {
    JensenGapReport {
        expected_std: expected_passk_mixture(p1, p2, k, dist),
        std_at_mean: passk_mixture(p1, p2, dist.mean().clamp(0.0, 1.0), k),
        modc_even: passk_modc(&[p1, p2], &AllocationSpec::even_split(k, 2))
            .expect("two probabilities, two modes"),
    }
}

/// Unbiased pass@k estimate from n samples with c successes:
/// `1 - C(n-c, k) / C(n, k)`, computed as a stable running product.
pub fn passk_unbiased_estimate(n: u64, c: u64, k: u64) -> Result<f64, PasskError> {
    if c > n {
        return Err(PasskError::SuccessesExceedSamples { c, n });
    }
    if k < 1 || k > n {
        return Err(PasskError::BudgetExceedsSamples { k, n });
    }
    let failures = n - c;
    if failures < k {
        return Ok(1.0);
    }
    let mut ratio = 1.0f64;
    for i in 0..k {
        ratio *= (failures - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - ratio)
}

/// Exhaustively maximizes the allocated pass@k over integer compositions of
/// k, breaking ties toward the most even composition.
pub fn optimal_allocation(probs: &[f64], k: u64) -> Result<AllocationSpec, PasskError> {
    if k > ALLOCATION_SEARCH_MAX_K {
        return Err(PasskError::AllocationSearchTooLarge {
            k,
            cap: ALLOCATION_SEARCH_MAX_K,
        });
    }
    assert!(!probs.is_empty(), "need at least one mode");
    let m = probs.len();
    let even_target = k as f64 / m as f64;
    let evenness = |comp: &[u64]| -> f64 {
        comp.iter()
            .map(|&ki| {
                let d = ki as f64 - even_target;
                d * d
            })
            .sum()
    };

    let mut best: Option<(f64, f64, Vec<u64>)> = None;
    let mut current = vec![0u64; m];
    fn visit(
        probs: &[f64],
        slot: usize,
        left: u64,
        current: &mut Vec<u64>,
        best: &mut Option<(f64, f64, Vec<u64>)>,
        evenness: &dyn Fn(&[u64]) -> f64,
    ) {
        if slot == current.len() - 1 {
            current[slot] = left;
            let spec = AllocationSpec::new(current.clone());
            let value = passk_modc(probs, &spec).expect("lengths match");
            let even = evenness(current);
            let better = match best {
                None => true,
                Some((bv, be, _)) => value > *bv || (value == *bv && even < *be),
            };
            if better {
                *best = Some((value, even, current.clone()));
            }
            return;
        }
        for ki in 0..=left {
            current[slot] = ki;
            visit(probs, slot + 1, left - ki, current, best, evenness);
        }
    }
    visit(probs, 0, k, &mut current, &mut best, &evenness);
    let (_, _, comp) = best.expect("at least one composition");
    Ok(AllocationSpec::new(comp))
}

/// One point of a pass@k curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u64,
    pub value: f64,
    pub n_samples: u64,
    pub stderr: f64,
}

/// A pass@k curve for one (strategy, test set) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassKCurve {
    pub strategy: String,
    pub testset: String,
    pub points: Vec<CurvePoint>,
}

impl PassKCurve {
    pub fn new(strategy: String, testset: String, points: Vec<CurvePoint>) -> Result<Self, PasskError> {
        if points.windows(2).any(|w| w[0].k >= w[1].k) {
            return Err(PasskError::KsNotAscending);
        }
        for p in &points {
            if !(-1e-9..=1.0 + 1e-9).contains(&p.value) {
                return Err(PasskError::ValueOutOfRange {
                    k: p.k,
                    value: p.value,
                });
            }
        }
        Ok(PassKCurve {
            strategy,
            testset,
            points,
        })
    }

    pub fn value_at(&self, k: u64) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.value)
    }
}
