//! Sampling-policy simulation over the stochastic searchers.
//!
//! Three inference regimes are emulated as mode-selection policies: the
//! standard mixture (a per-problem commitment weight drawn from a
//! distribution), explicit per-mode allocation, and prefix conditioning with
//! imperfect control. Partition policies generalize the allocation to
//! arbitrary pools of (mode, heuristic) arms, which is how random-partition
//! ablations and discovered-cluster annotations plug in.
//!
//! Policies only pick modes; trials are delegated to a [`TrialRunner`], so
//! the same machinery runs against the real searchers or against a Bernoulli
//! oracle with known per-mode success probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::countdown::Problem;
use crate::exec::par_map;
use crate::passk::{
    passk_unbiased_estimate, AllocationSpec, CurvePoint, PassKCurve, PasskError, WeightDistribution,
};
use crate::rng::{derive_seed, stream};
use crate::search::{run_search, HeuristicKind, Mode, SearchDefaults, Trajectory};

/// The default commitment-weight distribution: U-shaped and mean 1/2,
/// emulating a sampler that commits hard to one mode per problem.
pub fn default_weight_dist() -> WeightDistribution {
    WeightDistribution::Beta {
        alpha: 0.3,
        beta: 0.3,
    }
}

/// One (mode, heuristic) arm inside a partition pool, with a sampling weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedArm {
    pub mode: Mode,
    pub kind: HeuristicKind,
    pub weight: f64,
}

/// A partition of the (mode, heuristic) configurations into sampling pools;
/// the test-time budget is split evenly across pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePools {
    pub label: String,
    pub pools: Vec<Vec<WeightedArm>>,
}

impl ModePools {

    /// Pools from per-example annotations: pool `cluster` samples the
    /// (mode, heuristic) combos with their empirical frequencies.
    pub fn from_annotations<I>(label: &str, annotated: I, n_clusters: usize) -> Self
    where
        I: IntoIterator<Item = (Mode, HeuristicKind, usize)>,
    {
        let mut counts = vec![std::collections::BTreeMap::<(Mode, HeuristicKind), u64>::new(); n_clusters];
        for (mode, kind, cluster) in annotated {
            *counts[cluster].entry((mode, kind)).or_insert(0) += 1;
        }
        let pools = counts
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .map(|((mode, kind), n)| WeightedArm {
                        mode,
                        kind,
                        weight: n as f64,
                    })
                    .collect()
            })
            .collect();
        ModePools {
            label: label.to_string(),
            pools,
        }
    }

    fn draw_arm<R: Rng>(&self, pool: usize, rng: &mut R) -> (Mode, HeuristicKind) {
        let arms = &self.pools[pool];
        assert!(!arms.is_empty(), "pool {pool} of {} is empty", self.label);
        let total: f64 = arms.iter().map(|a| a.weight).sum();
        let mut x = rng.random_range(0.0..total);
        for arm in arms {
            if x < arm.weight {
                return (arm.mode, arm.kind);
            }
            x -= arm.weight;
        }
        let last = arms.last().unwrap();
        (last.mode, last.kind)
    }
}

/// How the k-sample budget picks modes.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPolicy {
    /// Draw w once per problem, then use DFS with probability w per sample.
    StandardMixture(WeightDistribution),
    /// Exact even allocation across the two modes.
    ModCSeparate,
    /// Prefix conditioning with imperfect control: per problem the prefix
    /// binding holds with probability `fidelity` (exact allocation);
    /// otherwise the batch ignores the prefixes and collapses to a standard
    /// mixture with a `fallback` commitment draw.
    ModCPrefix {
        fidelity: f64,
        fallback: WeightDistribution,
    },
    /// Specialists trained on a random 50/50 split of the training data:
    /// each half sees the full mode mixture and collapses on its own, so the
    /// two pseudo-modes draw independent per-problem commitment weights and
    /// each receives half the budget.
    RandomPartition { commitment: WeightDistribution },
    /// Even split across explicit annotation-derived pools.
    Partition(ModePools),
}

impl SamplingPolicy {
    pub fn label(&self) -> String {
        match self {
            SamplingPolicy::StandardMixture(d) => format!("standard:{}", d.label()),
            SamplingPolicy::ModCSeparate => "modc-separate".to_string(),
            SamplingPolicy::ModCPrefix { fidelity, .. } => format!("modc-prefix:{fidelity}"),
            SamplingPolicy::RandomPartition { .. } => "random-partition".to_string(),
            SamplingPolicy::Partition(pools) => pools.label.clone(),
        }
    }
}

impl fmt::Display for SamplingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unrecognized policy `{0}`; expected modc-separate, modc-prefix:F, random-partition, or standard[:DIST]")]
pub struct ParsePolicyError(String);

impl FromStr for SamplingPolicy {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParsePolicyError(s.to_string());
        if s == "modc-separate" {
            return Ok(SamplingPolicy::ModCSeparate);
        }
        if s == "random-partition" {
            return Ok(SamplingPolicy::RandomPartition {
                commitment: default_weight_dist(),
            });
        }
        if let Some(rest) = s.strip_prefix("modc-prefix:") {
            let fidelity: f64 = rest.parse().map_err(|_| bad())?;
            if !(0.5..=1.0).contains(&fidelity) {
                return Err(bad());
            }
            return Ok(SamplingPolicy::ModCPrefix {
                fidelity,
                fallback: default_weight_dist(),
            });
        }
        if s == "standard" {
            return Ok(SamplingPolicy::StandardMixture(default_weight_dist()));
        }
        if let Some(rest) = s.strip_prefix("standard:") {
            return Ok(SamplingPolicy::StandardMixture(parse_weight_dist(rest).ok_or_else(bad)?));
        }
        Err(bad())
    }
}

fn parse_weight_dist(s: &str) -> Option<WeightDistribution> {
    let (name, args) = s.split_once('(')?;
    let args = args.strip_suffix(')')?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse().ok())
        .collect::<Option<Vec<f64>>>()?;
    match (name, nums.as_slice()) {
        ("pointmass", [w]) if (0.0..=1.0).contains(w) => Some(WeightDistribution::PointMass(*w)),
        ("beta", [a, b]) if *a > 0.0 && *b > 0.0 => Some(WeightDistribution::Beta {
            alpha: *a,
            beta: *b,
        }),
        ("uniform", [lo, hi]) if 0.0 <= *lo && lo <= hi && *hi <= 1.0 => {
            Some(WeightDistribution::UniformInterval { lo: *lo, hi: *hi })
        }
        _ => None,
    }
}

/// One planned trial: which mode and heuristic to run, and which estimation
/// pool the trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedArm {
    pub mode: Mode,
    pub kind: HeuristicKind,
    pub pool: usize,
}

/// The mode-selection plan of one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub arms: Vec<PlannedArm>,
    /// Number of estimation pools: >1 means the budget was allocated exactly
    /// and pass@k must combine per-pool estimates by the product form.
    pub n_pools: usize,
}

impl BatchPlan {
    pub fn bfs_fraction(&self) -> f64 {
        if self.arms.is_empty() {
            return 0.0;
        }
        self.arms.iter().filter(|a| a.mode == Mode::Bfs).count() as f64 / self.arms.len() as f64
    }
}

fn uniform_kind<R: Rng>(rng: &mut R) -> HeuristicKind {
    HeuristicKind::BOTH[rng.random_range(0..2)]
}

fn mixture_plan<R: Rng>(w: f64, k: u64, rng: &mut R) -> Vec<PlannedArm> {
    (0..k)
        .map(|_| {
            let mode = if rng.random_range(0.0..1.0) < w {
                Mode::Dfs
            } else {
                Mode::Bfs
            };
            PlannedArm {
                mode,
                kind: uniform_kind(rng),
                pool: 0,
            }
        })
        .collect()
}

fn separate_plan<R: Rng>(k: u64, rng: &mut R) -> Vec<PlannedArm> {
    let alloc = AllocationSpec::even_split(k, 2);
    let mut arms = Vec::with_capacity(k as usize);
    for (pool, (&ki, mode)) in alloc.per_mode().iter().zip(Mode::BOTH).enumerate() {
        for _ in 0..ki {
            arms.push(PlannedArm {
                mode,
                kind: uniform_kind(rng),
                pool,
            });
        }
    }
    arms
}

/// Draws the mode-selection plan for one batch of `k` samples. Deterministic
/// in (master seed, problem id, policy label, k).
pub fn plan_batch(policy: &SamplingPolicy, problem_id: &str, k: u64, master_seed: u64) -> BatchPlan {
    let label = policy.label();
    let mut rng = stream(master_seed, &["plan", problem_id, &label, &k.to_string()]);
    match policy {
        SamplingPolicy::StandardMixture(dist) => {
            let w = dist.sample(&mut rng).clamp(0.0, 1.0);
            BatchPlan {
                arms: mixture_plan(w, k, &mut rng),
                n_pools: 1,
            }
        }
        SamplingPolicy::ModCSeparate => BatchPlan {
            arms: separate_plan(k, &mut rng),
            n_pools: 2,
        },
        SamplingPolicy::ModCPrefix { fidelity, fallback } => {
            let obeys = rng.random_range(0.0..1.0) < *fidelity;
            if obeys {
                BatchPlan {
                    arms: separate_plan(k, &mut rng),
                    n_pools: 2,
                }
            } else {
                let w = fallback.sample(&mut rng).clamp(0.0, 1.0);
                BatchPlan {
                    arms: mixture_plan(w, k, &mut rng),
                    n_pools: 1,
                }
            }
        }
        SamplingPolicy::RandomPartition { commitment } => {
            let alloc = AllocationSpec::even_split(k, 2);
            let mut arms = Vec::with_capacity(k as usize);
            for (pool, &ki) in alloc.per_mode().iter().enumerate() {
                // Each pseudo-specialist commits independently per problem.
                let w = commitment.sample(&mut rng).clamp(0.0, 1.0);
                for _ in 0..ki {
                    let mode = if rng.random_range(0.0..1.0) < w {
                        Mode::Dfs
                    } else {
                        Mode::Bfs
                    };
                    arms.push(PlannedArm {
                        mode,
                        kind: uniform_kind(&mut rng),
                        pool,
                    });
                }
            }
            BatchPlan { arms, n_pools: 2 }
        }
        SamplingPolicy::Partition(pools) => pools_plan(pools, k, &mut rng),
    }
}

fn pools_plan<R: Rng>(pools: &ModePools, k: u64, rng: &mut R) -> BatchPlan {
    let n_pools = pools.pools.len();
    let alloc = AllocationSpec::even_split(k, n_pools);
    let mut arms = Vec::with_capacity(k as usize);
    for (pool, &ki) in alloc.per_mode().iter().enumerate() {
        for _ in 0..ki {
            let (mode, kind) = pools.draw_arm(pool, rng);
            arms.push(PlannedArm { mode, kind, pool });
        }
    }
    BatchPlan { arms, n_pools }
}

/// Runs one trial of a given (mode, heuristic, seed) on a problem.
pub trait TrialRunner: Sync {
    fn run_trial(&self, problem: &Problem, mode: Mode, kind: HeuristicKind, seed: u64) -> Trajectory;
}

/// The real thing: a seeded heuristic search run.
#[derive(Debug, Clone, Copy)]
pub struct SearchRunner {
    pub defaults: SearchDefaults,
}

impl TrialRunner for SearchRunner {
    fn run_trial(&self, problem: &Problem, mode: Mode, kind: HeuristicKind, seed: u64) -> Trajectory {
        run_search(problem, &self.defaults.config(mode, kind, seed))
    }
}

/// Bypass runner with analytically known per-mode success probabilities, for
/// simulation-vs-theory checks. Trajectories carry only the outcome.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliRunner {
    pub p_dfs: f64,
    pub p_bfs: f64,
}

impl TrialRunner for BernoulliRunner {
    fn run_trial(&self, problem: &Problem, mode: Mode, kind: HeuristicKind, seed: u64) -> Trajectory {
        let p = match mode {
            Mode::Dfs => self.p_dfs,
            Mode::Bfs => self.p_bfs,
        };
        let solved = ChaCha8Rng::seed_from_u64(seed).random_range(0.0..1.0) < p;
        Trajectory {
            problem_id: problem.id.clone(),
            mode_used: mode,
            heuristic: kind,
            seed,
            solved,
            solution: None,
            expanded_nodes: 0,
            trace: Vec::new(),
        }
    }
}

/// A batch of k trajectories drawn for one problem under one policy.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub problem_id: String,
    pub policy: String,
    pub trajectories: Vec<Trajectory>,
    pub pools: Vec<usize>,
    pub n_pools: usize,
    pub realized_bfs_fraction: f64,
}

/// Draws k trajectories for a problem under a policy. Per-sample seeds are
/// derived from (master seed, problem id, policy label, sample index).
pub fn sample_batch<R: TrialRunner>(
    runner: &R,
    problem: &Problem,
    policy: &SamplingPolicy,
    k: u64,
    master_seed: u64,
) -> SampleBatch {
    let label = policy.label();
    let plan = plan_batch(policy, &problem.id, k, master_seed);
    let trajectories: Vec<Trajectory> = plan
        .arms
        .iter()
        .enumerate()
        .map(|(i, arm)| {
            let seed = derive_seed(master_seed, &["trial", &problem.id, &label, &i.to_string()]);
            runner.run_trial(problem, arm.mode, arm.kind, seed)
        })
        .collect();
    SampleBatch {
        problem_id: problem.id.clone(),
        policy: label,
        realized_bfs_fraction: plan.bfs_fraction(),
        pools: plan.arms.iter().map(|a| a.pool).collect(),
        n_pools: plan.n_pools,
        trajectories,
    }
}

/// Realized BFS fractions, one batch per problem (or more), built from plans
/// alone; fractions depend only on mode selection, never on trial outcomes.
pub fn balance_fractions(
    testset: &[Problem],
    policy: &SamplingPolicy,
    k: u64,
    batches_per_problem: usize,
    master_seed: u64,
) -> Vec<f64> {
    let jobs: Vec<(usize, usize)> = (0..testset.len())
        .flat_map(|p| (0..batches_per_problem).map(move |b| (p, b)))
        .collect();
    par_map(&jobs, |&(p, b)| {
        let seed = derive_seed(master_seed, &["histogram", &b.to_string()]);
        plan_batch(policy, &testset[p].id, k, seed).bfs_fraction()
    })
}

/// Share of fractions in the extreme bands [0, 0.1) and (0.9, 1].
pub fn extremity_mass(fractions: &[f64]) -> f64 {
    if fractions.is_empty() {
        return 0.0;
    }
    fractions.iter().filter(|&&f| f < 0.1 || f > 0.9).count() as f64 / fractions.len() as f64
}

/// Per-problem BFS-fraction histogram: 20 uniform bins on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceHistogram {
    pub policy: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub const HISTOGRAM_BINS: usize = 20;

impl BalanceHistogram {
    pub fn from_fractions(policy: String, fractions: &[f64]) -> Self {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for &f in fractions {
            let bin = ((f * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        let bin_edges = (0..=HISTOGRAM_BINS)
            .map(|i| i as f64 / HISTOGRAM_BINS as f64)
            .collect();
        BalanceHistogram {
            policy,
            bin_edges,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One balance histogram over a test set.
pub fn balance_histogram(
    testset: &[Problem],
    policy: &SamplingPolicy,
    k: u64,
    batches_per_problem: usize,
    master_seed: u64,
) -> BalanceHistogram {
    let fractions = balance_fractions(testset, policy, k, batches_per_problem, master_seed);
    BalanceHistogram::from_fractions(policy.label(), &fractions)
}

/// Per-problem pass@k estimates for every k in `ks`, from one n-sample batch.
fn estimate_problem_curve(
    batch_outcomes: &[(usize, bool)],
    n_pools: usize,
    n_samples: u64,
    ks: &[u64],
) -> Result<Vec<f64>, PasskError> {
    let mut values = Vec::with_capacity(ks.len());
    if n_pools <= 1 {
        let c = batch_outcomes.iter().filter(|(_, s)| *s).count() as u64;
        for &k in ks {
            values.push(passk_unbiased_estimate(n_samples, c, k)?);
        }
    } else {
        let mut pool_n = vec![0u64; n_pools];
        let mut pool_c = vec![0u64; n_pools];
        for &(pool, solved) in batch_outcomes {
            pool_n[pool] += 1;
            if solved {
                pool_c[pool] += 1;
            }
        }
        for &k in ks {
            let alloc = AllocationSpec::even_split(k, n_pools);
            let mut failure = 1.0f64;
            for pool in 0..n_pools {
                let kj = alloc.per_mode()[pool];
                if kj == 0 {
                    continue;
                }
                failure *= 1.0 - passk_unbiased_estimate(pool_n[pool], pool_c[pool], kj)?;
            }
            values.push(1.0 - failure);
        }
    }
    Ok(values)
}

/// Estimates the pass@k curve of a policy over a test set: n_samples
/// trajectories per problem, the unbiased estimator per problem per k
/// (per-pool product form for exactly allocated policies), averaged over
/// problems. `stderr` is the standard error of that problem average.
pub fn passk_curve_with<R: TrialRunner>(
    runner: &R,
    testset: &[Problem],
    policy: &SamplingPolicy,
    ks: &[u64],
    n_samples: u64,
    testset_label: &str,
    master_seed: u64,
) -> Result<PassKCurve, PasskError> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PasskError::KsNotAscending);
    }
    let k_max = *ks.last().expect("non-empty");
    if k_max > n_samples {
        return Err(PasskError::BudgetExceedsSamples {
            k: k_max,
            n: n_samples,
        });
    }

    let per_problem: Vec<Result<Vec<f64>, PasskError>> = par_map(testset, |problem| {
        let batch = sample_batch(runner, problem, policy, n_samples, master_seed);
        let outcomes: Vec<(usize, bool)> = batch
            .pools
            .iter()
            .zip(&batch.trajectories)
            .map(|(&pool, t)| (pool, t.solved))
            .collect();
        estimate_problem_curve(&outcomes, batch.n_pools, n_samples, ks)
    });
    let mut estimates: Vec<Vec<f64>> = Vec::with_capacity(per_problem.len());
    for r in per_problem {
        estimates.push(r?);
    }

    let n_problems = estimates.len() as f64;
    let points: Vec<CurvePoint> = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let values: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
            let mean = values.iter().sum::<f64>() / n_problems;
            let stderr = if values.len() >= 2 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n_problems - 1.0);
                (var / n_problems).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                k,
                value: mean.clamp(0.0, 1.0),
                n_samples,
                stderr,
            }
        })
        .collect();
    PassKCurve::new(policy.label(), testset_label.to_string(), points)
}

/// [`passk_curve_with`] against the real searchers.
pub fn passk_curve(
    defaults: &SearchDefaults,
    testset: &[Problem],
    policy: &SamplingPolicy,
    ks: &[u64],
    n_samples: u64,
    testset_label: &str,
    master_seed: u64,
) -> Result<PassKCurve, PasskError> {
    let runner = SearchRunner {
        defaults: *defaults,
    };
    passk_curve_with(&runner, testset, policy, ks, n_samples, testset_label, master_seed)
}

/// Per-k gap between two strategies' curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub k: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Gap table between a ModC-separate curve and a standard-mixture curve of
/// one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub testset: String,
    pub lhs_strategy: String,
    pub rhs_strategy: String,
    pub rows: Vec<GapRow>,
}

/// Builds the ModC-vs-standard gap table from a curve list, if both
/// strategies are present for the same test set.
pub fn gap_table(curves: &[PassKCurve]) -> Option<GapTable> {
    let lhs = curves.iter().find(|c| c.strategy == "modc-separate")?;
    let rhs = curves
        .iter()
        .find(|c| c.strategy.starts_with("standard") && c.testset == lhs.testset)?;
    let rows: Vec<GapRow> = lhs
        .points
        .iter()
        .filter_map(|lp| {
            rhs.value_at(lp.k).map(|rv| GapRow {
                k: lp.k,
                lhs: lp.value,
                rhs: rv,
                gap: lp.value - rv,
            })
        })
        .collect();
    Some(GapTable {
        testset: lhs.testset.clone(),
        lhs_strategy: lhs.strategy.clone(),
        rhs_strategy: rhs.strategy.clone(),
        rows,
    })
}

/// Runs the curve estimation for every policy with a shared master seed
/// (policies consume disjoint derived streams via their labels) and returns
/// the curves plus the ModC-vs-standard gap table when both are present.
pub fn compare_policies<R: TrialRunner>(
    runner: &R,
    testset: &[Problem],
    policies: &[SamplingPolicy],
    ks: &[u64],
    n_samples: u64,
    testset_label: &str,
    master_seed: u64,
) -> Result<(Vec<PassKCurve>, Option<GapTable>), PasskError> {
    let mut curves = Vec::with_capacity(policies.len());
    for policy in policies {
        curves.push(passk_curve_with(
            runner,
            testset,
            policy,
            ks,
            n_samples,
            testset_label,
            master_seed,
        )?);
    }
    let gaps = gap_table(&curves);
    Ok((curves, gaps))
}
