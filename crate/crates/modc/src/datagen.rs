//! Rejection-sampled training sets and the natural / adversarial test-set
//! builders.
//!
//! All generation walks a deterministic attempt schedule: attempt `i` derives
//! its own random stream from the master seed, attempts are evaluated in
//! parallel batches, and results are folded in attempt order. Output is
//! therefore identical for any worker count.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countdown::{is_reachable, OracleError, Problem};
use crate::exec::par_map;
use crate::rng::stream;
use crate::search::{run_search, HeuristicKind, Mode, SearchDefaults, Trajectory};

/// Targets are drawn uniformly from this range.
pub const DEFAULT_TARGET_RANGE: (u32, u32) = (1, 200);
/// Starting numbers are drawn uniformly from this range.
pub const DEFAULT_NUM_RANGE: (u32, u32) = (1, 100);
pub const DEFAULT_N_START: usize = 4;

/// Retry cap for rejection loops; hitting it signals a mis-set value domain.
pub const GEN_RETRY_CAP: usize = 10_000;

/// Runs per mode when estimating a success profile. Resolves the 5% filter
/// threshold with 2.5% granularity.
pub const DEFAULT_PROFILE_RUNS: usize = 40;
pub const DEFAULT_ADVERSARIAL_THRESHOLD: f64 = 0.05;

/// The problem distribution: ranges for the target and starting numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpace {
    pub target_range: (u32, u32),
    pub num_range: (u32, u32),
    pub n_start: usize,
}

impl Default for ProblemSpace {
    fn default() -> Self {
        ProblemSpace {
            target_range: DEFAULT_TARGET_RANGE,
            num_range: DEFAULT_NUM_RANGE,
            n_start: DEFAULT_N_START,
        }
    }
}

/// How training attempts pick their search mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSampling {
    /// Mode drawn uniformly per attempt; kept counts follow solve rates.
    Uniform,
    /// Stratified quotas: exactly half the kept set per mode.
    Balanced5050,
}

/// Configuration of one training-set build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub space: ProblemSpace,
    pub n_problems: usize,
    pub mode_sampling: ModeSampling,
    pub search: SearchDefaults,
    pub master_seed: u64,
}

impl DatasetConfig {
    pub fn new(n_problems: usize, mode_sampling: ModeSampling, master_seed: u64) -> Self {
        DatasetConfig {
            space: ProblemSpace::default(),
            n_problems,
            mode_sampling,
            search: SearchDefaults::default(),
            master_seed,
        }
    }
}

/// Per-problem empirical success probabilities for each mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSuccessProfile {
    pub problem_id: String,
    pub p_dfs: f64,
    pub p_bfs: f64,
    pub n_runs_per_mode: usize,
}

/// One kept training example: the problem plus a successful trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub problem: Problem,
    pub trajectory: Trajectory,
}

/// Summary emitted next to a training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub requested: usize,
    pub kept: usize,
    /// Attempts consumed up to and including the last kept one.
    pub attempts: usize,
    pub dfs_kept: usize,
    pub bfs_kept: usize,
    pub sum_heuristic_kept: usize,
    pub nearest_heuristic_kept: usize,
    pub mode_sampling: ModeSampling,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("gave up after {attempts} attempts while {context}")]
    ExhaustedRetries { attempts: usize, context: String },
    #[error("no problem qualified; search configuration looks degenerate")]
    EmptyResult,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Draws one reachable problem: the target is drawn once (uniform over the
/// target range, so accepted targets stay uniform), then starting numbers are
/// resampled until the exhaustive oracle confirms reachability.
pub fn gen_problem<R: Rng>(rng: &mut R, space: &ProblemSpace) -> Result<Problem, DatagenError> {
    let target = rng.random_range(space.target_range.0..=space.target_range.1);
    for _ in 0..GEN_RETRY_CAP {
        let nums: Vec<u32> = (0..space.n_start)
            .map(|_| rng.random_range(space.num_range.0..=space.num_range.1))
            .collect();
        let problem = Problem::new(nums, target).expect("ranges are positive");
        if is_reachable(&problem)? {
            return Ok(problem);
        }
    }
    Err(DatagenError::ExhaustedRetries {
        attempts: GEN_RETRY_CAP,
        context: format!("searching for starting numbers reaching target {target}"),
    })
}

/// One rejection-sampling attempt: problem, mode, heuristic, seeded search.
fn training_attempt(config: &DatasetConfig, attempt: u64) -> Result<Option<TrainRecord>, DatagenError> {
    let mut rng = stream(config.master_seed, &["train-attempt", &attempt.to_string()]);
    let problem = gen_problem(&mut rng, &config.space)?;
    let mode = if rng.random_range(0..2u8) == 0 {
        Mode::Dfs
    } else {
        Mode::Bfs
    };
    let kind = if rng.random_range(0..2u8) == 0 {
        HeuristicKind::SumDistance
    } else {
        HeuristicKind::NearestNumber
    };
    let seed: u64 = rng.random();
    let trajectory = run_search(&problem, &config.search.config(mode, kind, seed));
    Ok(trajectory
        .solved
        .then_some(TrainRecord { problem, trajectory }))
}

/// Rejection-samples solved trajectories until `n_problems` are kept.
///
/// Under [`ModeSampling::Uniform`] the kept set follows the searchers' solve
/// rates; under [`ModeSampling::Balanced5050`] each mode fills an exact quota
/// (DFS takes the extra slot when `n_problems` is odd).
pub fn build_training_set(config: &DatasetConfig) -> Result<(Vec<TrainRecord>, TrainStats), DatagenError> {
    let n = config.n_problems;
    let (dfs_quota, bfs_quota) = match config.mode_sampling {
        ModeSampling::Uniform => (n, n),
        ModeSampling::Balanced5050 => (n - n / 2, n / 2),
    };
    let mut kept: Vec<TrainRecord> = Vec::with_capacity(n);
    let mut dfs_kept = 0usize;
    let mut bfs_kept = 0usize;
    let mut attempts = 0usize;
    let mut next_attempt = 0u64;
    let batch = (n.max(64) * 4) as u64;
    let attempt_cap = (n.max(1) as u64) * 1000;

    while kept.len() < n {
        if next_attempt >= attempt_cap {
            return Err(DatagenError::ExhaustedRetries {
                attempts: next_attempt as usize,
                context: format!("collecting {n} solved trajectories"),
            });
        }
        let indices: Vec<u64> = (next_attempt..next_attempt + batch).collect();
        let results = par_map(&indices, |&i| training_attempt(config, i));
        next_attempt += batch;
        for (offset, result) in results.into_iter().enumerate() {
            let record = match result? {
                Some(r) => r,
                None => continue,
            };
            let quota_left = match record.trajectory.mode_used {
                Mode::Dfs => dfs_kept < dfs_quota,
                Mode::Bfs => bfs_kept < bfs_quota,
            };
            if !quota_left || kept.len() >= n {
                continue;
            }
            match record.trajectory.mode_used {
                Mode::Dfs => dfs_kept += 1,
                Mode::Bfs => bfs_kept += 1,
            }
            kept.push(record);
            attempts = indices[offset] as usize + 1;
            if kept.len() >= n {
                break;
            }
        }
    }

    let sum_kept = kept
        .iter()
        .filter(|r| r.trajectory.heuristic == HeuristicKind::SumDistance)
        .count();
    let stats = TrainStats {
        requested: n,
        kept: kept.len(),
        attempts,
        dfs_kept,
        bfs_kept,
        sum_heuristic_kept: sum_kept,
        nearest_heuristic_kept: kept.len() - sum_kept,
        mode_sampling: config.mode_sampling,
    };
    Ok((kept, stats))
}

/// Ids and targets of an existing training set, used for leakage checks.
#[derive(Debug, Clone, Default)]
pub struct TrainIndex {
    pub ids: HashSet<String>,
    pub targets: HashSet<u32>,
}

impl TrainIndex {
    pub fn from_records<'a, I: IntoIterator<Item = &'a TrainRecord>>(records: I) -> Self {
        let mut index = TrainIndex::default();
        for r in records {
            index.ids.insert(r.problem.id.clone());
            index.targets.insert(r.problem.target);
        }
        index
    }

    pub fn from_problems<'a, I: IntoIterator<Item = &'a Problem>>(problems: I) -> Self {
        let mut index = TrainIndex::default();
        for p in problems {
            index.ids.insert(p.id.clone());
            index.targets.insert(p.target);
        }
        index
    }
}

/// Draws `n` distinct reachable problems whose ids collide with nothing in
/// `exclude`. With `disjoint_targets` the problems' targets must also be
/// absent from the training targets (the stricter "unseen target" reading).
pub fn gen_problem_set(
    n: usize,
    space: &ProblemSpace,
    exclude: &TrainIndex,
    disjoint_targets: bool,
    master_seed: u64,
    tag: &str,
) -> Result<Vec<Problem>, DatagenError> {
    let mut out: Vec<Problem> = Vec::with_capacity(n);
    let mut taken: HashSet<String> = HashSet::new();
    let mut next_attempt = 0u64;
    let batch = (n.max(64) * 2) as u64;
    let attempt_cap = (n.max(1) as u64) * 1000;

    while out.len() < n {
        if next_attempt >= attempt_cap {
            return Err(DatagenError::ExhaustedRetries {
                attempts: next_attempt as usize,
                context: format!("drawing {n} unseen problems for {tag}"),
            });
        }
        let indices: Vec<u64> = (next_attempt..next_attempt + batch).collect();
        let results = par_map(&indices, |&i| {
            let mut rng = stream(master_seed, &[tag, &i.to_string()]);
            gen_problem(&mut rng, space)
        });
        next_attempt += batch;
        for result in results {
            let problem = result?;
            if out.len() >= n
                || exclude.ids.contains(&problem.id)
                || taken.contains(&problem.id)
                || (disjoint_targets && exclude.targets.contains(&problem.target))
            {
                continue;
            }
            taken.insert(problem.id.clone());
            out.push(problem);
        }
    }
    Ok(out)
}

/// The natural test set: `n` reachable problems unseen during training.
pub fn build_natural_testset(
    n: usize,
    space: &ProblemSpace,
    train: &TrainIndex,
    disjoint_targets: bool,
    master_seed: u64,
) -> Result<Vec<Problem>, DatagenError> {
    gen_problem_set(n, space, train, disjoint_targets, master_seed, "natural")
}

/// Estimates per-mode success rates over `n_runs` seeded searches per mode,
/// each with a heuristic drawn uniformly from `heuristics`.
pub fn estimate_mode_profile(
    problem: &Problem,
    n_runs: usize,
    defaults: &SearchDefaults,
    heuristics: &[HeuristicKind],
    master_seed: u64,
) -> ModeSuccessProfile {
    assert!(n_runs >= 1, "profiles need at least one run per mode");
    assert!(!heuristics.is_empty(), "profiles need at least one heuristic");
    let mut rates = [0.0f64; 2];
    for (slot, mode) in Mode::BOTH.into_iter().enumerate() {
        let mut successes = 0usize;
        for run in 0..n_runs {
            let mut rng = stream(
                master_seed,
                &["profile", &problem.id, mode.label(), &run.to_string()],
            );
            let kind = heuristics[rng.random_range(0..heuristics.len())];
            let seed: u64 = rng.random();
            if run_search(problem, &defaults.config(mode, kind, seed)).solved {
                successes += 1;
            }
        }
        rates[slot] = successes as f64 / n_runs as f64;
    }
    ModeSuccessProfile {
        problem_id: problem.id.clone(),
        p_dfs: rates[0],
        p_bfs: rates[1],
        n_runs_per_mode: n_runs,
    }
}

/// The adversarial keep rule: exactly one mode under the threshold.
pub fn adversarial_filter(profile: &ModeSuccessProfile, threshold: f64) -> bool {
    (profile.p_dfs < threshold) != (profile.p_bfs < threshold)
}

/// Profiles a candidate pool and keeps the problems where exactly one of the
/// two modes falls under the success threshold. Returns the kept problems plus
/// every profile measured.
pub fn build_adversarial_testset(
    pool: &[Problem],
    n_runs: usize,
    threshold: f64,
    defaults: &SearchDefaults,
    master_seed: u64,
) -> Result<(Vec<Problem>, Vec<ModeSuccessProfile>), DatagenError> {
    let profiles: Vec<ModeSuccessProfile> = par_map(pool, |p| {
        estimate_mode_profile(p, n_runs, defaults, &HeuristicKind::BOTH, master_seed)
    });
    let kept: Vec<Problem> = pool
        .iter()
        .zip(&profiles)
        .filter(|(_, prof)| adversarial_filter(prof, threshold))
        .map(|(p, _)| p.clone())
        .collect();
    if kept.is_empty() {
        return Err(DatagenError::EmptyResult);
    }
    Ok((kept, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::countdown::verify_expression;

    #[test]
    fn generated_problems_are_reachable_and_deterministic() {
        let space = ProblemSpace::default();
        let mut rng = stream(7, &["t"]);
        let problems: Vec<Problem> = (0..20).map(|_| gen_problem(&mut rng, &space).unwrap()).collect();
        for p in &problems {
            assert!(is_reachable(p).unwrap());
            assert_eq!(p.nums.len(), 4);
            assert!((1..=200).contains(&p.target));
            assert!(p.nums.iter().all(|&n| (1..=100).contains(&n)));
        }
        let mut rng = stream(7, &["t"]);
        let again: Vec<Problem> = (0..20).map(|_| gen_problem(&mut rng, &space).unwrap()).collect();
        assert_eq!(problems, again);
    }

    #[test]
    fn accepted_targets_stay_uniform() {
        // The target is drawn once per problem, so rejection on the numbers
        // cannot skew it. Chi-squared over 10k draws, 3-sigma band.
        let space = ProblemSpace::default();
        let counts_vec: Vec<u32> = {
            let indices: Vec<u64> = (0..10_000u64).collect();
            let targets = par_map(&indices, |&i| {
                let mut rng = stream(11, &["chi", &i.to_string()]);
                gen_problem(&mut rng, &space).unwrap().target
            });
            let mut counts = vec![0u32; 200];
            for t in targets {
                counts[(t - 1) as usize] += 1;
            }
            counts
        };
        let expected = 10_000.0 / 200.0;
        let chi2: f64 = counts_vec
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // dof = 199: mean 199, sd ~ 19.95
        assert!(chi2 < 199.0 + 3.0 * 19.95, "chi2 = {chi2}");
    }

    #[test]
    fn training_set_keeps_only_verified_solutions() {
        let config = DatasetConfig::new(60, ModeSampling::Uniform, 3);
        let (records, stats) = build_training_set(&config).unwrap();
        assert_eq!(records.len(), 60);
        assert_eq!(stats.kept, 60);
        assert_eq!(stats.dfs_kept + stats.bfs_kept, 60);
        assert!(stats.attempts >= 60);
        for r in &records {
            assert!(r.trajectory.solved);
            assert!(verify_expression(&r.problem, r.trajectory.solution.as_ref().unwrap()));
            assert_eq!(r.trajectory.problem_id, r.problem.id);
        }
    }

    #[test]
    fn training_set_is_reproducible() {
        let config = DatasetConfig::new(30, ModeSampling::Uniform, 5);
        let (a, sa) = build_training_set(&config).unwrap();
        let (b, sb) = build_training_set(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn balanced_sampling_hits_exact_quotas() {
        let config = DatasetConfig::new(40, ModeSampling::Balanced5050, 9);
        let (records, stats) = build_training_set(&config).unwrap();
        assert_eq!(stats.dfs_kept, 20);
        assert_eq!(stats.bfs_kept, 20);
        let dfs = records
            .iter()
            .filter(|r| r.trajectory.mode_used == Mode::Dfs)
            .count();
        assert_eq!(dfs, 20);

        // Odd quota: DFS takes the extra slot.
        let config = DatasetConfig::new(7, ModeSampling::Balanced5050, 9);
        let (_, stats) = build_training_set(&config).unwrap();
        assert_eq!((stats.dfs_kept, stats.bfs_kept), (4, 3));
    }

    #[test]
    fn natural_testset_is_disjoint_from_training() {
        let config = DatasetConfig::new(40, ModeSampling::Uniform, 13);
        let (records, _) = build_training_set(&config).unwrap();
        let index = TrainIndex::from_records(&records);
        let natural = build_natural_testset(50, &config.space, &index, false, 13).unwrap();
        assert_eq!(natural.len(), 50);
        let ids: HashSet<&String> = natural.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), 50, "no duplicates inside the test set");
        for p in &natural {
            assert!(!index.ids.contains(&p.id));
            assert!(is_reachable(p).unwrap());
        }

        let empty = build_natural_testset(0, &config.space, &index, false, 13).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn disjoint_targets_flag_is_honored() {
        let config = DatasetConfig::new(30, ModeSampling::Uniform, 17);
        let (records, _) = build_training_set(&config).unwrap();
        let index = TrainIndex::from_records(&records);
        let natural = build_natural_testset(20, &config.space, &index, true, 17).unwrap();
        for p in &natural {
            assert!(!index.targets.contains(&p.target));
        }
    }

    #[test]
    fn profile_of_unreachable_problem_is_zero() {
        let p = Problem::new(vec![1, 1, 1, 1], 5).unwrap();
        let prof = estimate_mode_profile(&p, 10, &SearchDefaults::default(), &HeuristicKind::BOTH, 1);
        assert_eq!(prof.p_dfs, 0.0);
        assert_eq!(prof.p_bfs, 0.0);
        assert_eq!(prof.n_runs_per_mode, 10);
    }

    #[test]
    fn noiseless_single_heuristic_profiles_are_degenerate() {
        let defaults = SearchDefaults {
            noise_scale: 0.0,
            ..SearchDefaults::default()
        };
        let mut rng = stream(23, &["p"]);
        for _ in 0..10 {
            let p = gen_problem(&mut rng, &ProblemSpace::default()).unwrap();
            let prof = estimate_mode_profile(&p, 12, &defaults, &[HeuristicKind::SumDistance], 1);
            assert!(prof.p_dfs == 0.0 || prof.p_dfs == 1.0);
            assert!(prof.p_bfs == 0.0 || prof.p_bfs == 1.0);
        }
    }

    #[test]
    fn profiles_are_reproducible() {
        let mut rng = stream(29, &["p"]);
        let p = gen_problem(&mut rng, &ProblemSpace::default()).unwrap();
        let a = estimate_mode_profile(&p, 40, &SearchDefaults::default(), &HeuristicKind::BOTH, 77);
        let b = estimate_mode_profile(&p, 40, &SearchDefaults::default(), &HeuristicKind::BOTH, 77);
        assert_eq!(a, b);
    }

    #[test]
    fn adversarial_filter_semantics() {
        let prof = |d, b| ModeSuccessProfile {
            problem_id: "x".into(),
            p_dfs: d,
            p_bfs: b,
            n_runs_per_mode: 40,
        };
        assert!(adversarial_filter(&prof(0.0, 0.4), 0.05));
        assert!(adversarial_filter(&prof(0.4, 0.0), 0.05));
        assert!(!adversarial_filter(&prof(0.02, 0.03), 0.05), "both below");
        assert!(!adversarial_filter(&prof(0.5, 0.5), 0.05), "both above");
    }

    #[test]
    fn zero_threshold_yields_empty_result() {
        let mut rng = stream(31, &["p"]);
        let pool: Vec<Problem> = (0..5)
            .map(|_| gen_problem(&mut rng, &ProblemSpace::default()).unwrap())
            .collect();
        let err = build_adversarial_testset(&pool, 4, 0.0, &SearchDefaults::default(), 1).unwrap_err();
        assert_eq!(err, DatagenError::EmptyResult);
    }
}
