//! Heuristic-guided, budget-limited DFS and BFS searchers with stochastic
//! tie-breaking.
//!
//! The two searchers are the study's sampling "modes". DFS commits to the
//! best-scored branch and backtracks, pruning each node's children to the
//! beam width; BFS keeps a global frontier of the best `beam_width` states
//! per depth level. Under a binding node budget their failure sets are
//! complementary: some problems fall only to deep backtracking, others only
//! to the globally pooled frontier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::countdown::{successors, verify_expression, Expression, Op, Problem, SearchState};

/// Search mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "dfs")]
    Dfs,
    #[serde(rename = "bfs")]
    Bfs,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::Dfs, Mode::Bfs];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Dfs => "dfs",
            Mode::Bfs => "bfs",
        }
    }
}

/// Guidance heuristic family. Scores are "lower is better".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HeuristicKind {
    /// Distance between the target and the sum of the remaining numbers.
    #[serde(rename = "sum")]
    SumDistance,
    /// Distance between the target and the closest remaining number.
    #[serde(rename = "nearest")]
    NearestNumber,
}

impl HeuristicKind {
    pub const BOTH: [HeuristicKind; 2] = [HeuristicKind::SumDistance, HeuristicKind::NearestNumber];

    pub fn label(self) -> &'static str {
        match self {
            HeuristicKind::SumDistance => "sum",
            HeuristicKind::NearestNumber => "nearest",
        }
    }
}

/// Default score-noise magnitude, roughly half the typical child-score spread
/// at default problem sizes. Nonzero noise keeps per-problem success rates
/// strictly inside (0,1), which the allocation analytics need.
pub const DEFAULT_NOISE_SCALE: f64 = 8.0;

/// Default children kept per expansion (DFS) / frontier states per level (BFS).
pub const DEFAULT_BEAM_WIDTH: usize = 4;

/// Default expansion budget. Deliberately binding for DFS at four starting
/// numbers: an unbounded budget would let DFS visit a superset of every BFS
/// frontier, erasing the two-sided mode asymmetry the pipeline studies.
pub const DEFAULT_NODE_BUDGET: usize = 14;

/// A scoring heuristic plus uniform score-perturbation magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    pub kind: HeuristicKind,
    pub noise_scale: f64,
}

impl Heuristic {
    pub fn new(kind: HeuristicKind, noise_scale: f64) -> Self {
        Heuristic { kind, noise_scale }
    }

    pub fn noiseless(kind: HeuristicKind) -> Self {
        Heuristic::new(kind, 0.0)
    }
}

/// Full configuration of one search run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: Mode,
    pub heuristic: Heuristic,
    pub beam_width: usize,
    pub node_budget: usize,
    pub seed: u64,
}

/// Searcher settings shared by dataset generation and policy simulation;
/// everything except the per-run mode, heuristic kind, and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchDefaults {
    pub beam_width: usize,
    pub node_budget: usize,
    pub noise_scale: f64,
}

impl Default for SearchDefaults {
    fn default() -> Self {
        SearchDefaults {
            beam_width: DEFAULT_BEAM_WIDTH,
            node_budget: DEFAULT_NODE_BUDGET,
            noise_scale: DEFAULT_NOISE_SCALE,
        }
    }
}

impl SearchDefaults {
    pub fn config(&self, mode: Mode, kind: HeuristicKind, seed: u64) -> SearchConfig {
        SearchConfig {
            mode,
            heuristic: Heuristic::new(kind, self.noise_scale),
            beam_width: self.beam_width,
            node_budget: self.node_budget,
            seed,
        }
    }
}

/// One recorded search event. Visits carry the step that produced the state;
/// backtrack and level markers capture the traversal structure.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Visit {
        fingerprint: String,
        op: Op,
        result: u32,
        score: f64,
    },
    Backtrack,
    LevelEnd,
}

/// Recording cap for trace events.
pub const TRACE_RECORD_LIMIT: usize = 4096;

/// The outcome of one search rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub problem_id: String,
    pub mode_used: Mode,
    pub heuristic: HeuristicKind,
    pub seed: u64,
    pub solved: bool,
    pub solution: Option<Expression>,
    pub expanded_nodes: usize,
    pub trace: Vec<TraceEvent>,
}

impl Trajectory {
    /// Visited states as (fingerprint, score) pairs, in visit order.
    pub fn visited(&self) -> impl Iterator<Item = (&str, f64)> {
        self.trace.iter().filter_map(|ev| match ev {
            TraceEvent::Visit {
                fingerprint, score, ..
            } => Some((fingerprint.as_str(), *score)),
            _ => None,
        })
    }

    /// Mode-agnostic token stream of the traversal structure: a state-size
    /// token per visit, backtrack and level-end markers, and a terminal
    /// solved marker. Size transitions bounce upward after a backtrack but
    /// plateau inside a frontier sweep, so the stream carries the search
    /// shape without naming any mode or heuristic. Arithmetic content (ops,
    /// result magnitudes) is deliberately left out: its composition tracks
    /// the guidance heuristic and would drown the traversal signal.
    pub fn trace_tokens(&self) -> Vec<String> {
        let mut tokens = Vec::new();
        for ev in &self.trace {
            match ev {
                TraceEvent::Visit { fingerprint, .. } => {
                    let size = fingerprint.split(',').count().min(4);
                    tokens.push(format!("s{size}"));
                }
                TraceEvent::Backtrack => tokens.push("b".to_string()),
                TraceEvent::LevelEnd => tokens.push("l".to_string()),
            }
        }
        if self.solved {
            tokens.push("!".to_string());
        }
        tokens
    }
}

/// Order-of-magnitude token for a step result.
pub fn magnitude_bucket(n: u32) -> &'static str {
    match n {
        0..=9 => "n0",
        10..=99 => "n1",
        100..=999 => "n2",
        _ => "n3",
    }
}

/// Scores a state under a heuristic: the base distance plus uniform noise in
/// `[0, noise_scale)`. Finite and non-negative; lower is better.
pub fn heuristic_score<R: Rng>(state: &SearchState, target: u32, h: &Heuristic, rng: &mut R) -> f64 {
    let base = match h.kind {
        HeuristicKind::SumDistance => {
            let sum: u64 = state.remaining().iter().map(|&n| u64::from(n)).sum();
            (sum as f64 - f64::from(target)).abs()
        }
        HeuristicKind::NearestNumber => state
            .remaining()
            .iter()
            .map(|&n| (f64::from(n) - f64::from(target)).abs())
            .fold(f64::INFINITY, f64::min),
    };
    let noise = if h.noise_scale > 0.0 {
        rng.random_range(0.0..h.noise_scale)
    } else {
        0.0
    };
    base + noise
}

/// All children of a state: one per valid (unordered pair, operation) choice,
/// deduplicated by operand pair.
pub fn expand(state: &SearchState) -> Vec<(crate::countdown::Step, SearchState)> {
    successors(state.remaining())
        .into_iter()
        .map(|(step, _)| {
            let child = state.apply(step).expect("successor step applies");
            (step, child)
        })
        .collect()
}

struct SearchRun<'a> {
    problem: &'a Problem,
    heuristic: Heuristic,
    beam_width: usize,
    node_budget: usize,
    rng: ChaCha8Rng,
    expanded: usize,
    trace: Vec<TraceEvent>,
    solution: Option<Expression>,
}

impl<'a> SearchRun<'a> {
    fn new(problem: &'a Problem, config: &SearchConfig) -> Self {
        SearchRun {
            problem,
            heuristic: config.heuristic,
            beam_width: config.beam_width.max(1),
            node_budget: config.node_budget.max(1),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            expanded: 0,
            trace: Vec::new(),
            solution: None,
        }
    }

    fn record(&mut self, ev: TraceEvent) {
        if self.trace.len() < TRACE_RECORD_LIMIT {
            self.trace.push(ev);
        }
    }

    fn record_visit(&mut self, state: &SearchState, score: f64) {
        let step = *state.history().last().expect("visited states have a step");
        self.record(TraceEvent::Visit {
            fingerprint: state.fingerprint(),
            op: step.op,
            result: step.r,
            score,
        });
    }

    /// Expands a state: generates children, goal-checks each (pre-pruning),
    /// then returns the scored children sorted ascending. `None` signals a
    /// goal was found.
    fn expand_scored(&mut self, state: &SearchState) -> Option<Vec<(f64, SearchState)>> {
        self.expanded += 1;
        let mut scored = Vec::new();
        for (_, child) in expand(state) {
            if child.is_goal(self.problem.target) {
                self.record_visit(&child, 0.0);
                self.solution = Some(Expression::new(child.history().to_vec()));
                return None;
            }
            let score = heuristic_score(&child, self.problem.target, &self.heuristic, &mut self.rng);
            scored.push((score, child));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        Some(scored)
    }

    fn dfs(&mut self, state: &SearchState) -> bool {
        if self.expanded >= self.node_budget {
            return false;
        }
        let Some(mut kids) = self.expand_scored(state) else {
            return true;
        };
        kids.truncate(self.beam_width);
        for (score, child) in kids {
            self.record_visit(&child, score);
            if child.remaining().len() >= 2 {
                if self.dfs(&child) {
                    return true;
                }
                if self.expanded >= self.node_budget {
                    return false;
                }
            }
            self.record(TraceEvent::Backtrack);
        }
        false
    }

    fn bfs(&mut self, root: SearchState) -> bool {
        let mut frontier = vec![root];
        while frontier.iter().any(|s| s.remaining().len() >= 2) {
            let mut pool: Vec<(f64, SearchState)> = Vec::new();
            for state in &frontier {
                if state.remaining().len() < 2 {
                    continue;
                }
                if self.expanded >= self.node_budget {
                    return false;
                }
                match self.expand_scored(state) {
                    Some(scored) => pool.extend(scored),
                    None => return true,
                }
            }
            // Merge duplicate multisets within the level, keeping the best score.
            let mut merged: Vec<(f64, SearchState)> = Vec::new();
            for (score, child) in pool {
                match merged
                    .iter_mut()
                    .find(|(_, kept)| kept.remaining() == child.remaining())
                {
                    Some(entry) => {
                        if score < entry.0 {
                            *entry = (score, child);
                        }
                    }
                    None => merged.push((score, child)),
                }
            }
            merged.sort_by(|a, b| a.0.total_cmp(&b.0));
            merged.truncate(self.beam_width);
            if merged.is_empty() {
                return false;
            }
            for (score, child) in &merged {
                let child_clone = child.clone();
                self.record_visit(&child_clone, *score);
            }
            self.record(TraceEvent::LevelEnd);
            frontier = merged.into_iter().map(|(_, s)| s).collect();
        }
        false
    }

    fn finish(self, mode: Mode, seed: u64, solved: bool) -> Trajectory {
        let solution = self.solution;
        let solved = solved
            && solution
                .as_ref()
                .is_some_and(|expr| verify_expression(self.problem, expr));
        Trajectory {
            problem_id: self.problem.id.clone(),
            mode_used: mode,
            heuristic: self.heuristic.kind,
            seed,
            solved,
            solution,
            expanded_nodes: self.expanded,
            trace: self.trace,
        }
    }
}

/// Depth-first search: children sorted by score and truncated to the beam
/// width, explored best-first with backtracking. Deterministic given the
/// config, including its seed.
pub fn dfs_search(problem: &Problem, config: &SearchConfig) -> Trajectory {
    let mut run = SearchRun::new(problem, config);
    let root = SearchState::initial(problem);
    let solved = if root.is_goal(problem.target) {
        run.solution = Some(Expression::default());
        true
    } else {
        run.dfs(&root)
    };
    run.finish(Mode::Dfs, config.seed, solved)
}

/// Level-synchronous beam search: at most `beam_width` frontier states per
/// depth level, kept by ascending score with duplicate multisets merged.
/// Deterministic given the config.
pub fn bfs_search(problem: &Problem, config: &SearchConfig) -> Trajectory {
    let mut run = SearchRun::new(problem, config);
    let root = SearchState::initial(problem);
    let solved = if root.is_goal(problem.target) {
        run.solution = Some(Expression::default());
        true
    } else {
        run.bfs(root)
    };
    run.finish(Mode::Bfs, config.seed, solved)
}

/// Dispatches on the configured mode.
pub fn run_search(problem: &Problem, config: &SearchConfig) -> Trajectory {
    match config.mode {
        Mode::Dfs => dfs_search(problem, config),
        Mode::Bfs => bfs_search(problem, config),
    }
}
