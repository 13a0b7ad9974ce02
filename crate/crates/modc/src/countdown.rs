//! Countdown problems, arithmetic steps, solution expressions, a replay
//! verifier, and an exhaustive-search oracle for reachability.
//!
//! The value domain is positive integers: subtraction must leave at least 1,
//! division must be exact, and intermediate results are capped at
//! [`VALUE_CAP`] to keep the oracle bounded.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest value an intermediate result may take. Targets stay at or below
/// 200, so the cap does not affect reachability at the default problem sizes;
/// it bounds the exhaustive oracle.
pub const VALUE_CAP: u32 = 10_000;

/// Largest starting-number count the exhaustive oracle accepts.
pub const ORACLE_MAX_START: usize = 5;

/// The four arithmetic operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// One applied operation: `a op b = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub a: u32,
    pub b: u32,
    pub op: Op,
    pub r: u32,
}

impl Step {
    pub fn new(a: u32, b: u32, op: Op) -> Result<Self, StepError> {
        let r = apply_op(a, b, op)?;
        Ok(Step { a, b, op, r })
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}={}", self.a, self.op, self.b, self.r)
    }
}

/// An ordered list of steps consuming a start multiset down to a final value.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Expression {
    pub steps: Vec<Step>,
}

impl Expression {
    pub fn new(steps: Vec<Step>) -> Self {
        Expression { steps }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rendered: Vec<String> = self.steps.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", rendered.join("; "))
    }
}

/// A Countdown instance: a multiset of starting numbers and a target value.
///
/// `nums` is kept sorted ascending; `id` is a content hash of the sorted
/// numbers and the target, used for dedup across pipelines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub nums: Vec<u32>,
    pub target: u32,
}

impl Problem {
    /// Builds a problem, sorting the numbers and deriving the content id.
    pub fn new(mut nums: Vec<u32>, target: u32) -> Result<Self, ProblemError> {
        if nums.is_empty() {
            return Err(ProblemError::EmptyStartSet);
        }
        if target < 1 || nums.iter().any(|&n| n < 1) {
            return Err(ProblemError::NonPositiveValue);
        }
        nums.sort_unstable();
        let id = Self::content_id(&nums, target);
        Ok(Problem { id, nums, target })
    }

    /// Content hash of `(sorted nums, target)`, stable across runs.
    pub fn content_id(sorted_nums: &[u32], target: u32) -> String {
        let mut hasher = Sha256::new();
        for n in sorted_nums {
            hasher.update(n.to_le_bytes());
        }
        hasher.update([b'|']);
        hasher.update(target.to_le_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn n_start(&self) -> usize {
        self.nums.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error("a problem needs at least one starting number")]
    EmptyStartSet,
    #[error("starting numbers and target must be positive")]
    NonPositiveValue,
}

/// Why a proposed step is invalid in the positive-integer value domain.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("operands must be positive")]
    NonPositiveOperand,
    #[error("subtraction must leave at least 1")]
    SubtractionUnderflow,
    #[error("division must be exact")]
    InexactDivision,
    #[error("result {0} exceeds the value cap {VALUE_CAP}")]
    ValueCapExceeded(u64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("exhaustive enumeration supports at most {ORACLE_MAX_START} starting numbers, got {0}")]
    TooLarge(usize),
}

/// Applies `a op b`, returning the result when it is a valid positive integer
/// no larger than [`VALUE_CAP`].
pub fn apply_op(a: u32, b: u32, op: Op) -> Result<u32, StepError> {
    if a == 0 || b == 0 {
        return Err(StepError::NonPositiveOperand);
    }
    let r: u64 = match op {
        Op::Add => u64::from(a) + u64::from(b),
        Op::Mul => u64::from(a) * u64::from(b),
        Op::Sub => {
            if a <= b {
                return Err(StepError::SubtractionUnderflow);
            }
            u64::from(a - b)
        }
        Op::Div => {
            if a % b != 0 {
                return Err(StepError::InexactDivision);
            }
            u64::from(a / b)
        }
    };
    if r > u64::from(VALUE_CAP) {
        return Err(StepError::ValueCapExceeded(r));
    }
    Ok(r as u32)
}

/// An intermediate search configuration: the numbers still available plus the
/// steps applied so far. `remaining` is kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchState {
    remaining: Vec<u32>,
    history: Vec<Step>,
}

impl SearchState {
    pub fn initial(problem: &Problem) -> Self {
        SearchState {
            remaining: problem.nums.clone(),
            history: Vec::new(),
        }
    }

    pub fn remaining(&self) -> &[u32] {
        &self.remaining
    }

    pub fn history(&self) -> &[Step] {
        &self.history
    }

    pub fn is_goal(&self, target: u32) -> bool {
        self.remaining.len() == 1 && self.remaining[0] == target
    }

    /// Applies a step: removes both operands, inserts the result. Returns
    /// `None` when the operands are not available or the arithmetic claim is
    /// wrong.
    pub fn apply(&self, step: Step) -> Option<SearchState> {
        if apply_op(step.a, step.b, step.op) != Ok(step.r) {
            return None;
        }
        let mut remaining = self.remaining.clone();
        let ia = remaining.iter().position(|&n| n == step.a)?;
        remaining.remove(ia);
        let ib = remaining.iter().position(|&n| n == step.b)?;
        remaining.remove(ib);
        let insert_at = remaining.partition_point(|&n| n < step.r);
        remaining.insert(insert_at, step.r);
        let mut history = self.history.clone();
        history.push(step);
        Some(SearchState { remaining, history })
    }

    /// Compact multiset fingerprint, e.g. `"4,6,100"`.
    pub fn fingerprint(&self) -> String {
        let parts: Vec<String> = self.remaining.iter().map(|n| n.to_string()).collect();
        parts.join(",")
    }
}

/// All valid successor steps of a sorted multiset, paired with the resulting
/// multiset. Children are deduplicated by operand value pair, and the
/// non-commutative operations are taken larger-first (the smaller-first order
/// never yields a valid positive result).
pub fn successors(remaining: &[u32]) -> Vec<(Step, Vec<u32>)> {
    let mut out = Vec::new();
    let mut seen_pairs = BTreeSet::new();
    for i in 0..remaining.len() {
        for j in (i + 1)..remaining.len() {
            let (lo, hi) = (remaining[i], remaining[j]);
            if !seen_pairs.insert((lo, hi)) {
                continue;
            }
            for op in Op::ALL {
                let Ok(step) = Step::new(hi, lo, op) else {
                    continue;
                };
                let mut rest = Vec::with_capacity(remaining.len() - 1);
                rest.extend_from_slice(&remaining[..i]);
                rest.extend_from_slice(&remaining[i + 1..j]);
                rest.extend_from_slice(&remaining[j + 1..]);
                let insert_at = rest.partition_point(|&n| n < step.r);
                rest.insert(insert_at, step.r);
                out.push((step, rest));
            }
        }
    }
    out
}

/// Replays an expression against a problem. True iff every step is valid,
/// every operand is available, and the final value equals the target.
///
/// With `allow_partial_use = false` (the default rule) the expression must
/// consume all starting numbers down to a singleton.
pub fn verify_expression_with(problem: &Problem, expr: &Expression, allow_partial_use: bool) -> bool {
    let mut state = SearchState::initial(problem);
    if expr.steps.is_empty() {
        let hit = state.remaining().contains(&problem.target);
        return if allow_partial_use {
            hit
        } else {
            state.is_goal(problem.target)
        };
    }
    for step in &expr.steps {
        state = match state.apply(*step) {
            Some(next) => next,
            None => return false,
        };
    }
    if allow_partial_use {
        expr.steps.last().map(|s| s.r) == Some(problem.target)
    } else {
        state.is_goal(problem.target)
    }
}

/// Replay verification under the full-consumption rule.
pub fn verify_expression(problem: &Problem, expr: &Expression) -> bool {
    verify_expression_with(problem, expr, false)
}

/// Exhaustively enumerates every valid expression reaching the target,
/// duplicate-free up to step-sequence identity, in a deterministic order.
pub fn enumerate_solutions(problem: &Problem) -> Result<Vec<Expression>, OracleError> {
    if problem.n_start() > ORACLE_MAX_START {
        return Err(OracleError::TooLarge(problem.n_start()));
    }
    let mut found = BTreeSet::new();
    let mut steps = Vec::new();
    enumerate_rec(&problem.nums, problem.target, &mut steps, &mut found);
    Ok(found.into_iter().map(Expression::new).collect())
}

fn enumerate_rec(
    remaining: &[u32],
    target: u32,
    steps: &mut Vec<Step>,
    found: &mut BTreeSet<Vec<Step>>,
) {
    if remaining.len() == 1 {
        if remaining[0] == target {
            found.insert(steps.clone());
        }
        return;
    }
    for (step, rest) in successors(remaining) {
        steps.push(step);
        enumerate_rec(&rest, target, steps, found);
        steps.pop();
    }
}

/// Whether any full-consumption expression reaches the target. Equivalent to
/// `enumerate_solutions` being non-empty, with early exit.
pub fn is_reachable(problem: &Problem) -> Result<bool, OracleError> {
    if problem.n_start() > ORACLE_MAX_START {
        return Err(OracleError::TooLarge(problem.n_start()));
    }
    Ok(reachable_rec(&problem.nums, problem.target))
}

fn reachable_rec(remaining: &[u32], target: u32) -> bool {
    if remaining.len() == 1 {
        return remaining[0] == target;
    }
    successors(remaining)
        .into_iter()
        .any(|(_, rest)| reachable_rec(&rest, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(nums: &[u32], target: u32) -> Problem {
        Problem::new(nums.to_vec(), target).unwrap()
    }

    /// The worked instance: {10,10,4,6} with target 16.
    fn worked() -> (Problem, Expression) {
        let p = problem(&[10, 10, 4, 6], 16);
        let e = Expression::new(vec![
            Step::new(10, 10, Op::Mul).unwrap(),
            Step::new(100, 4, Op::Sub).unwrap(),
            Step::new(96, 6, Op::Div).unwrap(),
        ]);
        (p, e)
    }

    #[test]
    fn apply_op_examples() {
        assert_eq!(apply_op(10, 10, Op::Mul), Ok(100));
        assert_eq!(apply_op(96, 6, Op::Div), Ok(16));
        assert_eq!(apply_op(7, 7, Op::Sub), Err(StepError::SubtractionUnderflow));
        assert_eq!(apply_op(7, 3, Op::Div), Err(StepError::InexactDivision));
        assert_eq!(apply_op(5, 0, Op::Div), Err(StepError::NonPositiveOperand));
        assert_eq!(
            apply_op(200, 100, Op::Mul),
            Err(StepError::ValueCapExceeded(20_000))
        );
    }

    #[test]
    fn verify_worked_example() {
        let (p, e) = worked();
        assert!(verify_expression(&p, &e));
    }

    #[test]
    fn verify_rejects_unconsumed_numbers() {
        // 10+10=20; 20-4=16 reaches the target but leaves 6 unused.
        let p = problem(&[10, 10, 4, 6], 16);
        let e = Expression::new(vec![
            Step::new(10, 10, Op::Add).unwrap(),
            Step::new(20, 4, Op::Sub).unwrap(),
        ]);
        assert!(!verify_expression(&p, &e));
        assert!(verify_expression_with(&p, &e, true));
    }

    #[test]
    fn verify_rejects_bad_arithmetic_claims() {
        let p = problem(&[2, 2], 4);
        let e = Expression::new(vec![Step {
            a: 2,
            b: 2,
            op: Op::Add,
            r: 5,
        }]);
        assert!(!verify_expression(&p, &e));
    }

    #[test]
    fn verify_rejects_missing_operands() {
        let p = problem(&[2, 3], 6);
        let e = Expression::new(vec![Step::new(4, 2, Op::Add).unwrap()]);
        assert!(!verify_expression(&p, &e));
    }

    #[test]
    fn oracle_finds_worked_solution() {
        let (p, e) = worked();
        let all = enumerate_solutions(&p).unwrap();
        assert!(!all.is_empty());
        assert!(all.contains(&e));
        for sol in &all {
            assert!(verify_expression(&p, sol));
        }
    }

    #[test]
    fn oracle_two_twos() {
        let p = problem(&[2, 2], 4);
        let all = enumerate_solutions(&p).unwrap();
        let add = Expression::new(vec![Step::new(2, 2, Op::Add).unwrap()]);
        let mul = Expression::new(vec![Step::new(2, 2, Op::Mul).unwrap()]);
        assert!(all.contains(&add));
        assert!(all.contains(&mul));
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn five_unreachable_from_four_ones() {
        let p = problem(&[1, 1, 1, 1], 5);
        assert!(enumerate_solutions(&p).unwrap().is_empty());
        assert!(!is_reachable(&p).unwrap());
        // Any candidate expression must fail verification.
        let e = Expression::new(vec![
            Step::new(1, 1, Op::Add).unwrap(),
            Step::new(2, 1, Op::Add).unwrap(),
            Step::new(3, 1, Op::Add).unwrap(),
        ]);
        assert!(!verify_expression(&p, &e)); // reaches 4, not 5
    }

    #[test]
    fn reachable_simple_cases() {
        assert!(is_reachable(&problem(&[1, 1], 2)).unwrap());
        assert!(is_reachable(&problem(&[10, 10, 4, 6], 16)).unwrap());
    }

    #[test]
    fn oracle_guard() {
        let p = problem(&[1, 2, 3, 4, 5, 6], 7);
        assert_eq!(enumerate_solutions(&p), Err(OracleError::TooLarge(6)));
        assert_eq!(is_reachable(&p), Err(OracleError::TooLarge(6)));
    }

    #[test]
    fn successors_two_twos() {
        let kids = successors(&[2, 2]);
        let ops: Vec<Op> = kids.iter().map(|(s, _)| s.op).collect();
        assert_eq!(ops, vec![Op::Add, Op::Mul, Op::Div]); // 2-2 invalid
        let results: Vec<u32> = kids.iter().map(|(s, _)| s.r).collect();
        assert_eq!(results, vec![4, 4, 1]);
    }

    #[test]
    fn successors_orders_noncommutative_larger_first() {
        let kids = successors(&[1, 3]);
        assert!(kids.iter().any(|(s, _)| s.a == 3 && s.b == 1 && s.op == Op::Sub && s.r == 2));
        assert!(!kids.iter().any(|(s, _)| s.a == 1 && s.b == 3 && s.op == Op::Sub));
    }

    #[test]
    fn successors_include_worked_first_step() {
        let kids = successors(&[4, 6, 10, 10]);
        let hit = kids
            .iter()
            .find(|(s, _)| s.a == 10 && s.b == 10 && s.op == Op::Mul)
            .expect("10*10 child present");
        assert_eq!(hit.1, vec![4, 6, 100]);
    }

    #[test]
    fn state_apply_conserves_multiset_size() {
        let p = problem(&[4, 6, 10, 10], 16);
        let mut state = SearchState::initial(&p);
        let steps = worked().1.steps;
        for (applied, step) in steps.iter().enumerate() {
            state = state.apply(*step).unwrap();
            assert_eq!(state.remaining().len(), p.n_start() - (applied + 1));
            assert_eq!(state.history().len(), applied + 1);
        }
        assert!(state.is_goal(16));
    }

    #[test]
    fn problem_id_is_order_invariant() {
        let a = problem(&[10, 4, 6, 10], 16);
        let b = problem(&[4, 6, 10, 10], 16);
        assert_eq!(a.id, b.id);
        let c = problem(&[4, 6, 10, 10], 17);
        assert_ne!(a.id, c.id);
    }

    #[test]
    fn expression_roundtrip_json() {
        let (_, e) = worked();
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"op\":\"*\""));
        let back: Expression = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }

    /// Independent naive recursion over ordered index pairs, used to
    /// cross-check the oracle on small instances. Commutative steps are
    /// canonicalized larger-first so step sequences are comparable.
    fn naive_enumerate(nums: &[u32], target: u32) -> BTreeSet<Vec<Step>> {
        let mut found = BTreeSet::new();
        fn canonical_step(a: u32, b: u32, op: Op) -> Result<Step, StepError> {
            match op {
                Op::Add | Op::Mul => Step::new(a.max(b), a.min(b), op),
                Op::Sub | Op::Div => Step::new(a, b, op),
            }
        }
        fn rec(remaining: Vec<u32>, target: u32, steps: &mut Vec<Step>, found: &mut BTreeSet<Vec<Step>>) {
            if remaining.len() == 1 {
                if remaining[0] == target {
                    found.insert(steps.clone());
                }
                return;
            }
            for i in 0..remaining.len() {
                for j in 0..remaining.len() {
                    if i == j {
                        continue;
                    }
                    for op in Op::ALL {
                        if let Ok(step) = canonical_step(remaining[i], remaining[j], op) {
                            let mut rest: Vec<u32> = remaining
                                .iter()
                                .enumerate()
                                .filter(|(idx, _)| *idx != i && *idx != j)
                                .map(|(_, &n)| n)
                                .collect();
                            rest.push(step.r);
                            rest.sort_unstable();
                            steps.push(step);
                            rec(rest, target, steps, found);
                            steps.pop();
                        }
                    }
                }
            }
        }
        let mut sorted = nums.to_vec();
        sorted.sort_unstable();
        rec(sorted, target, &mut Vec::new(), &mut found);
        found
    }

    #[test]
    fn oracle_matches_naive_recursion_on_small_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.random_range(2..=3);
            let nums: Vec<u32> = (0..n).map(|_| rng.random_range(1..=20)).collect();
            let target = rng.random_range(1..=50);
            let p = problem(&nums, target);
            let ours: BTreeSet<Vec<Step>> = enumerate_solutions(&p)
                .unwrap()
                .into_iter()
                .map(|e| e.steps)
                .collect();
            let naive = naive_enumerate(&nums, target);
            assert_eq!(ours, naive, "mismatch on {nums:?} -> {target}");
            assert_eq!(is_reachable(&p).unwrap(), !naive.is_empty());
        }
    }
}
