//! Mode-conditioned test-time compute lab.
//!
//! The crate builds a small, fully reproducible pipeline around the
//! Countdown arithmetic task: heuristic-pruned DFS/BFS searchers with
//! complementary failure profiles, rejection-sampled dataset construction,
//! exact and Monte-Carlo pass@k allocation analytics, sampling-policy
//! simulation (standard mixture vs. explicit per-mode allocation), and
//! unsupervised mode discovery via gradient clustering.
//!
//! Everything is deterministic given a master seed: per-task random streams
//! are derived from stable identifiers, so results do not depend on worker
//! count or scheduling order. Parallel execution is provided by rayon behind
//! the `parallel` feature (enabled by default); disabling it yields a
//! sequential build with identical outputs.

pub mod countdown;
pub mod datagen;
pub mod discovery;
pub mod exec;
pub mod formats;
pub mod passk;
pub mod rng;
pub mod sampler;
pub mod search;
