//! Dev probe: compares trajectory-serialization variants by how well
//! gradient clustering recovers the mode axis vs the heuristic axis.

use modc::datagen::{build_training_set, DatasetConfig, ModeSampling};
use modc::discovery::{cluster_f1, discover_modes_from_corpus, DiscoveryConfig};
use modc::search::{HeuristicKind, Mode, TraceEvent, Trajectory};

fn tokens_variant(t: &Trajectory, variant: usize) -> Vec<String> {
    let mut out = Vec::new();
    for ev in &t.trace {
        match ev {
            TraceEvent::Visit {
                fingerprint,
                op,
                result,
                ..
            } => {
                let size = fingerprint.split(',').count().min(4);
                match variant {
                    // size + op + bucket (current)
                    0 => {
                        out.push(format!("s{size}"));
                        out.push(op.symbol().to_string());
                        out.push(modc::search::magnitude_bucket(*result).to_string());
                    }
                    // size + op
                    1 => {
                        out.push(format!("s{size}"));
                        out.push(op.symbol().to_string());
                    }
                    // size only
                    2 => {
                        out.push(format!("s{size}"));
                    }
                    // op + bucket only (no size)
                    _ => {
                        out.push(op.symbol().to_string());
                        out.push(modc::search::magnitude_bucket(*result).to_string());
                    }
                }
            }
            TraceEvent::Backtrack => out.push("b".to_string()),
            TraceEvent::LevelEnd => out.push("l".to_string()),
        }
    }
    if t.solved {
        out.push("!".to_string());
    }
    out
}

fn main() {
    let config = DatasetConfig::new(1000, ModeSampling::Uniform, 4242);
    let (records, _) = build_training_set(&config).unwrap();
    let mode_truth: Vec<usize> = records
        .iter()
        .map(|r| (r.trajectory.mode_used == Mode::Bfs) as usize)
        .collect();
    let heur_truth: Vec<usize> = records
        .iter()
        .map(|r| (r.trajectory.heuristic == HeuristicKind::NearestNumber) as usize)
        .collect();

    for variant in 0..4 {
        let corpus: Vec<Vec<String>> = records
            .iter()
            .map(|r| tokens_variant(&r.trajectory, variant))
            .collect();
        let outcome = discover_modes_from_corpus(&corpus, &DiscoveryConfig::new(7)).unwrap();
        let f1_mode = cluster_f1(&outcome.clusters, &mode_truth).unwrap();
        let f1_heur = cluster_f1(&outcome.clusters, &heur_truth).unwrap();
        println!("variant {variant}: F1 vs mode = {f1_mode:.4}, F1 vs heuristic = {f1_heur:.4}");
    }
}
