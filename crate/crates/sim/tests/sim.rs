use std::path::PathBuf;

use edp::broadcast::OpReplica;
use edp_sim::explore::explore_all;
use edp_sim::scenario::{Behavior, ByzantineNode, Kind, Scenario, ScenarioError, Workload};
use edp_sim::transcript::to_jsonl;
use edp_sim::{run, RunOptions, SimError};

fn load(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&p).unwrap()
}

fn chatty(n: usize, until: u64) -> Scenario {
    let mut s = Scenario::new(format!("chat-{n}"), n);
    s.workload = Some(Workload { from: 0, until, every: 1, replicas: vec![] });
    s
}

#[test]
fn runs_are_deterministic() {
    for name in ["combined.json", "access_byzantine.json"] {
        let s = load(name);
        let a = run(&s, &RunOptions::default()).unwrap();
        let b = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(to_jsonl(&a.transcript), to_jsonl(&b.transcript));
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
    }
}

#[test]
fn seed_override_changes_adversary_only() {
    let s = load("forged_ancestry.json");
    let a = run(&s, &RunOptions { seed: Some(1), ..Default::default() }).unwrap();
    let b = run(&s, &RunOptions { seed: Some(2), ..Default::default() }).unwrap();
    assert_eq!(a.seed, 1);
    assert_ne!(to_jsonl(&a.transcript), to_jsonl(&b.transcript));
    assert!(a.passed() && b.passed());
}

#[test]
fn permanent_partition_is_rejected() {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/permanent_partition.json");
    assert!(matches!(Scenario::load(&p), Err(ScenarioError::Invalid(_))));
    let mut s = Scenario::new("p", 2);
    s.partitions.push(edp_sim::scenario::Partition {
        from: 0,
        until: None,
        groups: vec![vec![0], vec![1]],
        blocked: vec![],
    });
    assert!(matches!(run(&s, &RunOptions::default()), Err(SimError::Scenario(_))));
}

#[test]
fn mutant_replica_is_caught() {
    let s = load("access_byzantine.json");
    let honest = run(&s, &RunOptions::default()).unwrap();
    assert!(honest.verdict.all());
    let out = run(&s, &RunOptions { mutant: Some(1), ..Default::default() }).unwrap();
    assert!(!out.verdict.strong_convergence);
    let ev = out.verdict.evidence.iter().find(|e| e.property == "strong_convergence").unwrap();
    assert!(ev.left == 1 || ev.right == Some(1));
}

#[test]
fn single_replica_is_vacuously_convergent() {
    let out = run(&chatty(1, 5), &RunOptions::default()).unwrap();
    assert!(out.verdict.all());
    assert_eq!(out.nodes[&0].state().len(), 6);
}

#[test]
fn single_writer_frontier_stays_one() {
    let mut s = chatty(4, 10);
    s.workload.as_mut().unwrap().replicas = vec![2];
    let out = run(&s, &RunOptions::default()).unwrap();
    assert!(out.verdict.all());
    assert!(out.metrics.quiescent_rows().all(|r| r.frontier == 1));
}

#[test]
fn frontier_bounded_by_writers() {
    for n in [2, 5, 10] {
        let out = run(&chatty(n, 20), &RunOptions::default()).unwrap();
        assert!(out.verdict.all());
        assert!(out.metrics.max_quiescent_frontier() <= n, "n={n}");
    }
}

#[test]
fn equivocations_become_siblings_everywhere() {
    let out = run(&load("equivocation.json"), &RunOptions::default()).unwrap();
    assert!(!out.equivocations.is_empty());
    for (a, b) in &out.equivocations {
        assert_ne!(a, b);
        for n in out.nodes.values() {
            assert!(n.state().contains(a) && n.state().contains(b));
        }
    }
}

#[test]
fn spam_is_bounded_by_pending_capacity() {
    let mut s = chatty(3, 6);
    s.replicas = 4;
    s.pending_capacity = 32;
    s.byzantine.push(ByzantineNode { node: 3, behaviors: vec![Behavior::ForgeAncestry, Behavior::Spam], until: None, rate: 40 });
    let out = run(&s, &RunOptions::default()).unwrap();
    assert!(out.verdict.all());
    assert!(out.metrics.max_pending <= 32);
}

#[test]
fn every_behavior_alone_keeps_sec() {
    for kind in [Kind::Plain, Kind::Access] {
        for b in Behavior::ALL {
            let mut s = Scenario::new(format!("{b:?}"), 4);
            s.kind = kind;
            s.byzantine.push(ByzantineNode { node: 3, behaviors: vec![b], until: None, rate: 3 });
            if kind == Kind::Access {
                s.script = load("access_byzantine.json").script;
            }
            s.workload = Some(Workload { from: 4, until: 10, every: 2, replicas: vec![] });
            let out = run(&s, &RunOptions::default()).unwrap();
            assert!(out.verdict.all(), "{kind:?} {b:?}: {:?}", out.verdict.evidence);
        }
    }
}

#[test]
fn metrics_csv_has_header_and_rows() {
    let out = run(&load("fig1.json"), &RunOptions::default()).unwrap();
    let csv = out.metrics.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tick,replica,frontier,pending,elements,bytes_sent"));
    assert_eq!(lines.count(), out.metrics.ticks.len());
    assert_eq!(out.metrics.updates.len(), 4);
}

#[test]
fn exhaustive_two_replicas_four_ops() {
    let r = explore_all(4);
    assert!(r.failures.is_empty(), "{:?}", &r.failures[..r.failures.len().min(3)]);
    assert!(r.interleavings > 1000);
}
