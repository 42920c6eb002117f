//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs without the libtest harness so the lines stay readable.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use edp::acedpm::{AcConfig, AcEvent, AcGenesis, AcReplica, ReplicaIdentity};
use edp::broadcast::{AntiEntropy, Frontier, Message, OpReplica};
use edp::epm::{self, linearize, EpmMap, HashOrder, KvPayload};
use edp::op::Replica;
use edp::{EdpState, ElementId, Operation, Payload, Universe};
use edp_sim::explore::explore_all;
use edp_sim::scenario::{Behavior, ByzantineNode, Kind, Scenario, Workload};
use edp_sim::{run, Outcome, RunOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn universe() -> Universe {
    Universe::new("genesis")
}

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&p).unwrap()
}

fn simulate(s: &Scenario, seed: Option<u64>) -> Result<Outcome, String> {
    run(s, &RunOptions { seed, ..Default::default() }).map_err(|e| format!("{}: {e}", s.name))
}

fn antichain(state: &EdpState, set: &BTreeSet<ElementId>) -> BTreeSet<ElementId> {
    set.iter()
        .filter(|a| !set.iter().any(|b| a != &b && state.is_below(a, b)))
        .copied()
        .collect()
}

/// Random history; `kv` makes most payloads puts over two keys.
fn history(seed: u64, n: usize, kv: bool) -> Replica {
    let mut r = rng(seed);
    let mut world = Replica::new(universe()).unwrap();
    for i in 0..n {
        let ids: Vec<ElementId> = world.state().ids().copied().collect();
        let k = r.gen_range(1..=ids.len().min(3));
        let picked: BTreeSet<ElementId> = ids.choose_multiple(&mut r, k).copied().collect();
        let mlb = antichain(world.state(), &picked);
        let payload = if kv && r.gen_bool(0.9) {
            KvPayload::new(if r.gen_bool(0.5) { "a" } else { "b" }, format!("v{i}")).encode()
        } else {
            Payload::from(format!("e{i}/{}", r.gen::<u16>()))
        };
        assert_eq!(world.effect(Operation::new(payload, mlb)).len(), 1);
    }
    world
}

/// State route: the downward closure of `tops`, rebuilt by upward extensions.
fn sub_state(world: &EdpState, tops: &BTreeSet<ElementId>) -> EdpState {
    let keep = world.downward_closure(tops).unwrap();
    let mut s = EdpState::new(universe()).unwrap();
    for id in world.topo_ids() {
        if keep.contains(&id) && id != world.genesis_id() {
            s.extend_in_place(&world.extension(&id).unwrap()).unwrap();
        }
    }
    s
}

fn random_tops(world: &EdpState, r: &mut impl Rng) -> BTreeSet<ElementId> {
    let ids: Vec<ElementId> = world.ids().copied().collect();
    let k = r.gen_range(1..=ids.len().min(4));
    ids.choose_multiple(r, k).copied().collect()
}

fn semilattice() -> Verdict {
    let start = Instant::now();
    let cases = 1000u64;
    for seed in 0..cases {
        let world = history(seed, 1 + (seed % 15) as usize, false);
        let w = world.state();
        let mut r = rng(seed ^ 0x5eed);
        let [a, b, c] = [0, 1, 2].map(|_| sub_state(w, &random_tops(w, &mut r)));
        ensure!(a.join(&a).unwrap() == a, "idempotence, case {seed}");
        let ab = a.join(&b).unwrap();
        ensure!(ab == b.join(&a).unwrap(), "commutativity, case {seed}");
        ensure!(
            ab.join(&c).unwrap() == a.join(&b.join(&c).unwrap()).unwrap(),
            "associativity, case {seed}"
        );
        ensure!(a.ids().chain(b.ids()).all(|id| ab.contains(id)), "upper bound, case {seed}");
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{cases} cases in {:.1}s", took.as_secs_f64()))
}

fn exhaustive() -> Verdict {
    let r = explore_all(4);
    ensure!(r.failures.is_empty(), "{} failing interleavings, first {:?}", r.failures.len(), r.failures.first());
    Ok(format!("{} interleavings, 2 replicas, up to 4 ops", r.interleavings))
}

fn oracle_equivalence() -> Verdict {
    for seed in 0..500u64 {
        let world = history(seed, 3 + (seed % 12) as usize, false);
        let w = world.state();
        let mut r = rng(seed.wrapping_mul(31));
        let mut joined = sub_state(w, &[w.genesis_id()].into_iter().collect());
        let mut replica = Replica::new(universe()).unwrap();
        for _ in 0..3 {
            let s = sub_state(w, &random_tops(w, &mut r));
            joined = joined.join(&s).unwrap();
            let mut ops: Vec<Operation> = s.topo_ids().iter().skip(1).map(|i| s.operation(i).unwrap()).collect();
            ops.shuffle(&mut r);
            for op in ops {
                replica.effect(op);
            }
        }
        ensure!(joined.to_bdp() == replica.state().to_bdp(), "history {seed}");
    }
    Ok("500 histories".into())
}

fn fig1() -> Verdict {
    let mut r1 = Replica::new(universe()).unwrap();
    let mut r2 = Replica::new(universe()).unwrap();
    let x1 = r1.update("x1").unwrap();
    let x2 = r2.update("x2").unwrap();
    r2.effect(x1.clone());
    let x3 = r1.update("x3").unwrap();
    let x4 = r2.update("x4").unwrap();
    r1.effect(x2);
    r1.effect(x4.clone());
    r2.effect(x3.clone());
    for r in [&r1, &r2] {
        let s = r.state();
        ensure!(s.max_ids() == &[x3.id(), x4.id()].into_iter().collect(), "max {:?}", s.max_ids());
        let (c3, c4) = (s.closure(&x3.id()).unwrap().len(), s.closure(&x4.id()).unwrap().len());
        ensure!((c4, c3) == (4, 3), "closure sizes x4={c4} x3={c3}");
    }
    let o = simulate(&scenario("fig1.json"), None)?;
    ensure!(o.passed(), "fig1 scenario: {:?} {:?}", o.verdict.evidence, o.checks);
    Ok("max = {x3, x4}, |C(x4)| = 4, |C(x3)| = 3, replica and scenario".into())
}

fn random_byzantine(seed: u64, access_script: &Scenario) -> Scenario {
    let mut r = rng(seed);
    let access = seed.is_multiple_of(3);
    let n = if access { 4 } else { r.gen_range(3..=6) };
    let mut s = Scenario::new(format!("byz-{seed}"), n);
    s.seed = seed;
    s.delay = r.gen_range(1..=3);
    s.pending_capacity = 64;
    let bad: Vec<usize> = if access || n < 5 { vec![n - 1] } else { vec![n - 2, n - 1] };
    for node in bad {
        let mut behaviors: Vec<Behavior> =
            Behavior::ALL.iter().copied().filter(|_| r.gen_bool(0.4)).collect();
        if behaviors.is_empty() {
            behaviors.push(Behavior::ALL[(seed as usize) % Behavior::ALL.len()]);
        }
        s.byzantine.push(ByzantineNode { node, behaviors, until: Some(r.gen_range(8..30)), rate: r.gen_range(1..6) });
    }
    if access {
        s.kind = Kind::Access;
        s.script = access_script.script.clone();
    }
    s.workload = Some(Workload { from: 4, until: r.gen_range(8..16), every: r.gen_range(1..=3), replicas: vec![] });
    s
}

fn fuzz_one(bytes: &[u8], plain: &mut Replica, ac: &mut AcReplica, sync: &mut AntiEntropy) {
    let p = Payload(bytes.to_vec());
    let _ = (AcEvent::decode(&p), AcGenesis::decode(&p), KvPayload::decode(&p));
    if let Ok(op) = Operation::decode(bytes) {
        plain.effect(op.clone());
        ac.effect(op);
    }
    match Message::decode(bytes) {
        Ok(Message::Frontier(f)) => {
            sync.on_frontier(plain, 1, &f);
        }
        Ok(Message::FetchResponse(resp)) => {
            sync.requests(plain, &[1]);
            sync.on_fetch_response(plain, 1, &resp);
        }
        Ok(Message::FetchRequest(req)) => {
            let _ = edp::broadcast::FetchResponse::answer(plain.state(), &req);
        }
        Err(_) => {}
    }
}

fn byzantine() -> Verdict {
    let access_script = scenario("access_byzantine.json");
    let mut scenarios = 0;
    for seed in 0..105u64 {
        let s = random_byzantine(seed, &access_script);
        let o = simulate(&s, None)?;
        ensure!(o.verdict.all(), "{}: {:?}", s.name, o.verdict.evidence);
        scenarios += 1;
    }
    for name in ["equivocation.json", "forged_ancestry.json", "spam.json", "selective_send.json", "access_byzantine.json", "combined.json"] {
        let o = simulate(&scenario(name), None)?;
        ensure!(o.passed(), "{name}: {:?} {:?}", o.verdict.evidence, o.checks);
        scenarios += 1;
    }

    let world = history(3, 8, true);
    let valid: Vec<Vec<u8>> = world
        .state()
        .topo_ids()
        .iter()
        .skip(1)
        .map(|i| world.state().operation(i).unwrap().encode())
        .chain([Message::Frontier(Frontier::from_state(world.state())).encode()])
        .collect();
    let alice = ReplicaIdentity::from_seed([1; 32]);
    let mut plain = Replica::with_capacity(universe(), 64).unwrap();
    let mut ac = AcReplica::new(AcGenesis::new("room", alice.subject()), Some(alice), AcConfig::default());
    let mut sync = AntiEntropy::new();
    let mut r = rng(0xf22);
    let inputs = 100_000;
    for _ in 0..inputs {
        let bytes = if r.gen_bool(0.3) {
            let len = r.gen_range(0..200);
            (0..len).map(|_| r.gen()).collect()
        } else {
            let mut b = valid[r.gen_range(0..valid.len())].clone();
            match r.gen_range(0..4) {
                0 => {
                    let i = r.gen_range(0..b.len());
                    b[i] ^= 1 << r.gen_range(0..8);
                }
                1 => b.truncate(r.gen_range(0..b.len())),
                2 => {
                    let i = r.gen_range(0..b.len());
                    b[i..].iter_mut().for_each(|x| *x = r.gen());
                }
                _ => {
                    let other = &valid[r.gen_range(0..valid.len())];
                    b.extend_from_slice(&other[..r.gen_range(0..other.len())]);
                }
            }
            b
        };
        fuzz_one(&bytes, &mut plain, &mut ac, &mut sync);
    }
    for id in plain.state().ids() {
        ensure!(plain.state().operation(id).unwrap().id() == *id, "stored element with a wrong id");
    }
    Ok(format!("{scenarios} seeded scenarios keep SEC, {inputs} fuzz inputs without panic"))
}

fn equivocation() -> Verdict {
    let o = simulate(&scenario("equivocation.json"), None)?;
    ensure!(o.passed(), "{:?}", o.verdict.evidence);
    ensure!(!o.equivocations.is_empty(), "attacker never equivocated");
    for (a, b) in &o.equivocations {
        ensure!(a != b, "equivocation collapsed to one element");
        for n in o.nodes.values() {
            ensure!(n.state().contains(a) && n.state().contains(b), "a replica lacks an equivocated sibling");
        }
    }
    Ok(format!("{} equivocations, each two distinct elements at every replica", o.equivocations.len()))
}

fn frontier() -> Verdict {
    let mut seen = Vec::new();
    for n in [2, 5, 10] {
        let mut s = Scenario::new(format!("chat-{n}"), n);
        s.workload = Some(Workload { from: 0, until: 20, every: 1, replicas: vec![] });
        let o = simulate(&s, None)?;
        ensure!(o.verdict.all(), "n={n}: {:?}", o.verdict.evidence);
        let max = o.metrics.max_quiescent_frontier();
        ensure!(max <= n, "n={n}: quiescent frontier {max}");
        seen.push(format!("n={n}: {max}"));
    }
    Ok(seen.join(", "))
}

fn update_size() -> Verdict {
    fn tip(depth: usize) -> usize {
        let mut r = Replica::new(universe()).unwrap();
        let (mut a, mut b) = (r.state().genesis_id(), r.state().genesis_id());
        for i in 0..depth {
            a = r.effect(Operation::new(format!("a{i:05}"), [a]))[0];
            b = r.effect(Operation::new(format!("b{i:05}"), [b]))[0];
        }
        r.update("tip").unwrap().encode().len()
    }
    let (shallow, deep) = (tip(10), tip(1000));
    ensure!(shallow == deep, "depth 10: {shallow} bytes, depth 1000: {deep} bytes");
    Ok(format!("{deep} bytes at depth 10 and 1000, width 2"))
}

fn linear_extensions(state: &EdpState, t: &BTreeSet<ElementId>) -> Vec<Vec<ElementId>> {
    fn go(state: &EdpState, rest: &mut Vec<ElementId>, prefix: &mut Vec<ElementId>, out: &mut Vec<Vec<ElementId>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let cand = rest[i];
            if rest.iter().any(|o| *o != cand && state.is_below(o, &cand)) {
                continue;
            }
            rest.remove(i);
            prefix.push(cand);
            go(state, rest, prefix, out);
            prefix.pop();
            rest.insert(i, cand);
        }
    }
    let mut out = Vec::new();
    go(state, &mut t.iter().copied().collect(), &mut Vec::new(), &mut out);
    out
}

fn epm_oracle() -> Verdict {
    let mut checked = 0;
    for seed in 0..400u64 {
        let world = history(seed, 1 + (seed % 5) as usize, true);
        let s = world.state();
        let mut r = rng(seed ^ 0xabc);
        let ids: Vec<ElementId> = s.ids().copied().collect();
        for _ in 0..3 {
            let k = r.gen_range(1..=ids.len());
            let t: BTreeSet<ElementId> = ids.choose_multiple(&mut r, k).copied().collect();
            let closure = s.downward_closure(&t).unwrap();
            let least = linear_extensions(s, &closure).into_iter().min().unwrap();
            let mut expected = EpmMap::new();
            for id in &least {
                expected.apply(s.payload(id).unwrap());
            }
            ensure!(epm::get(s, &t).unwrap() == expected, "get differs, history {seed}");
            ensure!(linearize(s, &closure, &HashOrder).unwrap() == least, "linearization differs, history {seed}");
            checked += 1;
        }
    }
    Ok(format!("{checked} queries over histories of at most 5 puts"))
}

fn acedpm() -> Verdict {
    let o = simulate(&scenario("access_ban_vs_chat.json"), None)?;
    ensure!(o.passed(), "ban-vs-chat: {:?} {:?}", o.verdict.evidence, o.checks);
    let (ban, chat) = (o.labels["ban"], o.labels["chat"]);
    for n in o.nodes.values() {
        let v = n.access_view().unwrap();
        ensure!(v.applied.contains(&ban) && !v.applied.contains(&chat), "ban did not win");
    }
    let o = simulate(&scenario("access_mutual_revocation.json"), None)?;
    ensure!(o.passed(), "mutual revocation: {:?} {:?}", o.verdict.evidence, o.checks);
    let bans = [o.labels["a_bans_b"], o.labels["b_bans_a"]];
    for n in o.nodes.values() {
        let v = n.access_view().unwrap();
        let winners = bans.iter().filter(|b| v.applied.contains(b)).count();
        ensure!(winners == 1, "{winners} of the mutual bans applied");
        ensure!(bans.iter().all(|b| n.state().contains(b)), "a ban was rejected instead of stored");
    }
    Ok("ban beats concurrent chat; exactly one of two same-level bans applies".into())
}

fn vectors() -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_edp")).arg("vectors").output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let failed: Vec<&str> = text.lines().filter(|l| !l.starts_with("ok")).collect();
    ensure!(out.status.success() && failed.is_empty(), "exit {:?}: {failed:?}", out.status.code());
    Ok(format!("{} vectors regenerated by `edp vectors`", text.lines().count()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("semilattice", semilattice),
        ("exhaustive-convergence", exhaustive),
        ("state-op-oracle", oracle_equivalence),
        ("fig1-replay", fig1),
        ("byzantine-suite", byzantine),
        ("equivocation", equivocation),
        ("frontier-bound", frontier),
        ("update-size", update_size),
        ("epm-oracle", epm_oracle),
        ("acedpm", acedpm),
        ("pinned-vectors", vectors),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
