//! The tick loop.
//!
//! Each tick: deliver due messages, run scripted steps, let attackers act,
//! gossip every correct replica's frontier to all peers, then send fetch
//! requests for missing ancestors. A message is dropped if its link is cut
//! at send time. The run ends after a quiescent window following the last
//! scripted activity.

use std::collections::BTreeMap;

use edp::acedpm::AcGenesis;
use edp::broadcast::{AntiEntropy, FetchResponse, Frontier, Message, OpReplica};
use edp::{ElementId, Payload};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::byzantine::{Attacker, Outbox};
use crate::metrics::{Metrics, TickRow, UpdateRow};
use crate::node::{ac_genesis, show_bytes, Node};
use crate::scenario::{Action, Kind, Scenario, ScenarioError};
use crate::transcript::Record;
use crate::verdict::{check_eventual_update, check_strong_convergence, Evidence, SecVerdict};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("no quiescence after {0} ticks")]
    NotQuiescent(u64),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Replaces this correct replica by one without authorization checks.
    pub mutant: Option<usize>,
    /// Extra ticks allowed after the scripted activity; default 10 000.
    pub max_extra_ticks: Option<u64>,
}

/// Outcome of a scenario-specific expectation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub seed: u64,
    pub transcript: Vec<Record>,
    pub metrics: Metrics,
    pub verdict: SecVerdict,
    pub checks: Vec<Check>,
    /// Final correct replicas.
    pub nodes: BTreeMap<usize, Node>,
    /// Script labels to generated element ids.
    pub labels: BTreeMap<String, ElementId>,
    pub equivocations: Vec<(ElementId, ElementId)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdict.all() && self.checks.iter().all(|c| c.ok)
    }
}

struct Network {
    queue: BTreeMap<(u64, u64), (usize, usize, Vec<u8>)>,
    seq: u64,
    sent: usize,
    dropped: usize,
    bytes_by: BTreeMap<usize, usize>,
}

impl Network {
    fn send(&mut self, s: &Scenario, tick: u64, from: usize, to: usize, bytes: Vec<u8>) {
        if !s.link_open(from, to, tick) {
            self.dropped += 1;
            return;
        }
        self.sent += 1;
        *self.bytes_by.entry(from).or_default() += bytes.len();
        self.seq += 1;
        self.queue.insert((tick + s.delay_of(from, to), self.seq), (from, to, bytes));
    }

    fn due(&mut self, tick: u64) -> Vec<(usize, usize, Vec<u8>)> {
        let later = self.queue.split_off(&(tick + 1, 0));
        std::mem::replace(&mut self.queue, later).into_values().collect()
    }
}

pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome, SimError> {
    scenario.validate()?;
    let s = scenario;
    let seed = opts.seed.unwrap_or(s.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let correct = s.correct_ids();
    let all: Vec<usize> = (0..s.replicas).collect();

    let mut nodes: BTreeMap<usize, Node> = correct
        .iter()
        .map(|i| (*i, Node::new(s, *i, opts.mutant == Some(*i))))
        .collect();
    let mut sync: BTreeMap<usize, AntiEntropy> = correct.iter().map(|i| (*i, AntiEntropy::new())).collect();
    let genesis_payload = match s.kind {
        Kind::Access => AcGenesis::encode(&ac_genesis(s)),
        _ => Payload::from(s.genesis.as_str()),
    };
    let settle = s.settle_tick();
    let mut attackers: Vec<Attacker> = s
        .byzantine
        .iter()
        .map(|b| Attacker::new(b, s.kind, &genesis_payload, settle))
        .collect();

    let mut net = Network {
        queue: BTreeMap::new(),
        seq: 0,
        sent: 0,
        dropped: 0,
        bytes_by: BTreeMap::new(),
    };
    let mut transcript = vec![Record::Start {
        scenario: s.name.clone(),
        seed,
        replicas: s.replicas,
        byzantine: s.byzantine_ids().into_iter().collect(),
    }];
    let mut metrics = Metrics::default();
    let mut labels = BTreeMap::new();
    let mut evidence: Vec<Evidence> = Vec::new();
    let mut script: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for step in &s.script {
        script.entry(step.tick).or_default().push(step);
    }

    let window = (s.replicas as u64 + 2) * (2 * s.max_delay() + 1);
    let limit = settle + opts.max_extra_ticks.unwrap_or(10_000);
    let mut quiet = 0u64;
    let mut converged_since: Option<u64> = None;
    let mut tick = 0u64;
    loop {
        let before: BTreeMap<usize, _> = nodes.iter().map(|(i, n)| (*i, n.stats())).collect();
        net.sent = 0;
        net.dropped = 0;
        net.bytes_by.clear();
        let mut delivered = 0;
        let mut malformed = 0;

        for (from, to, bytes) in net.due(tick) {
            delivered += 1;
            if let Some(node) = nodes.get_mut(&to) {
                let applied = match Message::decode(&bytes) {
                    Ok(Message::Frontier(f)) => sync.get_mut(&to).unwrap().on_frontier(node, from, &f),
                    Ok(Message::FetchResponse(r)) => sync.get_mut(&to).unwrap().on_fetch_response(node, from, &r),
                    Ok(Message::FetchRequest(req)) => {
                        let resp = FetchResponse::answer(node.state(), &req);
                        if !resp.ops.is_empty() {
                            net.send(s, tick, to, from, Message::FetchResponse(resp).encode());
                        }
                        Vec::new()
                    }
                    Err(e) => {
                        debug!("replica {to}: malformed message from {from}: {e}");
                        malformed += 1;
                        Vec::new()
                    }
                };
                for id in applied {
                    transcript.push(Record::Apply { t: tick, replica: to, id });
                }
            } else if let Some(a) = attackers.iter_mut().find(|a| a.node == to) {
                for (peer, reply) in a.receive(from, &bytes, &correct) {
                    net.send(s, tick, to, peer, reply);
                }
            }
        }

        let mut actions: Vec<(usize, Option<String>, Action)> = script
            .get(&tick)
            .into_iter()
            .flatten()
            .map(|st| (st.replica, st.label.clone(), st.action.clone()))
            .collect();
        if let Some(w) = &s.workload {
            if tick >= w.from && tick < w.until && (tick - w.from).is_multiple_of(w.every) {
                for i in &correct {
                    if w.replicas.is_empty() || w.replicas.contains(i) {
                        actions.push((*i, None, nodes[i].workload_action(*i, tick)));
                    }
                }
            }
        }
        for (i, label, action) in actions {
            let node = nodes.get_mut(&i).expect("validated");
            match node.perform(&action) {
                Ok(op) => {
                    let id = op.id();
                    if !node.state().contains(&id) {
                        evidence.push(Evidence {
                            property: "self_update",
                            left: i,
                            right: None,
                            element: Some(id),
                            detail: "generated update not applied locally".into(),
                        });
                    }
                    let bytes = op.encode().len();
                    metrics.updates.push(UpdateRow { tick, replica: i, bytes, mlb: op.mlb_hashes.len() });
                    transcript.push(Record::Generate {
                        t: tick,
                        replica: i,
                        label: label.clone(),
                        id,
                        bytes,
                        mlb: op.mlb_hashes.len(),
                    });
                    if let Some(l) = label {
                        labels.insert(l, id);
                    }
                }
                Err(reason) => transcript.push(Record::Refused { t: tick, replica: i, label, reason }),
            }
        }

        for a in &mut attackers {
            let out: Outbox = a.tick(tick, &correct, &mut rng);
            if !out.is_empty() {
                transcript.push(Record::Attack {
                    t: tick,
                    node: a.node,
                    behaviors: a.behaviors.clone(),
                    messages: out.len(),
                });
            }
            for (to, bytes) in out {
                net.send(s, tick, a.node, to, bytes);
            }
        }

        for i in &correct {
            let msg = Message::Frontier(Frontier::from_state(nodes[i].state())).encode();
            for j in all.iter().filter(|j| *j != i) {
                net.send(s, tick, *i, *j, msg.clone());
            }
            let peers: Vec<usize> = all.iter().copied().filter(|j| j != i && s.link_open(*i, *j, tick)).collect();
            for (peer, req) in sync.get_mut(i).unwrap().requests(&nodes[i], &peers) {
                net.send(s, tick, *i, peer, Message::FetchRequest(req).encode());
            }
        }

        transcript.push(Record::Tick {
            t: tick,
            sent: net.sent,
            dropped: net.dropped,
            delivered,
            malformed,
        });
        let mut progress = false;
        for (i, n) in &nodes {
            let (a, b) = (before[i], n.stats());
            progress |= a.applied != b.applied || a.parked != b.parked || a.evicted != b.evicted;
            metrics.max_pending = metrics.max_pending.max(n.pending_len());
            metrics.ticks.push(TickRow {
                tick,
                replica: *i,
                frontier: n.frontier_size(),
                pending: n.pending_len(),
                elements: n.state().len(),
                bytes_sent: net.bytes_by.get(i).copied().unwrap_or(0),
            });
        }
        let first = nodes.values().next().expect("a correct replica");
        let same = nodes
            .values()
            .all(|n| n.state().len() == first.state().len() && n.state().max_ids() == first.state().max_ids());
        converged_since = if same { converged_since.or(Some(tick)) } else { None };

        if tick > settle {
            quiet = if progress { 0 } else { quiet + 1 };
            if quiet >= window {
                metrics.quiescent_from = tick + 1 - window;
                transcript.push(Record::Quiescent { t: tick });
                break;
            }
        }
        if tick >= limit {
            return Err(SimError::NotQuiescent(tick));
        }
        tick += 1;
    }
    metrics.end_tick = tick;
    metrics.convergence_tick = converged_since;
    info!("{}: quiescent at tick {tick}", s.name);

    let self_update = evidence.is_empty();
    let eventual = check_eventual_update(&nodes);
    let strong = check_strong_convergence(&nodes);
    let verdict = SecVerdict {
        self_update,
        eventual_update: eventual.is_none(),
        strong_convergence: strong.is_none(),
        evidence: evidence.into_iter().chain(eventual).chain(strong).collect(),
    };
    transcript.push(Record::Verdict(verdict.clone()));
    let checks = expectations(s, &nodes, &labels, &metrics);
    Ok(Outcome {
        scenario: s.clone(),
        seed,
        transcript,
        metrics,
        verdict,
        checks,
        nodes,
        labels,
        equivocations: attackers.into_iter().flat_map(|a| a.equivocations).collect(),
    })
}

fn expectations(
    s: &Scenario,
    nodes: &BTreeMap<usize, Node>,
    labels: &BTreeMap<String, ElementId>,
    metrics: &Metrics,
) -> Vec<Check> {
    let e = &s.expect;
    let mut out = Vec::new();
    let mut check = |name: String, ok: bool, detail: String| out.push(Check { name, ok, detail });
    let id_of = |l: &String| labels.get(l).copied();
    for (i, n) in nodes {
        let st = n.state();
        if let Some(k) = e.elements {
            check(format!("replica {i}: {k} elements"), st.len() == k, format!("has {}", st.len()));
        }
        if let Some(max) = &e.max {
            let want: Option<std::collections::BTreeSet<ElementId>> = max.iter().map(id_of).collect();
            check(
                format!("replica {i}: max = {max:?}"),
                want.as_ref() == Some(st.max_ids()),
                format!("{} maximal elements", st.max_ids().len()),
            );
        }
        for (l, k) in &e.closure_sizes {
            let got = id_of(l).and_then(|id| st.closure(&id)).map(|c| c.len());
            check(format!("replica {i}: |{l}↓| = {k}"), got == Some(*k), format!("{got:?}"));
        }
        for (k, v) in &e.map {
            let got = n.map().get(k.as_bytes()).map(show_bytes);
            check(format!("replica {i}: map[{k}] = {v}"), got.as_deref() == Some(v), format!("{got:?}"));
        }
        let view = n.access_view();
        let applied = |l: &String| {
            id_of(l).is_some_and(|id| view.as_ref().is_some_and(|v| v.applied.contains(&id)))
        };
        for l in &e.applied {
            check(format!("replica {i}: {l} applied"), applied(l), String::new());
        }
        for l in &e.skipped {
            let present = id_of(l).is_some_and(|id| st.contains(&id));
            check(
                format!("replica {i}: {l} kept but skipped"),
                present && !applied(l),
                format!("present={present}"),
            );
        }
        if !e.one_of.is_empty() {
            let winners: Vec<&String> = e.one_of.iter().filter(|l| applied(l)).collect();
            let all_present = e.one_of.iter().all(|l| id_of(l).is_some_and(|id| st.contains(&id)));
            check(
                format!("replica {i}: exactly one of {:?}", e.one_of),
                winners.len() == 1 && all_present,
                format!("applied {winners:?}"),
            );
        }
    }
    if let Some(bound) = e.max_quiescent_frontier {
        let got = metrics.max_quiescent_frontier();
        check(format!("quiescent frontier <= {bound}"), got <= bound, format!("max {got}"));
    }
    out
}
