#![allow(dead_code)]

use std::collections::BTreeSet;

use edp::op::Replica;
use edp::{ElementId, EdpState, Operation, Universe};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn universe() -> Universe {
    Universe::new("genesis")
}

/// A random history over one universe: ops in an order where every op
/// follows its ancestors, plus the replica holding all of them.
pub struct History {
    pub ops: Vec<Operation>,
    pub world: Replica,
}

impl History {
    pub fn genesis(&self) -> ElementId {
        self.world.state().genesis_id()
    }

    /// State route: the downward closure of `tops` built by `extend`.
    pub fn state_of(&self, tops: &BTreeSet<ElementId>) -> EdpState {
        let world = self.world.state();
        let keep = world.downward_closure(tops).unwrap();
        let mut s = EdpState::new(universe()).unwrap();
        for id in world.topo_ids() {
            if keep.contains(&id) && id != self.genesis() {
                s.extend_in_place(&world.extension(&id).unwrap()).unwrap();
            }
        }
        s
    }

    pub fn random_subset(&self, rng: &mut impl Rng) -> BTreeSet<ElementId> {
        let ids: Vec<ElementId> = self.world.state().ids().copied().collect();
        let k = rng.gen_range(1..=ids.len().min(4));
        ids.choose_multiple(rng, k).copied().collect()
    }
}

/// Drops members strictly below another member.
pub fn antichain(state: &EdpState, set: &BTreeSet<ElementId>) -> BTreeSet<ElementId> {
    set.iter()
        .filter(|a| !set.iter().any(|b| a != &b && state.is_below(a, b)))
        .copied()
        .collect()
}

/// `n` random extensions, each over an antichain of 1 to 3 earlier elements.
pub fn random_history(seed: u64, n: usize) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = Replica::new(universe()).unwrap();
    let mut ops = Vec::with_capacity(n);
    for i in 0..n {
        let ids: Vec<ElementId> = world.state().ids().copied().collect();
        let k = rng.gen_range(1..=ids.len().min(3));
        let picked: BTreeSet<ElementId> = ids.choose_multiple(&mut rng, k).copied().collect();
        let mlb = antichain(world.state(), &picked);
        let op = Operation::new(format!("e{i}/{}", rng.gen::<u16>()), mlb);
        assert_eq!(world.effect(op.clone()).len(), 1);
        ops.push(op);
    }
    History { ops, world }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
