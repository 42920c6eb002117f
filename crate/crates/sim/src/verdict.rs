//! Strong eventual consistency checks over the correct replicas.

use std::collections::{BTreeMap, BTreeSet};

use edp::broadcast::OpReplica;
use edp::ElementId;
use serde::Serialize;

use crate::node::Node;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub property: &'static str,
    pub left: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecVerdict {
    pub self_update: bool,
    pub eventual_update: bool,
    pub strong_convergence: bool,
    pub evidence: Vec<Evidence>,
}

impl SecVerdict {
    pub fn all(&self) -> bool {
        self.self_update && self.eventual_update && self.strong_convergence
    }
}

/// Every correct replica holds every element applied anywhere.
pub fn check_eventual_update(nodes: &BTreeMap<usize, Node>) -> Option<Evidence> {
    let union: BTreeSet<ElementId> = nodes.values().flat_map(|n| n.state().ids().copied()).collect();
    for (i, n) in nodes {
        if let Some(missing) = union.iter().find(|id| !n.state().contains(id)) {
            return Some(Evidence {
                property: "eventual_update",
                left: *i,
                right: None,
                element: Some(*missing),
                detail: "element applied elsewhere is missing".into(),
            });
        }
    }
    None
}

/// Pairwise equality of posets, maps and access-controlled views.
///
/// Equal element sets with equal parent sets give equal posets, since the
/// relation is the reflexive-transitive closure of the parent links.
pub fn check_strong_convergence(nodes: &BTreeMap<usize, Node>) -> Option<Evidence> {
    let mut iter = nodes.iter();
    let (&first, a) = iter.next()?;
    let map_a = a.map();
    let view_a = a.access_view();
    for (&i, b) in iter {
        let ev = |element, detail: &str| Evidence {
            property: "strong_convergence",
            left: first,
            right: Some(i),
            element,
            detail: detail.to_owned(),
        };
        let (sa, sb) = (a.state(), b.state());
        if let Some(d) = sa.ids().find(|id| !sb.contains(id)).or_else(|| sb.ids().find(|id| !sa.contains(id))) {
            return Some(ev(Some(*d), "element sets differ"));
        }
        if let Some(d) = sa.ids().find(|id| sa.mlb_of(id) != sb.mlb_of(id)) {
            return Some(ev(Some(*d), "parents differ"));
        }
        if b.map() != map_a {
            return Some(ev(None, "map views differ"));
        }
        if b.access_view() != view_a {
            let lin = |v: &Option<edp::acedpm::AcView>| v.as_ref().map(|v| v.applied.clone()).unwrap_or_default();
            let (la, lb) = (lin(&view_a), lin(&b.access_view()));
            let d = la.iter().zip(&lb).find(|(x, y)| x != y).map(|(x, _)| *x);
            return Some(ev(d, "access-controlled views differ"));
        }
    }
    None
}
