//! Finite relational structures and the poset operations the rest of the
//! crate is defined in terms of.
//!
//! Relations are explicit pair sets. A pair `(a, b)` reads "a ≥ b", i.e. `a`
//! happened after or equals `b`. Every dual (minimal elements, upward
//! closure) is obtained by swapping pair components via
//! [`RelationalStructure::converse`], never by a separate implementation.
//!
//! Quantifiers are evaluated directly over the finite sets, so transitivity
//! checking is cubic. This layer is the semantic reference for the
//! compressed representations in [`crate::state`]; it is not meant for large
//! structures.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::id::ElementId;

/// A finite binary relation; `(a, b)` reads "a ≥ b".
pub type Relation<T = ElementId> = BTreeSet<(T, T)>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PosetError {
    #[error("structure is not a bounded-below poset")]
    NotAPoset,
    #[error("element is not part of the structure")]
    UnknownElement,
    #[error("relation contains a pair outside the element set")]
    RelationOutsideElements,
}

/// `S = (X, R)` with `R ⊆ X × X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalStructure<T: Ord + Clone = ElementId> {
    elements: BTreeSet<T>,
    relation: Relation<T>,
}

impl<T: Ord + Clone> RelationalStructure<T> {
    pub fn new(elements: BTreeSet<T>, relation: Relation<T>) -> Result<Self, PosetError> {
        if relation
            .iter()
            .any(|(a, b)| !elements.contains(a) || !elements.contains(b))
        {
            return Err(PosetError::RelationOutsideElements);
        }
        Ok(Self { elements, relation })
    }

    /// Structure whose element set is the set of reflexive pairs of `relation`.
    pub fn from_reflexive(relation: Relation<T>) -> Result<Self, PosetError> {
        let elements = relation
            .iter()
            .filter(|(a, b)| a == b)
            .map(|(a, _)| a.clone())
            .collect();
        Self::new(elements, relation)
    }

    pub fn elements(&self) -> &BTreeSet<T> {
        &self.elements
    }

    pub fn relation(&self) -> &Relation<T> {
        &self.relation
    }

    pub fn into_parts(self) -> (BTreeSet<T>, Relation<T>) {
        (self.elements, self.relation)
    }

    pub fn relates(&self, a: &T, b: &T) -> bool {
        self.relation.contains(&(a.clone(), b.clone()))
    }

    /// The same structure with every pair reversed.
    pub fn converse(&self) -> Self {
        Self {
            elements: self.elements.clone(),
            relation: self
                .relation
                .iter()
                .map(|(a, b)| (b.clone(), a.clone()))
                .collect(),
        }
    }

    /// The sub-structure on `subset`, with the relation restricted to it.
    pub fn restricted_to(&self, subset: &BTreeSet<T>) -> Self {
        Self {
            elements: self.elements.intersection(subset).cloned().collect(),
            relation: restrict(&self.relation, subset),
        }
    }
}

/// `R|_A = R ∩ (A × A)`.
pub fn restrict<T: Ord + Clone>(relation: &Relation<T>, subset: &BTreeSet<T>) -> Relation<T> {
    relation
        .iter()
        .filter(|(a, b)| subset.contains(a) && subset.contains(b))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosetCheckReport<T = ElementId> {
    pub reflexive: bool,
    pub transitive: bool,
    pub antisymmetric: bool,
    pub downward_directed: bool,
    /// The unique least element, present iff the structure is a
    /// downward-directed poset.
    pub bottom: Option<T>,
}

impl<T> PosetCheckReport<T> {
    pub fn is_poset(&self) -> bool {
        self.reflexive && self.transitive && self.antisymmetric
    }

    pub fn is_bounded_below(&self) -> bool {
        self.bottom.is_some()
    }
}

/// Evaluates the poset axioms by direct quantification.
///
/// Downward directedness is only reported for nonempty reflexive, transitive
/// structures, matching the definition of a directed set.
pub fn check_poset<T: Ord + Clone>(s: &RelationalStructure<T>) -> PosetCheckReport<T> {
    let xs = &s.elements;
    let reflexive = xs.iter().all(|a| s.relates(a, a));

    let mut transitive = true;
    'outer: for (c, b) in &s.relation {
        for a in xs {
            if s.relates(b, a) && !s.relates(c, a) {
                transitive = false;
                break 'outer;
            }
        }
    }

    let antisymmetric = s
        .relation
        .iter()
        .all(|(a, b)| a == b || !s.relates(b, a));

    let downward_directed = !xs.is_empty()
        && reflexive
        && transitive
        && xs.iter().all(|a| {
            xs.iter()
                .all(|b| xs.iter().any(|lb| s.relates(a, lb) && s.relates(b, lb)))
        });

    let bottom = if downward_directed && antisymmetric {
        xs.iter().find(|lb| xs.iter().all(|x| s.relates(x, lb))).cloned()
    } else {
        None
    };

    PosetCheckReport {
        reflexive,
        transitive,
        antisymmetric,
        downward_directed,
        bottom,
    }
}

fn max_by_definition<T: Ord + Clone>(s: &RelationalStructure<T>) -> BTreeSet<T> {
    s.elements
        .iter()
        .filter(|m| {
            s.elements
                .iter()
                .all(|x| !s.relates(x, m) || s.relates(m, x))
        })
        .cloned()
        .collect()
}

/// `max(S) = { m ∈ X | ∀x ∈ X: (x, m) ∈ R ⇒ (m, x) ∈ R }`.
pub fn max_elements<T: Ord + Clone>(s: &RelationalStructure<T>) -> Result<BTreeSet<T>, PosetError> {
    if !check_poset(s).is_poset() {
        return Err(PosetError::NotAPoset);
    }
    Ok(max_by_definition(s))
}

pub fn min_elements<T: Ord + Clone>(s: &RelationalStructure<T>) -> Result<BTreeSet<T>, PosetError> {
    max_elements(&s.converse())
}

/// `y↓ = { c ∈ X | (y, c) ∈ R }`.
pub fn downward_closure<T: Ord + Clone>(
    y: &T,
    s: &RelationalStructure<T>,
) -> Result<BTreeSet<T>, PosetError> {
    if !s.elements.contains(y) {
        return Err(PosetError::UnknownElement);
    }
    Ok(s
        .relation
        .iter()
        .filter(|(a, _)| a == y)
        .map(|(_, c)| c.clone())
        .collect())
}

/// `Y↓ = ⋃_{y ∈ Y} y↓`.
pub fn downward_closure_of_set<T: Ord + Clone>(
    ys: &BTreeSet<T>,
    s: &RelationalStructure<T>,
) -> Result<BTreeSet<T>, PosetError> {
    let mut out = BTreeSet::new();
    for y in ys {
        out.extend(downward_closure(y, s)?);
    }
    Ok(out)
}

pub fn upward_closure<T: Ord + Clone>(
    y: &T,
    s: &RelationalStructure<T>,
) -> Result<BTreeSet<T>, PosetError> {
    downward_closure(y, &s.converse())
}

/// Maximal lower bounds: `max(y↓ \ {y})`.
pub fn mlb<T: Ord + Clone>(y: &T, s: &RelationalStructure<T>) -> Result<BTreeSet<T>, PosetError> {
    let mut strict = downward_closure(y, s)?;
    strict.remove(y);
    Ok(max_by_definition(&s.restricted_to(&strict)))
}

/// Whether `new` is an extension of `old` (`X ⊆ X'`, `R = R'|_X`) sharing the
/// same bottom element.
pub fn is_upward_extension<T: Ord + Clone>(
    new: &RelationalStructure<T>,
    old: &RelationalStructure<T>,
) -> Result<bool, PosetError> {
    let new_report = check_poset(new);
    let old_report = check_poset(old);
    let (Some(new_bottom), Some(old_bottom)) = (
        new_report.bottom.as_ref().filter(|_| new_report.is_poset()),
        old_report.bottom.as_ref().filter(|_| old_report.is_poset()),
    ) else {
        return Err(PosetError::NotAPoset);
    };
    Ok(old.elements.is_subset(&new.elements)
        && restrict(&new.relation, &old.elements) == old.relation
        && new_bottom == old_bottom)
}
