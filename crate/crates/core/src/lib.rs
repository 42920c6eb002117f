//! Extend-only directed posets (EDP) as Byzantine-tolerant CRDTs.
//!
//! - [`poset`]: finite relational structures and poset operations.
//! - [`state`]: the state-based EDP, with join as set union.
//! - [`op`]: hash-compressed operations and the op-based replica.
//! - [`broadcast`]: frontier gossip and iterative ancestor fetch.
//! - [`epm`]: the derived largest-element-wins map.
//! - [`acedpm`]: signed events with membership and level based access control.
//! - [`vectors`]: pinned hash and signature test vectors.

pub mod acedpm;
pub mod broadcast;
pub mod epm;
pub mod id;
pub mod op;
pub mod poset;
pub mod state;
pub mod vectors;
pub mod wire;

pub use id::{ElementId, Payload, Universe};
pub use op::{hash_element, Operation, Replica};
pub use state::{initial_state, EdpState, UpwardExtension};
