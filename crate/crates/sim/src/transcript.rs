//! JSON-lines event log of a run.

use std::io::{self, Write};

use edp::ElementId;
use serde::Serialize;

use crate::scenario::Behavior;
use crate::verdict::SecVerdict;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Record {
    Start {
        scenario: String,
        seed: u64,
        replicas: usize,
        byzantine: Vec<usize>,
    },
    Generate {
        t: u64,
        replica: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        id: ElementId,
        bytes: usize,
        mlb: usize,
    },
    Refused {
        t: u64,
        replica: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        reason: String,
    },
    Apply {
        t: u64,
        replica: usize,
        id: ElementId,
    },
    Attack {
        t: u64,
        node: usize,
        behaviors: Vec<Behavior>,
        messages: usize,
    },
    Tick {
        t: u64,
        sent: usize,
        dropped: usize,
        delivered: usize,
        malformed: usize,
    },
    Quiescent {
        t: u64,
    },
    Verdict(SecVerdict),
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[Record]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
