//! Per-tick measurements of a run.

use std::io;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TickRow {
    pub tick: u64,
    pub replica: usize,
    pub frontier: usize,
    pub pending: usize,
    pub elements: usize,
    pub bytes_sent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpdateRow {
    pub tick: u64,
    pub replica: usize,
    pub bytes: usize,
    pub mlb: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub ticks: Vec<TickRow>,
    pub updates: Vec<UpdateRow>,
    /// First tick from which all correct replicas stayed identical.
    pub convergence_tick: Option<u64>,
    /// First tick of the quiescent window.
    pub quiescent_from: u64,
    pub end_tick: u64,
    pub max_pending: usize,
}

impl Metrics {
    pub fn quiescent_rows(&self) -> impl Iterator<Item = &TickRow> {
        self.ticks.iter().filter(move |r| r.tick >= self.quiescent_from)
    }

    pub fn max_quiescent_frontier(&self) -> usize {
        self.quiescent_rows().map(|r| r.frontier).max().unwrap_or(0)
    }

    pub fn max_update_bytes(&self) -> usize {
        self.updates.iter().map(|u| u.bytes).max().unwrap_or(0)
    }

    /// Per-tick rows as CSV.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.ticks {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Generated updates as CSV.
    pub fn write_updates_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.updates {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
