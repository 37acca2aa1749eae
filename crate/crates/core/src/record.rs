//! Line-oriented trajectory records.
//!
//! Every file starts with a header carrying the schema version; the rest are
//! JSON objects discriminated by `kind`: `event`, `snapshot`, `state` and
//! `coalescent-event`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::Event;
use crate::error::{GraphemeError, Result};
use crate::graphon::empirical_graphon;
use crate::state::{EdgeKey, FounderRecord, GraphemeState, SamplingWeights, VertexId, VertexRecord};

pub const SCHEMA_VERSION: &str = "grapheme-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub seed: u64,
    #[serde(default)]
    pub replica: u64,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(seed: u64, replica: u64, config: serde_json::Value) -> Self {
        Header { schema: SCHEMA_VERSION.to_string(), seed, replica, config }
    }
}

/// Summary statistics of a state at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub time: f64,
    pub n: usize,
    pub components: usize,
    /// Size-ordered component masses.
    pub block_weights: Vec<f64>,
    /// Present-edge fraction among within-component pairs.
    pub intra_block_intensity: f64,
    /// Connected fraction among all distinct vertex pairs.
    pub pair_connection: f64,
    /// Σ wᵢ² and Σ wᵢ³ over component masses.
    pub sum_w2: f64,
    pub sum_w3: f64,
    /// Probability that 2 (resp. 3) distinct uniformly drawn vertices share
    /// a component.
    pub same_component_2: f64,
    pub same_component_3: f64,
}

impl SnapshotStats {
    pub fn of(state: &GraphemeState) -> Self {
        let g = empirical_graphon(state);
        let n = state.num_vertices();
        let nf = n as f64;
        let pairs = nf * (nf - 1.0) / 2.0;
        let triples = nf * (nf - 1.0) * (nf - 2.0);
        let (mut s2, mut s3) = (0.0, 0.0);
        for (_, c) in state.components() {
            let k = c.size() as f64;
            s2 += k * (k - 1.0);
            s3 += k * (k - 1.0) * (k - 2.0);
        }
        SnapshotStats {
            time: state.time(),
            n,
            components: state.num_components(),
            sum_w2: g.block_weights.iter().map(|w| w * w).sum(),
            sum_w3: g.block_weights.iter().map(|w| w * w * w).sum(),
            block_weights: g.block_weights,
            intra_block_intensity: g.intra_block_intensity,
            pair_connection: if pairs > 0.0 { state.edge_count() as f64 / pairs } else { 1.0 },
            same_component_2: if n >= 2 { s2 / (nf * (nf - 1.0)) } else { 1.0 },
            same_component_3: if n >= 3 { s3 / triples } else { 1.0 },
        }
    }
}

/// Full state dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub time: f64,
    pub vertices: Vec<VertexRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[u64; 2]>>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub founders: Vec<FounderRecord>,
}

impl StateSnapshot {
    pub fn of(state: &GraphemeState) -> Self {
        StateSnapshot {
            time: state.time(),
            vertices: state.vertex_records(),
            edges: state
                .is_flip_regime()
                .then(|| state.edges_present().into_iter().map(|(a, b)| [a.0, b.0]).collect()),
            weights: state.weight_vector(),
            founders: state.founder_records(),
        }
    }

    /// Rebuilds the state; uniform weights are recognised and stored as such.
    /// The result is not validated.
    pub fn to_state(&self) -> GraphemeState {
        let n = self.vertices.len();
        let uniform = n > 0 && self.weights.len() == n && self.weights.iter().all(|w| (w - 1.0 / n as f64).abs() < 1e-15);
        let weights = if uniform || (n == 0 && self.weights.is_empty()) {
            SamplingWeights::Uniform
        } else {
            SamplingWeights::Explicit(self.weights.clone())
        };
        let edges: Option<Vec<EdgeKey>> =
            self.edges.as_ref().map(|e| e.iter().map(|[a, b]| (VertexId(*a), VertexId(*b))).collect());
        GraphemeState::from_parts(self.time, self.vertices.clone(), edges, weights, &self.founders)
    }
}

/// One step of a dual coalescent trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentEventRecord {
    pub time: f64,
    /// "merge" or "cemetery".
    pub action: String,
    pub blocks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<crate::state::TypeLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    Header(Header),
    Event(Event),
    Snapshot(SnapshotStats),
    State(StateSnapshot),
    CoalescentEvent(CoalescentEventRecord),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub events: Vec<Event>,
    pub snapshots: Vec<SnapshotStats>,
    pub final_state: Option<StateSnapshot>,
    /// True when the run stopped early in an absorbing state.
    pub terminal: bool,
}

impl TrajectoryRecord {
    /// Writes header, events, snapshots and the final state, one JSON object
    /// per line.
    pub fn write_jsonl<W: Write>(&self, header: &Header, mut out: W) -> std::io::Result<()> {
        let mut line = |r: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")
        };
        line(&Record::Header(header.clone()))?;
        for e in &self.events {
            line(&Record::Event(e.clone()))?;
        }
        for s in &self.snapshots {
            line(&Record::Snapshot(s.clone()))?;
        }
        if let Some(s) = &self.final_state {
            line(&Record::State(s.clone()))?;
        }
        Ok(())
    }

    /// Reads a file written by [`write_jsonl`], checking the schema version.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<(Header, TrajectoryRecord)> {
        let mut header = None;
        let mut rec = TrajectoryRecord::default();
        for (no, line) in input.lines().enumerate() {
            let line = line.map_err(|e| GraphemeError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: Record =
                serde_json::from_str(&line).map_err(|e| GraphemeError::Parse(format!("line {}: {e}", no + 1)))?;
            match r {
                Record::Header(h) => {
                    if h.schema != SCHEMA_VERSION {
                        return Err(GraphemeError::Parse(format!(
                            "schema {} does not match {SCHEMA_VERSION}",
                            h.schema
                        )));
                    }
                    header = Some(h);
                }
                Record::Event(e) => rec.events.push(e),
                Record::Snapshot(s) => rec.snapshots.push(s),
                Record::State(s) => rec.final_state = Some(s),
                Record::CoalescentEvent(_) => {}
            }
        }
        let header = header.ok_or_else(|| GraphemeError::Parse("missing header record".into()))?;
        Ok((header, rec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{EventKind, Event};
    use crate::state::validate;

    #[test]
    fn snapshot_round_trip() {
        let s = GraphemeState::from_partition_literal("{1,2,3},{4},{5}").unwrap();
        let snap = StateSnapshot::of(&s);
        let json = serde_json::to_string(&Record::State(snap.clone())).unwrap();
        assert!(json.contains("\"kind\":\"state\""));
        assert!(json.contains("\"type\":{\"fresh\":0}"));
        let back: Record = serde_json::from_str(&json).unwrap();
        let Record::State(b) = back else { panic!() };
        let s2 = b.to_state();
        assert!(validate(&s2).is_empty());
        assert_eq!(StateSnapshot::of(&s2), snap);
    }

    #[test]
    fn stats_on_known_state() {
        let s = GraphemeState::from_block_sizes(&[3, 1, 1]);
        let st = SnapshotStats::of(&s);
        assert!((st.sum_w2 - (0.36 + 0.04 + 0.04)).abs() < 1e-12);
        assert!((st.same_component_2 - 6.0 / 20.0).abs() < 1e-12);
        assert!((st.pair_connection - 3.0 / 10.0).abs() < 1e-12);
        assert!((st.same_component_3 - 6.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn jsonl_round_trip_and_schema_check() {
        let rec = TrajectoryRecord {
            events: vec![Event { kind: EventKind::Death, participants: vec![VertexId(3)], time: 0.5, label: None }],
            snapshots: vec![SnapshotStats::of(&GraphemeState::singletons(2))],
            final_state: None,
            terminal: false,
        };
        let mut buf = Vec::new();
        rec.write_jsonl(&Header::new(7, 0, serde_json::Value::Null), &mut buf).unwrap();
        let (h, back) = TrajectoryRecord::read_jsonl(&buf[..]).unwrap();
        assert_eq!(h.seed, 7);
        assert_eq!(back.events, rec.events);
        let bad = String::from_utf8(buf).unwrap().replace(SCHEMA_VERSION, "grapheme-v0");
        assert!(TrajectoryRecord::read_jsonl(bad.as_bytes()).is_err());
    }
}
