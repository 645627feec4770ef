use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;

use super::Envelope;
use crate::gf2hash::BitString;
use crate::keystore::NodeId;

/// 64-bit FNV-1a digest of a frame, hex encoded. Diagnostic only.
pub fn frame_digest(frame: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(frame);
    format!("{:016x}", h.finish())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TranscriptRecord {
    pub round: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub channel: String,
    pub digest: String,
    pub action: String,
}

/// Ordered log of every delivery and decision in a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn push(&mut self, env: &Envelope, action: &str) {
        self.records.push(TranscriptRecord {
            round: env.round,
            from: env.from,
            to: env.to,
            channel: env.kind.to_string(),
            digest: frame_digest(&env.frame),
            action: action.to_string(),
        });
    }

    pub fn push_decision(&mut self, round: usize, node: NodeId, value: &BitString) {
        self.records.push(TranscriptRecord {
            round,
            from: node,
            to: node,
            channel: "local".into(),
            digest: frame_digest(value.as_bytes()),
            action: "decide".into(),
        });
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
