//! Newline-delimited JSON messages exchanged with an external worker.
//!
//! The optimizer writes [`Request`]s to the worker's stdin and reads
//! [`Response`]s from its stdout, one JSON object per line.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::space::SpaceDoc;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Hello {
        protocol_version: u32,
        space: SpaceDoc,
    },
    Eval {
        id: u64,
        config: Map<String, Json>,
        budget: u64,
        seed: u64,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Response {
    Result { id: u64, loss: f64 },
    Error { id: u64, message: String },
}

impl Response {
    pub fn id(&self) -> u64 {
        match self {
            Response::Result { id, .. } | Response::Error { id, .. } => *id,
        }
    }
}

pub fn parse_request(line: &str) -> serde_json::Result<Request> {
    serde_json::from_str(line.trim_end())
}

pub fn parse_response(line: &str) -> serde_json::Result<Response> {
    serde_json::from_str(line.trim_end())
}

/// Best-effort request id of a line that failed to parse as a response.
pub fn salvage_id(line: &str) -> Option<u64> {
    serde_json::from_str::<Json>(line).ok()?.get("id")?.as_u64()
}

pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages always serialize");
    s.push('\n');
    s
}
