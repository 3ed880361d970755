//! Reader backend over HTTP.
//!
//! `POST {"question", "context", "top_k"}` →
//! `{"answers": [{"text", "start", "end", "score", "attributions"?: [{"token", "weight"}]}]}`
//!
//! `start`/`end` on the wire count Unicode scalar values (what a Python
//! server reports for `str` indices); they are converted to byte offsets
//! here.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ReaderBackend, ReaderError, SpanPrediction, TokenAttribution};
use crate::remote::JsonClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireReadRequest {
    pub question: String,
    pub context: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAttribution {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAnswer {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributions: Option<Vec<WireAttribution>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireReadResponse {
    pub answers: Vec<WireAnswer>,
}

#[derive(Debug)]
pub struct RemoteReader {
    client: JsonClient,
}

impl RemoteReader {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        RemoteReader {
            client: JsonClient::new(endpoint, timeout, max_in_flight),
        }
    }

    pub fn endpoint(&self) -> &str {
        self.client.endpoint()
    }

    pub fn probe(&self) -> bool {
        self.client.probe()
    }
}

fn char_to_byte(context: &str, char_offset: usize) -> Option<usize> {
    if char_offset == context.chars().count() {
        return Some(context.len());
    }
    context.char_indices().nth(char_offset).map(|(b, _)| b)
}

pub(crate) fn conform(context: &str, resp: WireReadResponse) -> Result<Vec<SpanPrediction>, ReaderError> {
    resp.answers
        .into_iter()
        .map(|a| {
            let (Some(start), Some(end)) = (char_to_byte(context, a.start), char_to_byte(context, a.end)) else {
                return Err(ReaderError::BackendUnavailable(format!(
                    "answer offsets {}..{} outside context",
                    a.start, a.end
                )));
            };
            if start > end || !a.score.is_finite() {
                return Err(ReaderError::BackendUnavailable(format!(
                    "malformed answer {:?} ({}..{}, score {})",
                    a.text, a.start, a.end, a.score
                )));
            }
            Ok(SpanPrediction {
                text: context[start..end].to_string(),
                start,
                end,
                score: a.score,
                attributions: a
                    .attributions
                    .unwrap_or_default()
                    .into_iter()
                    .map(|w| TokenAttribution {
                        token: w.token,
                        weight: w.weight,
                    })
                    .collect(),
            })
        })
        .collect()
}

impl ReaderBackend for RemoteReader {
    fn name(&self) -> &str {
        "remote"
    }

    fn read(&self, question: &str, context: &str, top_k: usize) -> Result<Vec<SpanPrediction>, ReaderError> {
        let req = WireReadRequest {
            question: question.to_string(),
            context: context.to_string(),
            top_k: top_k.min(u32::MAX as usize),
        };
        let resp: WireReadResponse = self.client.post(&req).map_err(ReaderError::BackendUnavailable)?;
        conform(context, resp)
    }
}
