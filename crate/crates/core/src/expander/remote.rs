//! Fill-mask over HTTP.
//!
//! `POST {"text": "... [MASK] ...", "top_n": 5}` →
//! `{"predictions": [{"token": "mac", "score": 0.91}, ...]}`

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Fill, MaskFillProvider, MaskedQuery, Prediction, ProviderError};
use crate::remote::JsonClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskRequest {
    pub text: String,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResponse {
    pub predictions: Vec<WirePrediction>,
}

#[derive(Debug)]
pub struct RemoteMaskFill {
    client: JsonClient,
}

impl RemoteMaskFill {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        RemoteMaskFill {
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

/// Brings a wire response into the provider contract: confidences clamped
/// into `[0, 1]` (with a warning), non-finite scores dropped, sorted
/// descending, truncated to `top_n`.
pub(crate) fn conform(resp: FillMaskResponse, top_n: usize) -> Fill {
    let mut warnings = Vec::new();
    let mut predictions: Vec<Prediction> = resp
        .predictions
        .into_iter()
        .filter_map(|p| {
            if !p.score.is_finite() {
                warnings.push(format!("dropped prediction {:?} with non-finite score", p.token));
                return None;
            }
            let confidence = p.score.clamp(0.0, 1.0);
            if confidence != p.score {
                warnings.push(format!(
                    "clamped confidence of {:?} from {} to {confidence}",
                    p.token, p.score
                ));
            }
            Some(Prediction { token: p.token, confidence })
        })
        .collect();
    predictions.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    predictions.truncate(top_n);
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Fill { predictions, warnings }
}

impl MaskFillProvider for RemoteMaskFill {
    fn fill(&self, query: &MaskedQuery, top_n: usize) -> Result<Fill, ProviderError> {
        let req = FillMaskRequest {
            text: query.text.clone(),
            top_n,
        };
        let resp: FillMaskResponse = self.client.post(&req).map_err(ProviderError::Unavailable)?;
        Ok(conform(resp, top_n))
    }
}
