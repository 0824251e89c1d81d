use std::time::Duration;

use super::{EmbedError, EmbeddingProvider, Vector};

/// Largest number of texts sent in one request.
pub const MAX_BATCH: usize = 64;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first failed attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Client for an HTTP embedding service.
///
/// Wire contract: `POST <url>` with a JSON array of strings; the response
/// is a JSON array holding one float array per input, in order.
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    id: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        let url = url.into();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemoteEmbedder {
            id: format!("remote:{url}"),
            url,
            dim,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post_once(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ureq::Error> {
        let mut resp = self.agent.post(&self.url).send_json(texts)?;
        resp.body_mut().read_json::<Vec<Vec<f32>>>()
    }

    fn post_with_retry(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut attempt = 0u32;
        loop {
            match self.post_once(texts) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    if attempt >= self.retry.max_retries {
                        return Err(EmbedError::ProviderUnavailable {
                            attempts: attempt + 1,
                            message: e.to_string(),
                        });
                    }
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            let raw = self.post_with_retry(chunk)?;
            if raw.len() != chunk.len() {
                return Err(EmbedError::BadResponse(format!(
                    "expected {} vectors, got {}",
                    chunk.len(),
                    raw.len()
                )));
            }
            for components in raw {
                if components.len() != self.dim {
                    return Err(EmbedError::DimMismatch {
                        expected: self.dim,
                        actual: components.len(),
                    });
                }
                out.push(Vector::normalized(&components)?);
            }
        }
        Ok(out)
    }
}
