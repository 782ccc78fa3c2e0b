use std::time::Duration;

use super::{QueryKind, Reasoner, ReasonerError, ReasonerQuery, ReasonerReply};

pub const WIRE_TIMEOUT: Duration = Duration::from_secs(2);

/// HTTP client for an external reasoner service.
///
/// `POST {base}/rank_frontiers` and `POST {base}/estimate_improvement` with
/// the JSON-encoded query; the service answers `{"scores": [...]}`.
pub struct WireReasoner {
    base_url: String,
    agent: ureq::Agent,
}

impl WireReasoner {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, WIRE_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post(&self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        query.validate()?;
        let endpoint = match query.kind {
            QueryKind::RankFrontiers => "rank_frontiers",
            QueryKind::EstimateImprovement => "estimate_improvement",
        };
        let url = format!("{}/{}", self.base_url, endpoint);
        let response = self
            .agent
            .post(&url)
            .send_json(query)
            .map_err(|e| ReasonerError::Unavailable(e.to_string()))?;
        if response.status() != 200 {
            return Err(ReasonerError::Unavailable(format!(
                "{url}: status {}",
                response.status()
            )));
        }
        let reply: ReasonerReply = response
            .into_json()
            .map_err(|e| ReasonerError::Unavailable(format!("{url}: malformed reply: {e}")))?;
        reply.check_against(query)?;
        Ok(reply)
    }
}

impl Reasoner for WireReasoner {
    fn rank_frontiers(&mut self, query: &ReasonerQuery) -> Result<ReasonerReply, ReasonerError> {
        self.post(query)
    }

    fn estimate_improvement(
        &mut self,
        query: &ReasonerQuery,
    ) -> Result<ReasonerReply, ReasonerError> {
        self.post(query)
    }
}
