use serde::{Deserialize, Serialize};

use super::NavConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Explore,
    Align,
    Verify,
    Done,
}

/// Maps the matching score onto the exploration stage.
pub fn stage_of(score: f64, cfg: &NavConfig, verified: bool) -> Stage {
    if score < cfg.sigma1 {
        Stage::Explore
    } else if score < cfg.sigma2 {
        Stage::Align
    } else if verified {
        Stage::Done
    } else {
        Stage::Verify
    }
}
