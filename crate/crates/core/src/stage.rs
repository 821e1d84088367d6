//! Stage identifiers used to tag token usage and annotation provenance.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StageId(pub String);

impl StageId {
    pub fn new(s: impl Into<String>) -> Self {
        StageId(s.into())
    }

    /// Cascade stage at threshold `tau`, e.g. `tau=0.9`.
    pub fn threshold(tau: f64) -> Self {
        StageId(format!("tau={tau}"))
    }

    /// Residual annotation attempt at threshold `tau`.
    pub fn residual(tau: f64) -> Self {
        StageId(format!("residual@{tau}"))
    }

    pub fn baseline(variant: &str) -> Self {
        StageId(format!("baseline:{variant}"))
    }

    pub fn judge() -> Self {
        StageId("judge".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
