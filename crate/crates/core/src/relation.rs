use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// How a subset sum is compared against the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// sum = target
    Eq,
    /// sum >= target
    Ge,
    /// sum <= target
    Le,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Eq => "eq",
            Relation::Ge => "ge",
            Relation::Le => "le",
        }
    }

    /// Tests a real sum; `tolerance` only widens `Eq`.
    #[inline]
    pub fn holds(self, sum: f64, target: f64, tolerance: f64) -> bool {
        match self {
            Relation::Eq => (sum - target).abs() <= tolerance,
            Relation::Ge => sum >= target,
            Relation::Le => sum <= target,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "eq" | "=" | "==" => Ok(Relation::Eq),
            "ge" | ">=" => Ok(Relation::Ge),
            "le" | "<=" => Ok(Relation::Le),
            other => Err(Error::Config(format!("unknown relation '{other}' (expected eq, ge or le)"))),
        }
    }
}
