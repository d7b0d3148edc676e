use std::fmt;

use serde::{Deserialize, Serialize};

/// Nonnegative extended real: a finite value or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ext {
    Finite(f64),
    Infinite,
}

impl Ext {
    pub fn is_infinite(self) -> bool {
        matches!(self, Ext::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ext::Finite(x) => Some(x),
            Ext::Infinite => None,
        }
    }

    /// Unwraps the finite value; panics on `+inf`.
    #[track_caller]
    pub fn unwrap(self) -> f64 {
        self.finite().expect("value is infinite")
    }

    /// `f64` view, mapping `+inf` to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Finite(x) => write!(f, "{x}"),
            Ext::Infinite => write!(f, "inf"),
        }
    }
}
