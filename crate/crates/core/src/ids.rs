//! Identifier newtypes shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// A robot arm identifier, e.g. `"r1"`.
    RobotId
);
string_id!(
    /// A brick instance identifier, e.g. `"b4"`.
    BrickId
);
string_id!(
    /// An execution run identifier.
    RunId
);

/// Milliseconds since the start of a run. All engine time is integer
/// milliseconds so that traces compare exactly.
pub type TimeMs = u64;

/// A duration in integer milliseconds.
pub type DurationMs = u64;

/// Convert seconds (as found in config files) to engine milliseconds.
pub fn secs_to_ms(s: f64) -> DurationMs {
    (s * 1000.0).round() as DurationMs
}

/// Convert engine milliseconds back to seconds for display.
pub fn ms_to_secs(ms: DurationMs) -> f64 {
    ms as f64 / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_order_lexicographically() {
        assert!(RobotId::from("r1") < RobotId::from("r2"));
        assert!(BrickId::from("b10") < BrickId::from("b2")); // lexicographic, by design
    }

    #[test]
    fn secs_round_trip() {
        assert_eq!(secs_to_ms(3.0), 3000);
        assert_eq!(secs_to_ms(0.05), 50);
        assert_eq!(ms_to_secs(1500), 1.5);
    }
}
