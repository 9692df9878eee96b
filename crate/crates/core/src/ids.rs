//! Opaque identifiers.
//!
//! Every id is a counter wrapped in a newtype and rendered with a one-letter
//! prefix (`e12`, `t3`, ...). Ordering is numeric, so "ties broken by id"
//! means ties broken by creation order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed id `{0}`")]
pub struct IdParseError(pub String);

macro_rules! define_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = IdParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|digits| digits.parse().ok())
                    .map($name)
                    .ok_or_else(|| IdParseError(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

define_id!(
    /// Graph node.
    EntityId, "e"
);
define_id!(
    /// Graph edge.
    TripleId, "t"
);
define_id!(UserId, "u");
define_id!(GroupId, "g");
define_id!(TaskId, "k");
define_id!(ChallengeId, "c");
define_id!(LedgerId, "l");
define_id!(SessionId, "s");

/// Monotonic id allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter(u64);

impl Default for Counter {
    fn default() -> Self {
        Counter(1)
    }
}

impl Counter {
    pub fn starting_at(next: u64) -> Self {
        Counter(next)
    }

    pub fn peek(&self) -> u64 {
        self.0
    }

    pub fn take(&mut self) -> u64 {
        let n = self.0;
        self.0 += 1;
        n
    }
}
