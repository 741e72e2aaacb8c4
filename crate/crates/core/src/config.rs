//! Oracle intervention configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("history pruning (H) requires state tracking (S)")]
    HistoryRequiresState,
    #[error("unknown oracle flag '{0}' (expected S, P, H or none)")]
    UnknownFlag(String),
}

/// Which oracle interventions are active for an episode.
///
/// Serialized as its label (`none`, `P`, `S`, `S+P`, `S+H`, `S+P+H`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct OracleConfig {
    plan: bool,
    state: bool,
    history: bool,
}

impl OracleConfig {
    pub const NONE: OracleConfig = OracleConfig {
        plan: false,
        state: false,
        history: false,
    };

    pub fn validate(plan: bool, state: bool, history: bool) -> Result<Self, ConfigError> {
        if history && !state {
            return Err(ConfigError::HistoryRequiresState);
        }
        Ok(Self {
            plan,
            state,
            history,
        })
    }

    /// The six valid configurations, in report order.
    pub fn all() -> [OracleConfig; 6] {
        let c = |plan, state, history| OracleConfig {
            plan,
            state,
            history,
        };
        [
            c(false, false, false),
            c(true, false, false),
            c(false, true, false),
            c(true, true, false),
            c(false, true, true),
            c(true, true, true),
        ]
    }

    pub fn plan(&self) -> bool {
        self.plan
    }

    pub fn state(&self) -> bool {
        self.state
    }

    pub fn history(&self) -> bool {
        self.history
    }

    pub fn is_baseline(&self) -> bool {
        *self == Self::NONE
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.state {
            parts.push("S");
        }
        if self.plan {
            parts.push("P");
        }
        if self.history {
            parts.push("H");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Label safe for file names, e.g. `S_P_H`.
    pub fn slug(&self) -> String {
        self.label().replace('+', "_")
    }
}

impl fmt::Display for OracleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for OracleConfig {
    type Err = ConfigError;

    /// Accepts `none` or any combination of `S`, `P`, `H` separated by `,` or `+`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Self::NONE);
        }
        let (mut plan, mut state, mut history) = (false, false, false);
        for flag in s.split([',', '+', '_']).map(str::trim) {
            match flag.to_ascii_uppercase().as_str() {
                "P" => plan = true,
                "S" => state = true,
                "H" => history = true,
                _ => return Err(ConfigError::UnknownFlag(flag.to_string())),
            }
        }
        Self::validate(plan, state, history)
    }
}

impl Serialize for OracleConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for OracleConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_six_of_eight_combinations_validate() {
        let mut valid = Vec::new();
        for bits in 0..8u8 {
            let (p, s, h) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
            if let Ok(c) = OracleConfig::validate(p, s, h) {
                valid.push(c);
            } else {
                assert!(h && !s);
            }
        }
        assert_eq!(valid.len(), 6);
        let mut all = OracleConfig::all().to_vec();
        all.sort();
        valid.sort();
        assert_eq!(all, valid);
    }

    #[test]
    fn baseline_full_and_rejected() {
        assert!(OracleConfig::validate(false, false, false)
            .unwrap()
            .is_baseline());
        let full = OracleConfig::validate(true, true, true).unwrap();
        assert_eq!(full.label(), "S+P+H");
        assert_eq!(
            OracleConfig::validate(false, false, true),
            Err(ConfigError::HistoryRequiresState)
        );
    }

    #[test]
    fn labels_parse_back() {
        for c in OracleConfig::all() {
            assert_eq!(c.label().parse::<OracleConfig>().unwrap(), c);
            assert_eq!(c.slug().parse::<OracleConfig>().unwrap(), c);
        }
        assert_eq!("S,P,H".parse::<OracleConfig>().unwrap().label(), "S+P+H");
        assert_eq!(
            "h".parse::<OracleConfig>(),
            Err(ConfigError::HistoryRequiresState)
        );
        assert!(matches!(
            "X".parse::<OracleConfig>(),
            Err(ConfigError::UnknownFlag(_))
        ));
    }
}
