use serde::{Deserialize, Serialize};

use nov_core::fixed_point::QuantConfig;
use nov_core::protocol::RoundConfig;
use nov_core::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Protocol stage a dropout applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Registration,
    Distribution,
    Aggregation,
    Identification,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Registration,
        Stage::Distribution,
        Stage::Aggregation,
        Stage::Identification,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryBehavior {
    /// Submits the negation of its benign update.
    FlipSignUpdate,
    /// Submits its update rescaled to three times the norm bound.
    OversizedUpdate,
    /// Pushes its update against the reference model, then projects it back inside the
    /// public norm bound.
    ProjectedPoison,
    /// Corrupts one 16-bit chunk of the first parameter's share sent to `victim`.
    WrongShareToVictim { victim: u32, chunk: usize },
    /// Adds one to the first entry of its global share.
    WrongGlobalShare,
    /// Sends a wrong global share, then accuses `target`, whose share was honest.
    FalseAccusation { target: u32 },
    /// Sends nothing during `stage`.
    Dropout { stage: Stage },
}

impl AdversaryBehavior {
    pub fn alters_update(&self) -> bool {
        matches!(
            self,
            AdversaryBehavior::FlipSignUpdate
                | AdversaryBehavior::OversizedUpdate
                | AdversaryBehavior::ProjectedPoison
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adversary {
    /// Party id (1-based position in the update file).
    pub client: u32,
    pub behavior: AdversaryBehavior,
}

/// When a phase closes.
///
/// Delivery is synchronous, so every live client has answered by the time the deadline is
/// checked; the deadline only matters for clients that stay silent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeoutPolicy {
    pub phase_deadline_ms: u64,
}

impl Default for TimeoutPolicy {
    fn default() -> Self {
        Self {
            phase_deadline_ms: 30_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub n: usize,
    pub t: usize,
    pub t_m: f64,
    pub t_s: f64,
    #[serde(default)]
    pub quant: QuantConfig,
    pub shape: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub adversaries: Vec<Adversary>,
    #[serde(default)]
    pub timeout: TimeoutPolicy,
}

impl ScenarioConfig {
    pub fn new(n: usize, t: usize, shape: Vec<usize>, seed: u64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            n,
            t,
            t_m: 1.0,
            t_s: 1.0,
            quant: QuantConfig::default(),
            shape,
            seed,
            adversaries: Vec::new(),
            timeout: TimeoutPolicy::default(),
        }
    }

    pub fn with_adversary(mut self, client: u32, behavior: AdversaryBehavior) -> Self {
        self.adversaries.push(Adversary { client, behavior });
        self
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig {
            n: self.n,
            t: self.t,
            t_m: self.t_m,
            t_s: self.t_s,
            quant: self.quant,
            shape: self.shape.clone(),
        }
    }

    pub fn behaviors_of(&self, client: u32) -> impl Iterator<Item = &AdversaryBehavior> {
        self.adversaries
            .iter()
            .filter(move |a| a.client == client)
            .map(|a| &a.behavior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema {}",
                self.schema
            )));
        }
        self.round_config().validate()?;
        let in_range = |u: u32| u >= 1 && u as usize <= self.n;
        for a in &self.adversaries {
            if !in_range(a.client) {
                return Err(Error::InvalidConfig(format!("adversary {} out of range", a.client)));
            }
            match a.behavior {
                AdversaryBehavior::WrongShareToVictim { victim, chunk } => {
                    if !in_range(victim) || victim == a.client || chunk >= nov_core::elgamal::CHUNKS {
                        return Err(Error::InvalidConfig("bad victim or chunk".into()));
                    }
                }
                AdversaryBehavior::FalseAccusation { target } => {
                    if !in_range(target) || target == a.client {
                        return Err(Error::InvalidConfig("bad accusation target".into()));
                    }
                }
                _ => {}
            }
            if a.behavior.alters_update()
                && self
                    .behaviors_of(a.client)
                    .filter(|b| b.alters_update())
                    .count()
                    > 1
            {
                return Err(Error::InvalidConfig(format!(
                    "client {} has several update behaviors",
                    a.client
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_defaults() {
        let json = r#"{
            "schema": 1, "n": 5, "t": 3, "t_m": 1.0, "t_s": 0.6, "shape": [4, 4], "seed": 9,
            "adversaries": [
                {"client": 2, "behavior": {"kind": "wrong_share_to_victim", "victim": 1, "chunk": 3}},
                {"client": 4, "behavior": {"kind": "dropout", "stage": "aggregation"}}
            ]
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.quant, QuantConfig::default());
        assert_eq!(cfg.timeout, TimeoutPolicy::default());
        assert_eq!(
            cfg.adversaries[1].behavior,
            AdversaryBehavior::Dropout {
                stage: Stage::Aggregation
            }
        );
        let back: ScenarioConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ScenarioConfig::new(5, 3, vec![4], 1);
        assert!(ScenarioConfig { schema: 2, ..base.clone() }.validate().is_err());
        assert!(base
            .clone()
            .with_adversary(6, AdversaryBehavior::WrongGlobalShare)
            .validate()
            .is_err());
        assert!(base
            .clone()
            .with_adversary(2, AdversaryBehavior::WrongShareToVictim { victim: 2, chunk: 0 })
            .validate()
            .is_err());
        assert!(base
            .clone()
            .with_adversary(2, AdversaryBehavior::WrongShareToVictim { victim: 1, chunk: 16 })
            .validate()
            .is_err());
        assert!(base
            .clone()
            .with_adversary(2, AdversaryBehavior::FlipSignUpdate)
            .with_adversary(2, AdversaryBehavior::OversizedUpdate)
            .validate()
            .is_err());
    }
}
