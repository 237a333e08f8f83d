//! Channel models, transmit policies and arrival rates.
//!
//! Two channel models are supported: a 2-source, 2-destination channel with
//! capture/multipacket reception, and an N-source, M-destination collision
//! channel where the destinations are indistinguishable (a single reception
//! probability per source). All types are immutable after validation and
//! safe to share across threads.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

fn check_prob(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(Error::InvalidChannel {
            field: field.to_string(),
            reason: format!("probability {v} out of [0,1]"),
        });
    }
    Ok(())
}

/// Reception probabilities of the 2-source, 2-destination MPR channel.
///
/// `q_solo[n][m]` is the probability that a packet from source `n` reaches
/// destination `m` when only `n` transmits; `q_joint[n][m]` is the same
/// event when both sources transmit. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel2x2 {
    pub q_solo: [[f64; 2]; 2],
    pub q_joint: [[f64; 2]; 2],
    /// Escape hatch for experiments with capture regimes where interference
    /// helps; skips the `q_joint <= q_solo` check.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_joint_exceeds_solo: bool,
}

impl ChannelModel2x2 {
    pub fn new(q_solo: [[f64; 2]; 2], q_joint: [[f64; 2]; 2]) -> Result<Self> {
        Self {
            q_solo,
            q_joint,
            allow_joint_exceeds_solo: false,
        }
        .validated()
    }

    /// Validates all invariants, returning the model unchanged on success.
    pub fn validated(self) -> Result<Self> {
        for n in 0..2 {
            for m in 0..2 {
                check_prob(&format!("q_solo[{n}][{m}]"), self.q_solo[n][m])?;
                check_prob(&format!("q_joint[{n}][{m}]"), self.q_joint[n][m])?;
                if !self.allow_joint_exceeds_solo && self.q_joint[n][m] > self.q_solo[n][m] {
                    return Err(Error::InvalidChannel {
                        field: format!("q_joint[{n}][{m}]"),
                        reason: "joint exceeds solo".to_string(),
                    });
                }
            }
        }
        Ok(self)
    }
}

/// N-source, M-destination collision channel with indistinguishable
/// destinations: any simultaneous transmission destroys all packets, and a
/// lone transmission from source `n` reaches each destination independently
/// with probability `q_solo[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionChannelNxM {
    pub n_sources: usize,
    pub m_destinations: usize,
    pub q_solo: Vec<f64>,
}

impl CollisionChannelNxM {
    pub fn new(n_sources: usize, m_destinations: usize, q_solo: Vec<f64>) -> Result<Self> {
        Self {
            n_sources,
            m_destinations,
            q_solo,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.n_sources == 0 {
            return Err(Error::InvalidChannel {
                field: "n_sources".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.m_destinations == 0 {
            return Err(Error::InvalidChannel {
                field: "m_destinations".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.q_solo.len() != self.n_sources {
            return Err(Error::InvalidChannel {
                field: "q_solo".into(),
                reason: format!(
                    "length {} does not match n_sources {}",
                    self.q_solo.len(),
                    self.n_sources
                ),
            });
        }
        for (n, &q) in self.q_solo.iter().enumerate() {
            check_prob(&format!("q_solo[{n}]"), q)?;
            // alpha and the rank ratio are undefined at q = 0
            if q == 0.0 {
                return Err(Error::InvalidChannel {
                    field: format!("q_solo[{n}]"),
                    reason: "zero success probability".into(),
                });
            }
        }
        Ok(self)
    }
}

/// Either channel model, as read from a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum Channel {
    #[serde(rename = "mpr2x2")]
    Mpr2x2(ChannelModel2x2),
    #[serde(rename = "collision")]
    Collision(CollisionChannelNxM),
}

impl Channel {
    pub fn validated(self) -> Result<Self> {
        Ok(match self {
            Channel::Mpr2x2(c) => Channel::Mpr2x2(c.validated()?),
            Channel::Collision(c) => Channel::Collision(c.validated()?),
        })
    }

    pub fn n_sources(&self) -> usize {
        match self {
            Channel::Mpr2x2(_) => 2,
            Channel::Collision(c) => c.n_sources,
        }
    }

    pub fn m_destinations(&self) -> usize {
        match self {
            Channel::Mpr2x2(_) => 2,
            Channel::Collision(c) => c.m_destinations,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ch: Channel =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        ch.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel serializes")
    }
}

/// Per-source transmission probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitPolicy(pub Vec<f64>);

impl TransmitPolicy {
    pub fn validated(self, n_sources: usize) -> Result<Self> {
        if self.0.len() != n_sources {
            return Err(Error::InvalidConfig(format!(
                "policy length {} does not match source count {n_sources}",
                self.0.len()
            )));
        }
        for (n, &p) in self.0.iter().enumerate() {
            check_prob(&format!("p[{n}]"), p)?;
        }
        Ok(self)
    }
}

/// Per-source Bernoulli arrival rates, packets per slot, each in [0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRates(pub Vec<f64>);

impl ArrivalRates {
    pub fn validated(self, n_sources: usize) -> Result<Self> {
        if self.0.len() != n_sources {
            return Err(Error::InvalidConfig(format!(
                "arrival-rate length {} does not match source count {n_sources}",
                self.0.len()
            )));
        }
        for (n, &l) in self.0.iter().enumerate() {
            if !(0.0..1.0).contains(&l) || l.is_nan() {
                return Err(Error::InvalidConfig(format!(
                    "lambda[{n}] = {l} out of [0,1)"
                )));
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Channel I of the 2x2 numerical results.
    pub fn channel_i() -> ChannelModel2x2 {
        ChannelModel2x2::new(
            [[0.8, 0.6], [0.5, 0.7]],
            [[0.1, 0.05], [0.05, 0.25]],
        )
        .unwrap()
    }

    #[test]
    fn accepts_channel_i() {
        let c = channel_i();
        assert_eq!(c.q_solo[0][0], 0.8);
        assert_eq!(c.q_joint[1][1], 0.25);
    }

    #[test]
    fn accepts_all_zero_2x2() {
        ChannelModel2x2::new([[0.0; 2]; 2], [[0.0; 2]; 2]).unwrap();
    }

    #[test]
    fn rejects_joint_exceeding_solo() {
        let err = ChannelModel2x2::new([[0.5, 1.0], [1.0, 1.0]], [[0.6, 0.0], [0.0, 0.0]])
            .unwrap_err();
        match err {
            Error::InvalidChannel { field, reason } => {
                assert_eq!(field, "q_joint[0][0]");
                assert!(reason.contains("joint exceeds solo"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn joint_exceeding_solo_allowed_with_override() {
        let c = ChannelModel2x2 {
            q_solo: [[0.5, 1.0], [1.0, 1.0]],
            q_joint: [[0.6, 0.0], [0.0, 0.0]],
            allow_joint_exceeds_solo: true,
        };
        c.validated().unwrap();
    }

    #[test]
    fn accepts_collision_4x8() {
        CollisionChannelNxM::new(4, 8, vec![0.9, 0.8, 0.7, 0.9]).unwrap();
    }

    #[test]
    fn accepts_unicast_perfect() {
        CollisionChannelNxM::new(1, 1, vec![1.0]).unwrap();
    }

    #[test]
    fn rejects_zero_success_probability() {
        let err = CollisionChannelNxM::new(2, 2, vec![0.0, 0.5]).unwrap_err();
        match err {
            Error::InvalidChannel { field, reason } => {
                assert_eq!(field, "q_solo[0]");
                assert!(reason.contains("zero success probability"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_system() {
        assert!(CollisionChannelNxM::new(0, 1, vec![]).is_err());
        assert!(CollisionChannelNxM::new(1, 0, vec![0.5]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let ch = Channel::Collision(CollisionChannelNxM::new(4, 8, vec![0.9, 0.8, 0.7, 0.9]).unwrap());
        let back = Channel::from_json(&ch.to_json()).unwrap();
        assert_eq!(ch, back);

        let ch = Channel::Mpr2x2(channel_i());
        let back = Channel::from_json(&ch.to_json()).unwrap();
        assert_eq!(ch, back);
    }
}
