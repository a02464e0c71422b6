use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Registered protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolId {
    L2hhStatic,
    LphhTwoRound,
    LphhOneRound,
    CountSketch,
    FpStatic,
    FpStaticOneRound,
    L2hhTracking,
    LphhTracking,
    FpTracking,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 9] = [
        ProtocolId::L2hhStatic,
        ProtocolId::LphhTwoRound,
        ProtocolId::LphhOneRound,
        ProtocolId::CountSketch,
        ProtocolId::FpStatic,
        ProtocolId::FpStaticOneRound,
        ProtocolId::L2hhTracking,
        ProtocolId::LphhTracking,
        ProtocolId::FpTracking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::L2hhStatic => "l2hh-static",
            ProtocolId::LphhTwoRound => "lphh-two-round",
            ProtocolId::LphhOneRound => "lphh-one-round",
            ProtocolId::CountSketch => "count-sketch",
            ProtocolId::FpStatic => "fp-static",
            ProtocolId::FpStaticOneRound => "fp-static-one-round",
            ProtocolId::L2hhTracking => "l2hh-tracking",
            ProtocolId::LphhTracking => "lphh-tracking",
            ProtocolId::FpTracking => "fp-tracking",
        }
    }

    pub fn is_tracking(self) -> bool {
        matches!(
            self,
            ProtocolId::L2hhTracking | ProtocolId::LphhTracking | ProtocolId::FpTracking
        )
    }

    /// Whether the protocol estimates per-item frequencies (as opposed to a
    /// single moment).
    pub fn is_heavy_hitter(self) -> bool {
        !matches!(
            self,
            ProtocolId::FpStatic | ProtocolId::FpStaticOneRound | ProtocolId::FpTracking
        )
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown protocol {s:?}")))
    }
}

/// Input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Item of rank `r` drawn with probability proportional to `r^-s`.
    Zipf { s: f64 },
    Uniform,
    /// Items `0..count` each receive `share * m` arrivals; the rest is
    /// Zipf(1.1) noise over the other items.
    PlantedHh { count: usize, share: f64 },
    /// Each item spread evenly over the sites. Global frequencies are flat,
    /// or Zipf(`zipf`) when given.
    EqualSplit { zipf: Option<f64> },
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Zipf { s } => write!(f, "zipf:{s}"),
            Generator::Uniform => f.write_str("uniform"),
            Generator::PlantedHh { count, share } => write!(f, "planted_hh:{count},{share}"),
            Generator::EqualSplit { zipf: None } => f.write_str("equal_split"),
            Generator::EqualSplit { zipf: Some(s) } => write!(f, "equal_split:{s}"),
        }
    }
}

impl FromStr for Generator {
    type Err = HarnessError;

    /// Accepts `zipf:S`, `uniform`, `planted_hh:COUNT,SHARE`, `equal_split`
    /// and `equal_split:S`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("bad generator {s:?}"));
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let g = match (name, arg) {
            ("zipf", a) => Generator::Zipf {
                s: a.parse().map_err(|_| bad())?,
            },
            ("uniform", "") => Generator::Uniform,
            ("equal_split", "") => Generator::EqualSplit { zipf: None },
            ("equal_split", a) => Generator::EqualSplit {
                zipf: Some(a.parse().map_err(|_| bad())?),
            },
            ("planted_hh", a) => {
                let (c, sh) = a.split_once(',').ok_or_else(bad)?;
                Generator::PlantedHh {
                    count: c.trim().parse().map_err(|_| bad())?,
                    share: sh.trim().parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        g.validate()?;
        Ok(g)
    }
}

impl Generator {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            Generator::Zipf { s } | Generator::EqualSplit { zipf: Some(s) } if !(s > 0.0 && s.is_finite()) => {
                Err(HarnessError::Config(format!("zipf exponent must be positive, got {s}")))
            }
            Generator::PlantedHh { count, share }
                if count == 0 || share.is_nan() || share <= 0.0 || count as f64 * share > 1.0 =>
            {
                Err(HarnessError::Config(format!(
                    "planted_hh needs count >= 1 and 0 < count * share <= 1, got {count}, {share}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolId,
    pub k: usize,
    pub n: usize,
    pub p: u32,
    pub eps: f64,
    pub m: u64,
    pub generator: Generator,
    pub trials: usize,
    pub seed: u64,
    pub checkpoints: usize,
    /// Use one input for every trial instead of one per trial.
    #[serde(default)]
    pub fixed_input: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = [
            ("k", self.k as u64),
            ("n", self.n as u64),
            ("p", self.p as u64),
            ("m", self.m),
            ("trials", self.trials as u64),
            ("checkpoints", self.checkpoints as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(HarnessError::Config(format!("{name} must be positive")));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(HarnessError::Config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        let min_p = match self.protocol {
            ProtocolId::L2hhStatic | ProtocolId::L2hhTracking | ProtocolId::CountSketch => 1,
            _ => 2,
        };
        if self.p < min_p {
            return Err(HarnessError::Config(format!("{} needs p >= {min_p}", self.protocol)));
        }
        self.generator.validate()
    }

    /// Query times `ceil(c m / C)` for `c = 1..=C`. Static protocols answer
    /// only at `m`.
    pub fn checkpoint_times(&self) -> Vec<u64> {
        if !self.protocol.is_tracking() {
            return vec![self.m];
        }
        let c = self.checkpoints as u64;
        let mut t: Vec<u64> = (1..=c).map(|i| (i * self.m).div_ceil(c)).collect();
        t.dedup();
        t
    }
}
