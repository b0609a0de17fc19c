//! Scenario identities and their text labels.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Which major parameters a scenario redraws per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DiverseSet {
    pub arch: bool,
    pub opt: bool,
    pub sched: bool,
}

impl DiverseSet {
    pub const NONE: DiverseSet = DiverseSet {
        arch: false,
        opt: false,
        sched: false,
    };
    pub const ALL: DiverseSet = DiverseSet {
        arch: true,
        opt: true,
        sched: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.arch || self.opt || self.sched)
    }

    /// Letters in `A`, `O`, `S` order.
    pub fn letters(&self) -> String {
        let mut s = String::new();
        for (on, c) in [(self.arch, 'A'), (self.opt, 'O'), (self.sched, 'S')] {
            if on {
                s.push(c);
            }
        }
        s
    }

    /// All seven non-empty subsets.
    pub fn non_empty() -> impl Iterator<Item = DiverseSet> {
        (1u8..8).map(|m| DiverseSet {
            arch: m & 1 != 0,
            opt: m & 2 != 0,
            sched: m & 4 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    /// Shared-data ensemble of distinct architectures with one public recipe.
    Ens,
    /// Shared major parameters, per-node tuning on local shards.
    It,
    /// Per-node tuning after redrawing the parameters in the set.
    Diverse(DiverseSet),
}

impl ScenarioKind {
    pub fn diverse_set(&self) -> DiverseSet {
        match self {
            ScenarioKind::Diverse(d) => *d,
            _ => DiverseSet::NONE,
        }
    }

    /// Everything but ENS tunes per node on partitioned data.
    pub fn is_tuned(&self) -> bool {
        !matches!(self, ScenarioKind::Ens)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::Ens => f.write_str("ENS"),
            ScenarioKind::It => f.write_str("IT"),
            ScenarioKind::Diverse(d) => write!(f, "D_{}", d.letters()),
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ENS" => return Ok(ScenarioKind::Ens),
            "IT" => return Ok(ScenarioKind::It),
            _ => {}
        }
        let bad = || Error::UnknownId(format!("scenario `{}`", s));
        let letters = s.strip_prefix("D_").ok_or_else(bad)?;
        let mut set = DiverseSet::NONE;
        for c in letters.chars() {
            let slot = match c {
                'A' => &mut set.arch,
                'O' => &mut set.opt,
                'S' => &mut set.sched,
                _ => return Err(bad()),
            };
            if *slot {
                return Err(bad());
            }
            *slot = true;
        }
        if set.is_empty() || set.letters() != letters {
            return Err(bad());
        }
        Ok(ScenarioKind::Diverse(set))
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for ScenarioKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for ScenarioKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Scenario kind plus the data-distribution marker, written `KIND` or
/// `KIND+dir` in records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioLabel {
    pub kind: ScenarioKind,
    pub dirichlet: bool,
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind, if self.dirichlet { "+dir" } else { "" })
    }
}

impl FromStr for ScenarioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, dirichlet) = match s.strip_suffix("+dir") {
            Some(k) => (k, true),
            None => (s, false),
        };
        Ok(ScenarioLabel {
            kind: kind.parse()?,
            dirichlet,
        })
    }
}
