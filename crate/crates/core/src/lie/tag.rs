use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The five matrix groups the convolution layers can be equivariant to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    /// Translations of the line.
    T1,
    /// Translations of the plane.
    T2,
    /// Rotations of the plane about the origin.
    SO2,
    /// Rotations and positive scalings of the plane.
    RxSO2,
    /// Rigid motions of the plane.
    SE2,
}

impl GroupTag {
    pub const ALL: [GroupTag; 5] = [
        GroupTag::T1,
        GroupTag::T2,
        GroupTag::SO2,
        GroupTag::RxSO2,
        GroupTag::SE2,
    ];

    /// Dimension of the Lie algebra.
    pub fn algebra_dim(self) -> usize {
        match self {
            GroupTag::T1 | GroupTag::SO2 => 1,
            GroupTag::T2 | GroupTag::RxSO2 => 2,
            GroupTag::SE2 => 3,
        }
    }

    /// Dimension of the space the group acts on.
    pub fn space_dim(self) -> usize {
        match self {
            GroupTag::T1 => 1,
            _ => 2,
        }
    }

    /// Dimension of the orbit coordinate attached by lifting (nonzero only for
    /// actions that are not transitive).
    pub fn orbit_dim(self) -> usize {
        match self {
            GroupTag::SO2 => 1,
            _ => 0,
        }
    }

    /// Length of the pair embedding fed to a kernel MLP.
    pub fn embedding_dim(self) -> usize {
        self.algebra_dim() + 2 * self.orbit_dim()
    }

    /// Size of the square matrix representation.
    pub fn matrix_dim(self) -> usize {
        match self {
            GroupTag::T1 | GroupTag::SO2 | GroupTag::RxSO2 => 2,
            GroupTag::T2 | GroupTag::SE2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupTag::T1 => "t1",
            GroupTag::T2 => "t2",
            GroupTag::SO2 => "so2",
            GroupTag::RxSO2 => "rxso2",
            GroupTag::SE2 => "se2",
        }
    }
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for GroupTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupTag::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown group {s:?}, expected one of t1, t2, so2, rxso2, se2"
                ))
            })
    }
}
