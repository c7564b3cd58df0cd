//! Societal dimensions, polarity and the 9-way label scheme.
//!
//! The integer codes are fixed and shared by every classifier backend:
//!
//! | code | label |
//! |-----:|-------|
//! | 0 | unrelated |
//! | 1 | stereotype_gender |
//! | 2 | anti-stereotype_gender |
//! | 3 | stereotype_race |
//! | 4 | anti-stereotype_race |
//! | 5 | stereotype_profession |
//! | 6 | anti-stereotype_profession |
//! | 7 | stereotype_religion |
//! | 8 | anti-stereotype_religion |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of labels in the multi-class scheme.
pub const NUM_LABELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Gender,
    Race,
    Profession,
    Religion,
}

impl Dimension {
    /// All dimensions, in label-code order.
    pub const ALL: [Dimension; 4] = [
        Dimension::Gender,
        Dimension::Race,
        Dimension::Profession,
        Dimension::Religion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Gender => "gender",
            Dimension::Race => "race",
            Dimension::Profession => "profession",
            Dimension::Religion => "religion",
        }
    }

    /// Label code of `stereotype_<self>`.
    pub fn stereotype_code(self) -> usize {
        Label::Biased(Polarity::Stereotype, self).code()
    }

    /// Label code of `anti-stereotype_<self>`.
    pub fn anti_stereotype_code(self) -> usize {
        Label::Biased(Polarity::AntiStereotype, self).code()
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gender" => Ok(Dimension::Gender),
            "race" => Ok(Dimension::Race),
            "profession" => Ok(Dimension::Profession),
            "religion" => Ok(Dimension::Religion),
            other => Err(Error::UnknownDimension(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Stereotype,
    AntiStereotype,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Stereotype => "stereotype",
            Polarity::AntiStereotype => "anti-stereotype",
        }
    }
}

/// Gold annotation of a raw candidate sentence before it is combined with a
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gold {
    Polar(Polarity),
    Unrelated,
}

impl FromStr for Gold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stereotype" => Ok(Gold::Polar(Polarity::Stereotype)),
            "anti-stereotype" => Ok(Gold::Polar(Polarity::AntiStereotype)),
            "unrelated" => Ok(Gold::Unrelated),
            other => Err(Error::InvalidInput(format!("unknown gold label `{other}`"))),
        }
    }
}

impl fmt::Display for Gold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gold::Polar(p) => f.write_str(p.as_str()),
            Gold::Unrelated => f.write_str("unrelated"),
        }
    }
}

/// One of the nine classifier labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Unrelated,
    Biased(Polarity, Dimension),
}

impl Label {
    /// Labels indexed by code.
    pub const ALL: [Label; NUM_LABELS] = [
        Label::Unrelated,
        Label::Biased(Polarity::Stereotype, Dimension::Gender),
        Label::Biased(Polarity::AntiStereotype, Dimension::Gender),
        Label::Biased(Polarity::Stereotype, Dimension::Race),
        Label::Biased(Polarity::AntiStereotype, Dimension::Race),
        Label::Biased(Polarity::Stereotype, Dimension::Profession),
        Label::Biased(Polarity::AntiStereotype, Dimension::Profession),
        Label::Biased(Polarity::Stereotype, Dimension::Religion),
        Label::Biased(Polarity::AntiStereotype, Dimension::Religion),
    ];

    pub fn compose(gold: Gold, dimension: Dimension) -> Label {
        match gold {
            Gold::Unrelated => Label::Unrelated,
            Gold::Polar(p) => Label::Biased(p, dimension),
        }
    }

    pub fn code(self) -> usize {
        match self {
            Label::Unrelated => 0,
            Label::Biased(p, d) => {
                let base = match d {
                    Dimension::Gender => 1,
                    Dimension::Race => 3,
                    Dimension::Profession => 5,
                    Dimension::Religion => 7,
                };
                match p {
                    Polarity::Stereotype => base,
                    Polarity::AntiStereotype => base + 1,
                }
            }
        }
    }

    pub fn from_code(code: usize) -> Result<Label> {
        Label::ALL
            .get(code)
            .copied()
            .ok_or(Error::UnknownLabelCode(code as i64))
    }

    pub fn name(self) -> String {
        match self {
            Label::Unrelated => "unrelated".to_string(),
            Label::Biased(p, d) => format!("{}_{}", p.as_str(), d.as_str()),
        }
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            Label::Unrelated => None,
            Label::Biased(_, d) => Some(d),
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Label::Unrelated => None,
            Label::Biased(p, _) => Some(p),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown label name `{s}`")))
    }
}

/// Names of all labels, indexed by code.
pub fn label_names() -> Vec<String> {
    Label::ALL.iter().map(|l| l.name()).collect()
}
