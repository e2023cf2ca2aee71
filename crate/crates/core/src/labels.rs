//! Label taxonomies for the two annotation stages and the detection label spaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Annotation / detection stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
}

impl Stage {
    /// Labels a single annotator may assign at this stage. `undecided` is never among them.
    pub fn assignable_labels(self) -> &'static [&'static str] {
        match self {
            Stage::One => &["toxic", "normal"],
            Stage::Two => &["hateful", "dangerous", "offensive"],
        }
    }

    pub fn is_assignable(self, label: &str) -> bool {
        self.assignable_labels().contains(&label)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::One => "I",
            Stage::Two => "II",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "i" | "1" => Ok(Stage::One),
            "II" | "ii" | "2" => Ok(Stage::Two),
            other => Err(Error::invalid(format!("unknown stage '{other}' (expected I or II)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1Label {
    Toxic,
    Normal,
}

impl Stage1Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage1Label::Toxic => "toxic",
            Stage1Label::Normal => "normal",
        }
    }
}

impl FromStr for Stage1Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toxic" => Ok(Self::Toxic),
            "normal" => Ok(Self::Normal),
            other => Err(Error::invalid(format!("'{other}' is not a stage I label"))),
        }
    }
}

impl fmt::Display for Stage1Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage2Label {
    Hateful,
    Dangerous,
    Offensive,
    /// Only produced by majority-vote finalization.
    Undecided,
}

impl Stage2Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage2Label::Hateful => "hateful",
            Stage2Label::Dangerous => "dangerous",
            Stage2Label::Offensive => "offensive",
            Stage2Label::Undecided => "undecided",
        }
    }
}

impl FromStr for Stage2Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hateful" => Ok(Self::Hateful),
            "dangerous" => Ok(Self::Dangerous),
            "offensive" => Ok(Self::Offensive),
            "undecided" => Ok(Self::Undecided),
            other => Err(Error::invalid(format!("'{other}' is not a stage II label"))),
        }
    }
}

impl fmt::Display for Stage2Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Finalization outcome used when three stage II annotators all disagree.
pub const UNDECIDED: &str = "undecided";

pub const DEF_HATEFUL: &str = "A direct or indirect attack on people based on characteristics, including ethnicity, race, nationality, immigration status, religion, caste, sex, gender identity, sexual orientation, and disability or disease. Attack is defined as violent or dehumanizing (comparing people to non-human things, e.g., animals) speech, statements of inferiority, and calls for exclusion or segregation. Mocking hate crime is also considered hateful.";
pub const DEF_DANGEROUS: &str = "A text, meme or speech which is not hateful but uses any form of expression that can increase the risk of its audience to condone or participate in violence against members of another group will be considered as dangerous.";
pub const DEF_OFFENSIVE: &str = "A text, meme or speech which is neither hateful, nor dangerous but uses abusive slurs or derogatory terms will be considered as offensive.";
pub const DEF_TOXIC: &str = "A rude, disrespectful, or unreasonable comment that is likely to make you leave a discussion.";
pub const DEF_NORMAL: &str = "A meme which is not toxic and follows social norms.";
pub const DEF_NOT_HATEFUL: &str = "A meme which does not attack people based on protected characteristics.";

/// The closed set of answers a classifier may give, with the guideline text for each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub id: String,
    pub labels: Vec<String>,
    pub definitions: Vec<(String, String)>,
}

impl LabelSpace {
    pub fn stage1() -> Self {
        Self::from_static(
            "stage1",
            &[("toxic", DEF_TOXIC), ("normal", DEF_NORMAL)],
        )
    }

    /// Stage II offers the three fine-grained toxic classes only.
    pub fn stage2() -> Self {
        Self::from_static(
            "stage2",
            &[
                ("hateful", DEF_HATEFUL),
                ("dangerous", DEF_DANGEROUS),
                ("offensive", DEF_OFFENSIVE),
            ],
        )
    }

    /// Binary hateful / not-hateful space for the Facebook Hateful Memes transfer runs.
    pub fn fhm() -> Self {
        Self::from_static(
            "fhm",
            &[("hateful", DEF_HATEFUL), ("not-hateful", DEF_NOT_HATEFUL)],
        )
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::One => Self::stage1(),
            Stage::Two => Self::stage2(),
        }
    }

    pub fn by_id(id: &str) -> Option<Self> {
        match id {
            "stage1" | "I" => Some(Self::stage1()),
            "stage2" | "II" => Some(Self::stage2()),
            "fhm" => Some(Self::fhm()),
            _ => None,
        }
    }

    fn from_static(id: &str, entries: &[(&str, &str)]) -> Self {
        Self {
            id: id.to_string(),
            labels: entries.iter().map(|(l, _)| l.to_string()).collect(),
            definitions: entries
                .iter()
                .map(|(l, d)| (l.to_string(), d.to_string()))
                .collect(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}
