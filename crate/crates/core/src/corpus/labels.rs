//! Closed label sets: inconsistency types, claim components and coarse
//! entity types.
//!
//! Every label has a canonical display name (the spelling used in the
//! dataset file) and a lowercase generation form used inside linearized
//! model targets. Parsing is tolerant: case, spaces, hyphens and
//! underscores are ignored, and a few historical aliases are accepted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::LabelError;

/// Normalizes a label for lookup: lowercase ASCII alphanumerics only.
pub(crate) fn label_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Shared behaviour of the closed label enums.
pub trait Label: Copy + Eq + Ord + fmt::Debug + 'static {
    /// Every value in fixed head order.
    const ALL: &'static [Self];
    /// Name used in the dataset file.
    fn name(self) -> &'static str;
    /// Alternative spellings accepted when parsing (already key-normalized).
    fn aliases(self) -> &'static [&'static str] {
        &[]
    }
    /// Lowercase form used inside linearized generation targets.
    fn generation_form(self) -> String {
        self.name().to_lowercase().replace(['-', '_'], " ")
    }
    fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|&l| l == self)
            .expect("label present in ALL")
    }
    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
    /// Exact match after key normalization, including aliases.
    fn parse_label(s: &str) -> Option<Self> {
        let key = label_key(s);
        Self::ALL
            .iter()
            .copied()
            .find(|l| label_key(l.name()) == key || l.aliases().contains(&key.as_str()))
    }
    fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|l| l.name()).collect()
    }
}

macro_rules! label_serde {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = LabelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$ty as Label>::parse_label(s).ok_or_else(|| LabelError {
                    kind: $what,
                    value: s.to_string(),
                })
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InconsistencyType {
    Simple,
    Gradable,
    TaxonomicRelations,
    Negation,
    SetBased,
}

impl Label for InconsistencyType {
    const ALL: &'static [Self] = &[
        Self::Simple,
        Self::Gradable,
        Self::TaxonomicRelations,
        Self::Negation,
        Self::SetBased,
    ];

    fn name(self) -> &'static str {
        match self {
            Self::Simple => "Simple",
            Self::Gradable => "Gradable",
            Self::TaxonomicRelations => "Taxonomic Relations",
            Self::Negation => "Negation",
            Self::SetBased => "Set Based",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Self::TaxonomicRelations => &["taxonomicrelation", "taxonomic"],
            Self::SetBased => &["set"],
            _ => &[],
        }
    }
}
label_serde!(InconsistencyType, "inconsistency type");

/// Which part of the claim fact triple carries the inconsistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClaimComponent {
    SubjectHead,
    SubjectModifier,
    RelationHead,
    RelationModifier,
    TargetHead,
    TargetModifier,
}

/// The triple slot a component belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleSlot {
    Source,
    Relation,
    Target,
}

impl ClaimComponent {
    pub fn slot(self) -> TripleSlot {
        match self {
            Self::SubjectHead | Self::SubjectModifier => TripleSlot::Source,
            Self::RelationHead | Self::RelationModifier => TripleSlot::Relation,
            Self::TargetHead | Self::TargetModifier => TripleSlot::Target,
        }
    }

    pub fn is_head(self) -> bool {
        matches!(self, Self::SubjectHead | Self::RelationHead | Self::TargetHead)
    }
}

impl Label for ClaimComponent {
    const ALL: &'static [Self] = &[
        Self::SubjectHead,
        Self::SubjectModifier,
        Self::RelationHead,
        Self::RelationModifier,
        Self::TargetHead,
        Self::TargetModifier,
    ];

    fn name(self) -> &'static str {
        match self {
            Self::SubjectHead => "Subject-Head",
            Self::SubjectModifier => "Subject-Modifier",
            Self::RelationHead => "Relation-Head",
            Self::RelationModifier => "Relation-Modifier",
            Self::TargetHead => "Target-Head",
            Self::TargetModifier => "Target-Modifier",
        }
    }

    // The dataset statistics spell the subject slot "Source".
    fn aliases(self) -> &'static [&'static str] {
        match self {
            Self::SubjectHead => &["sourcehead"],
            Self::SubjectModifier => &["sourcemodifier"],
            _ => &[],
        }
    }
}
label_serde!(ClaimComponent, "claim component");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoarseEntityType {
    Action,
    Animal,
    Entertainment,
    Gender,
    Geography,
    Identity,
    Material,
    Name,
    Nationality,
    Organization,
    Others,
    Politics,
    Profession,
    Quantity,
    Reality,
    Relationship,
    Sentiment,
    Sport,
    Technology,
    Time,
}

impl Label for CoarseEntityType {
    const ALL: &'static [Self] = &[
        Self::Action,
        Self::Animal,
        Self::Entertainment,
        Self::Gender,
        Self::Geography,
        Self::Identity,
        Self::Material,
        Self::Name,
        Self::Nationality,
        Self::Organization,
        Self::Others,
        Self::Politics,
        Self::Profession,
        Self::Quantity,
        Self::Reality,
        Self::Relationship,
        Self::Sentiment,
        Self::Sport,
        Self::Technology,
        Self::Time,
    ];

    fn name(self) -> &'static str {
        match self {
            Self::Action => "action",
            Self::Animal => "animal",
            Self::Entertainment => "entertainment",
            Self::Gender => "gender",
            Self::Geography => "geography",
            Self::Identity => "identity",
            Self::Material => "material",
            Self::Name => "name",
            Self::Nationality => "nationality",
            Self::Organization => "organization",
            Self::Others => "others",
            Self::Politics => "politics",
            Self::Profession => "profession",
            Self::Quantity => "quantity",
            Self::Reality => "reality",
            Self::Relationship => "relationship",
            Self::Sentiment => "sentiment",
            Self::Sport => "sport",
            Self::Technology => "technology",
            Self::Time => "time",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Self::Organization => &["organisation"],
            Self::Others => &["other"],
            _ => &[],
        }
    }
}
label_serde!(CoarseEntityType, "coarse entity type");

/// Fine-grained entity type. The label set is open at the type level and
/// closed by a [`crate::corpus::FineLabelVocab`] built from the data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FineEntityType(String);

impl FineEntityType {
    /// Fine labels are stored trimmed and lowercase.
    pub fn new(label: impl AsRef<str>) -> Self {
        let s = label.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
        FineEntityType(s.to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FineEntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses a label, falling back to the nearest label by edit distance over
/// normalized keys. The flag is true when the fallback was used.
pub fn fuzzy_label<L: Label>(s: &str) -> Option<(L, bool)> {
    if let Some(l) = L::parse_label(s) {
        return Some((l, false));
    }
    let key = label_key(s);
    if key.is_empty() {
        return None;
    }
    L::ALL
        .iter()
        .copied()
        .min_by_key(|l| (strsim::levenshtein(&key, &label_key(l.name())), l.index()))
        .map(|l| (l, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        assert_eq!(InconsistencyType::ALL.len(), 5);
        assert_eq!(ClaimComponent::ALL.len(), 6);
        assert_eq!(CoarseEntityType::ALL.len(), 20);
    }

    #[test]
    fn source_spelling_maps_to_subject() {
        assert_eq!(
            "Source-Head".parse::<ClaimComponent>().unwrap(),
            ClaimComponent::SubjectHead
        );
        assert_eq!(
            "source_modifier".parse::<ClaimComponent>().unwrap(),
            ClaimComponent::SubjectModifier
        );
    }

    #[test]
    fn tolerant_type_parsing() {
        assert_eq!(
            "set based".parse::<InconsistencyType>().unwrap(),
            InconsistencyType::SetBased
        );
        assert_eq!(
            "Taxonomic Relation".parse::<InconsistencyType>().unwrap(),
            InconsistencyType::TaxonomicRelations
        );
        assert!("contradiction".parse::<InconsistencyType>().is_err());
    }

    #[test]
    fn index_round_trip() {
        for &c in CoarseEntityType::ALL {
            assert_eq!(CoarseEntityType::from_index(c.index()), Some(c));
            assert_eq!(c.name().parse::<CoarseEntityType>().unwrap(), c);
        }
    }

    #[test]
    fn fuzzy_fallback() {
        let (t, fuzzy) = fuzzy_label::<InconsistencyType>("negatoin").unwrap();
        assert_eq!(t, InconsistencyType::Negation);
        assert!(fuzzy);
        let (c, fuzzy) = fuzzy_label::<CoarseEntityType>("Time").unwrap();
        assert_eq!(c, CoarseEntityType::Time);
        assert!(!fuzzy);
        assert!(fuzzy_label::<CoarseEntityType>("  ").is_none());
    }

    #[test]
    fn generation_forms() {
        assert_eq!(InconsistencyType::SetBased.generation_form(), "set based");
        assert_eq!(ClaimComponent::TargetHead.generation_form(), "target head");
    }
}
