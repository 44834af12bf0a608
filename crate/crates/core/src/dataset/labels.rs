//! The fixed species label set.
//!
//! Index order follows the dataset table the models were trained on; the
//! positive target for every binary formulation is `Aedes_aegypti`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of classes in the full label set.
pub const NUM_CLASSES: usize = 23;

/// Species identifiers in index order. Two species are split into named
/// laboratory strains, giving 23 classes for 20 species.
pub const SPECIES_NAMES: [&str; NUM_CLASSES] = [
    "Aedes_aegypti",
    "Aedes_albopictus",
    "Aedes_mediovittatus",
    "Aedes_sierrensis",
    "Anopheles_albimanus",
    "Anopheles_arabiensis_dongola",
    "Anopheles_arabiensis_rufisque",
    "Anopheles_atroparvus",
    "Anopheles_dirus",
    "Anopheles_farauti",
    "Anopheles_freeborni",
    "Anopheles_gambiae_akron",
    "Anopheles_gambiae_kisumu",
    "Anopheles_gambiae_rsp",
    "Anopheles_merus",
    "Anopheles_minimus",
    "Anopheles_quadriannulatus",
    "Anopheles_quadrimaculatus",
    "Anopheles_stephensi",
    "Culex_pipiens",
    "Culex_quinquefasciatus",
    "Culex_tarsalis",
    "Culiseta_incidens",
];

/// Index of the positive target species.
pub const TARGET_INDEX: usize = 0;

/// One of the 23 class identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpeciesLabel(u8);

impl SpeciesLabel {
    pub const TARGET: SpeciesLabel = SpeciesLabel(TARGET_INDEX as u8);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(SpeciesLabel(index as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SPECIES_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| SpeciesLabel(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        SPECIES_NAMES[self.index()]
    }

    pub fn is_target(self) -> bool {
        self == Self::TARGET
    }

    /// All labels in index order.
    pub fn all() -> impl Iterator<Item = SpeciesLabel> {
        (0..NUM_CLASSES).map(|i| SpeciesLabel(i as u8))
    }

    /// The 22 non-target labels in index order.
    pub fn negatives() -> impl Iterator<Item = SpeciesLabel> {
        Self::all().filter(|l| !l.is_target())
    }
}

impl fmt::Display for SpeciesLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown species name `{0}`")]
pub struct UnknownSpecies(pub String);

impl FromStr for SpeciesLabel {
    type Err = UnknownSpecies;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpeciesLabel::from_name(s.trim()).ok_or_else(|| UnknownSpecies(s.to_string()))
    }
}

impl TryFrom<String> for SpeciesLabel {
    type Error = UnknownSpecies;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SpeciesLabel> for String {
    fn from(l: SpeciesLabel) -> String {
        l.name().to_string()
    }
}
