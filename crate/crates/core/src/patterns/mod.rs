//! Synthetic layout generators for the eighteen pattern families, catalog
//! statistics and jittered dataset sampling.

mod catalog;
mod dataset;
mod geometry;
mod stats;

pub use catalog::{catalog, catalog_entry, CatalogEntry, Category};
pub use dataset::{default_dataset_size, sample_dataset, Sample, JITTER_PITCH_NM, JITTER_WIDTH_NM};
pub use geometry::render;
pub use stats::{stats, PatternStats};

use crate::error::{Error, Result};
use crate::field::{DEFAULT_GRID, DEFAULT_PIXEL_SIZE_NM};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    LogicGates,
    EuvLineSpace,
    EuvContacts,
    EuvMetal,
    StiPattern,
    #[serde(rename = "finfet_3nm")]
    Finfet3nm,
    DramArrays,
    SramCells,
    ContactCuts,
    HighNaLines,
    HighNaContacts,
    Curvilinear,
    GaafetNanosheets,
    Mbcfet,
    BacksidePower,
    Cfet,
    #[serde(rename = "high_na_sub8")]
    HighNaSub8,
    StrainEngineering,
}

impl PatternKind {
    pub const ALL: [PatternKind; 18] = [
        PatternKind::LogicGates,
        PatternKind::EuvLineSpace,
        PatternKind::EuvContacts,
        PatternKind::EuvMetal,
        PatternKind::StiPattern,
        PatternKind::Finfet3nm,
        PatternKind::DramArrays,
        PatternKind::SramCells,
        PatternKind::ContactCuts,
        PatternKind::HighNaLines,
        PatternKind::HighNaContacts,
        PatternKind::Curvilinear,
        PatternKind::GaafetNanosheets,
        PatternKind::Mbcfet,
        PatternKind::BacksidePower,
        PatternKind::Cfet,
        PatternKind::HighNaSub8,
        PatternKind::StrainEngineering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::LogicGates => "logic_gates",
            PatternKind::EuvLineSpace => "euv_line_space",
            PatternKind::EuvContacts => "euv_contacts",
            PatternKind::EuvMetal => "euv_metal",
            PatternKind::StiPattern => "sti_pattern",
            PatternKind::Finfet3nm => "finfet_3nm",
            PatternKind::DramArrays => "dram_arrays",
            PatternKind::SramCells => "sram_cells",
            PatternKind::ContactCuts => "contact_cuts",
            PatternKind::HighNaLines => "high_na_lines",
            PatternKind::HighNaContacts => "high_na_contacts",
            PatternKind::Curvilinear => "curvilinear",
            PatternKind::GaafetNanosheets => "gaafet_nanosheets",
            PatternKind::Mbcfet => "mbcfet",
            PatternKind::BacksidePower => "backside_power",
            PatternKind::Cfet => "cfet",
            PatternKind::HighNaSub8 => "high_na_sub8",
            PatternKind::StrainEngineering => "strain_engineering",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    /// The twelve standard (non-advanced) kinds.
    pub fn standard() -> &'static [PatternKind] {
        &Self::ALL[..12]
    }

    pub fn advanced() -> &'static [PatternKind] {
        &Self::ALL[12..]
    }

    /// Line-like families whose edges are essentially all vertical.
    pub fn is_line_space(self) -> bool {
        matches!(
            self,
            PatternKind::EuvLineSpace | PatternKind::Finfet3nm | PatternKind::HighNaLines
        )
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pattern kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub pixel_size_nm: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            width: DEFAULT_GRID,
            height: DEFAULT_GRID,
            pixel_size_nm: DEFAULT_PIXEL_SIZE_NM,
        }
    }
}

/// Declarative description of one rendered pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub pitch_nm: f64,
    pub width_nm: f64,
    /// Site occupancy for randomized kinds; ignored elsewhere.
    pub density: f64,
    pub seed: u64,
    pub grid: Grid,
    /// Integer translation of the whole layout, pixels (+x right, +y down).
    pub offset_px: (i64, i64),
}

impl PatternSpec {
    /// The unjittered catalog template of `kind` on the default grid.
    pub fn canonical(kind: PatternKind) -> Self {
        let (pitch_nm, width_nm) = geometry::canonical_pitch_width(kind);
        Self {
            kind,
            pitch_nm,
            width_nm,
            density: if kind == PatternKind::ContactCuts {
                0.7
            } else {
                1.0
            },
            seed: 42,
            grid: Grid::default(),
            offset_px: (0, 0),
        }
    }

    /// Wide line-space preset: 101.25 nm lines at 516.75 nm pitch.
    pub fn legacy_line_space() -> Self {
        Self {
            pitch_nm: 516.75,
            width_nm: 101.25,
            ..Self::canonical(PatternKind::EuvLineSpace)
        }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.pitch_nm / self.width_nm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch_nm.is_finite() && self.pitch_nm > 0.0) {
            return Err(Error::Geometry(format!("pitch {} nm", self.pitch_nm)));
        }
        if !(self.width_nm.is_finite() && self.width_nm > 0.0) {
            return Err(Error::Geometry(format!("width {} nm", self.width_nm)));
        }
        if self.width_nm >= self.pitch_nm {
            return Err(Error::Geometry(format!(
                "width {} nm must be below pitch {} nm",
                self.width_nm, self.pitch_nm
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Geometry(format!("density {}", self.density)));
        }
        let g = &self.grid;
        if g.width == 0 || g.height == 0 || !(g.pixel_size_nm.is_finite() && g.pixel_size_nm > 0.0)
        {
            return Err(Error::Geometry(format!(
                "grid {}x{} at {} nm",
                g.width, g.height, g.pixel_size_nm
            )));
        }
        Ok(())
    }

    /// Features narrower than one pixel are still drawn one pixel wide;
    /// this lists them.
    pub fn quantization_warnings(&self) -> Vec<String> {
        let px = self.grid.pixel_size_nm;
        geometry::feature_sizes(self)
            .into_iter()
            .filter(|&(_, size)| size < px)
            .map(|(what, size)| format!("{what} {size:.2} nm is below the {px} nm pixel"))
            .collect()
    }
}
