use super::PatternKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Easy,
    Moderate,
    Hard,
    Advanced,
    Extreme,
}

impl Category {
    /// Expected success rate band, percent.
    pub const fn success_band(self) -> (u32, u32) {
        match self {
            Category::Easy => (70, 90),
            Category::Moderate | Category::Advanced => (40, 70),
            Category::Hard | Category::Extreme => (10, 40),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub kind: PatternKind,
    pub category: Category,
    pub fill_pct: f64,
    pub min_feature_nm: f64,
    pub euv_ready: bool,
    pub success_band: (u32, u32),
    pub description: &'static str,
}

const fn entry(
    kind: PatternKind,
    category: Category,
    min_feature_nm: f64,
    fill_pct: f64,
    euv_ready: bool,
    description: &'static str,
) -> CatalogEntry {
    CatalogEntry {
        kind,
        category,
        fill_pct,
        min_feature_nm,
        euv_ready,
        success_band: category.success_band(),
        description,
    }
}

static CATALOG: [CatalogEntry; 18] = {
    use Category::*;
    use PatternKind::*;
    [
        entry(
            LogicGates,
            Easy,
            31.6,
            9.9,
            true,
            "H-shaped interconnect structures",
        ),
        entry(
            EuvLineSpace,
            Moderate,
            19.0,
            58.6,
            true,
            "16nm lines, 32nm pitch",
        ),
        entry(
            EuvContacts,
            Easy,
            38.0,
            56.2,
            true,
            "40nm contacts, 50nm pitch",
        ),
        entry(
            EuvMetal,
            Moderate,
            19.0,
            68.1,
            true,
            "24nm metal, 42nm pitch",
        ),
        entry(
            StiPattern,
            Easy,
            120.2,
            74.2,
            true,
            "Shallow trench isolation",
        ),
        entry(
            Finfet3nm,
            Moderate,
            12.7,
            52.3,
            true,
            "12nm fins, 24nm pitch",
        ),
        entry(DramArrays, Easy, 31.6, 71.8, true, "30x50nm memory cells"),
        entry(
            SramCells,
            Moderate,
            12.7,
            52.4,
            true,
            "SRAM with internal structure",
        ),
        entry(
            ContactCuts,
            Easy,
            50.6,
            27.3,
            true,
            "Random contact patterns, 70% density",
        ),
        entry(
            HighNaLines,
            Moderate,
            12.7,
            50.0,
            true,
            "12nm lines, 24nm pitch",
        ),
        entry(
            HighNaContacts,
            Easy,
            25.3,
            43.1,
            true,
            "28nm contacts for High-NA EUV",
        ),
        entry(
            Curvilinear,
            Hard,
            6.3,
            8.7,
            false,
            "Curved features (limitation study)",
        ),
        entry(
            GaafetNanosheets,
            Advanced,
            12.0,
            35.5,
            true,
            "Stacked nanosheet transistors",
        ),
        entry(
            Mbcfet,
            Advanced,
            8.0,
            42.1,
            true,
            "Multi-bridge channel FET with variable sheet width",
        ),
        entry(
            BacksidePower,
            Advanced,
            15.0,
            65.3,
            true,
            "Backside power rails with vias",
        ),
        entry(
            Cfet,
            Extreme,
            8.0,
            28.7,
            false,
            "Complementary FET with vertical n/p stacking",
        ),
        entry(
            HighNaSub8,
            Extreme,
            6.0,
            45.2,
            true,
            "Ultra-fine pitch lines",
        ),
        entry(
            StrainEngineering,
            Advanced,
            25.0,
            55.8,
            true,
            "SiGe stressor regions",
        ),
    ]
};

pub fn catalog() -> &'static [CatalogEntry] {
    &CATALOG
}

pub fn catalog_entry(kind: PatternKind) -> &'static CatalogEntry {
    &CATALOG[kind.index()]
}
