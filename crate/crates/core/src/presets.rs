//! Built-in simulation scenarios.

use crate::error::{Error, Result};
use crate::montecarlo::SimScenario;

/// `(name, scenario file body)` for every shipped preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("table1_sigU1.5_n1000", include_str!("../presets/table1_sigU1.5_n1000.scn")),
    ("table1_sigU1.5_n2000", include_str!("../presets/table1_sigU1.5_n2000.scn")),
    ("table1_sigU1.5_n500", include_str!("../presets/table1_sigU1.5_n500.scn")),
    ("table1_sigU1.5_n5000", include_str!("../presets/table1_sigU1.5_n5000.scn")),
    ("table1_sigU3_n1000", include_str!("../presets/table1_sigU3_n1000.scn")),
    ("table1_sigU3_n2000", include_str!("../presets/table1_sigU3_n2000.scn")),
    ("table1_sigU3_n500", include_str!("../presets/table1_sigU3_n500.scn")),
    ("table1_sigU3_n5000", include_str!("../presets/table1_sigU3_n5000.scn")),
    ("table2_sigU1.5_n1000", include_str!("../presets/table2_sigU1.5_n1000.scn")),
    ("table2_sigU1.5_n2000", include_str!("../presets/table2_sigU1.5_n2000.scn")),
    ("table2_sigU1.5_n500", include_str!("../presets/table2_sigU1.5_n500.scn")),
    ("table2_sigU1.5_n5000", include_str!("../presets/table2_sigU1.5_n5000.scn")),
    ("table2_sigU3_n1000", include_str!("../presets/table2_sigU3_n1000.scn")),
    ("table2_sigU3_n2000", include_str!("../presets/table2_sigU3_n2000.scn")),
    ("table2_sigU3_n500", include_str!("../presets/table2_sigU3_n500.scn")),
    ("table2_sigU3_n5000", include_str!("../presets/table2_sigU3_n5000.scn")),
    ("table3_sigU1.5", include_str!("../presets/table3_sigU1.5.scn")),
    ("table3_sigU1.5_n1000", include_str!("../presets/table3_sigU1.5_n1000.scn")),
    ("table3_sigU2", include_str!("../presets/table3_sigU2.scn")),
    ("table3_sigU2_n1000", include_str!("../presets/table3_sigU2_n1000.scn")),
    ("table3_sigU3", include_str!("../presets/table3_sigU3.scn")),
    ("table3_sigU3_n1000", include_str!("../presets/table3_sigU3_n1000.scn")),
    ("table3_sigU4", include_str!("../presets/table3_sigU4.scn")),
    ("table3_sigU4_n1000", include_str!("../presets/table3_sigU4_n1000.scn")),
    ("table4_lU0.05_sigU1_1.5", include_str!("../presets/table4_lU0.05_sigU1_1.5.scn")),
    ("table4_lU0.05_sigU1_2", include_str!("../presets/table4_lU0.05_sigU1_2.scn")),
    ("table4_lU0.05_sigU1_3", include_str!("../presets/table4_lU0.05_sigU1_3.scn")),
    ("table4_lU0.15_sigU1_1.5", include_str!("../presets/table4_lU0.15_sigU1_1.5.scn")),
    ("table4_lU0.15_sigU1_2", include_str!("../presets/table4_lU0.15_sigU1_2.scn")),
    ("table4_lU0.15_sigU1_3", include_str!("../presets/table4_lU0.15_sigU1_3.scn")),
    ("table4_lU0.25_sigU1_1.5", include_str!("../presets/table4_lU0.25_sigU1_1.5.scn")),
    ("table4_lU0.25_sigU1_2", include_str!("../presets/table4_lU0.25_sigU1_2.scn")),
    ("table4_lU0.25_sigU1_3", include_str!("../presets/table4_lU0.25_sigU1_3.scn")),
    ("table5_ar1_ar1", include_str!("../presets/table5_ar1_ar1.scn")),
    ("table5_ar1_cs", include_str!("../presets/table5_ar1_cs.scn")),
    ("table5_ar1_exp", include_str!("../presets/table5_ar1_exp.scn")),
    ("table5_ar1_un", include_str!("../presets/table5_ar1_un.scn")),
    ("table5_cs_ar1", include_str!("../presets/table5_cs_ar1.scn")),
    ("table5_cs_cs", include_str!("../presets/table5_cs_cs.scn")),
    ("table5_cs_exp", include_str!("../presets/table5_cs_exp.scn")),
    ("table5_cs_un", include_str!("../presets/table5_cs_un.scn")),
    ("table5_exp_ar1", include_str!("../presets/table5_exp_ar1.scn")),
    ("table5_exp_cs", include_str!("../presets/table5_exp_cs.scn")),
    ("table5_exp_un", include_str!("../presets/table5_exp_un.scn")),
    ("table5_un_ar1", include_str!("../presets/table5_un_ar1.scn")),
    ("table5_un_cs", include_str!("../presets/table5_un_cs.scn")),
    ("table5_un_exp", include_str!("../presets/table5_un_exp.scn")),
    ("table5_un_un", include_str!("../presets/table5_un_un.scn")),
];

/// Short names resolving to the `n = 2000` rows.
pub const ALIASES: &[(&str, &str)] = &[
    ("table1_sigU1.5", "table1_sigU1.5_n2000"),
    ("table1_sigU3", "table1_sigU3_n2000"),
    ("table2_sigU1.5", "table2_sigU1.5_n2000"),
    ("table2_sigU3", "table2_sigU3_n2000"),
];

fn canonical(name: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, b)| b)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    let name = canonical(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n).chain(ALIASES.iter().map(|(a, _)| *a))
}

/// Parse a preset by name or alias.
pub fn load_preset(name: &str) -> Result<SimScenario> {
    let text = preset_text(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    SimScenario::parse(text)
}
