//! Built-in experiment configs.

use crate::config::ExperimentConfig;

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal) => {
        Preset { name: $name, text: include_str!(concat!("../presets/", $name, ".toml")) }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig1c"),
    preset!("fig2a"),
    preset!("fig2b"),
    preset!("fig3-tomo"),
    preset!("fig4-errors"),
    preset!("fig4-errors-cpmg"),
    preset!("fig5-3qubit"),
    preset!("fig5-3qubit-q2"),
    preset!("nv-xyn-spectrum"),
    preset!("nv-ddgate"),
    preset!("nv-polarize"),
    preset!("nv-polarize-xyn"),
    preset!("appendixB-scaling"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig::parse(self.text).unwrap_or_else(|e| panic!("preset {} is malformed: {e}", self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_under_its_own_name() {
        assert!(PRESETS.len() >= 10);
        for p in PRESETS {
            let cfg = p.config();
            assert_eq!(cfg.name, p.name);
            assert!(!cfg.description.is_empty(), "{}", p.name);
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn required_presets_exist() {
        for name in [
            "fig1c",
            "fig2a",
            "fig2b",
            "fig3-tomo",
            "fig4-errors",
            "fig5-3qubit",
            "nv-xyn-spectrum",
            "nv-ddgate",
            "nv-polarize",
            "appendixB-scaling",
        ] {
            assert!(find(name).is_some(), "{name}");
        }
    }
}
