use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;

const PRESETS: &[(&str, &str)] = &[
    ("fig5a", include_str!("../../presets/fig5a.toml")),
    ("fig5b", include_str!("../../presets/fig5b.toml")),
    ("fig5c", include_str!("../../presets/fig5c.toml")),
    ("coupling", include_str!("../../presets/coupling.toml")),
    ("w2", include_str!("../../presets/w2.toml")),
    ("smooth", include_str!("../../presets/smooth.toml")),
    ("universality-gaussian", include_str!("../../presets/universality-gaussian.toml")),
    ("universality-rademacher", include_str!("../../presets/universality-rademacher.toml")),
    ("q-small-step", include_str!("../../presets/q-small-step.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// TOML source of a named preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let src = preset_source(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}`; available: {}",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ExperimentConfig::from_toml(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::{DynamicConfig, Setup};
    use crate::mdp::{classify, solve_q_star, MdpType, DEFAULT_TIE_TOL};

    #[test]
    fn every_preset_parses_and_builds() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name.as_deref(), Some(name));
            cfg.dynamic.build(cfg.seed).unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn q_presets_share_the_base_mdp_and_differ_in_type() {
        let load = |name| match preset(name).unwrap().dynamic.build(0).unwrap() {
            Setup::Mdp(m) => m.mdp,
            Setup::Additive(_) => panic!("expected an MDP"),
        };
        let (a, b) = (load("fig5b"), load("fig5c"));
        // Only state 0, action 1 differs.
        assert_eq!(a.transition_row(0), b.transition_row(0));
        assert_eq!(a.transitions()[2 * 3..], b.transitions()[2 * 3..]);
        assert_eq!(a.rewards()[2..], b.rewards()[2..]);
        let kind = |m| classify(m, &solve_q_star(m, 1e-12, None).unwrap(), DEFAULT_TIE_TOL).unwrap().mdp_type;
        assert_eq!(kind(&a), MdpType::TypeA { witness: 0 });
        assert_eq!(kind(&b), MdpType::TypeB);
        assert!(matches!(preset("fig5b").unwrap().dynamic, DynamicConfig::Mdp { type_a: true, .. }));
    }
}
