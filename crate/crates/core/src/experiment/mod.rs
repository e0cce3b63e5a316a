//! Experiment configs, named presets and the runner that turns a config into
//! CSV/JSON artifacts.

mod config;
mod presets;
mod run;

pub use config::{
    AdditiveSetup, CouplingConfig, DynamicConfig, ExperimentConfig, ExperimentKind, MdpSetup, MdpSource, NoiseConfig,
    PieceConfig, QModeConfig, RandomMdpConfig, Setup, W2Config,
};
pub use presets::{preset, preset_names, preset_source};
pub use run::{run_experiment, CouplingEntry, CouplingReport, MdpSummary, MeanSe, RunArtifacts, W2Row};
