//! Experiment configuration, synthetic data, presets and result files.

mod config;
mod noise;
mod output;
mod presets;
mod run;
pub mod svg;

pub use config::{
    load_config, CoefficientSpec, ExperimentSpec, GridSpec, InitialGuess, InitialProfile,
    NoiseConfig, ObservationConfig, Region, SourceSpec, TimeProfile,
};
pub use noise::{add_noise, NoiseKind, NoiseModel};
pub use output::{
    emit_convergence, emit_counterexample, emit_forward, emit_outputs, emit_preset,
    write_intensity_csv, write_summary, Summary,
};
pub use presets::{
    eigenmode_error, preset_spec, run_convergence, run_counterexample, run_preset,
    ConvergenceConfig, ConvergenceReport, CounterexampleConfig, CounterexampleReport, Overrides,
    PresetReport, PRESETS,
};
pub use run::{
    generate_data, run_forward, run_inversion, solve_fine, windowed_intensity_error, ForwardReport,
    InversionReport, ParamVectorRecord, SyntheticData,
};
