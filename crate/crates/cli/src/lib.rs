//! Command-line front end: run configuration, reports and the `boxsim`
//! subcommands (`calibrate`, `assign-stats`, `compare`, `synth`, `nms-demo`).

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    evaluate, load_dataset, resolve_metric, resolve_norm_params, run, Command, Outcome,
};
pub use config::{
    ConfigError, MetricName, NmsMetricName, NormParamsSetting, Overrides, RunConfig, ScaleSetting,
    SynthConfig,
};
pub use error::CliError;
