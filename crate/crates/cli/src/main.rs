use std::path::PathBuf;
use std::process::ExitCode;

use boxsim_cli::{
    run, Command, MetricName, NmsMetricName, NormParamsSetting, Overrides, RunConfig,
};
use boxsim_core::NormMode;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "boxsim",
    version,
    about = "Box similarity metrics, calibration and label assignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute normalization parameters (m, n) for a dataset.
    Calibrate,
    /// Per-size-bucket assignment statistics for one metric.
    AssignStats,
    /// All five metrics side by side on gt-anchor pairs.
    Compare,
    /// Write a synthetic COCO dataset.
    Synth,
    /// Greedy NMS over a detections file.
    NmsDemo,
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// COCO annotations file.
    #[arg(long, global = true, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// iou, dotd, nwd, rfd or simd.
    #[arg(long, global = true, value_name = "NAME")]
    metric: Option<MetricName>,
    #[arg(long, global = true)]
    pos: Option<f64>,
    #[arg(long, global = true)]
    neg: Option<f64>,
    #[arg(long, global = true)]
    min_pos: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// both, width, height or none.
    #[arg(long, global = true, value_name = "MODE")]
    norm_mode: Option<NormMode>,
    /// `calibrate` or a norm_params.json file.
    #[arg(long, global = true, value_name = "PATH")]
    norm_params: Option<NormParamsSetting>,
    /// iou or simd.
    #[arg(long, global = true, value_name = "NAME")]
    nms_metric: Option<NmsMetricName>,
    #[arg(long, global = true, value_name = "THR")]
    nms_thr: Option<f64>,
    /// Detections JSON for nms-demo.
    #[arg(long, global = true, value_name = "PATH")]
    detections: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Calibrate => Command::Calibrate,
        Cmd::AssignStats => Command::AssignStats,
        Cmd::Compare => Command::Compare,
        Cmd::Synth => Command::Synth,
        Cmd::NmsDemo => Command::NmsDemo,
    };
    let f = cli.flags;
    let mut config = match &f.config {
        Some(path) => match RunConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    Overrides {
        dataset: f.dataset,
        out: f.out,
        metric: f.metric,
        pos: f.pos,
        neg: f.neg,
        min_pos: f.min_pos,
        seed: f.seed,
        norm_mode: f.norm_mode,
        norm_params: f.norm_params,
        nms_metric: f.nms_metric,
        nms_thr: f.nms_thr,
        detections: f.detections,
    }
    .apply(&mut config);

    match run(command, &config) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
