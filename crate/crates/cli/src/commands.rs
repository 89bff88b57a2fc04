//! The subcommands. Each writes its reports under `config.out` and returns a
//! short human-readable summary.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use boxsim_core::{
    assign, bucket_histogram, build_grid, calibrate, dotd_scale, greedy_suppress, load_coco,
    synth_dataset, write_coco, AnchorSpec, AnnotationSet, BucketStats, CBox, Detection, MatchTally,
    Metric, NormParams, OverallStats, Thresholds, VERSION,
};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    ConfigError, MetricName, NmsMetricName, NormParamsSetting, RunConfig, ScaleSetting,
};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Calibrate,
    AssignStats,
    Compare,
    Synth,
    NmsDemo,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::AssignStats => "assign-stats",
            Command::Compare => "compare",
            Command::Synth => "synth",
            Command::NmsDemo => "nms-demo",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub const NORM_PARAMS_FILE: &str = "norm_params.json";
pub const ASSIGN_STATS_JSON: &str = "assign_stats.json";
pub const ASSIGN_STATS_CSV: &str = "assign_stats.csv";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_CSV: &str = "compare.csv";
pub const SYNTH_FILE: &str = "synth_coco.json";
pub const NMS_FILE: &str = "nms_kept.json";

pub fn run(command: Command, config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    match command {
        Command::Calibrate => cmd_calibrate(config),
        Command::AssignStats => cmd_assign_stats(config),
        Command::Compare => cmd_compare(config),
        Command::Synth => cmd_synth(config),
        Command::NmsDemo => cmd_nms_demo(config),
    }
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
}

impl<'a> Header<'a> {
    fn new(command: Command, config: &'a RunConfig) -> Self {
        Self {
            tool: "boxsim",
            version: VERSION,
            command: command.as_str(),
            config,
        }
    }

    /// The same header as CSV comment lines.
    fn csv_lines(&self) -> String {
        format!(
            "# {} {} {}\n# config {}\n",
            self.tool,
            self.version,
            self.command,
            serde_json::to_string(self.config).expect("config serializes")
        )
    }
}

pub fn load_dataset(config: &RunConfig) -> Result<AnnotationSet, CliError> {
    match (&config.dataset, config.synth_params()) {
        (Some(path), _) => {
            let (set, summary) = load_coco(path)?;
            if summary.has_warnings() {
                eprintln!("warning: {summary}");
            }
            Ok(set)
        }
        (None, Some(params)) => Ok(synth_dataset(&params)?),
        (None, None) => Err(ConfigError::NoDatasetSource.into()),
    }
}

/// Normalization parameters as configured; `set` is needed only for `"calibrate"`.
pub fn resolve_norm_params(
    config: &RunConfig,
    set: Option<&AnnotationSet>,
) -> Result<NormParams, CliError> {
    match &config.norm_params {
        None => Err(ConfigError::MissingNormParams.into()),
        Some(NormParamsSetting::Manual { m, n }) => Ok(NormParams::manual(*m, *n)?),
        Some(NormParamsSetting::File { path }) => {
            let bad = |reason: String| ConfigError::BadNormParamsFile {
                path: path.clone(),
                reason,
            };
            let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
            Ok(NormParams::from_json(&text).map_err(|e| bad(e.to_string()))?)
        }
        Some(NormParamsSetting::Keyword(_)) => {
            let set = set.ok_or(ConfigError::NoDatasetSource)?;
            Ok(calibrate(
                set,
                &config.anchors,
                &config.calibration_options(),
            )?)
        }
    }
}

pub fn resolve_metric(
    name: MetricName,
    config: &RunConfig,
    set: &AnnotationSet,
) -> Result<Metric, CliError> {
    Ok(match name {
        MetricName::Iou => Metric::Iou,
        MetricName::Dotd => Metric::Dotd {
            scale: match config.dotd_scale {
                ScaleSetting::Value(s) => s,
                ScaleSetting::Keyword(_) => dotd_scale(set)?,
            },
        },
        MetricName::Nwd => Metric::Nwd {
            constant: config.nwd_constant,
        },
        MetricName::Rfd => Metric::Rfd {
            beta: config.rfd_beta,
        },
        MetricName::Simd => Metric::Simd {
            params: resolve_norm_params(config, Some(set))?,
            mode: config.norm_mode,
        },
    })
}

/// Anchor grids keyed by image size.
struct GridCache<'a> {
    spec: &'a AnchorSpec,
    grids: HashMap<(u64, u64), Vec<CBox>>,
}

impl<'a> GridCache<'a> {
    fn new(spec: &'a AnchorSpec) -> Self {
        Self {
            spec,
            grids: HashMap::new(),
        }
    }

    fn get(&mut self, size: (f64, f64)) -> boxsim_core::Result<&[CBox]> {
        let key = (size.0.to_bits(), size.1.to_bits());
        if !self.grids.contains_key(&key) {
            self.grids.insert(key, build_grid(self.spec, size)?.anchors);
        }
        Ok(&self.grids[&key])
    }
}

/// Assigns every image with at least one gt and tallies the per-bucket
/// statistics.
pub fn evaluate(
    set: &AnnotationSet,
    spec: &AnchorSpec,
    metric: &Metric,
    thresholds: &Thresholds,
) -> boxsim_core::Result<MatchTally> {
    let mut grids = GridCache::new(spec);
    let mut tally = MatchTally::new();
    for img in set.images.iter().filter(|i| !i.gts.is_empty()) {
        let gts = img.boxes();
        let anchors = grids.get(img.size())?;
        let result = assign(&metric.matrix(&gts, anchors)?, thresholds)?;
        tally.add(&result, &gts)?;
    }
    Ok(tally)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, contents))
        .map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_calibrate(config: &RunConfig) -> Result<Outcome, CliError> {
    let set = load_dataset(config)?;
    let params = calibrate(&set, &config.anchors, &config.calibration_options())?;
    let path = write_file(&config.out, NORM_PARAMS_FILE, &params.to_json())?;
    Ok(Outcome {
        summary: format!(
            "m = {}\nn = {}\npair_count = {}\n",
            params.m(),
            params.n(),
            params.pair_count()
        ),
        files: vec![path],
    })
}

const STATS_COLUMNS: &str =
    "bucket,gt_count,mean_positives,unmatched_fraction,threshold_unmatched_fraction,mean_best_score";

fn stats_row(label: &str, gt_count: usize, s: [f64; 4]) -> String {
    format!("{label},{gt_count},{},{},{},{}\n", s[0], s[1], s[2], s[3])
}

fn bucket_row(b: &BucketStats) -> String {
    stats_row(
        b.bucket.as_str(),
        b.gt_count,
        [
            b.mean_positives,
            b.unmatched_fraction,
            b.threshold_unmatched_fraction,
            b.mean_best_score,
        ],
    )
}

fn overall_row(o: &OverallStats) -> String {
    stats_row(
        "all",
        o.gt_count,
        [
            o.mean_positives,
            o.unmatched_fraction,
            o.threshold_unmatched_fraction,
            o.mean_best_score,
        ],
    )
}

#[derive(Serialize)]
struct StatsReport<'a> {
    header: Header<'a>,
    metric: &'a Metric,
    images: usize,
    buckets: Vec<BucketStats>,
    overall: Option<OverallStats>,
}

fn cmd_assign_stats(config: &RunConfig) -> Result<Outcome, CliError> {
    let set = load_dataset(config)?;
    let metric = resolve_metric(config.metric, config, &set)?;
    let tally = evaluate(&set, &config.anchors, &metric, &config.thresholds)?;
    let report = StatsReport {
        header: Header::new(Command::AssignStats, config),
        metric: &metric,
        images: set.images.len(),
        buckets: tally.summary(),
        overall: tally.overall(),
    };

    let mut csv = report.header.csv_lines();
    csv.push_str(STATS_COLUMNS);
    csv.push('\n');
    let mut summary = format!("metric {}\n{STATS_COLUMNS}\n", metric.name());
    for b in &report.buckets {
        csv.push_str(&bucket_row(b));
        summary.push_str(&bucket_row(b));
    }
    if let Some(o) = &report.overall {
        csv.push_str(&overall_row(o));
        summary.push_str(&overall_row(o));
    }

    let files = vec![
        write_file(&config.out, ASSIGN_STATS_JSON, &pretty(&report))?,
        write_file(&config.out, ASSIGN_STATS_CSV, &csv)?,
    ];
    Ok(Outcome { files, summary })
}

/// Boxes that overlap or touch.
fn near(g: &CBox, a: &CBox) -> bool {
    (g.cx() - a.cx()).abs() <= 0.5 * (g.w() + a.w())
        && (g.cy() - a.cy()).abs() <= 0.5 * (g.h() + a.h())
}

#[derive(Serialize)]
struct MetricSummary<'a> {
    metric: &'a str,
    overall: Option<OverallStats>,
    buckets: Vec<BucketStats>,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    header: Header<'a>,
    metrics: &'a [Metric],
    candidate_pairs: usize,
    listed_pairs: usize,
    summaries: Vec<MetricSummary<'a>>,
}

fn cmd_compare(config: &RunConfig) -> Result<Outcome, CliError> {
    let set = load_dataset(config)?;
    let metrics = MetricName::ALL
        .into_iter()
        .map(|name| resolve_metric(name, config, &set))
        .collect::<Result<Vec<_>, _>>()?;

    // (image, gt, anchor) triples of overlapping pairs.
    let mut grids = GridCache::new(&config.anchors);
    let mut candidates = Vec::new();
    for (i, img) in set.images.iter().enumerate() {
        if img.gts.is_empty() {
            continue;
        }
        let anchors = grids.get(img.size())?;
        for (g, gt) in img.gts.iter().enumerate() {
            for (a, anchor) in anchors.iter().enumerate() {
                if near(&gt.bbox, anchor) {
                    candidates.push((i, g, a));
                }
            }
        }
    }
    let selected: Vec<usize> = if candidates.len() <= config.compare_samples {
        (0..candidates.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked =
            index::sample(&mut rng, candidates.len(), config.compare_samples).into_vec();
        picked.sort_unstable();
        picked
    };

    let header = Header::new(Command::Compare, config);
    let mut csv = header.csv_lines();
    csv.push_str("image_id,gt_index,anchor_index,gt_cx,gt_cy,gt_w,gt_h,anchor_cx,anchor_cy,anchor_w,anchor_h");
    for m in &metrics {
        csv.push(',');
        csv.push_str(m.name());
    }
    csv.push('\n');
    for &k in &selected {
        let (i, g, a) = candidates[k];
        let img = &set.images[i];
        let gt = img.gts[g].bbox;
        let anchor = grids.get(img.size())?[a];
        let [gx, gy, gw, gh] = gt.to_array();
        let [ax, ay, aw, ah] = anchor.to_array();
        csv.push_str(&format!(
            "{},{g},{a},{gx},{gy},{gw},{gh},{ax},{ay},{aw},{ah}",
            img.id
        ));
        for m in &metrics {
            csv.push_str(&format!(",{}", m.pair(&gt, &anchor)?));
        }
        csv.push('\n');
    }

    let mut summary = format!(
        "{} of {} overlapping pairs listed\nmetric,gt_count,mean_positives,unmatched_fraction,threshold_unmatched_fraction,mean_best_score\n",
        selected.len(),
        candidates.len()
    );
    let mut summaries = Vec::with_capacity(metrics.len());
    for m in &metrics {
        let tally = evaluate(&set, &config.anchors, m, &config.thresholds)?;
        let overall = tally.overall();
        if let Some(o) = &overall {
            summary.push_str(&overall_row(o).replacen("all", m.name(), 1));
        }
        summaries.push(MetricSummary {
            metric: m.name(),
            overall,
            buckets: tally.summary(),
        });
    }
    let report = CompareReport {
        header,
        metrics: &metrics,
        candidate_pairs: candidates.len(),
        listed_pairs: selected.len(),
        summaries,
    };

    let files = vec![
        write_file(&config.out, COMPARE_JSON, &pretty(&report))?,
        write_file(&config.out, COMPARE_CSV, &csv)?,
    ];
    Ok(Outcome { files, summary })
}

fn cmd_synth(config: &RunConfig) -> Result<Outcome, CliError> {
    let (Some(synth), None) = (&config.synthetic, &config.dataset) else {
        return Err(ConfigError::NotSynthetic.into());
    };
    let params = config.synth_params().expect("synthetic section present");
    let set = synth_dataset(&params)?;
    let histogram = bucket_histogram(&set);

    let mut summary = format!("{} images, {} objects\n", set.images.len(), set.gt_count());
    let mut buckets = serde_json::Map::new();
    for (bucket, count) in &histogram {
        summary.push_str(&format!("{bucket}: {count}\n"));
        buckets.insert(bucket.as_str().into(), (*count).into());
    }
    let info = json!({
        "description": "synthetic boxes",
        "generator": format!("boxsim {VERSION}"),
        "seed": params.seed,
        "image_size": [synth.image_size.0, synth.image_size.1],
        "scale_range": [synth.scale_range.0, synth.scale_range.1],
        "objects_per_image": synth.objects_per_image,
        "size_buckets": buckets,
    });
    let path = write_file(&config.out, SYNTH_FILE, &write_coco(&set, Some(info)))?;
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}

#[derive(Serialize)]
struct NmsReport<'a> {
    header: Header<'a>,
    metric: &'a Metric,
    threshold: f64,
    class_aware: bool,
    input_count: usize,
    kept_indices: &'a [usize],
    kept: Vec<Detection>,
}

fn cmd_nms_demo(config: &RunConfig) -> Result<Outcome, CliError> {
    let path = config
        .detections
        .as_ref()
        .ok_or(ConfigError::MissingDetections)?;
    let bad = |reason: String| CliError::Detections {
        path: path.clone(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let dets: Vec<Detection> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    for (i, d) in dets.iter().enumerate() {
        Detection::new(d.bbox, d.score, d.category_id).map_err(|e| bad(format!("row {i}: {e}")))?;
    }

    let metric = match config.nms.metric {
        NmsMetricName::Iou => Metric::Iou,
        NmsMetricName::Simd => {
            let set = match config.norm_params {
                Some(NormParamsSetting::Keyword(_)) => Some(load_dataset(config)?),
                _ => None,
            };
            Metric::Simd {
                params: resolve_norm_params(config, set.as_ref())?,
                mode: config.norm_mode,
            }
        }
    };
    let kept = greedy_suppress(&dets, &metric, config.nms.threshold, config.nms.class_aware)?;
    let report = NmsReport {
        header: Header::new(Command::NmsDemo, config),
        metric: &metric,
        threshold: config.nms.threshold,
        class_aware: config.nms.class_aware,
        input_count: dets.len(),
        kept_indices: &kept,
        kept: kept.iter().map(|&i| dets[i]).collect(),
    };
    let path = write_file(&config.out, NMS_FILE, &pretty(&report))?;
    Ok(Outcome {
        files: vec![path],
        summary: format!(
            "kept {} of {} detections ({} > {} suppresses)\n",
            kept.len(),
            dets.len(),
            metric.name(),
            config.nms.threshold
        ),
    })
}
