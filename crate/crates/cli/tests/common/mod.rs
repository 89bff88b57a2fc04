//! Golden-file cases shared by the CLI tests and the acceptance suite.
//!
//! Set `BOXSIM_BLESS=1` to rewrite the committed outputs.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub files: &'static [&'static str],
}

pub const CASES: &[Case] = &[
    Case {
        name: "calibrate_tiny",
        args: &["calibrate", "--config", "calibrate_tiny.json"],
        files: &["norm_params.json"],
    },
    Case {
        name: "calibrate_synth",
        args: &["calibrate", "--config", "synth.json"],
        files: &["norm_params.json"],
    },
    Case {
        name: "assign_stats_simd",
        args: &["assign-stats", "--config", "synth.json"],
        files: &["assign_stats.json", "assign_stats.csv"],
    },
    Case {
        name: "assign_stats_iou",
        args: &[
            "assign-stats",
            "--config",
            "synth.json",
            "--metric",
            "iou",
            "--min-pos",
            "0.2",
        ],
        files: &["assign_stats.csv"],
    },
    Case {
        name: "compare_pair",
        args: &["compare", "--config", "compare_pair.json"],
        files: &["compare.json", "compare.csv"],
    },
    Case {
        name: "compare_synth",
        args: &["compare", "--config", "synth.json"],
        files: &["compare.json", "compare.csv"],
    },
    Case {
        name: "synth",
        args: &["synth", "--config", "synth.json"],
        files: &["synth_coco.json"],
    },
    Case {
        name: "nms_iou",
        args: &["nms-demo", "--detections", "detections.json"],
        files: &["nms_kept.json"],
    },
    Case {
        name: "nms_simd",
        args: &["nms-demo", "--config", "nms_simd.json"],
        files: &["nms_kept.json"],
    },
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Runs the binary from the fixtures directory so relative paths in the
/// configs resolve there.
pub fn boxsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .current_dir(fixtures())
        .output()
        .expect("boxsim runs")
}

fn blessing() -> bool {
    std::env::var_os("BOXSIM_BLESS").is_some_and(|v| v == "1")
}

fn first_difference(expected: &str, actual: &str) -> String {
    for (i, (e, a)) in expected.lines().zip(actual.lines()).enumerate() {
        if e != a {
            return format!("line {}: expected `{e}`, got `{a}`", i + 1);
        }
    }
    format!(
        "lengths differ ({} vs {} lines)",
        expected.lines().count(),
        actual.lines().count()
    )
}

pub fn check_case(case: &Case) -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let output = boxsim(case.args, tmp.path());
    if !output.status.success() {
        return Err(format!(
            "{}: exit {:?}: {}",
            case.name,
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    for file in case.files {
        let actual = fs::read_to_string(tmp.path().join(file))
            .map_err(|e| format!("{}/{file}: {e}", case.name))?;
        let golden = golden_dir().join(case.name).join(file);
        if blessing() {
            fs::create_dir_all(golden.parent().unwrap()).map_err(|e| e.to_string())?;
            fs::write(&golden, &actual).map_err(|e| e.to_string())?;
            continue;
        }
        let expected = fs::read_to_string(&golden)
            .map_err(|e| format!("{}: {e} (run with BOXSIM_BLESS=1)", golden.display()))?;
        if expected != actual {
            return Err(format!(
                "{}/{file}: {}",
                case.name,
                first_difference(&expected, &actual)
            ));
        }
    }
    Ok(())
}
