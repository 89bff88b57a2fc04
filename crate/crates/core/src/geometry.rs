//! Box and parameter types shared by every metric.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to calibrated normalization parameters.
pub const EPS_NORM: f64 = 1e-4;

/// Axis-aligned box in center form, in pixels.
///
/// Width and height are strictly positive and all fields are finite. The
/// constructor enforces this, so every `CBox` in circulation is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct CBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl CBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let reason = if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            Some("fields must be finite")
        } else if w <= 0.0 || h <= 0.0 {
            Some("width and height must be positive")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox {
                cx,
                cy,
                w,
                h,
                reason,
            }),
            None => Ok(Self { cx, cy, w, h }),
        }
    }

    /// Converts a top-left `[x, y, w, h]` box.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Geometric mean edge, `sqrt(w * h)`.
    pub fn scale(&self) -> f64 {
        (self.w * self.h).sqrt()
    }

    /// `(x1, y1, x2, y2)` corners.
    #[inline]
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    /// Top-left `[x, y, w, h]`.
    pub fn to_xywh(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.w,
            self.h,
        ]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    /// Multiplies all four fields by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }
}

impl TryFrom<[f64; 4]> for CBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<CBox> for [f64; 4] {
    fn from(b: CBox) -> Self {
        b.to_array()
    }
}

/// Which dimensions use the calibrated normalization parameters.
///
/// A disabled dimension uses a parameter of 1, so its terms are still divided
/// by the summed extent of the two boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    Both,
    #[serde(rename = "width")]
    WidthOnly,
    #[serde(rename = "height")]
    HeightOnly,
    None,
}

impl NormMode {
    pub const ALL: [NormMode; 4] = [
        NormMode::Both,
        NormMode::WidthOnly,
        NormMode::HeightOnly,
        NormMode::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormMode::Both => "both",
            NormMode::WidthOnly => "width",
            NormMode::HeightOnly => "height",
            NormMode::None => "none",
        }
    }

    /// The `(m, n)` actually used once the mode is applied.
    pub fn effective(&self, params: &NormParams) -> (f64, f64) {
        match self {
            NormMode::Both => (params.m, params.n),
            NormMode::WidthOnly => (params.m, 1.0),
            NormMode::HeightOnly => (1.0, params.n),
            NormMode::None => (1.0, 1.0),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "both" => Ok(NormMode::Both),
            "width" => Ok(NormMode::WidthOnly),
            "height" => Ok(NormMode::HeightOnly),
            "none" => Ok(NormMode::None),
            other => Err(format!(
                "unknown norm mode `{other}` (expected both, width, height or none)"
            )),
        }
    }
}

/// Normalization parameters `m` (x / width) and `n` (y / height).
///
/// Serialized as `{m, n, pair_count, source_tag}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormParams")]
pub struct NormParams {
    m: f64,
    n: f64,
    pair_count: u64,
    source_tag: String,
}

#[derive(Deserialize)]
struct RawNormParams {
    m: f64,
    n: f64,
    #[serde(default)]
    pair_count: u64,
    #[serde(default)]
    source_tag: String,
}

impl TryFrom<RawNormParams> for NormParams {
    type Error = Error;

    fn try_from(raw: RawNormParams) -> Result<Self> {
        Self::new(raw.m, raw.n, raw.pair_count, raw.source_tag)
    }
}

impl NormParams {
    pub fn new(m: f64, n: f64, pair_count: u64, source_tag: impl Into<String>) -> Result<Self> {
        for (name, value) in [("m", m), ("n", n)] {
            if !value.is_finite() || value < EPS_NORM {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "normalization parameters must be finite and >= 1e-4",
                });
            }
        }
        Ok(Self {
            m,
            n,
            pair_count,
            source_tag: source_tag.into(),
        })
    }

    /// Hand-supplied parameters; `pair_count` is zero.
    pub fn manual(m: f64, n: f64) -> Result<Self> {
        Self::new(m, n, 0, "manual")
    }

    /// `m = n = 1`.
    pub fn unit() -> Self {
        Self::manual(1.0, 1.0).expect("unit params are valid")
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn pair_count(&self) -> u64 {
        self.pair_count
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("NormParams serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Dense row-major grid of pairwise scores: rows are ground truths, columns
/// are anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl MetricMatrix {
    /// Wraps `values`, checking the shape and that every entry is in `[0, 1]`.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::LengthMismatch {
                what: "matrix values",
                got: values.len(),
                expected: rows.saturating_mul(cols),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter {
                name: "matrix entry",
                value: bad,
                reason: "scores must lie in [0, 1]",
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                what: "matrix row",
                got: r.len(),
                expected: cols,
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Internal constructor for producers that already guarantee the range.
    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
