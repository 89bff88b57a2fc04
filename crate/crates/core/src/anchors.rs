//! Dense grid anchors over an image, one grid per pyramid level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorLevel {
    pub stride: f64,
    pub base_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub levels: Vec<AnchorLevel>,
    pub scales: Vec<f64>,
    /// Height / width aspect ratios.
    pub ratios: Vec<f64>,
    #[serde(default = "default_center_offset")]
    pub center_offset: f64,
}

fn default_center_offset() -> f64 {
    0.5
}

impl Default for AnchorSpec {
    /// Strides 4..64 with `base_size = stride`, one scale, ratios 0.5, 1, 2.
    fn default() -> Self {
        Self {
            levels: [4.0, 8.0, 16.0, 32.0, 64.0]
                .into_iter()
                .map(|s| AnchorLevel {
                    stride: s,
                    base_size: s,
                })
                .collect(),
            scales: vec![1.0],
            ratios: vec![0.5, 1.0, 2.0],
            center_offset: 0.5,
        }
    }
}

impl AnchorSpec {
    pub fn single(stride: f64, base_size: f64) -> Self {
        Self {
            levels: vec![AnchorLevel { stride, base_size }],
            scales: vec![1.0],
            ratios: vec![1.0],
            center_offset: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAnchorSpec(msg));
        if self.levels.is_empty() || self.scales.is_empty() || self.ratios.is_empty() {
            return bad("need at least one level, one scale and one ratio".into());
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !(l.stride.is_finite()
                && l.stride > 0.0
                && l.base_size.is_finite()
                && l.base_size > 0.0)
            {
                return bad(format!(
                    "level {i}: stride {} and base_size {} must be positive",
                    l.stride, l.base_size
                ));
            }
        }
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("scale {s} must be positive"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return bad(format!("ratio {r} must be positive"));
        }
        if !(0.0..=1.0).contains(&self.center_offset) {
            return bad(format!(
                "center_offset {} must lie in [0, 1]",
                self.center_offset
            ));
        }
        Ok(())
    }

    /// Grid columns and rows of one level: `ceil(size / stride)` per axis.
    pub fn grid_dims(level: &AnchorLevel, image_size: (f64, f64)) -> (usize, usize) {
        (
            cells(image_size.0, level.stride),
            cells(image_size.1, level.stride),
        )
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    pub fn level_count(&self, level: usize, image_size: (f64, f64)) -> usize {
        let (nx, ny) = Self::grid_dims(&self.levels[level], image_size);
        nx * ny * self.anchors_per_cell()
    }
}

/// `ceil(extent / stride)`, treating quotients within rounding noise of an
/// integer as that integer so that scaling image and stride together never
/// adds a column.
fn cells(extent: f64, stride: f64) -> usize {
    let q = extent / stride;
    let nearest = q.round();
    if (q - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        q.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    pub anchors: Vec<CBox>,
    pub per_level_counts: Vec<usize>,
    pub image_size: (f64, f64),
}

impl AnchorGrid {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Anchors of a single level.
    pub fn level(&self, level: usize) -> &[CBox] {
        let start: usize = self.per_level_counts[..level].iter().sum();
        &self.anchors[start..start + self.per_level_counts[level]]
    }

    /// Anchors of the selected levels, in level order.
    pub fn select_levels(&self, levels: &[usize]) -> Vec<CBox> {
        let mut sorted = levels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        sorted
            .into_iter()
            .filter(|&l| l < self.per_level_counts.len())
            .flat_map(|l| self.level(l).iter().copied())
            .collect()
    }
}

/// Lays out anchors level by level, then row-major over grid cells, then by
/// scale, then by ratio.
pub fn build_grid(spec: &AnchorSpec, image_size: (f64, f64)) -> Result<AnchorGrid> {
    spec.validate()?;
    let (width, height) = image_size;
    if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
        return Err(Error::InvalidParameter {
            name: "image size",
            value: width.min(height),
            reason: "image must have positive area",
        });
    }

    let total: usize = (0..spec.levels.len())
        .map(|l| spec.level_count(l, image_size))
        .sum();
    let mut anchors = Vec::with_capacity(total);
    let mut per_level_counts = Vec::with_capacity(spec.levels.len());

    for level in &spec.levels {
        // (w, h) per (scale, ratio) depend only on the level.
        let shapes: Vec<(f64, f64)> = spec
            .scales
            .iter()
            .flat_map(|&scale| {
                spec.ratios.iter().map(move |&ratio| {
                    let size = level.base_size * scale;
                    let root = ratio.sqrt();
                    (size / root, size * root)
                })
            })
            .collect();
        let (nx, ny) = AnchorSpec::grid_dims(level, image_size);
        let before = anchors.len();
        for j in 0..ny {
            let cy = (j as f64 + spec.center_offset) * level.stride;
            for i in 0..nx {
                let cx = (i as f64 + spec.center_offset) * level.stride;
                for &(w, h) in &shapes {
                    anchors.push(CBox::new(cx, cy, w, h)?);
                }
            }
        }
        per_level_counts.push(anchors.len() - before);
    }

    Ok(AnchorGrid {
        anchors,
        per_level_counts,
        image_size,
    })
}
