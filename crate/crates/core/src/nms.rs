//! Greedy non-maximum suppression over an arbitrary pairwise metric.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CBox;
use crate::metrics::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: CBox,
    pub score: f64,
    #[serde(default)]
    pub category_id: u64,
}

impl Detection {
    pub fn new(bbox: CBox, score: f64, category_id: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidParameter {
                name: "score",
                value: score,
                reason: "detection score must lie in [0, 1]",
            });
        }
        Ok(Self {
            bbox,
            score,
            category_id,
        })
    }
}

/// Visit order: score descending, then original index ascending.
pub fn priority_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| match dets[b].score.total_cmp(&dets[a].score) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    order
}

/// Returns the indices of kept detections in ascending order.
///
/// A detection is removed when its metric to an already kept, higher-priority
/// detection is strictly greater than `threshold`. With `class_aware`, only
/// detections of the same category suppress each other.
pub fn greedy_suppress(
    dets: &[Detection],
    metric: &Metric,
    threshold: f64,
    class_aware: bool,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter {
            name: "nms threshold",
            value: threshold,
            reason: "must lie in [0, 1]",
        });
    }
    metric.validate()?;
    if let Some(d) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
        return Err(Error::InvalidParameter {
            name: "score",
            value: d.score,
            reason: "detection score must lie in [0, 1]",
        });
    }

    let order = priority_order(dets);
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if suppressed[j] || (class_aware && dets[j].category_id != dets[i].category_id) {
                continue;
            }
            if metric.pair(&dets[i].bbox, &dets[j].bbox)? > threshold {
                suppressed[j] = true;
            }
        }
    }
    kept.sort_unstable();
    Ok(kept)
}
