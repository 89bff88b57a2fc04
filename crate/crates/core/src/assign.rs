//! Threshold label assignment with a low-quality-match fallback.
//!
//! Works on any [`MetricMatrix`] (rows = gts, columns = anchors), so the same
//! assigner serves IoU, SimD and the other distance-based metrics.
//!
//! 1. Each anchor takes its best gt (lowest gt index on ties). Its score
//!    `> pos` makes it positive, `< neg` negative, anything else ignored.
//! 2. Every gt left without a positive whose best score is `> min_pos`
//!    claims one anchor. Claims are served in order of descending best score
//!    (lower gt index on ties). A gt takes its best anchor, or if that anchor
//!    is already positive, its best remaining non-positive anchor that still
//!    scores `> min_pos`. Existing positives are never relabeled.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::{size_bucket, SizeBucket};
use crate::error::{Error, Result};
use crate::geometry::{CBox, MetricMatrix};
use crate::sum::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub pos: f64,
    pub neg: f64,
    pub min_pos: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            pos: 0.7,
            neg: 0.3,
            min_pos: 0.3,
        }
    }
}

impl Thresholds {
    pub fn new(pos: f64, neg: f64, min_pos: f64) -> Result<Self> {
        let t = Self { pos, neg, min_pos };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "threshold must lie in [0, 1]",
                })
            }
        };
        unit("pos", self.pos)?;
        unit("neg", self.neg)?;
        unit("min_pos", self.min_pos)?;
        if self.neg > self.pos {
            return Err(Error::InvalidParameter {
                name: "neg",
                value: self.neg,
                reason: "negative threshold must not exceed the positive threshold",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
    Ignore,
}

impl AnchorLabel {
    /// `gt index`, `-1` for negative, `-2` for ignore.
    pub fn to_code(self) -> i64 {
        match self {
            AnchorLabel::Positive(g) => g as i64,
            AnchorLabel::Negative => -1,
            AnchorLabel::Ignore => -2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, AnchorLabel::Positive(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub anchor_labels: Vec<AnchorLabel>,
    /// Positive anchors per gt after the fallback step.
    pub gt_match_counts: Vec<usize>,
    /// Positive anchors per gt from the thresholds alone.
    pub gt_threshold_counts: Vec<usize>,
    /// `(best anchor index, best score)` per gt.
    pub gt_best: Vec<(usize, f64)>,
    /// Anchor relabeled positive by the fallback step, per gt.
    pub gt_fallback: Vec<Option<usize>>,
}

impl AssignmentResult {
    pub fn num_gts(&self) -> usize {
        self.gt_match_counts.len()
    }

    pub fn label_codes(&self) -> Vec<i64> {
        self.anchor_labels.iter().map(|l| l.to_code()).collect()
    }
}

/// Index of the largest value, lowest index on ties.
#[inline]
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

pub fn assign(matrix: &MetricMatrix, thresholds: &Thresholds) -> Result<AssignmentResult> {
    thresholds.validate()?;
    if matrix.is_empty() {
        return Err(Error::EmptyInput(
            "assignment needs at least one gt and one anchor",
        ));
    }
    let (num_gts, num_anchors) = (matrix.rows(), matrix.cols());

    // Per-anchor best gt; rows are scanned in order so ties keep the lower gt.
    let mut anchor_best: Vec<f64> = matrix.row(0).to_vec();
    let mut anchor_gt = vec![0usize; num_anchors];
    for g in 1..num_gts {
        for (j, &v) in matrix.row(g).iter().enumerate() {
            if v > anchor_best[j] {
                anchor_best[j] = v;
                anchor_gt[j] = g;
            }
        }
    }

    let mut anchor_labels: Vec<AnchorLabel> = anchor_best
        .iter()
        .zip(&anchor_gt)
        .map(|(&score, &g)| {
            if score > thresholds.pos {
                AnchorLabel::Positive(g)
            } else if score < thresholds.neg {
                AnchorLabel::Negative
            } else {
                AnchorLabel::Ignore
            }
        })
        .collect();

    let mut gt_threshold_counts = vec![0usize; num_gts];
    for label in &anchor_labels {
        if let AnchorLabel::Positive(g) = label {
            gt_threshold_counts[*g] += 1;
        }
    }
    let gt_best: Vec<(usize, f64)> = (0..num_gts).map(|g| argmax(matrix.row(g))).collect();

    let mut claims: Vec<usize> = (0..num_gts)
        .filter(|&g| gt_threshold_counts[g] == 0 && gt_best[g].1 > thresholds.min_pos)
        .collect();
    claims.sort_by(|&a, &b| match gt_best[b].1.total_cmp(&gt_best[a].1) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });

    let mut gt_fallback = vec![None; num_gts];
    for g in claims {
        let (best_anchor, _) = gt_best[g];
        let target = if !anchor_labels[best_anchor].is_positive() {
            Some(best_anchor)
        } else {
            let mut alt: Option<(usize, f64)> = None;
            for (j, &v) in matrix.row(g).iter().enumerate() {
                if v > thresholds.min_pos
                    && !anchor_labels[j].is_positive()
                    && alt.is_none_or(|(_, best)| v > best)
                {
                    alt = Some((j, v));
                }
            }
            alt.map(|(j, _)| j)
        };
        if let Some(j) = target {
            anchor_labels[j] = AnchorLabel::Positive(g);
            gt_fallback[g] = Some(j);
        }
    }

    let mut gt_match_counts = vec![0usize; num_gts];
    for label in &anchor_labels {
        if let AnchorLabel::Positive(g) = label {
            gt_match_counts[*g] += 1;
        }
    }

    Ok(AssignmentResult {
        anchor_labels,
        gt_match_counts,
        gt_threshold_counts,
        gt_best,
        gt_fallback,
    })
}

/// Positive-sample statistics for one size bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub bucket: SizeBucket,
    pub gt_count: usize,
    pub mean_positives: f64,
    /// Fraction of gts with no positive anchor after the fallback step.
    pub unmatched_fraction: f64,
    /// Fraction of gts with no anchor above the positive threshold.
    pub threshold_unmatched_fraction: f64,
    pub mean_best_score: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BucketTally {
    gts: usize,
    positives: usize,
    unmatched: usize,
    threshold_unmatched: usize,
    best_score: CompensatedSum,
}

impl BucketTally {
    fn stats(&self, bucket: SizeBucket) -> BucketStats {
        let n = self.gts as f64;
        BucketStats {
            bucket,
            gt_count: self.gts,
            mean_positives: self.positives as f64 / n,
            unmatched_fraction: self.unmatched as f64 / n,
            threshold_unmatched_fraction: self.threshold_unmatched as f64 / n,
            mean_best_score: self.best_score.value() / n,
        }
    }
}

/// Accumulates per-bucket statistics over many images.
#[derive(Debug, Clone, Default)]
pub struct MatchTally {
    buckets: [BucketTally; 6],
}

impl MatchTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, result: &AssignmentResult, gts: &[CBox]) -> Result<()> {
        if gts.len() != result.num_gts() {
            return Err(Error::LengthMismatch {
                what: "gts",
                got: gts.len(),
                expected: result.num_gts(),
            });
        }
        for (g, gt) in gts.iter().enumerate() {
            let t = &mut self.buckets[size_bucket(gt) as usize];
            t.gts += 1;
            t.positives += result.gt_match_counts[g];
            t.unmatched += (result.gt_match_counts[g] == 0) as usize;
            t.threshold_unmatched += (result.gt_threshold_counts[g] == 0) as usize;
            t.best_score.add(result.gt_best[g].1);
        }
        Ok(())
    }

    /// Counts gts that have no anchors at all (every one is unmatched).
    pub fn add_unassignable(&mut self, gts: &[CBox]) {
        for gt in gts {
            let t = &mut self.buckets[size_bucket(gt) as usize];
            t.gts += 1;
            t.unmatched += 1;
            t.threshold_unmatched += 1;
        }
    }

    /// Occupied buckets, in bucket order.
    pub fn summary(&self) -> Vec<BucketStats> {
        SizeBucket::ALL
            .into_iter()
            .zip(&self.buckets)
            .filter(|(_, t)| t.gts > 0)
            .map(|(bucket, t)| t.stats(bucket))
            .collect()
    }

    /// All gts pooled; `None` when nothing was tallied.
    pub fn overall(&self) -> Option<OverallStats> {
        let mut all = BucketTally::default();
        for t in &self.buckets {
            all.gts += t.gts;
            all.positives += t.positives;
            all.unmatched += t.unmatched;
            all.threshold_unmatched += t.threshold_unmatched;
            all.best_score.merge(&t.best_score);
        }
        (all.gts > 0).then(|| {
            let s = all.stats(SizeBucket::BelowRange);
            OverallStats {
                gt_count: s.gt_count,
                mean_positives: s.mean_positives,
                unmatched_fraction: s.unmatched_fraction,
                threshold_unmatched_fraction: s.threshold_unmatched_fraction,
                mean_best_score: s.mean_best_score,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallStats {
    pub gt_count: usize,
    pub mean_positives: f64,
    pub unmatched_fraction: f64,
    pub threshold_unmatched_fraction: f64,
    pub mean_best_score: f64,
}

/// Per-bucket statistics for a single assignment.
pub fn match_stats(result: &AssignmentResult, gts: &[CBox]) -> Result<Vec<BucketStats>> {
    let mut tally = MatchTally::new();
    tally.add(result, gts)?;
    Ok(tally.summary())
}
