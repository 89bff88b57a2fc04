//! Dataset-adaptive SimD normalization parameters.
//!
//! `m` is the mean of `|x_g - x_a| / (w_g + w_a)` and `n` the mean of
//! `|y_g - y_a| / (h_g + h_a)` over every (ground truth, anchor) pair of every
//! image, where the anchors of an image come from the same [`AnchorSpec`]
//! used for assignment.
//!
//! Each image is reduced to a compensated partial sum with a fixed pair
//! order (gts outer, anchors inner). Partials are then merged in image-id
//! order, so the result does not depend on how many threads computed them.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{build_grid, AnchorGrid, AnchorSpec};
use crate::dataset::{AnnotationSet, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{CBox, NormParams, EPS_NORM};
use crate::sum::CompensatedSum;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CalibrationAccumulator {
    sum_x_ratio: CompensatedSum,
    sum_y_ratio: CompensatedSum,
    pair_count: u64,
}

impl CalibrationAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every `gts x anchors` pair of one image.
    pub fn accumulate_image(&mut self, gts: &[CBox], anchors: &[CBox]) {
        if gts.is_empty() || anchors.is_empty() {
            return;
        }
        for gt in gts {
            for a in anchors {
                self.sum_x_ratio
                    .add((gt.cx() - a.cx()).abs() / (gt.w() + a.w()));
                self.sum_y_ratio
                    .add((gt.cy() - a.cy()).abs() / (gt.h() + a.h()));
            }
        }
        self.pair_count += (gts.len() * anchors.len()) as u64;
    }

    pub fn merge(&mut self, other: &CalibrationAccumulator) {
        self.sum_x_ratio.merge(&other.sum_x_ratio);
        self.sum_y_ratio.merge(&other.sum_y_ratio);
        self.pair_count += other.pair_count;
    }

    pub fn sum_x_ratio(&self) -> f64 {
        self.sum_x_ratio.value()
    }

    pub fn sum_y_ratio(&self) -> f64 {
        self.sum_y_ratio.value()
    }

    pub fn pair_count(&self) -> u64 {
        self.pair_count
    }

    /// Divides by the pair count and floors both parameters at [`EPS_NORM`].
    pub fn finalize(&self, source_tag: impl Into<String>) -> Result<NormParams> {
        if self.pair_count == 0 {
            return Err(Error::NoPairs);
        }
        let count = self.pair_count as f64;
        let m = (self.sum_x_ratio() / count).max(EPS_NORM);
        let n = (self.sum_y_ratio() / count).max(EPS_NORM);
        NormParams::new(m, n, self.pair_count, source_tag)
    }
}

/// Functional form of [`CalibrationAccumulator::accumulate_image`].
pub fn accumulate_image(
    gts: &[CBox],
    anchors: &[CBox],
    mut acc: CalibrationAccumulator,
) -> CalibrationAccumulator {
    acc.accumulate_image(gts, anchors);
    acc
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Pyramid levels whose anchors enter the averages; `None` means all.
    pub levels: Option<Vec<usize>>,
    /// Fraction of each image's anchors to keep, in `(0, 1]`; `None` keeps all.
    pub subsample: Option<f64>,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Prefix for the resulting `source_tag`.
    pub label: Option<String>,
}

impl CalibrationOptions {
    fn validate(&self, spec: &AnchorSpec) -> Result<()> {
        if let Some(rate) = self.subsample {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "subsample",
                    value: rate,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        if let Some(levels) = &self.levels {
            if levels.is_empty() {
                return Err(Error::InvalidAnchorSpec(
                    "empty calibration level filter".into(),
                ));
            }
            if let Some(&l) = levels.iter().find(|&&l| l >= spec.levels.len()) {
                return Err(Error::InvalidAnchorSpec(format!(
                    "calibration level {l} does not exist (spec has {} levels)",
                    spec.levels.len()
                )));
            }
        }
        Ok(())
    }

    fn source_tag(&self, images: usize) -> String {
        let levels = match &self.levels {
            None => "all".to_string(),
            Some(l) => l.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        };
        let subsample = match self.subsample {
            None => "off".to_string(),
            Some(r) => format!("{r} (seed {})", self.seed),
        };
        let base =
            format!("calibrated over {images} images; levels={levels}; subsample={subsample}");
        match &self.label {
            Some(label) => format!("{label}; {base}"),
            None => base,
        }
    }
}

fn image_anchors(
    image: &ImageRecord,
    grid: &AnchorGrid,
    options: &CalibrationOptions,
) -> Vec<CBox> {
    let mut anchors = match &options.levels {
        None => grid.anchors.clone(),
        Some(levels) => grid.select_levels(levels),
    };
    if let Some(rate) = options.subsample {
        if rate < 1.0 {
            let keep = ((anchors.len() as f64 * rate).ceil() as usize).clamp(1, anchors.len());
            let seed = options
                .seed
                .wrapping_add(image.id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, anchors.len(), keep).into_vec();
            picked.sort_unstable();
            anchors = picked.into_iter().map(|i| anchors[i]).collect();
        }
    }
    anchors
}

fn size_key(size: (f64, f64)) -> (u64, u64) {
    (size.0.to_bits(), size.1.to_bits())
}

/// Computes `(m, n)` for a whole annotation set.
pub fn calibrate(
    set: &AnnotationSet,
    spec: &AnchorSpec,
    options: &CalibrationOptions,
) -> Result<NormParams> {
    options.validate(spec)?;
    spec.validate()?;

    let used: Vec<&ImageRecord> = set.images.iter().filter(|i| !i.gts.is_empty()).collect();
    let mut grids: HashMap<(u64, u64), AnchorGrid> = HashMap::new();
    for img in &used {
        if let Entry::Vacant(e) = grids.entry(size_key(img.size())) {
            e.insert(build_grid(spec, img.size())?);
        }
    }

    let partial = |img: &&ImageRecord| {
        let grid = &grids[&size_key(img.size())];
        let anchors = image_anchors(img, grid, options);
        let mut acc = CalibrationAccumulator::new();
        acc.accumulate_image(&img.boxes(), &anchors);
        (img.id, acc)
    };
    let mut partials: Vec<(u64, CalibrationAccumulator)> = match options.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            pool.install(|| used.par_iter().map(partial).collect())
        }
        None => used.par_iter().map(partial).collect(),
    };
    partials.sort_by_key(|(id, _)| *id);

    let mut total = CalibrationAccumulator::new();
    for (_, acc) in &partials {
        total.merge(acc);
    }
    total.finalize(options.source_tag(set.images.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroundTruth;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> CBox {
        CBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let acc = accumulate_image(&[], &[b(1.0, 1.0, 1.0, 1.0)], CalibrationAccumulator::new());
        assert_eq!(acc, CalibrationAccumulator::new());

        let gt = b(8.0, 8.0, 8.0, 8.0);
        let acc = accumulate_image(
            &[gt],
            &[b(4.0, 8.0, 8.0, 8.0), b(8.0, 12.0, 8.0, 8.0)],
            CalibrationAccumulator::new(),
        );
        assert_eq!(acc.sum_x_ratio(), 0.25);
        assert_eq!(acc.sum_y_ratio(), 0.25);
        assert_eq!(acc.pair_count(), 2);

        let params = acc.finalize("fixture").unwrap();
        assert_eq!(
            (params.m(), params.n(), params.pair_count()),
            (0.125, 0.125, 2)
        );

        let same = accumulate_image(&[gt], &[gt], CalibrationAccumulator::new());
        assert_eq!(
            (same.sum_x_ratio(), same.sum_y_ratio(), same.pair_count()),
            (0.0, 0.0, 1)
        );
        let clamped = same.finalize("x").unwrap();
        assert_eq!((clamped.m(), clamped.n()), (EPS_NORM, EPS_NORM));
    }

    #[test]
    fn finalize_without_pairs_fails() {
        assert!(matches!(
            CalibrationAccumulator::new().finalize("x"),
            Err(Error::NoPairs)
        ));
    }

    fn fixture() -> AnnotationSet {
        // 8x8 image, stride-4 anchors of size 8 centered at {2, 6} x {2, 6};
        // the gt at (4, 4) is 2 px from each in x and y, so every ratio is 2 / 16.
        AnnotationSet {
            images: vec![ImageRecord {
                id: 1,
                file_name: "f.png".into(),
                width: 8.0,
                height: 8.0,
                gts: vec![GroundTruth {
                    bbox: b(4.0, 4.0, 8.0, 8.0),
                    category_id: 1,
                }],
            }],
            categories: vec![],
        }
    }

    #[test]
    fn calibrate_composes_accumulate_and_finalize() {
        let spec = AnchorSpec::single(4.0, 8.0);
        let p = calibrate(&fixture(), &spec, &CalibrationOptions::default()).unwrap();
        assert_eq!((p.m(), p.n(), p.pair_count()), (0.125, 0.125, 4));
        assert!(p.source_tag().contains("levels=all"));
    }

    #[test]
    fn duplicating_images_keeps_params() {
        let spec = AnchorSpec::default();
        let mut set = crate::dataset::synth_dataset(&crate::dataset::SynthParams {
            images: 3,
            image_size: (64.0, 48.0),
            scale_range: (2.0, 16.0),
            objects_per_image: 4,
            seed: 5,
        })
        .unwrap();
        let once = calibrate(&set, &spec, &CalibrationOptions::default()).unwrap();
        let copies: Vec<ImageRecord> = set
            .images
            .iter()
            .map(|i| ImageRecord {
                id: i.id + 100,
                ..i.clone()
            })
            .collect();
        set.images.extend(copies);
        let twice = calibrate(&set, &spec, &CalibrationOptions::default()).unwrap();
        assert!((once.m() - twice.m()).abs() <= 1e-14 * once.m());
        assert!((once.n() - twice.n()).abs() <= 1e-14 * once.n());
        assert_eq!(twice.pair_count(), 2 * once.pair_count());
    }

    #[test]
    fn empty_set_has_no_pairs() {
        let mut set = fixture();
        set.images[0].gts.clear();
        let err = calibrate(&set, &AnchorSpec::default(), &CalibrationOptions::default());
        assert!(matches!(err, Err(Error::NoPairs)));
    }

    #[test]
    fn level_filter_and_subsample() {
        let set = fixture();
        let mut spec = AnchorSpec::single(4.0, 8.0);
        spec.levels.push(crate::anchors::AnchorLevel {
            stride: 16.0,
            base_size: 16.0,
        });
        let only_first = CalibrationOptions {
            levels: Some(vec![0]),
            ..Default::default()
        };
        let p = calibrate(&set, &spec, &only_first).unwrap();
        assert_eq!(p.pair_count(), 4);
        assert!(p.source_tag().contains("levels=0"));

        let bad_level = CalibrationOptions {
            levels: Some(vec![2]),
            ..Default::default()
        };
        assert!(calibrate(&set, &spec, &bad_level).is_err());

        let half = CalibrationOptions {
            subsample: Some(0.5),
            seed: 3,
            ..Default::default()
        };
        let p = calibrate(&set, &spec, &half).unwrap();
        // Five anchors per image (four stride-4, one stride-16); half rounds up.
        assert_eq!(p.pair_count(), 3);
        assert!(p.source_tag().contains("subsample=0.5"));
        assert_eq!(p, calibrate(&set, &spec, &half).unwrap());

        let zero = CalibrationOptions {
            subsample: Some(0.0),
            ..Default::default()
        };
        assert!(calibrate(&set, &spec, &zero).is_err());
    }
}
