//! COCO-format annotation ingestion, dataset statistics and synthetic sets.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CBox;
use crate::sum::CompensatedSum;

/// Replacement extent for zero-width or zero-height annotations.
pub const MIN_EXTENT: f64 = 1e-3;

/// How far (in pixels) a box may extend past its image before it is reported.
pub const BOUNDS_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: CBox,
    pub category_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: f64,
    pub height: f64,
    pub gts: Vec<GroundTruth>,
}

impl ImageRecord {
    pub fn size(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn boxes(&self) -> Vec<CBox> {
        self.gts.iter().map(|g| g.bbox).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<Category>,
}

impl AnnotationSet {
    pub fn gt_count(&self) -> usize {
        self.images.iter().map(|i| i.gts.len()).sum()
    }

    pub fn all_boxes(&self) -> impl Iterator<Item = &CBox> {
        self.images
            .iter()
            .flat_map(|i| i.gts.iter().map(|g| &g.bbox))
    }

    /// Multiplies image sizes and every box field by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|img| {
                let gts = img
                    .gts
                    .iter()
                    .map(|g| {
                        Ok(GroundTruth {
                            bbox: g.bbox.scaled(s)?,
                            category_id: g.category_id,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(ImageRecord {
                    width: img.width * s,
                    height: img.height * s,
                    gts,
                    ..img.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            images,
            categories: self.categories.clone(),
        })
    }
}

/// Repairs made while ingesting a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub images: usize,
    pub annotations: usize,
    /// Annotations whose width or height was raised to [`MIN_EXTENT`].
    pub clamped: usize,
    /// Boxes extending more than [`BOUNDS_MARGIN`] past their image.
    pub out_of_bounds: usize,
}

impl IngestSummary {
    pub fn has_warnings(&self) -> bool {
        self.clamped > 0 || self.out_of_bounds > 0
    }
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} images, {} annotations; {} degenerate boxes clamped to {} px, {} boxes outside image bounds",
            self.images, self.annotations, self.clamped, MIN_EXTENT, self.out_of_bounds
        )
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<serde_json::Value>,
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<Category>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoImage {
    id: u64,
    #[serde(default)]
    file_name: String,
    width: f64,
    height: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: Vec<f64>,
    #[serde(default, skip_deserializing)]
    area: f64,
    #[serde(default, skip_deserializing)]
    iscrowd: u8,
}

pub fn load_coco(path: impl AsRef<Path>) -> Result<(AnnotationSet, IngestSummary)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let file: CocoFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    from_coco(file)
}

pub fn parse_coco(text: &str) -> Result<(AnnotationSet, IngestSummary)> {
    let file: CocoFile = serde_json::from_str(text).map_err(|source| Error::Json {
        path: "<memory>".into(),
        source,
    })?;
    from_coco(file)
}

fn from_coco(file: CocoFile) -> Result<(AnnotationSet, IngestSummary)> {
    let mut summary = IngestSummary {
        images: file.images.len(),
        annotations: file.annotations.len(),
        ..Default::default()
    };

    let mut index = HashMap::with_capacity(file.images.len());
    let mut images = Vec::with_capacity(file.images.len());
    for (pos, img) in file.images.into_iter().enumerate() {
        if index.insert(img.id, pos).is_some() {
            return Err(Error::DuplicateImageId(img.id));
        }
        images.push(ImageRecord {
            id: img.id,
            file_name: img.file_name,
            width: img.width,
            height: img.height,
            gts: Vec::new(),
        });
    }
    let category_ids: HashSet<u64> = file.categories.iter().map(|c| c.id).collect();

    for ann in file.annotations {
        let &pos = index.get(&ann.image_id).ok_or(Error::DanglingImage {
            annotation_id: ann.id,
            image_id: ann.image_id,
        })?;
        if !category_ids.contains(&ann.category_id) {
            return Err(Error::DanglingCategory {
                annotation_id: ann.id,
                category_id: ann.category_id,
            });
        }
        let [x, y, mut w, mut h] =
            <[f64; 4]>::try_from(ann.bbox.as_slice()).map_err(|_| Error::MalformedAnnotation {
                id: ann.id,
                reason: format!("bbox has {} values, expected 4", ann.bbox.len()),
            })?;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::MalformedAnnotation {
                id: ann.id,
                reason: "bbox contains non-finite values".into(),
            });
        }
        if w <= 0.0 || h <= 0.0 {
            w = w.max(MIN_EXTENT);
            h = h.max(MIN_EXTENT);
            summary.clamped += 1;
        }
        let bbox = CBox::from_xywh(x, y, w, h)?;
        let image = &mut images[pos];
        let (x1, y1, x2, y2) = bbox.corners();
        if x1 < -BOUNDS_MARGIN
            || y1 < -BOUNDS_MARGIN
            || x2 > image.width + BOUNDS_MARGIN
            || y2 > image.height + BOUNDS_MARGIN
        {
            summary.out_of_bounds += 1;
        }
        image.gts.push(GroundTruth {
            bbox,
            category_id: ann.category_id,
        });
    }

    Ok((
        AnnotationSet {
            images,
            categories: file.categories,
        },
        summary,
    ))
}

/// Serializes to COCO JSON. Annotation ids are assigned sequentially from 1.
///
/// `info`, when given, is emitted as the top-level `"info"` object.
pub fn write_coco(set: &AnnotationSet, info: Option<serde_json::Value>) -> String {
    let mut annotations = Vec::with_capacity(set.gt_count());
    for img in &set.images {
        for gt in &img.gts {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: img.id,
                category_id: gt.category_id,
                bbox: gt.bbox.to_xywh().to_vec(),
                area: gt.bbox.area(),
                iscrowd: 0,
            });
        }
    }
    let file = CocoFile {
        info,
        images: set
            .images
            .iter()
            .map(|img| CocoImage {
                id: img.id,
                file_name: img.file_name.clone(),
                width: img.width,
                height: img.height,
            })
            .collect(),
        annotations,
        categories: set.categories.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("COCO file serializes");
    s.push('\n');
    s
}

/// Object size classes by `sqrt(w * h)`, with half-open `[lo, hi)` ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    /// Below 2 px.
    BelowRange,
    /// 2 to 8 px.
    VeryTiny,
    /// 8 to 16 px.
    Tiny,
    /// 16 to 32 px.
    Small,
    /// 32 to 64 px.
    Medium,
    /// 64 px and above.
    AboveRange,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 6] = [
        SizeBucket::BelowRange,
        SizeBucket::VeryTiny,
        SizeBucket::Tiny,
        SizeBucket::Small,
        SizeBucket::Medium,
        SizeBucket::AboveRange,
    ];

    pub fn of_scale(scale: f64) -> Self {
        match scale {
            s if s < 2.0 => SizeBucket::BelowRange,
            s if s < 8.0 => SizeBucket::VeryTiny,
            s if s < 16.0 => SizeBucket::Tiny,
            s if s < 32.0 => SizeBucket::Small,
            s if s < 64.0 => SizeBucket::Medium,
            _ => SizeBucket::AboveRange,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeBucket::BelowRange => "below_range",
            SizeBucket::VeryTiny => "very_tiny",
            SizeBucket::Tiny => "tiny",
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::AboveRange => "above_range",
        }
    }
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn size_bucket(b: &CBox) -> SizeBucket {
    SizeBucket::of_scale(b.scale())
}

/// Ground-truth count per size bucket, in bucket order.
pub fn bucket_histogram(set: &AnnotationSet) -> Vec<(SizeBucket, usize)> {
    let mut counts = [0usize; 6];
    for b in set.all_boxes() {
        counts[size_bucket(b) as usize] += 1;
    }
    SizeBucket::ALL.into_iter().zip(counts).collect()
}

/// DotD's `S`: square root of the mean ground-truth area.
pub fn dotd_scale(set: &AnnotationSet) -> Result<f64> {
    let count = set.gt_count();
    if count == 0 {
        return Err(Error::NoGroundTruths);
    }
    let total: CompensatedSum = set.all_boxes().map(CBox::area).collect();
    Ok((total.value() / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub images: usize,
    pub image_size: (f64, f64),
    /// Object scale `sqrt(w * h)` is drawn uniformly from `[lo, hi)`.
    pub scale_range: (f64, f64),
    pub objects_per_image: usize,
    pub seed: u64,
}

const SYNTH_RATIO_RANGE: (f64, f64) = (0.5, 2.0);

/// Generates a reproducible set of small objects fully contained in their
/// images, with one category.
pub fn synth_dataset(params: &SynthParams) -> Result<AnnotationSet> {
    let (width, height) = params.image_size;
    let (lo, hi) = params.scale_range;
    if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
        return Err(Error::Infeasible(format!(
            "image size {width}x{height} must be positive"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::Infeasible(format!(
            "scale range ({lo}, {hi}) must satisfy 0 < lo <= hi"
        )));
    }
    // The widest object has scale `hi` and ratio 0.5 (or 2 for the tallest).
    let max_extent = hi * SYNTH_RATIO_RANGE.1.sqrt();
    if max_extent > width.min(height) {
        return Err(Error::Infeasible(format!(
            "objects up to {max_extent:.3} px cannot be contained in a {width}x{height} image"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let images = (0..params.images)
        .map(|i| {
            let gts = (0..params.objects_per_image)
                .map(|_| {
                    let scale = if lo < hi { rng.gen_range(lo..hi) } else { lo };
                    let ratio: f64 = rng.gen_range(SYNTH_RATIO_RANGE.0..=SYNTH_RATIO_RANGE.1);
                    let w = scale / ratio.sqrt();
                    let h = scale * ratio.sqrt();
                    let cx = rng.gen_range(w / 2.0..=width - w / 2.0);
                    let cy = rng.gen_range(h / 2.0..=height - h / 2.0);
                    Ok(GroundTruth {
                        bbox: CBox::new(cx, cy, w, h)?,
                        category_id: 1,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ImageRecord {
                id: i as u64 + 1,
                file_name: format!("synth_{:05}.png", i + 1),
                width,
                height,
                gts,
            })
        })
        .collect::<Result<_>>()?;

    Ok(AnnotationSet {
        images,
        categories: vec![Category {
            id: 1,
            name: "object".into(),
        }],
    })
}
