//! Pairwise box similarity metrics.
//!
//! Every metric maps a (ground truth, anchor) pair to a score in `[0, 1]`,
//! with 1 meaning identical boxes. The batch functions evaluate exactly the
//! same expression per element as their scalar counterparts, so a matrix
//! entry is bit-for-bit equal to the scalar call on the same pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CBox, MetricMatrix, NormMode, NormParams};

/// Location and shape terms of SimD, before the exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimdComponents {
    pub location: f64,
    pub shape: f64,
}

/// Shared kernel for the scalar and batch SimD paths.
///
/// Each offset is divided by `(1 / m) * (w_g + w_a)` (and likewise for `n`
/// with heights). `inv_m` and `inv_n` are `1 / m` and `1 / n`.
#[inline(always)]
fn simd_terms(gt: &CBox, anchor: &CBox, inv_m: f64, inv_n: f64) -> (f64, f64) {
    let wden = inv_m * (gt.w() + anchor.w());
    let hden = inv_n * (gt.h() + anchor.h());
    let lx = (gt.cx() - anchor.cx()) / wden;
    let ly = (gt.cy() - anchor.cy()) / hden;
    let sx = (gt.w() - anchor.w()) / wden;
    let sy = (gt.h() - anchor.h()) / hden;
    ((lx * lx + ly * ly).sqrt(), (sx * sx + sy * sy).sqrt())
}

#[inline]
fn inverse_params(params: &NormParams, mode: NormMode) -> (f64, f64) {
    let (m, n) = mode.effective(params);
    (1.0 / m, 1.0 / n)
}

#[cold]
fn non_finite(what: &'static str, gt: &CBox, anchor: &CBox) -> Error {
    Error::NonFinite {
        what,
        gt: gt.to_array(),
        anchor: anchor.to_array(),
    }
}

pub fn simd_components(
    gt: &CBox,
    anchor: &CBox,
    params: &NormParams,
    mode: NormMode,
) -> Result<SimdComponents> {
    let (inv_m, inv_n) = inverse_params(params, mode);
    let (location, shape) = simd_terms(gt, anchor, inv_m, inv_n);
    if !(location.is_finite() && shape.is_finite()) {
        return Err(non_finite("SimD component", gt, anchor));
    }
    Ok(SimdComponents { location, shape })
}

/// `exp(-(location + shape))`; 1 exactly when the boxes coincide.
pub fn simd_pair(gt: &CBox, anchor: &CBox, params: &NormParams, mode: NormMode) -> Result<f64> {
    let c = simd_components(gt, anchor, params, mode)?;
    Ok((-(c.location + c.shape)).exp())
}

pub fn simd_matrix(
    gts: &[CBox],
    anchors: &[CBox],
    params: &NormParams,
    mode: NormMode,
) -> Result<MetricMatrix> {
    if gts.is_empty() || anchors.is_empty() {
        return Err(Error::EmptyInput(
            "simd_matrix needs at least one gt and one anchor",
        ));
    }
    let (inv_m, inv_n) = inverse_params(params, mode);
    let mut values = Vec::with_capacity(gts.len() * anchors.len());
    for gt in gts {
        for anchor in anchors {
            let (location, shape) = simd_terms(gt, anchor, inv_m, inv_n);
            if !(location.is_finite() && shape.is_finite()) {
                return Err(non_finite("SimD component", gt, anchor));
            }
            values.push((-(location + shape)).exp());
        }
    }
    Ok(MetricMatrix::from_raw(gts.len(), anchors.len(), values))
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou(a: &CBox, b: &CBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    // Areas from the corners so that iou(b, b) reduces to A / A exactly.
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let union = area_a + area_b - inter;
    (inter / union).min(1.0)
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

/// Dot distance, `exp(-D / S)` with `D` the center distance.
pub fn dotd(gt: &CBox, anchor: &CBox, scale: f64) -> Result<f64> {
    check_positive("S", scale)?;
    Ok(dotd_unchecked(gt, anchor, scale))
}

#[inline]
fn dotd_unchecked(gt: &CBox, anchor: &CBox, scale: f64) -> f64 {
    let dx = gt.cx() - anchor.cx();
    let dy = gt.cy() - anchor.cy();
    (-(dx * dx + dy * dy).sqrt() / scale).exp()
}

/// Normalized Wasserstein distance in closed form, `exp(-W / C)`.
pub fn nwd(gt: &CBox, anchor: &CBox, constant: f64) -> Result<f64> {
    check_positive("C", constant)?;
    Ok(nwd_unchecked(gt, anchor, constant))
}

#[inline]
fn nwd_unchecked(gt: &CBox, anchor: &CBox, constant: f64) -> f64 {
    let dx = gt.cx() - anchor.cx();
    let dy = gt.cy() - anchor.cy();
    let dw = gt.w() - anchor.w();
    let dh = gt.h() - anchor.h();
    let w2 = dx * dx + dy * dy + (dw * dw + dh * dh) * 0.25;
    (-w2.sqrt() / constant).exp()
}

/// Raw receptive-field divergence term. Can be negative when `beta != 1`.
pub fn rfdc(gt: &CBox, anchor: &CBox, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    let v = rfdc_unchecked(gt, anchor, beta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(non_finite("RFDC", gt, anchor))
    }
}

#[inline]
fn rfdc_unchecked(gt: &CBox, anchor: &CBox, beta: f64) -> f64 {
    let (wg, hg, wa, ha) = (gt.w(), gt.h(), anchor.w(), anchor.h());
    let dx = anchor.cx() - gt.cx();
    let dy = anchor.cy() - gt.cy();
    0.5 * beta * (wa * wa) / (wg * wg)
        + 0.5 * beta * (ha * ha) / (hg * hg)
        + 2.0 * (dx * dx) / (wg * wg)
        + 2.0 * (dy * dy) / (hg * hg)
        + (wg / (beta * wa)).ln()
        + (hg / (beta * ha)).ln()
        - 1.0
}

/// Receptive-field distance `1 / (1 + max(RFDC, 0))`.
pub fn rfd(gt: &CBox, anchor: &CBox, beta: f64) -> Result<f64> {
    let c = rfdc(gt, anchor, beta)?;
    Ok(1.0 / (1.0 + c.max(0.0)))
}

/// A metric together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Metric {
    Iou,
    Dotd { scale: f64 },
    Nwd { constant: f64 },
    Rfd { beta: f64 },
    Simd { params: NormParams, mode: NormMode },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Iou => "iou",
            Metric::Dotd { .. } => "dotd",
            Metric::Nwd { .. } => "nwd",
            Metric::Rfd { .. } => "rfd",
            Metric::Simd { .. } => "simd",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Metric::Iou | Metric::Simd { .. } => Ok(()),
            Metric::Dotd { scale } => check_positive("S", *scale),
            Metric::Nwd { constant } => check_positive("C", *constant),
            Metric::Rfd { beta } => check_positive("beta", *beta),
        }
    }

    pub fn pair(&self, gt: &CBox, anchor: &CBox) -> Result<f64> {
        match self {
            Metric::Iou => Ok(iou(gt, anchor)),
            Metric::Dotd { scale } => dotd(gt, anchor, *scale),
            Metric::Nwd { constant } => nwd(gt, anchor, *constant),
            Metric::Rfd { beta } => rfd(gt, anchor, *beta),
            Metric::Simd { params, mode } => simd_pair(gt, anchor, params, *mode),
        }
    }

    /// Scores every (gt, anchor) pair; rows are gts.
    pub fn matrix(&self, gts: &[CBox], anchors: &[CBox]) -> Result<MetricMatrix> {
        if gts.is_empty() || anchors.is_empty() {
            return Err(Error::EmptyInput(
                "metric matrix needs at least one gt and one anchor",
            ));
        }
        self.validate()?;
        let fill = |f: &dyn Fn(&CBox, &CBox) -> f64| {
            let mut values = Vec::with_capacity(gts.len() * anchors.len());
            for gt in gts {
                values.extend(anchors.iter().map(|a| f(gt, a)));
            }
            MetricMatrix::from_raw(gts.len(), anchors.len(), values)
        };
        match self {
            Metric::Simd { params, mode } => simd_matrix(gts, anchors, params, *mode),
            Metric::Iou => Ok(fill(&iou)),
            Metric::Dotd { scale } => Ok(fill(&|g, a| dotd_unchecked(g, a, *scale))),
            Metric::Nwd { constant } => Ok(fill(&|g, a| nwd_unchecked(g, a, *constant))),
            Metric::Rfd { beta } => {
                let mut values = Vec::with_capacity(gts.len() * anchors.len());
                for gt in gts {
                    for a in anchors {
                        values.push(rfd(gt, a, *beta)?);
                    }
                }
                Ok(MetricMatrix::from_raw(gts.len(), anchors.len(), values))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> CBox {
        CBox::new(cx, cy, w, h).unwrap()
    }

    /// Counts unit pixels covered by each box on a fine raster.
    fn raster_iou(a: &CBox, c: &CBox, cells_per_px: f64) -> f64 {
        let (ax1, ay1, ax2, ay2) = a.corners();
        let (cx1, cy1, cx2, cy2) = c.corners();
        let x0 = ax1.min(cx1);
        let y0 = ay1.min(cy1);
        let x1 = ax2.max(cx2);
        let y1 = ay2.max(cy2);
        let nx = ((x1 - x0) * cells_per_px).round() as usize;
        let ny = ((y1 - y0) * cells_per_px).round() as usize;
        let (mut inter, mut union) = (0usize, 0usize);
        for j in 0..ny {
            for i in 0..nx {
                let px = x0 + (i as f64 + 0.5) / cells_per_px;
                let py = y0 + (j as f64 + 0.5) / cells_per_px;
                let in_a = px > ax1 && px < ax2 && py > ay1 && py < ay2;
                let in_c = px > cx1 && px < cx2 && py > cy1 && py < cy2;
                inter += (in_a && in_c) as usize;
                union += (in_a || in_c) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn simd_components_examples() {
        let p = NormParams::unit();
        let g = b(10.0, 10.0, 8.0, 8.0);
        let c = simd_components(&g, &g, &p, NormMode::Both).unwrap();
        assert_eq!((c.location, c.shape), (0.0, 0.0));

        let c = simd_components(&g, &b(12.0, 10.0, 8.0, 8.0), &p, NormMode::Both).unwrap();
        assert_eq!(c.location, 0.125);
        assert_eq!(c.shape, 0.0);

        let c = simd_components(&g, &b(10.0, 10.0, 16.0, 16.0), &p, NormMode::Both).unwrap();
        assert_eq!(c.location, 0.0);
        assert!((c.shape - 2f64.sqrt() * (8.0 / 24.0)).abs() < 1e-15);
        assert!((c.shape - 0.4714).abs() < 1e-4);
    }

    #[test]
    fn simd_pair_examples() {
        let p = NormParams::unit();
        let g = b(10.0, 10.0, 8.0, 8.0);
        let shifted = simd_pair(&g, &b(12.0, 10.0, 8.0, 8.0), &p, NormMode::Both).unwrap();
        assert!((shifted - 0.8825).abs() < 1e-4);
        assert_eq!(shifted, (-0.125f64).exp());
        let grown = simd_pair(&g, &b(10.0, 10.0, 16.0, 16.0), &p, NormMode::Both).unwrap();
        assert!((grown - 0.6241).abs() < 1e-4);

        let calibrated = NormParams::manual(7.3, 0.02).unwrap();
        for mode in NormMode::ALL {
            assert_eq!(simd_pair(&g, &g, &calibrated, mode).unwrap(), 1.0);
        }
    }

    #[test]
    fn norm_params_scale_the_offsets() {
        // m = 2 doubles the x term: |dx| / ((1/2) * 16) = 0.25.
        let p = NormParams::manual(2.0, 1.0).unwrap();
        let g = b(10.0, 10.0, 8.0, 8.0);
        let a = b(12.0, 10.0, 8.0, 8.0);
        let c = simd_components(&g, &a, &p, NormMode::Both).unwrap();
        assert_eq!(c.location, 0.25);
        let c = simd_components(&g, &a, &p, NormMode::HeightOnly).unwrap();
        assert_eq!(c.location, 0.125);
    }

    #[test]
    fn simd_non_finite_is_error() {
        let p = NormParams::manual(1e300, 1.0).unwrap();
        let g = b(0.0, 0.0, 1e300, 1.0);
        let a = b(1e300, 0.0, 1e300, 1.0);
        assert!(matches!(
            simd_pair(&g, &a, &p, NormMode::Both),
            Err(Error::NonFinite { .. })
        ));
        assert!(simd_matrix(&[g], &[a], &p, NormMode::Both).is_err());
    }

    #[test]
    fn simd_matrix_examples() {
        let p = NormParams::unit();
        let g = b(10.0, 10.0, 8.0, 8.0);
        let m = simd_matrix(&[g], &[g], &p, NormMode::Both).unwrap();
        assert_eq!(m.values(), &[1.0]);

        let anchors = [b(12.0, 10.0, 8.0, 8.0), b(10.0, 10.0, 16.0, 16.0)];
        let m = simd_matrix(&[g], &anchors, &p, NormMode::Both).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert!((m.get(0, 0) - 0.8825).abs() < 1e-4);
        assert!((m.get(0, 1) - 0.6241).abs() < 1e-4);

        assert!(matches!(
            simd_matrix(&[], &anchors, &p, NormMode::Both),
            Err(Error::EmptyInput(_))
        ));
        assert!(simd_matrix(&[g], &[], &p, NormMode::Both).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = b(5.0, 5.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(100.0, 100.0, 10.0, 10.0)), 0.0);
        // Touching edges share no interior.
        assert_eq!(iou(&a, &b(15.0, 5.0, 10.0, 10.0)), 0.0);

        let c = b(10.0, 5.0, 10.0, 10.0);
        let oracle = raster_iou(&a, &c, 4.0);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&a, &c) - oracle).abs() < 1e-12);
    }

    #[test]
    fn iou_matches_raster_oracle() {
        let cases = [
            (b(3.0, 4.0, 6.0, 2.0), b(5.0, 4.5, 4.0, 4.0)),
            (b(10.0, 10.0, 8.0, 8.0), b(11.0, 12.0, 3.0, 9.0)),
            (b(0.0, 0.0, 2.0, 2.0), b(0.5, -0.5, 1.0, 5.0)),
        ];
        for (a, c) in cases {
            let oracle = raster_iou(&a, &c, 8.0);
            assert!((iou(&a, &c) - oracle).abs() < 1e-9, "{a:?} {c:?}");
            assert_eq!(iou(&a, &c), iou(&c, &a));
        }
    }

    #[test]
    fn dotd_examples() {
        let g = b(0.0, 0.0, 4.0, 4.0);
        assert_eq!(dotd(&g, &b(0.0, 0.0, 9.0, 2.0), 3.0).unwrap(), 1.0);
        let a = b(3.0, 4.0, 4.0, 4.0);
        assert!((dotd(&g, &a, 10.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((dotd(&g, &a, 10.0).unwrap() - 0.6065).abs() < 1e-4);
        assert!((dotd(&g, &a, 5.0).unwrap() - 0.3679).abs() < 1e-4);
        assert!(dotd(&g, &a, 0.0).is_err());
        assert!(dotd(&g, &a, -1.0).is_err());
    }

    #[test]
    fn nwd_examples() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nwd(&g, &g, 12.8).unwrap(), 1.0);
        let wider = b(0.0, 0.0, 14.0, 10.0);
        assert!((nwd(&g, &wider, 2.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let moved = b(3.0, 4.0, 10.0, 10.0);
        assert!((nwd(&g, &moved, 5.0).unwrap() - 0.3679).abs() < 1e-4);
        assert!(nwd(&g, &moved, 0.0).is_err());
    }

    #[test]
    fn rfd_examples() {
        let g = b(0.0, 0.0, 8.0, 8.0);
        assert_eq!(rfdc(&g, &g, 1.0).unwrap(), 0.0);
        assert_eq!(rfd(&g, &g, 1.0).unwrap(), 1.0);

        let a = b(4.0, 0.0, 8.0, 8.0);
        assert_eq!(rfdc(&g, &a, 1.0).unwrap(), 0.5);
        assert!((rfd(&g, &a, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let raw = rfdc(&g, &g, 2.0).unwrap();
        assert!((raw - (1.0 + 2.0 * 0.5f64.ln())).abs() < 1e-15);
        assert!((raw + 0.3863).abs() < 1e-4);
        assert_eq!(rfd(&g, &g, 2.0).unwrap(), 1.0);

        assert!(rfd(&g, &a, 0.0).is_err());
        assert!(rfd(&g, &a, f64::NAN).is_err());
    }

    #[test]
    fn metric_enum_matches_free_functions() {
        let gts = [b(10.0, 10.0, 8.0, 8.0), b(30.0, 5.0, 3.0, 6.0)];
        let anchors = [
            b(12.0, 10.0, 8.0, 8.0),
            b(10.0, 10.0, 16.0, 16.0),
            b(29.0, 7.0, 4.0, 4.0),
        ];
        let metrics = [
            Metric::Iou,
            Metric::Dotd { scale: 6.0 },
            Metric::Nwd { constant: 12.8 },
            Metric::Rfd { beta: 1.0 },
            Metric::Simd {
                params: NormParams::manual(1.7, 0.9).unwrap(),
                mode: NormMode::Both,
            },
        ];
        for metric in &metrics {
            let m = metric.matrix(&gts, &anchors).unwrap();
            for (i, g) in gts.iter().enumerate() {
                for (j, a) in anchors.iter().enumerate() {
                    assert_eq!(m.get(i, j), metric.pair(g, a).unwrap(), "{}", metric.name());
                }
            }
        }
        assert!(Metric::Nwd { constant: -1.0 }
            .matrix(&gts, &anchors)
            .is_err());
        assert!(Metric::Iou.matrix(&[], &anchors).is_err());
    }

    #[test]
    fn metric_serde_shape() {
        let m = Metric::Dotd { scale: 4.0 };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"name":"dotd","scale":4.0}"#);
        assert_eq!(serde_json::from_str::<Metric>(&s).unwrap(), m);
    }
}
