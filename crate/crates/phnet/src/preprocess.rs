//! Preprocessing pipeline: spacing resample, ROI crop, shape
//! standardization, frame subsampling, and the clinical-node vector.
//!
//! All image math runs in `f64`; the finished sample is cast to the model
//! precision at the end. The pipeline order is fixed:
//! resample -> crop -> standardize -> subsample.

use ndarray::{Array1, Array3, Array4, ArrayD, Axis, IxDyn, Slice, Zip};

use crate::config::PreprocessConfig;
use crate::error::{PhnetError, Result};
use crate::real::Real;
use crate::syn_cohort::{ClinicalRecord, RawSample};

/// Cohort age bounds used by the min-max normalization.
pub const AGE_MIN: f64 = 18.0;
pub const AGE_MAX: f64 = 90.0;

/// Number of entries in the clinical node vector.
pub const N_CLINICAL: usize = 11;

// ---------------------------------------------------------------------------
// Natural cubic spline resampling
// ---------------------------------------------------------------------------

/// Second derivatives `M_i` of the natural cubic spline through `y` on a
/// unit-spaced grid (`M_0 = M_{n-1} = 0`), via the Thomas algorithm.
fn natural_cubic_second_derivs(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        if i == 0 {
            c[0] = 0.25;
            d[0] = rhs * 0.25;
        } else {
            let w = 4.0 - c[i - 1];
            c[i] = 1.0 / w;
            d[i] = (rhs - d[i - 1]) / w;
        }
    }
    for i in (0..k).rev() {
        m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
    }
    m
}

/// Evaluate the spline at fractional index `x` (clamped to the grid).
fn spline_eval(y: &[f64], m: &[f64], x: f64) -> f64 {
    let n = y.len();
    if n == 1 {
        return y[0];
    }
    let xc = x.clamp(0.0, (n - 1) as f64);
    let i = (xc as usize).min(n - 2);
    let t = xc - i as f64;
    let b = (y[i + 1] - y[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
    let c = m[i] / 2.0;
    let d = (m[i + 1] - m[i]) / 6.0;
    y[i] + t * (b + t * (c + t * d))
}

fn out_len(n_in: usize, in_spacing: f64, out_spacing: f64) -> usize {
    ((n_in as f64 * in_spacing / out_spacing).round() as usize).max(1)
}

fn check_spacings(in_spacing: f64, out_spacing: f64) -> Result<()> {
    if !(in_spacing > 0.0 && out_spacing > 0.0) {
        return Err(PhnetError::InvalidConfig(format!(
            "spacings must be positive, got in={in_spacing} out={out_spacing}"
        )));
    }
    Ok(())
}

/// Resample the leading `n_spatial` axes from `in_spacing` to `out_spacing`
/// with a natural cubic spline per lane. Equal spacings return the input
/// unchanged.
pub fn resample_spacing(
    img: &ArrayD<f64>,
    in_spacing: f64,
    out_spacing: f64,
    n_spatial: usize,
) -> Result<ArrayD<f64>> {
    check_spacings(in_spacing, out_spacing)?;
    if n_spatial > img.ndim() {
        return Err(PhnetError::ShapeMismatch {
            context: "resample_spacing".into(),
            expected: format!("rank >= {n_spatial}"),
            got: format!("rank {}", img.ndim()),
        });
    }
    if in_spacing == out_spacing {
        return Ok(img.clone());
    }
    let mut cur = img.clone();
    for ax in 0..n_spatial {
        cur = resample_axis(&cur, ax, in_spacing, out_spacing);
    }
    Ok(cur)
}

fn resample_axis(a: &ArrayD<f64>, axis: usize, in_spacing: f64, out_spacing: f64) -> ArrayD<f64> {
    let n_in = a.shape()[axis];
    let n_out = out_len(n_in, in_spacing, out_spacing);
    let mut shape = a.shape().to_vec();
    shape[axis] = n_out;
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    let xs: Vec<f64> = (0..n_out)
        .map(|j| j as f64 * out_spacing / in_spacing)
        .collect();
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(a.lanes(Axis(axis)))
        .for_each(|mut ol, il| {
            let y: Vec<f64> = il.iter().copied().collect();
            let m = natural_cubic_second_derivs(&y);
            for (o, &x) in ol.iter_mut().zip(&xs) {
                *o = spline_eval(&y, &m, x);
            }
        });
    out
}

/// Nearest-neighbour resample for label masks (same output grid as
/// [`resample_spacing`], so mask and image dimensions stay aligned).
pub fn resample_mask_nearest(
    mask: &ArrayD<u8>,
    in_spacing: f64,
    out_spacing: f64,
    n_spatial: usize,
) -> Result<ArrayD<u8>> {
    check_spacings(in_spacing, out_spacing)?;
    if n_spatial > mask.ndim() {
        return Err(PhnetError::ShapeMismatch {
            context: "resample_mask_nearest".into(),
            expected: format!("rank >= {n_spatial}"),
            got: format!("rank {}", mask.ndim()),
        });
    }
    if in_spacing == out_spacing {
        return Ok(mask.clone());
    }
    let mut cur = mask.clone();
    for ax in 0..n_spatial {
        let n_in = cur.shape()[ax];
        let n_out = out_len(n_in, in_spacing, out_spacing);
        let mut shape = cur.shape().to_vec();
        shape[ax] = n_out;
        let mut out = ArrayD::<u8>::zeros(IxDyn(&shape));
        let src: Vec<usize> = (0..n_out)
            .map(|j| {
                let x = j as f64 * out_spacing / in_spacing;
                (x.round() as usize).min(n_in - 1)
            })
            .collect();
        Zip::from(out.lanes_mut(Axis(ax)))
            .and(cur.lanes(Axis(ax)))
            .for_each(|mut ol, il| {
                for (o, &s) in ol.iter_mut().zip(&src) {
                    *o = il[s];
                }
            });
        cur = out;
    }
    Ok(cur)
}

// ---------------------------------------------------------------------------
// Crop / standardize / subsample
// ---------------------------------------------------------------------------

/// Crop `img` to the bounding box of the nonzero region of `roi`, expanded
/// by `margin` pixels and clamped to the image. The ROI covers the leading
/// `roi.ndim()` axes of `img`; trailing axes (e.g. time) pass through.
pub fn crop_roi(img: &ArrayD<f64>, roi: &ArrayD<u8>, margin: usize) -> Result<ArrayD<f64>> {
    let k = roi.ndim();
    if img.ndim() < k || img.shape()[..k] != roi.shape()[..] {
        return Err(PhnetError::ShapeMismatch {
            context: "crop_roi".into(),
            expected: format!("leading image axes {:?}", roi.shape()),
            got: format!("{:?}", &img.shape()[..k.min(img.ndim())]),
        });
    }
    let mut lo = vec![usize::MAX; k];
    let mut hi = vec![0usize; k];
    for (idx, &v) in roi.indexed_iter() {
        if v != 0 {
            for ax in 0..k {
                lo[ax] = lo[ax].min(idx[ax]);
                hi[ax] = hi[ax].max(idx[ax]);
            }
        }
    }
    if lo[0] == usize::MAX {
        return Err(PhnetError::EmptyRoi);
    }
    let view = img.slice_each_axis(|ad| {
        let i = ad.axis.index();
        if i < k {
            let l = lo[i].saturating_sub(margin);
            let h = (hi[i] + 1 + margin).min(img.shape()[i]);
            Slice::from(l..h)
        } else {
            Slice::from(..)
        }
    });
    Ok(view.to_owned())
}

/// Bring the leading `target.len()` axes to the target sizes: zero-pad when
/// short (extra pixel on the high side), center-crop when long (extra pixel
/// removed from the high side).
pub fn standardize_shape(img: &ArrayD<f64>, target: &[usize]) -> Result<ArrayD<f64>> {
    if target.len() > img.ndim() {
        return Err(PhnetError::ShapeMismatch {
            context: "standardize_shape".into(),
            expected: format!("rank >= {}", target.len()),
            got: format!("rank {}", img.ndim()),
        });
    }
    if target.iter().any(|&t| t == 0) {
        return Err(PhnetError::InvalidConfig(
            "target sizes must be positive".into(),
        ));
    }
    let mut cur = img.clone();
    for (ax, &t) in target.iter().enumerate() {
        let n = cur.shape()[ax];
        cur = if n > t {
            let start = (n - t) / 2;
            cur.slice_axis(Axis(ax), Slice::from(start..start + t))
                .to_owned()
        } else if n < t {
            let mut shape = cur.shape().to_vec();
            shape[ax] = t;
            let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
            let off = (t - n) / 2;
            out.slice_axis_mut(Axis(ax), Slice::from(off..off + n))
                .assign(&cur);
            out
        } else {
            cur
        };
    }
    Ok(cur)
}

/// Keep `frames_out` frames starting at frame 0 with stride `step` along
/// `frame_axis`.
pub fn subsample_frames(
    img: &ArrayD<f64>,
    frames_out: usize,
    step: usize,
    frame_axis: usize,
) -> Result<ArrayD<f64>> {
    let n = img.shape()[frame_axis];
    if frames_out == 0 || step == 0 {
        return Err(PhnetError::InvalidConfig(
            "frames_out and step must be positive".into(),
        ));
    }
    let last = (frames_out - 1) * step;
    if last >= n {
        return Err(PhnetError::InvalidConfig(format!(
            "cannot keep {frames_out} frames at step {step} from {n} frames"
        )));
    }
    let picks: Vec<usize> = (0..frames_out).map(|i| i * step).collect();
    Ok(img.select(Axis(frame_axis), &picks))
}

// ---------------------------------------------------------------------------
// Clinical features
// ---------------------------------------------------------------------------

/// Relative area change of a mask series plus the extreme areas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacResult {
    pub rac: f64,
    pub area_min_mm2: f64,
    pub area_max_mm2: f64,
}

/// RAC of a `[H, W, frames]` mask series: `(A_max - A_min) / A_min` with
/// frame areas `count * spacing^2`. Errors if any frame is empty.
pub fn compute_rac(mask: &ArrayD<u8>, spacing: f64) -> Result<RacResult> {
    if mask.ndim() != 3 {
        return Err(PhnetError::ShapeMismatch {
            context: "compute_rac".into(),
            expected: "[H, W, frames]".into(),
            got: format!("rank {}", mask.ndim()),
        });
    }
    let frames = mask.shape()[2];
    let px = spacing * spacing;
    let mut area_min = f64::MAX;
    let mut area_max = f64::MIN;
    for t in 0..frames {
        let count = mask
            .index_axis(Axis(2), t)
            .iter()
            .filter(|&&v| v != 0)
            .count();
        if count == 0 {
            return Err(PhnetError::EmptyPaMask);
        }
        let area = count as f64 * px;
        area_min = area_min.min(area);
        area_max = area_max.max(area);
    }
    Ok(RacResult {
        rac: (area_max - area_min) / area_min,
        area_min_mm2: area_min,
        area_max_mm2: area_max,
    })
}

/// Min-max age normalization, clamped to `[0, 1]`; degenerate bounds map to
/// 0.5.
pub fn normalize_age(age: f64, min: f64, max: f64) -> f64 {
    if min == max {
        0.5
    } else {
        ((age - min) / (max - min)).clamp(0.0, 1.0)
    }
}

/// The 11-entry clinical node vector in canonical order:
/// `[age_norm, sex, ihd, dcm, vhd, copd, portal_htn, rid, hyperthyroid,
/// renal_insufficiency, rac]`.
pub fn clinical_node_vector(rec: &ClinicalRecord, rac: f64) -> [f64; N_CLINICAL] {
    let mut v = [0.0; N_CLINICAL];
    v[0] = normalize_age(rec.age_years, AGE_MIN, AGE_MAX);
    for (i, f) in rec.flags_in_order().into_iter().enumerate() {
        v[1 + i] = f as f64;
    }
    v[N_CLINICAL - 1] = rac;
    v
}

// ---------------------------------------------------------------------------
// Full sample assembly
// ---------------------------------------------------------------------------

/// One model-ready sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    /// Short-axis series `[H, W, D, T]`.
    pub sax: Array4<T>,
    /// Four-chamber series `[H, W, T]`.
    pub ch4: Array3<T>,
    /// Clinical node vector, length 11.
    pub clinical: Array1<T>,
    pub label: usize,
}

/// Run the full pipeline on one raw sample.
pub fn build_sample<T: Real>(raw: &RawSample, cfg: &PreprocessConfig) -> Result<Sample<T>> {
    cfg.validate()?;

    // Short axis: [H, W, D, F] with three spatial axes.
    let sax = raw.sax_raw.mapv(f64::from).into_dyn();
    let sax = resample_spacing(&sax, raw.sax_spacing, cfg.target_spacing, 3)?;
    let sax_roi = resample_mask_nearest(
        &raw.sax_roi_mask.clone().into_dyn(),
        raw.sax_spacing,
        cfg.target_spacing,
        3,
    )?;
    let sax = crop_roi(&sax, &sax_roi, cfg.roi_margin_px)?;
    let sax = standardize_shape(&sax, &cfg.sax_shape)?;
    let sax = subsample_frames(&sax, cfg.frames_out, cfg.frame_step, 3)?;

    // Four chamber: [H, W, F] with two spatial axes.
    let ch4 = raw.ch4_raw.mapv(f64::from).into_dyn();
    let ch4 = resample_spacing(&ch4, raw.ch4_spacing, cfg.target_spacing, 2)?;
    let ch4_roi = resample_mask_nearest(
        &raw.ch4_roi_mask.clone().into_dyn(),
        raw.ch4_spacing,
        cfg.target_spacing,
        2,
    )?;
    let ch4 = crop_roi(&ch4, &ch4_roi, cfg.roi_margin_px)?;
    let ch4 = standardize_shape(&ch4, &cfg.ch4_shape)?;
    let ch4 = subsample_frames(&ch4, cfg.frames_out, cfg.frame_step, 2)?;

    // RAC comes from the raw PA mask on its native grid (pixel areas are
    // physical, so no resampling is involved).
    let rac = compute_rac(&raw.pa_mask_raw.clone().into_dyn(), raw.pa_spacing)?.rac;
    let clin = clinical_node_vector(&raw.clinical, rac);

    Ok(Sample {
        id: raw.id.clone(),
        sax: sax
            .mapv(T::from_f64c)
            .into_dimensionality()
            .expect("sax rank 4"),
        ch4: ch4
            .mapv(T::from_f64c)
            .into_dimensionality()
            .expect("ch4 rank 3"),
        clinical: Array1::from_iter(clin.iter().map(|&v| T::from_f64c(v))),
        label: raw.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, ArrayD};

    #[test]
    fn spline_reproduces_linear_ramp() {
        // A natural cubic spline through linear data is that line, so
        // resampling a ramp must match the analytic ramp to 1e-6.
        let n = 40;
        let ramp = ArrayD::from_shape_fn(IxDyn(&[n]), |ix| 3.0 + 0.5 * ix[0] as f64);
        let out = resample_spacing(&ramp, 2.0, 1.25, 1).unwrap();
        assert_eq!(out.len(), out_len(n, 2.0, 1.25));
        for (j, &v) in out.iter().enumerate() {
            let x = j as f64 * 1.25 / 2.0; // fractional input index
            let want = 3.0 + 0.5 * x.min((n - 1) as f64);
            assert!((v - want).abs() < 1e-6, "j={j}: {v} vs {want}");
        }
    }

    #[test]
    fn equal_spacing_is_identity() {
        let img = ArrayD::from_shape_fn(IxDyn(&[7, 5]), |ix| (ix[0] * 5 + ix[1]) as f64);
        let out = resample_spacing(&img, 1.3, 1.3, 2).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn smooth_phantom_range_is_preserved_within_5pc() {
        // Cubic overshoot bound, checked on (low-noise) generator output.
        let spec = crate::syn_cohort::CohortSpec {
            n_per_class: [1, 1, 1],
            noise_sigma: 0.005,
            seed: 9,
            ..Default::default()
        };
        let raw = crate::syn_cohort::gen_sample(&spec, 1);
        let img = raw.ch4_raw.mapv(f64::from).into_dyn();
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for &v in img.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let out = resample_spacing(&img, raw.ch4_spacing, 1.4, 2).unwrap();
        let span = hi - lo;
        for &v in out.iter() {
            assert!(
                v >= lo - 0.05 * span && v <= hi + 0.05 * span,
                "resampled value {v} outside [{lo}, {hi}] +/- 5%"
            );
        }
    }

    #[test]
    fn crop_respects_bbox_and_margin() {
        let img = ArrayD::from_shape_fn(IxDyn(&[10, 12, 3]), |ix| {
            (ix[0] * 100 + ix[1] * 10 + ix[2]) as f64
        });
        let mut roi = Array2::<u8>::zeros((10, 12));
        roi[[4, 5]] = 1;
        roi[[6, 8]] = 1;
        let out = crop_roi(&img, &roi.clone().into_dyn(), 1).unwrap();
        // rows 4..=6 +1 margin -> 3..=7 (5), cols 5..=8 +1 -> 4..=9 (6)
        assert_eq!(out.shape(), &[5, 6, 3]);
        assert_eq!(out[[0, 0, 0]], img[[3, 4, 0]]);
        // Margin clamps at the image edge.
        let mut roi_edge = Array2::<u8>::zeros((10, 12));
        roi_edge[[0, 0]] = 1;
        let out = crop_roi(&img, &roi_edge.into_dyn(), 2).unwrap();
        assert_eq!(out.shape(), &[3, 3, 3]);
    }

    #[test]
    fn empty_roi_is_an_error() {
        let img = ArrayD::zeros(IxDyn(&[4, 4]));
        let roi = ArrayD::<u8>::zeros(IxDyn(&[4, 4]));
        assert!(matches!(
            crop_roi(&img, &roi, 2),
            Err(PhnetError::EmptyRoi)
        ));
    }

    #[test]
    fn standardize_pads_high_side_and_crops_centered() {
        // Pad 5 -> 8: one leading zero row, two trailing.
        let img = ArrayD::from_shape_fn(IxDyn(&[5]), |ix| 1.0 + ix[0] as f64);
        let out = standardize_shape(&img, &[8]).unwrap();
        assert_eq!(
            out.as_slice().unwrap(),
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0]
        );
        // Crop 9 -> 4: start floor((9-4)/2)=2, keep indices 2..6.
        let img = ArrayD::from_shape_fn(IxDyn(&[9]), |ix| ix[0] as f64);
        let out = standardize_shape(&img, &[4]).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn subsample_takes_strided_frames_from_zero() {
        let img = ArrayD::from_shape_fn(IxDyn(&[2, 25]), |ix| ix[1] as f64);
        let out = subsample_frames(&img, 5, 5, 1).unwrap();
        assert_eq!(out.shape(), &[2, 5]);
        let row: Vec<f64> = out.index_axis(Axis(0), 0).iter().copied().collect();
        assert_eq!(row, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert!(subsample_frames(&img, 6, 5, 1).is_err());
    }

    #[test]
    fn rac_arithmetic_is_exact() {
        // Frame areas 100 px and 150 px at unit spacing: RAC = 0.5 exactly.
        let mut m = ndarray::Array3::<u8>::zeros((20, 20, 2));
        for i in 0..100 {
            m[[i / 20, i % 20, 0]] = 1;
        }
        for i in 0..150 {
            m[[i / 20, i % 20, 1]] = 1;
        }
        let r = compute_rac(&m.into_dyn(), 1.0).unwrap();
        assert_eq!(r.rac, 0.5);
        assert_eq!(r.area_min_mm2, 100.0);
        assert_eq!(r.area_max_mm2, 150.0);
    }

    #[test]
    fn rac_scales_with_spacing_squared() {
        let mut m = ndarray::Array3::<u8>::zeros((4, 4, 2));
        m[[0, 0, 0]] = 1;
        m[[0, 0, 1]] = 1;
        m[[0, 1, 1]] = 1;
        let r = compute_rac(&m.into_dyn(), 2.0).unwrap();
        assert_eq!(r.area_min_mm2, 4.0);
        assert_eq!(r.area_max_mm2, 8.0);
        assert_eq!(r.rac, 1.0);
    }

    #[test]
    fn empty_frame_is_an_error() {
        let m = ndarray::Array3::<u8>::zeros((4, 4, 2));
        assert!(matches!(
            compute_rac(&m.into_dyn(), 1.0),
            Err(PhnetError::EmptyPaMask)
        ));
    }

    #[test]
    fn age_normalization_cases() {
        assert_eq!(normalize_age(54.0, 18.0, 90.0), 0.5);
        assert_eq!(normalize_age(18.0, 18.0, 90.0), 0.0);
        assert_eq!(normalize_age(90.0, 18.0, 90.0), 1.0);
        assert_eq!(normalize_age(200.0, 18.0, 90.0), 1.0); // clamp
        assert_eq!(normalize_age(40.0, 50.0, 50.0), 0.5); // degenerate
    }

    #[test]
    fn clinical_vector_order_is_canonical() {
        let rec = ClinicalRecord {
            age_years: 54.0,
            sex: 1,
            ihd: 0,
            dcm: 1,
            vhd: 0,
            copd: 1,
            portal_htn: 0,
            rid: 1,
            hyperthyroid: 0,
            renal_insuff: 1,
        };
        let v = clinical_node_vector(&rec, 0.42);
        assert_eq!(
            v,
            [0.5, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.42]
        );
    }

    #[test]
    fn build_sample_hits_target_shapes_and_is_deterministic() {
        let spec = crate::syn_cohort::CohortSpec {
            n_per_class: [1, 1, 1],
            ..Default::default()
        };
        let raw = crate::syn_cohort::gen_sample(&spec, 0);
        let cfg = PreprocessConfig::default();
        let a = build_sample::<f32>(&raw, &cfg).unwrap();
        let b = build_sample::<f32>(&raw, &cfg).unwrap();
        assert_eq!(a.sax.shape(), &[144, 144, 12, 5]);
        assert_eq!(a.ch4.shape(), &[160, 160, 5]);
        assert_eq!(a.clinical.len(), N_CLINICAL);
        assert_eq!(a, b);
        assert!(a.clinical.iter().all(|v| v.is_finite()));
    }
}
