//! Deterministic synthetic cohort generator.
//!
//! Each sample is a deforming annular phantom ("myocardium" ring around a
//! blood pool) rendered into a short-axis volume series and a four-chamber
//! plane series, plus a pulsating pulmonary-artery disk mask whose relative
//! area change (RAC) is drawn from class-conditional distributions. Class
//! signal enters through three channels: wall-motion amplitude, chamber
//! size, and the clinical record (RAC plus history-flag rates).
//!
//! Generation is pure: sample `i` of a spec is produced from an RNG stream
//! seeded with `spec.seed ^ i`, so cohorts are bit-reproducible and samples
//! may be generated in parallel or streamed one at a time.

use ndarray::{Array2, Array3, Array4, ArrayD};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PhnetError, Result};

/// Mean/standard deviation pair for a class-conditional Gaussian.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaussParam {
    pub mean: f64,
    pub std: f64,
}

/// Class-conditional Bernoulli rates for the binary clinical fields,
/// indexed `[non-PH, pre-capillary, post-capillary]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlagRates {
    pub sex: [f64; 3],
    pub ihd: [f64; 3],
    pub dcm: [f64; 3],
    pub vhd: [f64; 3],
    pub copd: [f64; 3],
    pub portal_htn: [f64; 3],
    pub rid: [f64; 3],
    pub hyperthyroid: [f64; 3],
    pub renal_insuff: [f64; 3],
}

impl Default for FlagRates {
    fn default() -> Self {
        // Valvular disease and dilated cardiomyopathy skew post-capillary,
        // connective-tissue disease (RID) and portal hypertension skew
        // pre-capillary; the rest provide mild background signal.
        FlagRates {
            sex: [0.45, 0.40, 0.55],
            ihd: [0.10, 0.20, 0.30],
            dcm: [0.05, 0.10, 0.45],
            vhd: [0.05, 0.10, 0.50],
            copd: [0.10, 0.35, 0.15],
            portal_htn: [0.02, 0.25, 0.05],
            rid: [0.05, 0.50, 0.08],
            hyperthyroid: [0.05, 0.15, 0.10],
            renal_insuff: [0.08, 0.15, 0.30],
        }
    }
}

/// Cohort recipe: class sizes, seed, and phantom parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    /// Samples per class `[non-PH, pre-capillary, post-capillary]`.
    pub n_per_class: [usize; 3],
    pub seed: u64,
    /// Standard deviation of the additive Gaussian intensity noise.
    pub noise_sigma: f64,
    /// Per-class target RAC distributions.
    pub rac_params: [GaussParam; 3],
    /// Frames per cardiac cycle in the raw series.
    pub raw_frames: usize,
    /// Raw pixel spacing is drawn uniformly from this range (mm).
    pub spacing_range: [f64; 2],
    pub flag_rates: FlagRates,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_per_class: [60, 112, 32],
            seed: 0,
            noise_sigma: 0.05,
            rac_params: [
                GaussParam { mean: 0.60, std: 0.08 },
                GaussParam { mean: 0.15, std: 0.05 },
                GaussParam { mean: 0.35, std: 0.07 },
            ],
            raw_frames: 25,
            spacing_range: [1.2, 1.6],
            flag_rates: FlagRates::default(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rac_params.iter().any(|g| g.mean <= 0.0 || g.std < 0.0) {
            return Err(PhnetError::InvalidConfig(
                "rac means must be positive with nonnegative std".into(),
            ));
        }
        let [lo, hi] = self.spacing_range;
        if !(lo > 0.0 && hi < 10.0 && lo <= hi) {
            return Err(PhnetError::InvalidConfig(
                "spacing_range must lie within (0, 10) with lo <= hi".into(),
            ));
        }
        if self.raw_frames < 5 {
            return Err(PhnetError::InvalidConfig(
                "raw_frames must be at least 5".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(PhnetError::InvalidConfig(
                "noise_sigma must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_per_class.iter().sum()
    }

    /// Class label of sample `idx` (samples are laid out class-by-class).
    pub fn label_of(&self, idx: usize) -> usize {
        let [n0, n1, _] = self.n_per_class;
        if idx < n0 {
            0
        } else if idx < n0 + n1 {
            1
        } else {
            2
        }
    }
}

/// Raw (pre-anonymized) clinical fields of one subject.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClinicalRecord {
    pub age_years: f64,
    pub sex: u8,
    pub ihd: u8,
    pub dcm: u8,
    pub vhd: u8,
    pub copd: u8,
    pub portal_htn: u8,
    pub rid: u8,
    pub hyperthyroid: u8,
    pub renal_insuff: u8,
}

impl ClinicalRecord {
    /// Binary fields in the canonical node order (sex first, then the
    /// eight history flags).
    pub fn flags_in_order(&self) -> [u8; 9] {
        [
            self.sex,
            self.ihd,
            self.dcm,
            self.vhd,
            self.copd,
            self.portal_htn,
            self.rid,
            self.hyperthyroid,
            self.renal_insuff,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=120.0).contains(&self.age_years) {
            return Err(PhnetError::InvalidConfig(format!(
                "age {} outside [0, 120]",
                self.age_years
            )));
        }
        if self.flags_in_order().iter().any(|&f| f > 1) {
            return Err(PhnetError::InvalidConfig("flags must be 0/1".into()));
        }
        Ok(())
    }
}

/// One raw subject: image series, masks, clinical record, label.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub id: String,
    /// Short-axis series `[H, W, D, frames]`.
    pub sax_raw: Array4<f32>,
    pub sax_spacing: f64,
    /// Four-chamber series `[H, W, frames]`.
    pub ch4_raw: Array3<f32>,
    pub ch4_spacing: f64,
    /// Pulmonary-artery mask series `[H, W, frames]` on the 4CH grid.
    pub pa_mask_raw: Array3<u8>,
    pub pa_spacing: f64,
    /// Static cardiac-region mask `[H, W, D]`.
    pub sax_roi_mask: Array3<u8>,
    /// Static cardiac-region mask `[H, W]`.
    pub ch4_roi_mask: Array2<u8>,
    pub clinical: ClinicalRecord,
    /// 0 = non-PH, 1 = pre-capillary PH, 2 = post-capillary PH.
    pub label: usize,
}

/// Raw grid sizes (deliberately larger than the standardized targets so the
/// crop/pad paths always do real work).
pub const SAX_RAW_HW: usize = 160;
pub const SAX_RAW_SLICES: usize = 14;
pub const CH4_RAW_HW: usize = 176;

// Phantom geometry in millimetres, before per-sample jitter.
const BLOOD: f32 = 0.45;
const MYO: f32 = 0.85;
const BG: f32 = 0.05;
// Edge transition width. Kept a few pixels wide at raw spacing so the
// phantom stays band-limited and cubic resampling does not overshoot.
const EDGE_MM: f64 = 4.0;
const WALL_MM: f64 = 8.0;
const PA_R0_MM: f64 = 14.0;

/// Per-class chamber radius (mm) and wall-motion amplitude.
fn class_geometry(label: usize) -> (f64, f64) {
    match label {
        0 => (24.0, 0.22),
        1 => (32.0, 0.08), // dilated, stiff
        _ => (28.0, 0.15),
    }
}

fn smootherstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Radial intensity profile of the annulus at inner radius `ri` (mm).
fn annulus_profile(r_mm: f64, ri: f64, wall: f64) -> f32 {
    let t1 = smootherstep(ri - EDGE_MM / 2.0, ri + EDGE_MM / 2.0, r_mm);
    let ro = ri + wall;
    let t2 = smootherstep(ro - EDGE_MM / 2.0, ro + EDGE_MM / 2.0, r_mm);
    let inner = BLOOD as f64 + (MYO as f64 - BLOOD as f64) * t1;
    (inner + (BG as f64 - inner) * t2) as f32
}

/// Parameters of one pulmonary-artery mask series.
#[derive(Debug, Clone, Copy)]
pub struct PaParams {
    /// Target relative area change; the sinusoid amplitude is derived as
    /// `a = rac / (2 + rac)` so that `(max - min) / min = rac`.
    pub rac_target: f64,
    pub r0_mm: f64,
    pub cx_mm: f64,
    pub cy_mm: f64,
}

/// Realized RAC of the discrete-phase analytic area law
/// `A(t) = A0 * (1 + a * sin(2*pi*t/frames))`.
pub fn expected_rac(rac_target: f64, frames: usize) -> f64 {
    let a = rac_target / (2.0 + rac_target);
    let (mut amax, mut amin) = (f64::MIN, f64::MAX);
    for t in 0..frames {
        let phi = 2.0 * std::f64::consts::PI * t as f64 / frames as f64;
        let area = 1.0 + a * phi.sin();
        amax = amax.max(area);
        amin = amin.min(area);
    }
    (amax - amin) / amin
}

/// Rasterize a pulsating-disk mask series on an `[h, w]` grid.
pub fn pa_mask_from_params(
    p: &PaParams,
    h: usize,
    w: usize,
    spacing_mm: f64,
    frames: usize,
) -> Array3<u8> {
    let a = p.rac_target / (2.0 + p.rac_target);
    let mut mask = Array3::<u8>::zeros((h, w, frames));
    for t in 0..frames {
        let phi = 2.0 * std::f64::consts::PI * t as f64 / frames as f64;
        let r = p.r0_mm * (1.0 + a * phi.sin()).sqrt();
        let r2 = r * r;
        for y in 0..h {
            let dy = (y as f64 + 0.5) * spacing_mm - p.cy_mm;
            for x in 0..w {
                let dx = (x as f64 + 0.5) * spacing_mm - p.cx_mm;
                if dy * dy + dx * dx <= r2 {
                    mask[[y, x, t]] = 1;
                }
            }
        }
    }
    mask
}

fn draw_pa_params<R: Rng>(label: usize, spec: &CohortSpec, spacing: f64, rng: &mut R) -> PaParams {
    let g = spec.rac_params[label];
    let rac_target = if g.std > 0.0 {
        Normal::new(g.mean, g.std).unwrap().sample(rng).max(0.0)
    } else {
        g.mean.max(0.0)
    };
    let r0_mm = PA_R0_MM * rng.gen_range(0.9..1.1);
    // Off-center so the PA sits outside the cardiac ROI.
    let cx_mm = (CH4_RAW_HW as f64 * spacing) / 2.0 - 30.0 + rng.gen_range(-3.0..3.0);
    let cy_mm = (CH4_RAW_HW as f64 * spacing) / 2.0 + 25.0 + rng.gen_range(-3.0..3.0);
    PaParams {
        rac_target,
        r0_mm,
        cx_mm,
        cy_mm,
    }
}

/// Pulmonary-artery mask series for one subject of class `label`.
pub fn gen_pa_mask_series(label: usize, spec: &CohortSpec, rng: &mut ChaCha12Rng) -> Array3<u8> {
    let spacing = rng.gen_range(spec.spacing_range[0]..=spec.spacing_range[1]);
    let p = draw_pa_params(label, spec, spacing, rng);
    pa_mask_from_params(&p, CH4_RAW_HW, CH4_RAW_HW, spacing, spec.raw_frames)
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.gen_range(0.0..1.0) < p)
}

/// Generate sample `idx` of the cohort described by `spec`.
///
/// Deterministic: the sample depends only on `(spec, idx)`.
pub fn gen_sample(spec: &CohortSpec, idx: usize) -> RawSample {
    let label = spec.label_of(idx);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ idx as u64);

    let sax_spacing = rng.gen_range(spec.spacing_range[0]..=spec.spacing_range[1]);
    let ch4_spacing = rng.gen_range(spec.spacing_range[0]..=spec.spacing_range[1]);

    let fr = &spec.flag_rates;
    let clinical = ClinicalRecord {
        age_years: rng.gen_range(18.0..90.0),
        sex: bernoulli(&mut rng, fr.sex[label]),
        ihd: bernoulli(&mut rng, fr.ihd[label]),
        dcm: bernoulli(&mut rng, fr.dcm[label]),
        vhd: bernoulli(&mut rng, fr.vhd[label]),
        copd: bernoulli(&mut rng, fr.copd[label]),
        portal_htn: bernoulli(&mut rng, fr.portal_htn[label]),
        rid: bernoulli(&mut rng, fr.rid[label]),
        hyperthyroid: bernoulli(&mut rng, fr.hyperthyroid[label]),
        renal_insuff: bernoulli(&mut rng, fr.renal_insuff[label]),
    };

    // Heart geometry (shared by both views up to a view scale).
    let (ri0_base, m_base) = class_geometry(label);
    let ri0 = ri0_base * rng.gen_range(0.9..1.1);
    let motion = m_base * rng.gen_range(0.85..1.15);
    let wall = WALL_MM + rng.gen_range(-1.0..1.0);
    let sax_cx = (SAX_RAW_HW as f64 * sax_spacing) / 2.0 + rng.gen_range(-4.0..4.0);
    let sax_cy = (SAX_RAW_HW as f64 * sax_spacing) / 2.0 + rng.gen_range(-4.0..4.0);
    let ch4_cx = (CH4_RAW_HW as f64 * ch4_spacing) / 2.0 + rng.gen_range(-4.0..4.0);
    let ch4_cy = (CH4_RAW_HW as f64 * ch4_spacing) / 2.0 + rng.gen_range(-4.0..4.0);
    let ch4_scale = 1.15;

    let pa = draw_pa_params(label, spec, ch4_spacing, &mut rng);

    let frames = spec.raw_frames;
    let two_pi = 2.0 * std::f64::consts::PI;

    // Contraction profile: radius shrinks by `motion` fraction mid-cycle.
    let contraction: Vec<f64> = (0..frames)
        .map(|t| 1.0 - motion * (1.0 - (two_pi * t as f64 / frames as f64).cos()) / 2.0)
        .collect();
    // Apex-to-base cone for the short-axis slices.
    let slice_scale: Vec<f64> = (0..SAX_RAW_SLICES)
        .map(|d| 0.75 + 0.35 * (d as f64 + 0.5) / SAX_RAW_SLICES as f64)
        .collect();

    // Short-axis volume series [H, W, D, F].
    let radius_sax = radial_field(SAX_RAW_HW, SAX_RAW_HW, sax_spacing, sax_cx, sax_cy);
    let mut sax_raw = Array4::<f32>::zeros((SAX_RAW_HW, SAX_RAW_HW, SAX_RAW_SLICES, frames));
    for y in 0..SAX_RAW_HW {
        for x in 0..SAX_RAW_HW {
            let r = radius_sax[[y, x]];
            for d in 0..SAX_RAW_SLICES {
                let sc = slice_scale[d];
                for t in 0..frames {
                    let ri = ri0 * sc * contraction[t];
                    sax_raw[[y, x, d, t]] = annulus_profile(r, ri, wall * sc);
                }
            }
        }
    }

    // Four-chamber plane series [H, W, F].
    let radius_ch4 = radial_field(CH4_RAW_HW, CH4_RAW_HW, ch4_spacing, ch4_cx, ch4_cy);
    let mut ch4_raw = Array3::<f32>::zeros((CH4_RAW_HW, CH4_RAW_HW, frames));
    for y in 0..CH4_RAW_HW {
        for x in 0..CH4_RAW_HW {
            let r = radius_ch4[[y, x]];
            for t in 0..frames {
                let ri = ri0 * ch4_scale * contraction[t];
                ch4_raw[[y, x, t]] = annulus_profile(r, ri, wall * ch4_scale);
            }
        }
    }

    // Additive intensity noise, drawn in flat row-major order.
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0f64, spec.noise_sigma).unwrap();
        for v in sax_raw.as_slice_mut().unwrap() {
            *v += noise.sample(&mut rng) as f32;
        }
        for v in ch4_raw.as_slice_mut().unwrap() {
            *v += noise.sample(&mut rng) as f32;
        }
    }

    // Static ROI masks: a disk comfortably containing the heart.
    let roi_r = ri0 * 1.15 + wall * 1.15 + 6.0;
    let mut sax_roi_mask = Array3::<u8>::zeros((SAX_RAW_HW, SAX_RAW_HW, SAX_RAW_SLICES));
    for y in 0..SAX_RAW_HW {
        for x in 0..SAX_RAW_HW {
            if radius_sax[[y, x]] <= roi_r {
                for d in 0..SAX_RAW_SLICES {
                    sax_roi_mask[[y, x, d]] = 1;
                }
            }
        }
    }
    let mut ch4_roi_mask = Array2::<u8>::zeros((CH4_RAW_HW, CH4_RAW_HW));
    for y in 0..CH4_RAW_HW {
        for x in 0..CH4_RAW_HW {
            if radius_ch4[[y, x]] <= roi_r {
                ch4_roi_mask[[y, x]] = 1;
            }
        }
    }

    let pa_mask_raw = pa_mask_from_params(&pa, CH4_RAW_HW, CH4_RAW_HW, ch4_spacing, frames);
    debug_assert!(
        (0..frames).all(|t| pa_mask_raw.index_axis(ndarray::Axis(2), t).iter().any(|&v| v == 1)),
        "PA mask must be non-empty in every frame"
    );

    RawSample {
        id: format!("s{idx:04}"),
        sax_raw,
        sax_spacing,
        ch4_raw,
        ch4_spacing,
        pa_mask_raw,
        pa_spacing: ch4_spacing,
        sax_roi_mask,
        ch4_roi_mask,
        clinical,
        label,
    }
}

/// Distance-from-center field in millimetres.
fn radial_field(h: usize, w: usize, spacing: f64, cx: f64, cy: f64) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(y, x)| {
        let dy = (y as f64 + 0.5) * spacing - cy;
        let dx = (x as f64 + 0.5) * spacing - cx;
        (dy * dy + dx * dx).sqrt()
    })
}

/// Generate the whole cohort in memory (samples ordered by index).
///
/// For the default 204-sample cohort this holds several gigabytes; prefer
/// [`gen_sample`] streaming when memory matters.
pub fn gen_cohort(spec: &CohortSpec) -> Result<Vec<RawSample>> {
    spec.validate()?;
    if spec.total() == 0 {
        return Err(PhnetError::InvalidConfig(
            "cohort must contain at least one sample".into(),
        ));
    }
    use rayon::prelude::*;
    Ok((0..spec.total())
        .into_par_iter()
        .map(|i| gen_sample(spec, i))
        .collect())
}

/// Helper used broadly in tests and the CLI: cast an image series to `f64`.
pub fn to_f64(a: &ArrayD<f32>) -> ArrayD<f64> {
    a.mapv(f64::from)
}
