//! Bit-exact file formats: PHT1 tensors, checkpoint directories, and the
//! cohort / preprocessed-dataset stores.
//!
//! PHT1 layout (all integers little-endian):
//!
//! | bytes | field                                    |
//! |-------|------------------------------------------|
//! | 4     | magic `"PHT1"`                           |
//! | 1     | dtype code (0 = f32, 1 = u8, 2 = f64)    |
//! | 1     | rank                                     |
//! | 2     | reserved, must be zero                   |
//! | 4·rank| dims as u32                              |
//! | rest  | payload, row-major (last index fastest)  |
//!
//! The payload length must equal element size × ∏dims. Write-then-read
//! round-trips bit-exactly; tensors are always serialized in logical
//! row-major order regardless of in-memory strides.
//!
//! A checkpoint is a directory of PHT1 files plus a `params.json` manifest
//! naming every tensor, its shape, and its file, along with a full model
//! config echo. Datasets follow the same pattern: a JSON manifest plus one
//! PHT1 file per tensor, loadable either wholesale or one sample at a time
//! (raw cohorts are ~36 MB per sample, so the preprocessing pipeline
//! streams rather than holding the cohort in memory).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, PreprocessConfig};
use crate::error::{PhnetError, Result};
use crate::model::Model;
use crate::params::ParamSet;
use crate::preprocess::Sample;
use crate::syn_cohort::{ClinicalRecord, CohortSpec, RawSample};

pub const PHT1_MAGIC: &[u8; 4] = b"PHT1";

/// Element types storable in a PHT1 file.
pub trait Pht1Scalar: Copy + Default + 'static {
    const CODE: u8;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Pht1Scalar for f32 {
    const CODE: u8 = 0;
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl Pht1Scalar for u8 {
    const CODE: u8 = 1;
    const SIZE: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl Pht1Scalar for f64 {
    const CODE: u8 = 2;
    const SIZE: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

/// Serialize a tensor view to PHT1 bytes (header + row-major payload).
pub fn tensor_to_bytes<T: Pht1Scalar>(tensor: &ArrayViewD<'_, T>) -> Result<Vec<u8>> {
    let rank = tensor.ndim();
    if rank > u8::MAX as usize {
        return Err(PhnetError::format("<tensor>", "rank exceeds 255"));
    }
    for &d in tensor.shape() {
        if d > u32::MAX as usize {
            return Err(PhnetError::format("<tensor>", "dimension exceeds u32"));
        }
    }
    let mut out = Vec::with_capacity(8 + 4 * rank + tensor.len() * T::SIZE);
    out.extend_from_slice(PHT1_MAGIC);
    out.push(T::CODE);
    out.push(rank as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    // `iter()` walks logical row-major order for any memory layout.
    for &v in tensor.iter() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn write_tensor<T: Pht1Scalar>(path: &Path, tensor: &ArrayViewD<'_, T>) -> Result<()> {
    let bytes = tensor_to_bytes(tensor)?;
    let mut w = BufWriter::new(
        fs::File::create(path).map_err(|e| PhnetError::io(path.display().to_string(), e))?,
    );
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| PhnetError::io(path.display().to_string(), e))
}

/// Parse PHT1 bytes into a dynamic-rank tensor of the expected scalar type.
pub fn tensor_from_bytes<T: Pht1Scalar>(path_label: &str, bytes: &[u8]) -> Result<ArrayD<T>> {
    let fail = |reason: String| PhnetError::format(path_label, reason);
    if bytes.len() < 8 {
        return Err(fail(format!("file too short for a header: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != PHT1_MAGIC {
        return Err(fail(format!("bad magic {:?}, expected \"PHT1\"", &bytes[0..4])));
    }
    let dtype = bytes[4];
    if dtype != T::CODE {
        return Err(fail(format!("dtype code {} where {} expected", dtype, T::CODE)));
    }
    let rank = bytes[5] as usize;
    let reserved = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    if reserved != 0 {
        return Err(fail(format!("reserved field is {reserved}, must be 0")));
    }
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(fail(format!("truncated dims: need {header} bytes")));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(
        || fail("dimension product overflows".to_string()),
    )?;
    let expected = header + n * T::SIZE;
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload length {} != expected {} for dims {dims:?}",
            bytes.len() - header,
            n * T::SIZE
        )));
    }
    let data: Vec<T> = bytes[header..]
        .chunks_exact(T::SIZE)
        .map(T::read_le)
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data)
        .map_err(|e| fail(format!("shape assembly failed: {e}")))
}

pub fn read_tensor<T: Pht1Scalar>(path: &Path) -> Result<ArrayD<T>> {
    let label = path.display().to_string();
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path).map_err(|e| PhnetError::io(label.clone(), e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| PhnetError::io(label.clone(), e))?;
    tensor_from_bytes(&label, &bytes)
}

fn fixed_rank<T, D: ndarray::Dimension>(path: &Path, arr: ArrayD<T>) -> Result<ndarray::Array<T, D>> {
    let shape = arr.shape().to_vec();
    arr.into_dimensionality::<D>().map_err(|_| {
        PhnetError::format(
            path.display().to_string(),
            format!("expected rank {}, got shape {shape:?}", D::NDIM.unwrap()),
        )
    })
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let label = path.display().to_string();
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| PhnetError::json(label.clone(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PhnetError::io(label, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let label = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| PhnetError::io(label.clone(), e))?;
    serde_json::from_str(&text).map_err(|e| PhnetError::json(label, e))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

/// `params.json`: config echo plus the tensor table (trainables and
/// running statistics listed separately, both sorted by name).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub params: Vec<TensorEntry>,
    pub stats: Vec<TensorEntry>,
}

fn tensor_entries(map: &BTreeMap<String, ArrayD<f32>>) -> Vec<TensorEntry> {
    map.iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file: format!("{name}.pht1"),
        })
        .collect()
}

pub fn save_checkpoint(dir: &Path, model: &Model<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PhnetError::io(dir.display().to_string(), e))?;
    let manifest = CheckpointManifest {
        config: model.cfg.clone(),
        params: tensor_entries(&model.params.params),
        stats: tensor_entries(&model.params.stats),
    };
    for (entry, tensor) in manifest
        .params
        .iter()
        .zip(model.params.params.values())
        .chain(manifest.stats.iter().zip(model.params.stats.values()))
    {
        write_tensor(&dir.join(&entry.file), &tensor.view())?;
    }
    write_json(&dir.join("params.json"), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Model<f32>> {
    let manifest: CheckpointManifest = read_json(&dir.join("params.json"))?;
    let read_table = |entries: &[TensorEntry]| -> Result<BTreeMap<String, ArrayD<f32>>> {
        let mut map = BTreeMap::new();
        for e in entries {
            let path = dir.join(&e.file);
            let tensor = read_tensor::<f32>(&path)?;
            if tensor.shape() != e.shape.as_slice() {
                return Err(PhnetError::format(
                    path.display().to_string(),
                    format!(
                        "manifest says shape {:?} but file holds {:?}",
                        e.shape,
                        tensor.shape()
                    ),
                ));
            }
            map.insert(e.name.clone(), tensor);
        }
        Ok(map)
    };
    let params = ParamSet {
        params: read_table(&manifest.params)?,
        stats: read_table(&manifest.stats)?,
    };
    params.check_against(&manifest.config)?;
    Model::from_params(manifest.config, params)
}

// ---------------------------------------------------------------------------
// Raw cohort store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEntry {
    pub id: String,
    pub label: usize,
    pub sax_spacing: f64,
    pub ch4_spacing: f64,
    pub pa_spacing: f64,
    pub clinical: ClinicalRecord,
    pub sax_raw: String,
    pub ch4_raw: String,
    pub pa_mask: String,
    pub sax_roi: String,
    pub ch4_roi: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortManifest {
    pub spec: CohortSpec,
    pub samples: Vec<RawEntry>,
}

pub const COHORT_MANIFEST: &str = "cohort.json";

/// Write one raw sample's tensors and return its manifest entry.
pub fn save_raw_sample(dir: &Path, raw: &RawSample) -> Result<RawEntry> {
    let file = |suffix: &str| format!("{}.{suffix}.pht1", raw.id);
    let entry = RawEntry {
        id: raw.id.clone(),
        label: raw.label,
        sax_spacing: raw.sax_spacing,
        ch4_spacing: raw.ch4_spacing,
        pa_spacing: raw.pa_spacing,
        clinical: raw.clinical.clone(),
        sax_raw: file("sax_raw"),
        ch4_raw: file("ch4_raw"),
        pa_mask: file("pa_mask"),
        sax_roi: file("sax_roi"),
        ch4_roi: file("ch4_roi"),
    };
    write_tensor(&dir.join(&entry.sax_raw), &raw.sax_raw.view().into_dyn())?;
    write_tensor(&dir.join(&entry.ch4_raw), &raw.ch4_raw.view().into_dyn())?;
    write_tensor(&dir.join(&entry.pa_mask), &raw.pa_mask_raw.view().into_dyn())?;
    write_tensor(&dir.join(&entry.sax_roi), &raw.sax_roi_mask.view().into_dyn())?;
    write_tensor(&dir.join(&entry.ch4_roi), &raw.ch4_roi_mask.view().into_dyn())?;
    Ok(entry)
}

/// Load one raw sample back from its manifest entry (~36 MB each at the
/// default raw geometry: callers stream rather than loading whole cohorts).
pub fn load_raw_sample(dir: &Path, entry: &RawEntry) -> Result<RawSample> {
    Ok(RawSample {
        id: entry.id.clone(),
        sax_raw: fixed_rank::<f32, ndarray::Ix4>(
            &dir.join(&entry.sax_raw),
            read_tensor(&dir.join(&entry.sax_raw))?,
        )?,
        sax_spacing: entry.sax_spacing,
        ch4_raw: fixed_rank::<f32, ndarray::Ix3>(
            &dir.join(&entry.ch4_raw),
            read_tensor(&dir.join(&entry.ch4_raw))?,
        )?,
        ch4_spacing: entry.ch4_spacing,
        pa_mask_raw: fixed_rank::<u8, ndarray::Ix3>(
            &dir.join(&entry.pa_mask),
            read_tensor(&dir.join(&entry.pa_mask))?,
        )?,
        pa_spacing: entry.pa_spacing,
        sax_roi_mask: fixed_rank::<u8, ndarray::Ix3>(
            &dir.join(&entry.sax_roi),
            read_tensor(&dir.join(&entry.sax_roi))?,
        )?,
        ch4_roi_mask: fixed_rank::<u8, ndarray::Ix2>(
            &dir.join(&entry.ch4_roi),
            read_tensor(&dir.join(&entry.ch4_roi))?,
        )?,
        clinical: entry.clinical.clone(),
        label: entry.label,
    })
}

pub fn save_cohort_manifest(dir: &Path, manifest: &CohortManifest) -> Result<()> {
    write_json(&dir.join(COHORT_MANIFEST), manifest)
}

pub fn load_cohort_manifest(dir: &Path) -> Result<CohortManifest> {
    read_json(&dir.join(COHORT_MANIFEST))
}

// ---------------------------------------------------------------------------
// Preprocessed dataset store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub label: usize,
    /// The 11 clinical node scalars (age, 9 flags, RAC), already normalized.
    pub clinical: Vec<f64>,
    pub sax: String,
    pub ch4: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub preprocess: PreprocessConfig,
    pub samples: Vec<SampleEntry>,
}

pub const DATASET_MANIFEST: &str = "dataset.json";

pub fn save_sample(dir: &Path, sample: &Sample<f32>) -> Result<SampleEntry> {
    let entry = SampleEntry {
        id: sample.id.clone(),
        label: sample.label,
        clinical: sample.clinical.iter().map(|&v| v as f64).collect(),
        sax: format!("{}.sax.pht1", sample.id),
        ch4: format!("{}.ch4.pht1", sample.id),
    };
    write_tensor(&dir.join(&entry.sax), &sample.sax.view().into_dyn())?;
    write_tensor(&dir.join(&entry.ch4), &sample.ch4.view().into_dyn())?;
    Ok(entry)
}

pub fn load_sample(dir: &Path, entry: &SampleEntry) -> Result<Sample<f32>> {
    let sax: Array4<f32> =
        fixed_rank(&dir.join(&entry.sax), read_tensor(&dir.join(&entry.sax))?)?;
    let ch4: Array3<f32> =
        fixed_rank(&dir.join(&entry.ch4), read_tensor(&dir.join(&entry.ch4))?)?;
    Ok(Sample {
        id: entry.id.clone(),
        sax,
        ch4,
        clinical: entry.clinical.iter().map(|&v| v as f32).collect(),
        label: entry.label,
    })
}

pub fn save_dataset_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    write_json(&dir.join(DATASET_MANIFEST), manifest)
}

pub fn load_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    read_json(&dir.join(DATASET_MANIFEST))
}

/// Load a whole preprocessed dataset (~5.5 MB per sample at default shapes).
pub fn load_dataset(dir: &Path) -> Result<(PreprocessConfig, Vec<Sample<f32>>)> {
    let manifest = load_dataset_manifest(dir)?;
    let samples = manifest
        .samples
        .iter()
        .map(|e| load_sample(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest.preprocess, samples))
}

/// Resolve a list of sample ids (one per line, `#` comments allowed).
pub fn read_id_file(path: &Path) -> Result<Vec<String>> {
    let label = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| PhnetError::io(label, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("params.json")
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{tiny_cfg, tiny_sample};
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn tensor_roundtrip_is_bit_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let dir = tempfile::tempdir().unwrap();
        let t = Array::from_shape_simple_fn(IxDyn(&[3, 4, 2]), || rng.gen::<f32>());
        let p = dir.path().join("t.pht1");
        write_tensor(&p, &t.view()).unwrap();
        let back = read_tensor::<f32>(&p).unwrap();
        assert_eq!(t.shape(), back.shape());
        for (a, b) in t.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let u = Array::from_shape_simple_fn(IxDyn(&[5]), || rng.gen::<u8>());
        let pu = dir.path().join("u.pht1");
        write_tensor(&pu, &u.view()).unwrap();
        assert_eq!(read_tensor::<u8>(&pu).unwrap(), u);

        let d = Array::from_shape_simple_fn(IxDyn(&[2, 2]), || rng.gen::<f64>());
        let pd = dir.path().join("d.pht1");
        write_tensor(&pd, &d.view()).unwrap();
        let back = read_tensor::<f64>(&pd).unwrap();
        for (a, b) in d.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn non_contiguous_views_serialize_in_logical_order() {
        // A transposed view must serialize by logical rows, not by memory.
        let t = Array::from_shape_vec(IxDyn(&[2, 3]), vec![1f32, 2., 3., 4., 5., 6.]).unwrap();
        let tt = t.view().reversed_axes();
        let bytes = tensor_to_bytes(&tt).unwrap();
        let back = tensor_from_bytes::<f32>("<mem>", &bytes).unwrap();
        assert_eq!(back.shape(), &[3, 2]);
        assert_eq!(
            back.iter().copied().collect::<Vec<_>>(),
            vec![1., 4., 2., 5., 3., 6.]
        );
    }

    #[test]
    fn header_arithmetic_matches_contract() {
        // Shape [144,144,12,5] f32: payload must be 4,976,640 bytes.
        let dims = [144usize, 144, 12, 5];
        let n: usize = dims.iter().product();
        assert_eq!(4 * n, 4_976_640);
        let t = ArrayD::<f32>::zeros(IxDyn(&dims));
        let bytes = tensor_to_bytes(&t.view()).unwrap();
        assert_eq!(bytes.len(), 8 + 4 * 4 + 4_976_640);
        assert_eq!(&bytes[0..4], b"PHT1");
        assert_eq!(bytes[4], 0); // f32 code
        assert_eq!(bytes[5], 4); // rank
        assert_eq!(&bytes[6..8], &[0, 0]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let t = ArrayD::<f32>::zeros(IxDyn(&[2, 2]));
        let good = tensor_to_bytes(&t.view()).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(tensor_from_bytes::<f32>("<m>", &bad_magic).is_err());

        let mut wrong_dtype = good.clone();
        wrong_dtype[4] = 2;
        assert!(tensor_from_bytes::<f32>("<m>", &wrong_dtype).is_err());

        let truncated = &good[..good.len() - 1];
        assert!(tensor_from_bytes::<f32>("<m>", truncated).is_err());

        let mut reserved = good.clone();
        reserved[6] = 1;
        assert!(tensor_from_bytes::<f32>("<m>", &reserved).is_err());

        // Reading as the wrong scalar type must fail via the dtype code.
        assert!(tensor_from_bytes::<u8>("<m>", &good).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model_bits() {
        let cfg = tiny_cfg();
        let model = Model::<f32>::new(&cfg, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.cfg, model.cfg);
        assert_eq!(back.params.params, model.params.params);
        assert_eq!(back.params.stats, model.params.stats);

        // Saving twice produces byte-identical directories.
        let dir2 = tempfile::tempdir().unwrap();
        save_checkpoint(dir2.path(), &model).unwrap();
        for entry in fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = fs::read(dir.path().join(&name)).unwrap();
            let b = fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identical saves");
        }
    }

    #[test]
    fn checkpoint_rejects_tampered_shape() {
        let cfg = tiny_cfg();
        let model = Model::<f32>::new(&cfg, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model).unwrap();
        // Overwrite one tensor with a wrong-shaped one.
        let bad = ArrayD::<f32>::zeros(IxDyn(&[1]));
        write_tensor(&dir.path().join("head.b2.pht1"), &bad.view()).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }

    #[test]
    fn dataset_store_roundtrips() {
        let cfg = tiny_cfg();
        let samples: Vec<Sample<f32>> =
            (0..4).map(|i| tiny_sample(&cfg, i, (i % 3) as usize)).collect();
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<SampleEntry> = samples
            .iter()
            .map(|s| save_sample(dir.path(), s).unwrap())
            .collect();
        let manifest = DatasetManifest {
            preprocess: PreprocessConfig::default(),
            samples: entries,
        };
        save_dataset_manifest(dir.path(), &manifest).unwrap();

        let (pcfg, back) = load_dataset(dir.path()).unwrap();
        assert_eq!(pcfg, PreprocessConfig::default());
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.sax, b.sax);
            assert_eq!(a.ch4, b.ch4);
            for (x, y) in a.clinical.iter().zip(b.clinical.iter()) {
                // Clinical scalars pass through f64 in the manifest.
                assert_eq!(*x, *y);
            }
        }
    }

    #[test]
    fn raw_cohort_store_roundtrips() {
        let spec = CohortSpec {
            n_per_class: [1, 1, 1],
            raw_frames: 6,
            ..CohortSpec::default()
        };
        let raw = crate::syn_cohort::gen_sample(&spec, 0);
        let dir = tempfile::tempdir().unwrap();
        let entry = save_raw_sample(dir.path(), &raw).unwrap();
        save_cohort_manifest(
            dir.path(),
            &CohortManifest {
                spec: spec.clone(),
                samples: vec![entry],
            },
        )
        .unwrap();

        let manifest = load_cohort_manifest(dir.path()).unwrap();
        assert_eq!(manifest.spec, spec);
        let back = load_raw_sample(dir.path(), &manifest.samples[0]).unwrap();
        assert_eq!(back.id, raw.id);
        assert_eq!(back.sax_raw, raw.sax_raw);
        assert_eq!(back.ch4_raw, raw.ch4_raw);
        assert_eq!(back.pa_mask_raw, raw.pa_mask_raw);
        assert_eq!(back.sax_roi_mask, raw.sax_roi_mask);
        assert_eq!(back.ch4_roi_mask, raw.ch4_roi_mask);
        assert_eq!(back.clinical, raw.clinical);
        assert_eq!(back.label, raw.label);
    }

    #[test]
    fn id_file_parsing_skips_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.txt");
        fs::write(&p, "# test ids\ns0001\n\n  s02  \n#x\ns3\n").unwrap();
        assert_eq!(read_id_file(&p).unwrap(), vec!["s0001", "s02", "s3"]);
    }
}
