//! Configuration types. Every field has a serde default equal to the
//! published training/preprocessing setup; unknown JSON keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{PhnetError, Result};

/// Preprocessing targets: spacing, shapes, and frame subsampling.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Target isotropic pixel spacing in millimetres.
    pub target_spacing: f64,
    /// Standardized short-axis spatial shape `[H, W, D]`.
    pub sax_shape: [usize; 3],
    /// Standardized four-chamber spatial shape `[H, W]`.
    pub ch4_shape: [usize; 2],
    /// Retained frames per series (T).
    pub frames_out: usize,
    /// Step between retained frames.
    pub frame_step: usize,
    /// Margin in pixels around the ROI bounding box.
    pub roi_margin_px: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing: 1.4,
            sax_shape: [144, 144, 12],
            ch4_shape: [160, 160],
            frames_out: 5,
            frame_step: 5,
            roi_margin_px: 2,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_spacing > 0.0) {
            return Err(PhnetError::InvalidConfig(
                "target_spacing must be positive".into(),
            ));
        }
        if self.frames_out == 0 || self.frame_step == 0 {
            return Err(PhnetError::InvalidConfig(
                "frames_out and frame_step must be positive".into(),
            ));
        }
        if self.sax_shape.iter().any(|&d| d == 0) || self.ch4_shape.iter().any(|&d| d == 0) {
            return Err(PhnetError::InvalidConfig(
                "target shapes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dual-stage convolutional encoder plus temporal attention.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Output channels of the two convolution stages.
    pub channels: [usize; 2],
    /// Spatial kernel edge length (odd).
    pub kernel: usize,
    /// Pooling factor per stage (2 = halve each spatial axis).
    pub downsample_factor: usize,
    /// Token width after the post-pooling linear map.
    pub d_model: usize,
    /// Attention heads.
    pub n_heads: usize,
    /// Add sinusoidal positional encodings to the attention inputs.
    pub use_positional_encoding: bool,
    /// Image-side graph nodes produced by the node projection.
    pub n_image_nodes: usize,
    /// Temporal frames per series (T).
    pub frames: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            // Sized for minutes-scale single-core training; widen for larger
            // machines via config.
            channels: [4, 8],
            kernel: 3,
            downsample_factor: 2,
            d_model: 32,
            n_heads: 4,
            use_positional_encoding: true,
            n_image_nodes: 11,
            frames: 5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(PhnetError::InvalidConfig(
                "d_model must be a positive multiple of n_heads".into(),
            ));
        }
        if self.kernel % 2 == 0 {
            return Err(PhnetError::InvalidConfig("kernel must be odd".into()));
        }
        if self.downsample_factor != 2 {
            return Err(PhnetError::InvalidConfig(
                "downsample_factor must be 2 (2x max pooling)".into(),
            ));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(PhnetError::InvalidConfig(
                "channel counts must be positive".into(),
            ));
        }
        if self.n_image_nodes == 0 {
            return Err(PhnetError::InvalidConfig(
                "n_image_nodes must be at least 1".into(),
            ));
        }
        if self.frames == 0 {
            return Err(PhnetError::InvalidConfig("frames must be positive".into()));
        }
        Ok(())
    }
}

/// Graph topology of the fusion stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// Complete bipartite graph between image and clinical nodes (default).
    Bipartite,
    /// Complete graph over all nodes (documented collapse pitfall).
    Complete,
    /// User-supplied 0/1 matrix.
    Custom,
}

/// Fusion graph and classifier head.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub adjacency: AdjacencyMode,
    /// Clinical-side node count (the clinical record is 11 scalars).
    pub n_clinical_nodes: usize,
    /// Feature widths of the two GCN layers.
    pub gcn_widths: [usize; 2],
    /// Hidden width of the classifier MLP.
    pub mlp_hidden: usize,
    /// When false, the graph is bypassed and the raw node scalars feed the
    /// classifier head directly (the ablation arm).
    pub use_gcn: bool,
    /// Path to a plain-text 0/1 adjacency matrix (custom mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom_adjacency: Option<String>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            adjacency: AdjacencyMode::Bipartite,
            n_clinical_nodes: 11,
            gcn_widths: [8, 4],
            mlp_hidden: 32,
            use_gcn: true,
            custom_adjacency: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clinical_nodes == 0 {
            return Err(PhnetError::InvalidConfig(
                "n_clinical_nodes must be positive".into(),
            ));
        }
        if self.gcn_widths.iter().any(|&w| w == 0) || self.mlp_hidden == 0 {
            return Err(PhnetError::InvalidConfig(
                "layer widths must be positive".into(),
            ));
        }
        if self.adjacency == AdjacencyMode::Custom && self.custom_adjacency.is_none() {
            return Err(PhnetError::InvalidConfig(
                "custom adjacency mode requires custom_adjacency path".into(),
            ));
        }
        Ok(())
    }
}

/// Complete model architecture.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.fusion.validate()?;
        Ok(())
    }

    /// Total graph nodes: image nodes plus clinical nodes.
    pub fn n_nodes(&self) -> usize {
        self.encoder.n_image_nodes + self.fusion.n_clinical_nodes
    }
}

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.006,
            batch_size: 2,
            epochs: 30,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(PhnetError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(PhnetError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(PhnetError::InvalidConfig(
                "adam betas must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of the evaluation experiments.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Independent stratified holdout repeats.
    pub repeats: usize,
    /// Held-out test samples per class.
    pub per_class_test: usize,
    /// Inclusive training-size sweep bounds and step.
    pub sweep_min: usize,
    pub sweep_max: usize,
    pub sweep_step: usize,
    /// Image-node counts swept by the node ablation.
    pub node_list: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            repeats: 35,
            per_class_test: 6,
            sweep_min: 71,
            sweep_max: 186,
            sweep_step: 5,
            node_list: vec![5, 9, 10, 11, 12, 13, 22, 44],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.per_class_test == 0 {
            return Err(PhnetError::InvalidConfig(
                "repeats and per_class_test must be positive".into(),
            ));
        }
        if self.sweep_step == 0 || self.sweep_min > self.sweep_max {
            return Err(PhnetError::InvalidConfig(
                "sweep bounds must satisfy min <= max with positive step".into(),
            ));
        }
        if self.node_list.iter().any(|&n| n == 0) {
            return Err(PhnetError::InvalidConfig(
                "node counts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Top-level run configuration (the JSON document read by the CLI).
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cohort: crate::syn_cohort::CohortSpec,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        self.preprocess.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.experiment.validate()?;
        Ok(())
    }

    /// Load from a JSON file, rejecting unknown keys.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PhnetError::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PhnetError::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_values() {
        let t = TrainConfig::default();
        assert_eq!(t.learning_rate, 0.006);
        assert_eq!(t.batch_size, 2);
        assert_eq!(t.epochs, 30);
        let p = PreprocessConfig::default();
        assert_eq!(p.target_spacing, 1.4);
        assert_eq!(p.sax_shape, [144, 144, 12]);
        assert_eq!(p.ch4_shape, [160, 160]);
        assert_eq!(p.frames_out, 5);
        assert_eq!(p.frame_step, 5);
        let e = ExperimentConfig::default();
        assert_eq!(e.repeats, 35);
        assert_eq!((e.sweep_min, e.sweep_max, e.sweep_step), (71, 186, 5));
        assert_eq!(e.node_list, vec![5, 9, 10, 11, 12, 13, 22, 44]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{ "train": { "learning_rate": 0.01, "warmup": 5 } }"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }

    #[test]
    fn empty_document_yields_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_caught() {
        let mut cfg = RunConfig::default();
        cfg.model.encoder.d_model = 30; // not divisible by 4 heads
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 0;
        assert!(cfg.validate().is_err());
    }
}

