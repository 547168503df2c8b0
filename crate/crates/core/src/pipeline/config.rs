use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dsp::BINS;
use crate::kern::{FragmentOptions, TempoMark};
use crate::net::{LrSchedule, ModelConfig, MOMENTUM};
use crate::synth::SynthVoiceSpec;

/// Network hyperparameters; the vocabulary size and input width are
/// filled in from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_freq_stride: usize,
    pub conv_layers: usize,
    pub recurrent_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub frame_doubling: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            conv_filters: m.conv_filters,
            conv_kernel: m.conv_kernel,
            conv_freq_stride: m.conv_freq_stride,
            conv_layers: m.conv_layers,
            recurrent_layers: m.recurrent_layers,
            hidden_units: m.hidden_units,
            dropout_p: m.dropout_p,
            frame_doubling: m.frame_doubling,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            conv_filters: self.conv_filters,
            conv_kernel: self.conv_kernel,
            conv_freq_stride: self.conv_freq_stride,
            conv_layers: self.conv_layers,
            recurrent_layers: self.recurrent_layers,
            hidden_units: self.hidden_units,
            dropout_p: self.dropout_p,
            frame_doubling: self.frame_doubling,
            vocab_size,
            input_bins: BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.0,
            test: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragmentSection {
    pub enabled: bool,
    pub min_measures: usize,
    pub max_measures: usize,
    /// Overlapping fragments for the training split.
    pub overlap: bool,
}

impl Default for FragmentSection {
    fn default() -> Self {
        let d = FragmentOptions::default();
        FragmentSection {
            enabled: true,
            min_measures: d.min_measures,
            max_measures: d.max_measures,
            overlap: false,
        }
    }
}

impl FragmentSection {
    pub fn options(&self, overlap: bool) -> FragmentOptions {
        FragmentOptions {
            min_measures: self.min_measures,
            max_measures: self.max_measures,
            allow_overlap: overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: LrSchedule,
    pub momentum: f64,
    /// Joint gradient-norm ceiling; no clipping when absent.
    pub grad_clip: Option<f64>,
    /// Weight of the newest batch in the batch-norm running statistics.
    pub bn_momentum: f64,
    /// Stop once validation CER is at or below this value.
    pub target_cer: Option<f64>,
    /// With `target_cer`, also require this fraction of validation
    /// transcriptions to decode before stopping.
    pub target_decodable: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 4,
            epochs: 100,
            learning_rate: LrSchedule::default(),
            momentum: MOMENTUM,
            grad_clip: None,
            bn_momentum: 0.1,
            target_cer: None,
            target_decodable: None,
        }
    }
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of `.krn` source scores.
    pub corpus_dir: PathBuf,
    /// Where `build` writes audio, token files and the manifest.
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/manifest.jsonl`.
    pub manifest: Option<PathBuf>,
    /// Where `train` writes checkpoints and its log. Defaults to
    /// `<output_dir>/checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    pub split: SplitFractions,
    pub fragment: FragmentSection,
    /// Apply the ±6% random tempo variation.
    pub tempo_jitter: bool,
    /// Tempo label for scores without one.
    pub default_tempo: String,
    /// Longer samples are skipped at build time.
    pub max_duration_seconds: f64,
    /// Voice specs, cycled over the spines of each score.
    pub voices: Vec<VoiceSection>,
    pub model: ModelSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoiceSection {
    pub harmonic_amplitudes: Vec<f64>,
    pub decay_seconds: f64,
}

impl From<&VoiceSection> for SynthVoiceSpec {
    fn from(v: &VoiceSection) -> Self {
        SynthVoiceSpec {
            harmonic_amplitudes: v.harmonic_amplitudes.clone(),
            decay_seconds: v.decay_seconds,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_dir: PathBuf::from("corpus"),
            output_dir: PathBuf::from("build"),
            manifest: None,
            checkpoint_dir: None,
            seed: 0,
            split: SplitFractions::default(),
            fragment: FragmentSection::default(),
            tempo_jitter: true,
            default_tempo: "Andante".into(),
            max_duration_seconds: 30.0,
            voices: Vec::new(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut config: RunConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("config: {e}")))?;
        config.resolve(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.output_dir);
        if let Some(m) = &mut self.manifest {
            fix(m);
        }
        if let Some(c) = &mut self.checkpoint_dir {
            fix(c);
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.output_dir.join("manifest.jsonl"))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoints"))
    }

    pub fn voice_specs(&self, spines: usize) -> Vec<SynthVoiceSpec> {
        if self.voices.is_empty() {
            return vec![SynthVoiceSpec::default(); spines];
        }
        (0..spines)
            .map(|i| SynthVoiceSpec::from(&self.voices[i % self.voices.len()]))
            .collect()
    }

    /// Checks every field before any work starts.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let s = &self.split;
        for (name, v) in [("train", s.train), ("validation", s.validation), ("test", s.test)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("split.{name} = {v} is outside [0, 1]"));
            }
        }
        if ((s.train + s.validation + s.test) - 1.0).abs() > 1e-9 {
            return bad("split fractions must sum to 1".into());
        }
        let f = &self.fragment;
        if f.min_measures == 0 || f.min_measures > f.max_measures {
            return bad(format!(
                "fragment bounds {}..={} are invalid",
                f.min_measures, f.max_measures
            ));
        }
        TempoMark::lookup(&self.default_tempo)
            .map_err(|e| PipelineError::Config(format!("default_tempo: {e}")))?;
        if !(self.max_duration_seconds > 0.0) {
            return bad("max_duration_seconds must be positive".into());
        }
        for v in &self.voices {
            SynthVoiceSpec::from(v)
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        self.model
            .model_config(2)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let t = &self.train;
        if t.batch_size == 0 {
            return bad("train.batch_size must be at least 1".into());
        }
        if !(t.learning_rate.base > 0.0 && t.learning_rate.decay > 0.0) || t.learning_rate.cycle == 0 {
            return bad("train.learning_rate needs positive base, decay and cycle".into());
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return bad("train.momentum must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&t.bn_momentum) {
            return bad("train.bn_momentum must lie in [0, 1]".into());
        }
        if t.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("train.grad_clip must be positive".into());
        }
        Ok(())
    }
}
