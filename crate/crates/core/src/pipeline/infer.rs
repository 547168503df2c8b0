use std::path::Path;

use log::warn;

use super::data::{load_sample, load_symbols, transcribe_spec};
use super::manifest::{tokens_to_text, Manifest, Split};
use super::PipelineError;
use crate::codec::{decode_symbols, SyntaxError};
use crate::dsp::{load_wav, AudioClip, LogFreqAnalyzer, WINDOW};
use crate::eval::{EvaluationReport, SampleScore};
use crate::net::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub enum Transcription {
    /// A valid score, serialized as `**kern`.
    Score(String),
    /// The collapsed symbols did not form a valid score; `text` holds
    /// them one per line.
    Symbols { text: String, error: SyntaxError },
}

/// Transcribes one WAV file. Clips shorter than one analysis window are
/// padded with silence.
pub fn cmd_transcribe(checkpoint: &Path, wav: &Path) -> Result<Transcription, PipelineError> {
    let ckpt = Checkpoint::load(checkpoint, None)?;
    let clip = load_wav(wav).map_err(|e| PipelineError::Data(format!("{}: {e}", wav.display())))?;
    let clip = if clip.samples().len() < WINDOW {
        let mut samples = clip.samples().to_vec();
        samples.resize(WINDOW, 0.0);
        AudioClip::new(samples, clip.sample_rate()).map_err(|e| PipelineError::Data(e.to_string()))?
    } else {
        clip
    };
    let spec = LogFreqAnalyzer::default()
        .analyze(&clip)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", wav.display())))?;
    let (symbols, _) = transcribe_spec(&ckpt.params, &ckpt.config, &ckpt.vocabulary, &spec)?;
    Ok(match decode_symbols(&symbols) {
        Ok(doc) => Transcription::Score(doc.serialize()),
        Err(error) => Transcription::Symbols {
            text: tokens_to_text(&symbols),
            error,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub report: EvaluationReport,
    /// Samples that could not be loaded, with the reason.
    pub failures: Vec<(String, String)>,
}

/// Scores a split of the manifest. With `oracle` set the references are
/// scored against themselves and no checkpoint is needed.
pub fn cmd_evaluate(
    checkpoint: Option<&Path>,
    manifest_path: &Path,
    split: Split,
    oracle: bool,
) -> Result<EvaluateOutcome, PipelineError> {
    let manifest = Manifest::load(manifest_path)?;
    let records: Vec<_> = manifest.split(split).collect();
    if records.is_empty() {
        return Err(PipelineError::Data(format!("the {split} split is empty")));
    }
    let ckpt = match (oracle, checkpoint) {
        (true, _) => None,
        (false, Some(path)) => Some(Checkpoint::load(path, None)?),
        (false, None) => return Err(PipelineError::Config("evaluate needs --checkpoint or --oracle".into())),
    };
    let analyzer = LogFreqAnalyzer::default();
    let mut report = EvaluationReport::default();
    let mut failures = Vec::new();
    for record in records {
        let score = match &ckpt {
            None => load_symbols(&manifest, record).map(|reference| {
                let decodable = decode_symbols(&reference).is_ok();
                SampleScore::from_symbols(&record.id, &reference, &reference, decodable)
            }),
            Some(c) => load_sample(&manifest, record, &analyzer).and_then(|sample| {
                let (hyp, decodable) = transcribe_spec(&c.params, &c.config, &c.vocabulary, &sample.spec)?;
                Ok(SampleScore::from_symbols(&record.id, &sample.symbols, &hyp, decodable))
            }),
        };
        match score {
            Ok(s) => report.push(s),
            Err(PipelineError::Model(m)) => return Err(PipelineError::Model(m)),
            Err(e) => {
                warn!("{}: {e}", record.id);
                failures.push((record.id.clone(), e.to_string()));
            }
        }
    }
    if report.samples.is_empty() {
        return Err(PipelineError::Data(format!("no sample of the {split} split could be loaded")));
    }
    Ok(EvaluateOutcome { report, failures })
}
