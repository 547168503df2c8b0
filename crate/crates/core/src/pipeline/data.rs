use std::fs;

use super::manifest::{tokens_from_text, Manifest, ManifestRecord, Split};
use super::PipelineError;
use crate::codec::{decode, Symbol, TokenSequence, Vocabulary};
use crate::ctc::{collapse, greedy_decode};
use crate::dsp::{load_wav, LogFreqAnalyzer, Spectrogram};
use crate::eval::SampleScore;
use crate::net::{infer, ModelConfig, ModelParams};

/// A manifest record with its features and reference loaded.
pub(crate) struct Sample {
    pub id: String,
    pub spec: Spectrogram,
    pub symbols: Vec<Symbol>,
}

pub(crate) fn load_symbols(manifest: &Manifest, record: &ManifestRecord) -> Result<Vec<Symbol>, PipelineError> {
    let path = manifest.resolve(&record.tokens);
    let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    tokens_from_text(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn load_sample(
    manifest: &Manifest,
    record: &ManifestRecord,
    analyzer: &LogFreqAnalyzer,
) -> Result<Sample, PipelineError> {
    let symbols = load_symbols(manifest, record)?;
    let path = manifest.resolve(&record.audio);
    let spec = load_wav(&path)
        .and_then(|clip| analyzer.analyze(&clip))
        .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(Sample {
        id: record.id.clone(),
        spec,
        symbols,
    })
}

pub(crate) fn load_split(
    manifest: &Manifest,
    split: Split,
    analyzer: &LogFreqAnalyzer,
) -> Result<Vec<Sample>, PipelineError> {
    manifest.split(split).map(|r| load_sample(manifest, r, analyzer)).collect()
}

/// Greedy transcription of one spectrogram: the collapsed symbols and
/// whether they decode to a valid score.
pub(crate) fn transcribe_spec(
    params: &ModelParams,
    config: &ModelConfig,
    vocab: &Vocabulary,
    spec: &Spectrogram,
) -> Result<(Vec<Symbol>, bool), PipelineError> {
    let grid = infer(params, config, spec).map_err(|e| PipelineError::Model(e.to_string()))?;
    let tokens: TokenSequence = collapse(&greedy_decode(&grid));
    let decodable = decode(&tokens, vocab).is_ok();
    Ok((vocab.symbols_of(&tokens), decodable))
}

pub(crate) fn score_sample(
    params: &ModelParams,
    config: &ModelConfig,
    vocab: &Vocabulary,
    sample: &Sample,
) -> Result<SampleScore, PipelineError> {
    let (hyp, decodable) = transcribe_spec(params, config, vocab, &sample.spec)?;
    Ok(SampleScore::from_symbols(&sample.id, &sample.symbols, &hyp, decodable))
}
