use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{tokens_to_text, Manifest, ManifestRecord, Split};
use super::{derive_seed, stream, PipelineError, RunConfig};
use crate::codec::encode_symbols;
use crate::dsp::{write_wav, WINDOW};
use crate::kern::{assign_tempo, fragment, parse_kern_file, preprocess, Diagnostic, KernDocument, KernError, TempoMark};
use crate::synth::render;

#[derive(Debug)]
pub struct BuildReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// Problems with individual source files; those files were skipped.
    pub diagnostics: Vec<Diagnostic>,
    /// Samples left out for being too long or too short.
    pub skipped: Vec<String>,
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let is_kern = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e == "krn" || e == "kern");
        if is_kern && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Source counts per split: rounded fractions, with the remainder going to
/// test and at least one training score whenever training gets a share.
fn split_counts(n: usize, config: &RunConfig) -> (usize, usize) {
    let f = &config.split;
    let mut train = ((f.train * n as f64).round() as usize).min(n);
    if f.train > 0.0 && train == 0 {
        train = n.min(1);
    }
    let validation = ((f.validation * n as f64).round() as usize).min(n - train);
    (train, validation)
}

fn tempo_for(doc: &KernDocument, config: &RunConfig, seed: u64, path: &Path, diags: &mut Vec<Diagnostic>) -> TempoMark {
    let label = doc.metadata.tempo.as_deref().unwrap_or(&config.default_tempo);
    let label = match TempoMark::lookup(label) {
        Ok(_) => label,
        Err(error) => {
            warn!("{}: {error}; using {}", path.display(), config.default_tempo);
            diags.push(Diagnostic {
                path: path.to_path_buf(),
                error,
            });
            &config.default_tempo
        }
    };
    if config.tempo_jitter {
        assign_tempo(label, seed).expect("label was looked up")
    } else {
        TempoMark::lookup(label).expect("label was looked up")
    }
}

/// Builds the synthetic dataset: WAV and token files plus the manifest.
/// Sources are assigned to splits before fragmenting, so no score
/// contributes to two splits.
pub fn cmd_build(config: &RunConfig) -> Result<BuildReport, PipelineError> {
    config.validate()?;
    let files = corpus_files(&config.corpus_dir)?;
    if files.is_empty() {
        return Err(PipelineError::Data(format!(
            "no .krn files in {}",
            config.corpus_dir.display()
        )));
    }

    let mut diagnostics = Vec::new();
    let mut sources = Vec::new();
    for path in files {
        match parse_kern_file(&path).and_then(|d| preprocess(&d)) {
            Ok(doc) => sources.push((path, doc)),
            Err(error) => {
                warn!("{}: {error}", path.display());
                diagnostics.push(Diagnostic { path, error });
            }
        }
    }
    if sources.is_empty() {
        return Err(PipelineError::Data(format!(
            "none of the {} corpus files could be read",
            diagnostics.len()
        )));
    }

    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::SPLIT])));
    let (n_train, n_val) = split_counts(sources.len(), config);
    let mut splits = vec![Split::Test; sources.len()];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }

    let out = &config.output_dir;
    for sub in ["wav", "tokens"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    }
    let manifest_path = config.manifest_path();
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    // record paths are relative to the manifest when it sits in the output
    // directory, absolute otherwise
    let relative = manifest_dir == *out;
    let record_path = |p: PathBuf| if relative { p } else { out.join(p) };

    let mut manifest = Manifest {
        records: Vec::new(),
        root: manifest_dir.clone(),
    };
    let mut skipped = Vec::new();
    for (i, ((path, doc), split)) in sources.iter().zip(&splits).enumerate() {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
        let pieces = if config.fragment.enabled {
            let seed = derive_seed(config.seed, &[stream::FRAGMENT, i as u64]);
            let opts = config.fragment.options(config.fragment.overlap && *split == Split::Train);
            match fragment(doc, seed, opts) {
                Ok(p) => p,
                Err(KernError::NoBarlines) => vec![doc.clone()],
                Err(error) => {
                    diagnostics.push(Diagnostic {
                        path: path.clone(),
                        error,
                    });
                    continue;
                }
            }
        } else {
            vec![doc.clone()]
        };

        for (k, piece) in pieces.iter().enumerate() {
            let id = format!("{stem}-{k:03}");
            let tempo_seed = derive_seed(config.seed, &[stream::TEMPO, i as u64, k as u64]);
            let tempo = tempo_for(piece, config, tempo_seed, path, &mut diagnostics);
            let symbols = match encode_symbols(piece) {
                Ok(s) => s,
                Err(e) => {
                    warn!("{id}: {e}");
                    skipped.push(id);
                    continue;
                }
            };
            let clip = render(piece, &tempo, &config.voice_specs(piece.spines.len()))
                .map_err(|e| PipelineError::Data(format!("{id}: {e}")))?;
            if clip.seconds() > config.max_duration_seconds || clip.samples().len() < WINDOW {
                info!("{id}: {:.2} s is outside the allowed duration, skipped", clip.seconds());
                skipped.push(id);
                continue;
            }
            let audio = PathBuf::from("wav").join(format!("{id}.wav"));
            let tokens = PathBuf::from("tokens").join(format!("{id}.txt"));
            let wav_path = out.join(&audio);
            write_wav(&wav_path, &clip).map_err(|e| PipelineError::Data(format!("{}: {e}", wav_path.display())))?;
            let tok_path = out.join(&tokens);
            fs::write(&tok_path, tokens_to_text(&symbols)).map_err(|e| PipelineError::io(&tok_path, e))?;
            manifest.records.push(ManifestRecord {
                id,
                audio: record_path(audio),
                tokens: record_path(tokens),
                duration_seconds: clip.seconds(),
                split: *split,
                source: path.file_name().map_or(String::new(), |n| n.to_string_lossy().into_owned()),
            });
        }
    }
    if manifest.records.is_empty() {
        return Err(PipelineError::Data("no samples were produced".into()));
    }
    if let Some(dir) = manifest_path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    manifest.save(&manifest_path)?;
    info!("{} samples written to {}", manifest.records.len(), manifest_path.display());
    Ok(BuildReport {
        manifest,
        manifest_path,
        diagnostics,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_round() {
        let c = RunConfig::default();
        assert_eq!(split_counts(4, &c), (3, 0));
        assert_eq!(split_counts(1, &c), (1, 0));
        let mut c = RunConfig::default();
        c.split.train = 0.5;
        c.split.validation = 0.25;
        c.split.test = 0.25;
        assert_eq!(split_counts(8, &c), (4, 2));
    }
}
