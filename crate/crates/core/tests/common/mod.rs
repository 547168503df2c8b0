//! Independent oracles shared by the integration tests. None of these call
//! the code they check.

#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use a2s::codec::TokenSequence;
use a2s::ctc::{ctc_grad, ctc_loss};
use a2s::kern::{parse_kern_file, preprocess, KernDocument};
use a2s::net::{backward, forward_features, Mode, ModelConfig, ModelParams, PosteriorGrid};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Merge runs, then drop blanks (index 0).
pub fn oracle_collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != 0 {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Probability of `target` by summing every one of the `classes^frames`
/// labelings that collapse to it.
pub fn brute_force_ctc(probs: &Array2<f64>, target: &[usize]) -> f64 {
    let (frames, classes) = probs.dim();
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if oracle_collapse(&path) == target {
            total += path.iter().enumerate().map(|(t, &s)| probs[[t, s]]).product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                return total;
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

pub fn random_probs(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_simple_fn((frames, classes), || rng.gen_range(0.01..1.0));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

pub fn random_target(rng: &mut ChaCha8Rng, len: usize, classes: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(1..classes)).collect()
}

/// A random frame labeling that collapses to `target`: every symbol is
/// repeated, blanks are sprinkled between symbols and a blank always
/// separates equal neighbours.
pub fn random_expansion(rng: &mut ChaCha8Rng, target: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let blanks = |rng: &mut ChaCha8Rng, out: &mut Vec<usize>, min: usize| {
        for _ in 0..rng.gen_range(min..=min + 2) {
            out.push(0);
        }
    };
    blanks(rng, &mut out, 0);
    for (i, &s) in target.iter().enumerate() {
        if i > 0 {
            blanks(rng, &mut out, usize::from(target[i - 1] == s));
        }
        for _ in 0..rng.gen_range(1..=3) {
            out.push(s);
        }
    }
    blanks(rng, &mut out, 0);
    out
}

/// Memo-free Levenshtein distance.
pub fn edit_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_recursive(ra, rb) + usize::from(x != y);
            sub.min(edit_recursive(ra, b) + 1).min(edit_recursive(a, rb) + 1)
        }
    }
}

/// Relative error with a floor so that coordinates whose true gradient
/// is essentially zero are compared absolutely.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between `ctc_grad` and central differences of
/// `ctc_loss` with respect to the logits.
pub fn ctc_fd_max_error(rng: &mut ChaCha8Rng, frames: usize, classes: usize, target: &[usize], eps: f64) -> f64 {
    let logits = Array2::from_shape_simple_fn((frames, classes), || rng.gen_range(-2.0..2.0));
    let target = TokenSequence(target.to_vec());
    let grid = PosteriorGrid::from_logits(&logits);
    let (_, lattice) = ctc_loss(&grid, &target).expect("feasible");
    let grad = ctc_grad(&lattice, &grid, &target);
    let loss_at = |l: &Array2<f64>| ctc_loss(&PosteriorGrid::from_logits(l), &target).unwrap().0;
    let mut worst = 0.0f64;
    for t in 0..frames {
        for k in 0..classes {
            let mut up = logits.clone();
            up[[t, k]] += eps;
            let mut down = logits.clone();
            down[[t, k]] -= eps;
            let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * eps);
            worst = worst.max(rel_error(grad[[t, k]], numeric));
        }
    }
    worst
}

pub fn miniature_config(vocab: usize, dropout: f64) -> ModelConfig {
    ModelConfig {
        conv_filters: 2,
        conv_kernel: 3,
        conv_freq_stride: 2,
        conv_layers: 2,
        recurrent_layers: 2,
        hidden_units: 8,
        dropout_p: dropout,
        frame_doubling: true,
        vocab_size: vocab,
        input_bins: 12,
    }
}

/// Largest relative error between `backward` and central differences of
/// the CTC loss through the whole network, over every parameter.
pub fn network_fd_max_error(seed: u64, frames: usize, config: &ModelConfig, target: &[usize], eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(config, seed);
    // non-trivial running statistics
    for t in params.running_mut() {
        let is_var = t.name.ends_with("var");
        for v in &mut t.data {
            *v = if is_var { rng.gen_range(0.5..2.0) } else { rng.gen_range(-0.3..0.3) };
        }
    }
    let input = Array2::from_shape_simple_fn((frames, config.input_bins), || rng.gen_range(0.0..2.0));
    let target = TokenSequence(target.to_vec());
    let dropout_seed = seed ^ 0x5eed;
    let loss = |p: &ModelParams| {
        let (logits, _) = forward_features(p, config, &input, Mode::Train, dropout_seed).unwrap();
        ctc_loss(&PosteriorGrid::from_logits(&logits), &target).unwrap().0
    };
    let (logits, cache) = forward_features(&params, config, &input, Mode::Train, dropout_seed).unwrap();
    let grid = PosteriorGrid::from_logits(&logits);
    let (_, lattice) = ctc_loss(&grid, &target).unwrap();
    let grads = backward(&params, config, &cache.unwrap(), &ctc_grad(&lattice, &grid, &target)).unwrap();

    let mut worst = 0.0f64;
    for ti in 0..params.tensors().len() {
        for j in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti].data[j];
            params.tensors_mut()[ti].data[j] = orig + eps;
            let up = loss(&params);
            params.tensors_mut()[ti].data[j] = orig - eps;
            let down = loss(&params);
            params.tensors_mut()[ti].data[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(rel_error(grads.tensors[ti][j], numeric));
        }
    }
    worst
}

/// The hand-built fixture scores, preprocessed, sorted by file name.
pub fn fixture_documents() -> Vec<(String, KernDocument)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/codec");
    let mut paths: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let doc = parse_kern_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            let doc = preprocess(&doc).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), doc)
        })
        .collect()
}

/// Random valid `**kern` text: `voices` spines of `measures` 2/4 bars on a
/// sixteenth grid, with rests, dots, ties (including ones across bars),
/// fermatas and null tokens where another voice moves.
pub fn random_kern(rng: &mut ChaCha8Rng, voices: usize, measures: usize) -> String {
    const LETTERS: [&str; 7] = ["c", "d", "e", "f", "g", "a", "b"];
    // (sixteenths, kern duration)
    const VALUES: [(usize, &str); 6] = [(1, "16"), (2, "8"), (3, "8."), (4, "4"), (6, "4."), (8, "2")];
    let pitch = |rng: &mut ChaCha8Rng| -> String {
        let letter = LETTERS[rng.gen_range(0..7)];
        let octave = rng.gen_range(2..=6);
        let name = if octave >= 4 {
            letter.repeat(octave - 3)
        } else {
            letter.to_uppercase().repeat(4 - octave)
        };
        name + ["", "#", "-"][rng.gen_range(0..3)]
    };
    #[derive(Clone)]
    struct Ev {
        at: usize,
        dur: &'static str,
        pitch: Option<String>,
        open: bool,
        close: bool,
        fermata: bool,
    }
    let mut lanes: Vec<Vec<Ev>> = vec![Vec::new(); voices];
    for m in 0..measures {
        for lane in lanes.iter_mut() {
            let mut t = 0;
            while t < 8 {
                let fits: Vec<_> = VALUES.iter().filter(|(len, _)| t + len <= 8).collect();
                let &&(len, dur) = &fits[rng.gen_range(0..fits.len())];
                let rest = rng.gen_bool(0.15);
                let mut ev = Ev {
                    at: m * 8 + t,
                    dur,
                    pitch: (!rest).then(|| pitch(rng)),
                    open: false,
                    close: false,
                    fermata: !rest && rng.gen_bool(0.05),
                };
                if let Some(prev) = lane.last_mut() {
                    if !rest && prev.pitch.is_some() && rng.gen_bool(0.2) {
                        prev.open = true;
                        ev.pitch = prev.pitch.clone();
                        ev.close = true;
                    }
                }
                lane.push(ev);
                t += len;
            }
        }
    }
    let mut text = vec!["**kern"; voices].join("\t") + "\n";
    for m in 0..measures {
        for t in m * 8..(m + 1) * 8 {
            let cells: Vec<Option<String>> = lanes
                .iter()
                .map(|lane| {
                    lane.iter().find(|e| e.at == t).map(|e| {
                        let body = e.pitch.clone().unwrap_or_else(|| "r".into());
                        let (pre, post) = match (e.close, e.open) {
                            (false, true) => ("[", ""),
                            (true, false) => ("", "]"),
                            (true, true) => ("", "_"),
                            (false, false) => ("", ""),
                        };
                        format!("{pre}{}{body}{post}{}", e.dur, if e.fermata { ";" } else { "" })
                    })
                })
                .collect();
            if cells.iter().any(Option::is_some) {
                let row: Vec<String> = cells.into_iter().map(|c| c.unwrap_or_else(|| ".".into())).collect();
                text += &(row.join("\t") + "\n");
            }
        }
        text += &(vec!["="; voices].join("\t") + "\n");
    }
    text + &vec!["*-"; voices].join("\t") + "\n"
}
