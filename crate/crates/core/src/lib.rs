//! Single-stage transcription of polyphonic audio into a compact `**kern`
//! score encoding.
//!
//! The pipeline: `**kern` scores are cleaned and cut into fragments
//! ([`kern`]), rendered to audio ([`synth`]) and encoded as symbol
//! sequences ([`codec`]). Audio becomes a log-frequency spectrogram
//! ([`dsp`]) which a convolutional-recurrent network ([`net`]) maps to
//! per-frame symbol posteriors, trained with the CTC loss and decoded
//! greedily ([`ctc`]). [`eval`] scores transcriptions by word and
//! character error rate, and [`pipeline`] ties everything into the batch
//! commands exposed by the `a2s` binary.

pub mod codec;
pub mod ctc;
pub mod dsp;
pub mod eval;
pub mod kern;
pub mod net;
pub mod pipeline;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/audio.md")]
    mod audio {}
    #[doc = include_str!("../../../book/src/ctc.md")]
    mod ctc {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
