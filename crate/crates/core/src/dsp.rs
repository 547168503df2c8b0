//! Audio input and the log-frequency spectrogram.
//!
//! Frames of 2048 samples (92.88 ms at 22050 Hz) with a hop of 512 are
//! Hamming-windowed and transformed. Linear-frequency magnitudes are then
//! pooled into 240 bins spaced 48 per octave from C2, with A4 falling
//! exactly on bin 132, and compressed with `log(1 + m)`.
//!
//! At C2 adjacent log bins are under 1 Hz apart, far finer than the
//! 10.8 Hz spacing of a 2048-point transform. Each windowed frame is
//! therefore zero-padded to 32768 points before the transform, which
//! samples the same spectrum sixteen times more densely, and every log bin
//! averages the padded spectrum under a triangular kernel reaching to its
//! two neighbours' centres.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub const SAMPLE_RATE: u32 = 22050;
pub const WINDOW: usize = 2048;
pub const HOP: usize = 512;
pub const BINS_PER_OCTAVE: usize = 48;
pub const BINS: usize = 5 * BINS_PER_OCTAVE;
/// Transform length after zero-padding a window.
pub const FFT_SIZE: usize = 32768;
/// Index of the 440 Hz bin.
pub const A4_BIN: usize = 132;

const DUMP_MAGIC: &[u8; 8] = b"A2SSPEC1";

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("sample rate {0} Hz, expected 22050 Hz")]
    WrongSampleRate(u32),
    #[error("{samples} samples is shorter than one {WINDOW}-sample window")]
    TooShort { samples: usize },
    #[error("audio clip has no samples")]
    EmptyClip,
    #[error("sample {index} is {value}, outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("malformed spectrogram dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowest analysed frequency, C2.
pub fn c2_frequency() -> f64 {
    440.0 * 2f64.powf(-33.0 / 12.0)
}

/// Centre frequency of log bin `k`.
pub fn bin_frequency(k: f64) -> f64 {
    c2_frequency() * 2f64.powf(k / BINS_PER_OCTAVE as f64)
}

/// Fractional bin position of a frequency.
pub fn bin_position(freq: f64) -> f64 {
    BINS_PER_OCTAVE as f64 * (freq / c2_frequency()).log2()
}

pub fn frame_count(samples: usize) -> usize {
    if samples < WINDOW {
        0
    } else {
        (samples - WINDOW) / HOP + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate != SAMPLE_RATE {
            return Err(DspError::WrongSampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(DspError::EmptyClip);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() <= 1.0))
        {
            return Err(DspError::SampleOutOfRange { index, value });
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a 16-bit PCM WAV file, averaging channels.
pub fn load_wav(path: &Path) -> Result<AudioClip, DspError> {
    let reader = hound::WavReader::open(path).map_err(hound_error)?;
    read_wav(reader)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioClip, DspError> {
    read_wav(hound::WavReader::new(bytes).map_err(hound_error)?)
}

fn read_wav<R: Read>(reader: hound::WavReader<R>) -> Result<AudioClip, DspError> {
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DspError::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(DspError::WrongSampleRate(spec.sample_rate));
    }
    let channels = spec.channels as usize;
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(hound_error)?;
    let samples = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, spec.sample_rate)
}

fn hound_error(e: hound::Error) -> DspError {
    match e {
        hound::Error::IoError(io) => DspError::Io(io),
        other => DspError::UnsupportedFormat(other.to_string()),
    }
}

/// Writes mono 16-bit PCM.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav_to(file, clip)
}

pub fn write_wav_to<W: Write + std::io::Seek>(out: W, clip: &AudioClip) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(out, spec).map_err(hound_error)?;
    for &s in &clip.samples {
        writer
            .write_sample((s * 32767.0).round() as i16)
            .map_err(hound_error)?;
    }
    writer.finalize().map_err(hound_error)
}

/// Log-magnitude spectrogram, `frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<f64>,
    pub hop_seconds: f64,
    pub bin_frequencies: Vec<f64>,
}

impl Spectrogram {
    pub fn from_frames(frames: Array2<f64>) -> Self {
        Spectrogram {
            frames,
            hop_seconds: HOP as f64 / SAMPLE_RATE as f64,
            bin_frequencies: (0..BINS).map(|k| bin_frequency(k as f64)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.frames.nrows()
    }

    pub fn bins(&self) -> usize {
        self.frames.ncols()
    }

    /// 16-byte header (magic, `W`, `B`) then `f32` values, row-major, all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.frames.len());
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&(self.width() as u32).to_le_bytes());
        out.extend_from_slice(&(self.bins() as u32).to_le_bytes());
        for &v in self.frames.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DspError> {
        if bytes.len() < 16 || &bytes[..8] != DUMP_MAGIC {
            return Err(DspError::BadDump("missing header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (w, b) = (word(8), word(12));
        if bytes.len() != 16 + 4 * w * b {
            return Err(DspError::BadDump(format!(
                "{} payload bytes for a {w}x{b} matrix",
                bytes.len() - 16
            )));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let frames = Array2::from_shape_vec((w, b), values)
            .map_err(|e| DspError::BadDump(e.to_string()))?;
        let mut spec = Spectrogram::from_frames(frames);
        if b != BINS {
            spec.bin_frequencies = (0..b).map(|k| bin_frequency(k as f64)).collect();
        }
        Ok(spec)
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Magnitudes of the first `n / 2 + 1` DFT coefficients of `frame`,
/// zero-padded to `n` points.
pub fn magnitude_spectrum(fft: &dyn Fft<f64>, frame: &[f64]) -> Vec<f64> {
    let n = fft.len();
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Sparse triangular pooling weights for one log bin.
#[derive(Debug, Clone)]
struct Kernel {
    first: usize,
    weights: Vec<f64>,
}

fn log_kernels() -> Vec<Kernel> {
    let hz_per_point = SAMPLE_RATE as f64 / FFT_SIZE as f64;
    (0..BINS)
        .map(|k| {
            let lo = (bin_frequency(k as f64 - 1.0) / hz_per_point).ceil() as usize;
            let hi = (bin_frequency(k as f64 + 1.0) / hz_per_point).floor() as usize;
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|j| (1.0 - (bin_position(j as f64 * hz_per_point) - k as f64).abs()).max(0.0))
                .collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Kernel { first: lo, weights }
        })
        .collect()
}

/// Reusable analysis state: the transform plan, window and pooling kernels.
pub struct LogFreqAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    kernels: Vec<Kernel>,
}

impl Default for LogFreqAnalyzer {
    fn default() -> Self {
        LogFreqAnalyzer {
            fft: FftPlanner::new().plan_fft_forward(FFT_SIZE),
            window: hamming(WINDOW),
            kernels: log_kernels(),
        }
    }
}

impl LogFreqAnalyzer {
    pub fn analyze(&self, clip: &AudioClip) -> Result<Spectrogram, DspError> {
        let samples = clip.samples();
        let w = frame_count(samples.len());
        if w == 0 {
            return Err(DspError::TooShort {
                samples: samples.len(),
            });
        }
        let mut frames = Array2::zeros((w, BINS));
        let mut windowed = vec![0.0; WINDOW];
        for t in 0..w {
            let chunk = &samples[t * HOP..t * HOP + WINDOW];
            for ((o, &x), &h) in windowed.iter_mut().zip(chunk).zip(&self.window) {
                *o = x * h;
            }
            let mags = magnitude_spectrum(self.fft.as_ref(), &windowed);
            for (k, kernel) in self.kernels.iter().enumerate() {
                let m: f64 = kernel
                    .weights
                    .iter()
                    .zip(&mags[kernel.first..])
                    .map(|(w, m)| w * m)
                    .sum();
                frames[[t, k]] = m.ln_1p();
            }
        }
        Ok(Spectrogram::from_frames(frames))
    }
}

pub fn stft_logfreq(clip: &AudioClip) -> Result<Spectrogram, DspError> {
    LogFreqAnalyzer::default().analyze(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, samples: usize, amp: f64) -> AudioClip {
        let sr = SAMPLE_RATE as f64;
        AudioClip::new(
            (0..samples)
                .map(|n| amp * (2.0 * std::f64::consts::PI * freq * n as f64 / sr).sin())
                .collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    }

    #[test]
    fn bin_layout() {
        assert!((c2_frequency() - 65.40639132514966).abs() < 1e-9);
        assert!((bin_frequency(A4_BIN as f64) - 440.0).abs() < 1e-9);
        assert_eq!((48.0 * (440.0 / c2_frequency()).log2()).round() as usize, A4_BIN);
    }

    #[test]
    fn a4_sine_peaks_at_a4_bin() {
        let spec = stft_logfreq(&tone(440.0, 2 * SAMPLE_RATE as usize, 0.5)).unwrap();
        assert_eq!(spec.bins(), BINS);
        for row in spec.frames.rows() {
            assert_eq!(argmax(row), A4_BIN);
        }
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(2047), 0);
        assert_eq!(frame_count(2048), 1);
        assert_eq!(frame_count(2048 + 511), 1);
        assert_eq!(frame_count(2048 + 512), 2);
        let short = AudioClip::new(vec![0.0; 2047], SAMPLE_RATE).unwrap();
        assert!(matches!(stft_logfreq(&short), Err(DspError::TooShort { samples: 2047 })));
    }

    #[test]
    fn silence_is_zero() {
        let spec = stft_logfreq(&AudioClip::new(vec![0.0; 4096], SAMPLE_RATE).unwrap()).unwrap();
        assert!(spec.frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_validation() {
        assert!(matches!(AudioClip::new(vec![0.0], 44100), Err(DspError::WrongSampleRate(44100))));
        assert!(matches!(AudioClip::new(vec![], SAMPLE_RATE), Err(DspError::EmptyClip)));
        assert!(matches!(
            AudioClip::new(vec![0.0, 1.5], SAMPLE_RATE),
            Err(DspError::SampleOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let spec = stft_logfreq(&tone(220.0, 3000, 0.3)).unwrap();
        let bytes = spec.to_bytes();
        assert_eq!(bytes.len(), 16 + 4 * BINS * spec.width());
        let back = Spectrogram::from_bytes(&bytes).unwrap();
        for (a, b) in spec.frames.iter().zip(back.frames.iter()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert!(Spectrogram::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn wav_round_trip() {
        let clip = tone(330.0, 1000, 0.8);
        let mut buf = std::io::Cursor::new(Vec::new());
        write_wav_to(&mut buf, &clip).unwrap();
        let back = read_wav_bytes(buf.get_ref()).unwrap();
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }
}
