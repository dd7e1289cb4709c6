use crate::dsp::stft::StftAnalyzer;
use crate::error::{AdaptError, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the HTK mel scale, `n_mels` rows of
/// `n_fft / 2 + 1` bin weights.
pub fn mel_filterbank(n_fft: usize, n_mels: usize, f_min: f64, f_max: f64, sample_rate: f64) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return Err(AdaptError::config("n_mels must be positive"));
    }
    if f_max > sample_rate / 2.0 {
        return Err(AdaptError::config(format!("f_max {f_max} above Nyquist {}", sample_rate / 2.0)));
    }
    if !(0.0..f_max).contains(&f_min) {
        return Err(AdaptError::config("need 0 <= f_min < f_max"));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bins = n_fft / 2 + 1;
    let mut bank = vec![vec![0.0; bins]; n_mels];
    for (m, row) in bank.iter_mut().enumerate() {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sample_rate / n_fft as f64;
            *w = if f > left && f <= centre {
                (f - left) / (centre - left)
            } else if f > centre && f < right {
                (right - f) / (right - centre)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(AdaptError::config(format!(
                "mel filter {m} covers no FFT bin; use fewer mels or a larger n_fft"
            )));
        }
    }
    Ok(bank)
}

/// Streaming mel spectrogram: magnitude STFT frames projected onto a mel
/// filterbank as soon as each hop completes.
pub struct CachedMelSpec {
    analyzer: StftAnalyzer,
    bank: Vec<Vec<f64>>,
    magnitude: Vec<f64>,
    mel: Vec<f64>,
}

impl CachedMelSpec {
    pub fn new(n_fft: usize, hop: usize, n_mels: usize, f_min: f64, f_max: f64, sample_rate: f64) -> Result<Self> {
        let analyzer = StftAnalyzer::new(n_fft, hop)?;
        let bank = mel_filterbank(n_fft, n_mels, f_min, f_max, sample_rate)?;
        Ok(Self {
            magnitude: vec![0.0; analyzer.bins()],
            mel: vec![0.0; n_mels],
            analyzer,
            bank,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.bank.len()
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.bank
    }

    pub fn reset(&mut self) {
        self.analyzer.reset();
    }

    /// Feeds samples and hands every completed mel frame to `on_frame`.
    pub fn push(&mut self, input: &[f32], mut on_frame: impl FnMut(&[f64])) {
        let Self {
            analyzer,
            bank,
            magnitude,
            mel,
        } = self;
        analyzer.push(input, |spectrum| {
            for (m, c) in magnitude.iter_mut().zip(spectrum) {
                *m = c.norm();
            }
            for (out, row) in mel.iter_mut().zip(bank.iter()) {
                *out = row.iter().zip(magnitude.iter()).map(|(w, m)| w * m).sum();
            }
            on_frame(mel);
        });
    }

    pub fn melspec_push(&mut self, input: &[f32]) -> Vec<Vec<f64>> {
        let mut frames = Vec::new();
        self.push(input, |f| frames.push(f.to_vec()));
        frames
    }
}
