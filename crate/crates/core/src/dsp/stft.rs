//! Streaming short-time Fourier analysis and overlap-add resynthesis.
//!
//! Both directions use a periodic Hann window with a hop of `n_fft / 2` or
//! `n_fft / 4`. Resynthesis divides by the precomputed overlap sum of the
//! squared window, so an unmodified round trip reproduces the input delayed
//! by `n_fft − hop` samples.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{AdaptError, Result};

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn check_geometry(n_fft: usize, hop: usize) -> Result<()> {
    if n_fft < 4 || !n_fft.is_multiple_of(4) {
        return Err(AdaptError::config(format!("n_fft {n_fft} must be a positive multiple of 4")));
    }
    if hop != n_fft / 2 && hop != n_fft / 4 {
        return Err(AdaptError::config(format!(
            "hop {hop} must be n_fft/2 or n_fft/4 for a Hann window"
        )));
    }
    Ok(())
}

/// Windowed analysis over a sliding buffer; emits one one-sided spectrum
/// (`n_fft / 2 + 1` bins) every `hop` input samples.
pub struct StftAnalyzer {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    buf: Vec<f64>,
    filled: usize,
    fft: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl StftAnalyzer {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        check_geometry(n_fft, hop)?;
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            n_fft,
            hop,
            window: periodic_hann(n_fft),
            buf: vec![0.0; n_fft],
            filled: 0,
            fft,
            work: vec![Complex64::default(); n_fft],
            scratch,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn reset(&mut self) {
        self.buf.fill(0.0);
        self.filled = 0;
    }

    /// Feeds samples; `on_frame` sees every spectrum completed along the way.
    pub fn push(&mut self, input: &[f32], mut on_frame: impl FnMut(&[Complex64])) {
        let base = self.n_fft - self.hop;
        for &x in input {
            self.buf[base + self.filled] = f64::from(x);
            self.filled += 1;
            if self.filled == self.hop {
                for ((w, b), v) in self.work.iter_mut().zip(&self.buf).zip(&self.window) {
                    *w = Complex64::new(b * v, 0.0);
                }
                self.fft.process_with_scratch(&mut self.work, &mut self.scratch);
                on_frame(&self.work[..self.n_fft / 2 + 1]);
                self.buf.copy_within(self.hop.., 0);
                self.filled = 0;
            }
        }
    }
}

/// Inverse FFT, synthesis window, overlap-add, and overlap-sum normalization.
pub struct StftSynthesizer {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    ola: Vec<f64>,
    norm_inv: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl StftSynthesizer {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        check_geometry(n_fft, hop)?;
        let window = periodic_hann(n_fft);
        let norm: Vec<f64> = (0..hop)
            .map(|i| (i..n_fft).step_by(hop).map(|k| window[k] * window[k]).sum())
            .collect();
        let min = norm.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 1e-3 {
            return Err(AdaptError::config(format!(
                "window overlap sum falls to {min:.2e}; hop {hop} is not invertible"
            )));
        }
        let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
        let scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
        Ok(Self {
            n_fft,
            hop,
            window,
            ola: vec![0.0; n_fft],
            norm_inv: norm.iter().map(|v| 1.0 / v).collect(),
            ifft,
            work: vec![Complex64::default(); n_fft],
            scratch,
        })
    }

    pub fn reset(&mut self) {
        self.ola.fill(0.0);
    }

    /// Adds one spectrum and writes the next `hop` finished samples.
    pub fn pull(&mut self, frame: &[Complex64], out: &mut [f32]) -> Result<()> {
        let bins = self.n_fft / 2 + 1;
        if frame.len() != bins {
            return Err(AdaptError::ShapeMismatch {
                expected: bins,
                got: frame.len(),
            });
        }
        if out.len() != self.hop {
            return Err(AdaptError::ShapeMismatch {
                expected: self.hop,
                got: out.len(),
            });
        }
        let n = self.n_fft;
        self.work[..bins].copy_from_slice(frame);
        self.work[0].im = 0.0;
        self.work[n / 2].im = 0.0;
        for k in 1..n / 2 {
            self.work[n - k] = frame[k].conj();
        }
        self.ifft.process_with_scratch(&mut self.work, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for ((acc, w), v) in self.ola.iter_mut().zip(&self.work).zip(&self.window) {
            *acc += w.re * scale * v;
        }
        for ((o, acc), g) in out.iter_mut().zip(&self.ola).zip(&self.norm_inv) {
            *o = (acc * g) as f32;
        }
        self.ola.copy_within(self.hop.., 0);
        self.ola[n - self.hop..].fill(0.0);
        Ok(())
    }
}

/// Analysis, a caller-supplied spectral edit, and resynthesis in one pass.
pub struct RealtimeStft {
    analyzer: StftAnalyzer,
    synth: StftSynthesizer,
    frame: Vec<Complex64>,
}

impl RealtimeStft {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        Ok(Self {
            analyzer: StftAnalyzer::new(n_fft, hop)?,
            synth: StftSynthesizer::new(n_fft, hop)?,
            frame: vec![Complex64::default(); n_fft / 2 + 1],
        })
    }

    pub fn n_fft(&self) -> usize {
        self.analyzer.n_fft
    }

    pub fn hop(&self) -> usize {
        self.analyzer.hop
    }

    /// Samples between an input sample and its resynthesis.
    pub fn delay(&self) -> usize {
        self.analyzer.n_fft - self.analyzer.hop
    }

    pub fn reset(&mut self) {
        self.analyzer.reset();
        self.synth.reset();
    }

    /// Processes a whole number of hops; `output` receives as many samples
    /// as `input` holds.
    pub fn process(&mut self, input: &[f32], output: &mut [f32], mut edit: impl FnMut(&mut [Complex64])) -> Result<()> {
        let hop = self.analyzer.hop;
        if !input.len().is_multiple_of(hop) {
            return Err(AdaptError::ShapeMismatch {
                expected: input.len() / hop * hop,
                got: input.len(),
            });
        }
        if output.len() != input.len() {
            return Err(AdaptError::ShapeMismatch {
                expected: input.len(),
                got: output.len(),
            });
        }
        let Self { analyzer, synth, frame } = self;
        let mut written = 0;
        let mut status = Ok(());
        analyzer.push(input, |spectrum| {
            frame.copy_from_slice(spectrum);
            edit(frame);
            if status.is_ok() {
                status = synth.pull(frame, &mut output[written..written + hop]);
            }
            written += hop;
        });
        status
    }

    /// Allocating analysis helper: every spectrum completed by `input`.
    pub fn stft_push(&mut self, input: &[f32]) -> Vec<Vec<Complex64>> {
        let mut frames = Vec::new();
        self.analyzer.push(input, |s| frames.push(s.to_vec()));
        frames
    }

    /// Allocating synthesis helper: `hop` samples per frame.
    pub fn istft_pull(&mut self, frames: &[Vec<Complex64>]) -> Result<Vec<f32>> {
        let hop = self.analyzer.hop;
        let mut out = vec![0.0; frames.len() * hop];
        for (f, dst) in frames.iter().zip(out.chunks_mut(hop)) {
            self.synth.pull(f, dst)?;
        }
        Ok(out)
    }

    /// Scale that maps a full-scale sinusoid's peak bin to roughly 0.5.
    pub fn spectrum_scale(&self) -> f64 {
        1.0 / self.analyzer.window.iter().sum::<f64>()
    }
}

/// Splits a spectrum into magnitude and phase.
pub fn magnitude_phase(frame: &[Complex64], magnitude: &mut [f64], phase: &mut [f64]) {
    for ((c, m), p) in frame.iter().zip(magnitude).zip(phase) {
        *m = c.norm();
        *p = c.arg();
    }
}

pub fn from_magnitude_phase(magnitude: &[f64], phase: &[f64], frame: &mut [Complex64]) {
    for ((c, m), p) in frame.iter_mut().zip(magnitude).zip(phase) {
        *c = Complex64::from_polar(*m, *p);
    }
}

/// Linear ramp from `from` to `to` across the length of `out`.
pub fn crossfade(from: &[f32], to: &[f32], out: &mut [f32]) {
    let n = out.len();
    for (i, ((o, a), b)) in out.iter_mut().zip(from).zip(to).enumerate() {
        let t = if n > 1 { i as f32 / (n - 1) as f32 } else { 1.0 };
        *o = a + (b - a) * t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut s = seed | 1;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 10_001) as f32 / 10_000.0 - 0.5
            })
            .collect()
    }

    /// Direct DFT of each zero-padded frame, inverse DFT, and overlap-add,
    /// computed on the whole signal.
    fn oracle_roundtrip(x: &[f32], n_fft: usize, hop: usize) -> Vec<f64> {
        let pad = n_fft - hop;
        let mut padded = vec![0.0f64; pad];
        padded.extend(x.iter().map(|&v| v as f64));
        let w = periodic_hann(n_fft);
        let frames = x.len() / hop;
        let mut ola = vec![0.0f64; pad + x.len() + n_fft];
        for f in 0..frames {
            let seg: Vec<f64> = (0..n_fft).map(|i| padded[f * hop + i] * w[i]).collect();
            let tau = 2.0 * std::f64::consts::PI / n_fft as f64;
            let spec: Vec<Complex64> = (0..n_fft)
                .map(|k| {
                    seg.iter()
                        .enumerate()
                        .map(|(i, v)| Complex64::from_polar(*v, -tau * (k * i) as f64))
                        .sum()
                })
                .collect();
            for i in 0..n_fft {
                let t: f64 = spec
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c * Complex64::from_polar(1.0, tau * (k * i) as f64)).re)
                    .sum::<f64>()
                    / n_fft as f64;
                ola[f * hop + i] += t * w[i];
            }
        }
        // Output sample o covers padded index o; normalise with the steady-state
        // overlap sum, as the streaming path does.
        (0..frames * hop)
            .map(|o| {
                let steady: f64 = (o % hop..n_fft).step_by(hop).map(|k| w[k] * w[k]).sum();
                ola[o] / steady
            })
            .collect()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(RealtimeStft::new(1024, 300).is_err());
        assert!(RealtimeStft::new(1024, 1024).is_err());
        assert!(RealtimeStft::new(6, 3).is_err());
        assert!(RealtimeStft::new(1024, 256).is_ok());
        assert!(RealtimeStft::new(1024, 512).is_ok());
    }

    #[test]
    fn dc_survives_round_trip() {
        let mut s = RealtimeStft::new(1024, 256).unwrap();
        let x = vec![0.5f32; 8192];
        let mut y = vec![0.0f32; 8192];
        s.process(&x, &mut y, |_| {}).unwrap();
        for &v in &y[s.delay() + 1024..] {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn impulse_lands_at_delay() {
        for hop in [32usize, 64] {
            let mut s = RealtimeStft::new(128, hop).unwrap();
            let mut x = vec![0.0f32; 1024];
            x[300] = 1.0;
            let mut y = vec![0.0f32; 1024];
            s.process(&x, &mut y, |_| {}).unwrap();
            let want = oracle_roundtrip(&x, 128, hop);
            for (i, (a, b)) in y.iter().zip(&want).enumerate() {
                assert!((*a as f64 - b).abs() < 1e-6, "hop {hop} i {i}");
            }
            let peak = y
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            assert_eq!(peak, 300 + s.delay());
            assert!((y[peak] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn chunked_helpers_match_one_shot() {
        let x = noise(4096, 5);
        let mut one = RealtimeStft::new(256, 64).unwrap();
        let frames = one.stft_push(&x);
        let y_one = one.istft_pull(&frames).unwrap();

        let mut chunked = RealtimeStft::new(256, 64).unwrap();
        let mut y = Vec::new();
        let mut pos = 0;
        for size in [1usize, 100, 7, 333, 64].iter().cycle() {
            if pos >= x.len() {
                break;
            }
            let len = (*size).min(x.len() - pos);
            let f = chunked.stft_push(&x[pos..pos + len]);
            y.extend(chunked.istft_pull(&f).unwrap());
            pos += len;
        }
        assert_eq!(y, y_one);
        let d = one.delay();
        for i in d..y.len() {
            assert!((y[i] - x[i - d]).abs() <= 1e-4);
        }
    }

    #[test]
    fn process_requires_whole_hops() {
        let mut s = RealtimeStft::new(64, 16).unwrap();
        let mut y = vec![0.0; 20];
        assert!(s.process(&[0.0; 20], &mut y, |_| {}).is_err());
    }

    #[test]
    fn polar_round_trip_and_crossfade() {
        let frame = vec![Complex64::new(1.0, -2.0), Complex64::new(-0.5, 0.25)];
        let (mut m, mut p) = (vec![0.0; 2], vec![0.0; 2]);
        magnitude_phase(&frame, &mut m, &mut p);
        let mut back = vec![Complex64::default(); 2];
        from_magnitude_phase(&m, &p, &mut back);
        for (a, b) in frame.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut out = [0.0f32; 5];
        crossfade(&[0.0; 5], &[1.0; 5], &mut out);
        assert_eq!(out, [0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
