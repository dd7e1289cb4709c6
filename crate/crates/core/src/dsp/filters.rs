//! Streaming IIR, SVF and FIR filters with per-channel state.

use serde::{Deserialize, Serialize};

use crate::dsp::conv::CachedConv1d;
use crate::error::{AdaptError, Result};
use crate::types::AudioBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

/// Normalised biquad coefficients (`a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoefficients {
    /// Both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

fn check_cutoff(f_c: f64, f_s: f64) -> Result<()> {
    if !(f_c > 0.0 && f_c < f_s / 2.0) {
        return Err(AdaptError::config(format!("cutoff {f_c} Hz outside (0, {})", f_s / 2.0)));
    }
    Ok(())
}

/// Audio-EQ-cookbook biquads. The band-pass has 0 dB peak gain.
pub fn design_biquad(kind: FilterKind, f_c: f64, q: f64, f_s: f64) -> Result<BiquadCoefficients> {
    check_cutoff(f_c, f_s)?;
    if !(q > 0.0) {
        return Err(AdaptError::config(format!("Q must be positive, got {q}")));
    }
    let w0 = 2.0 * std::f64::consts::PI * f_c / f_s;
    let (sin, cos) = w0.sin_cos();
    let alpha = sin / (2.0 * q);
    let (b0, b1, b2) = match kind {
        FilterKind::Lowpass => ((1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0),
        FilterKind::Highpass => ((1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0),
        FilterKind::Bandpass => (alpha, 0.0, -alpha),
        FilterKind::Bandstop => (1.0, -2.0 * cos, 1.0),
    };
    let a0 = 1.0 + alpha;
    Ok(BiquadCoefficients {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: b2 / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha) / a0,
    })
}

/// Transposed direct-form II biquad.
#[derive(Debug, Clone)]
pub struct BiquadFilter {
    coeffs: BiquadCoefficients,
    state: Vec<[f64; 2]>,
}

impl BiquadFilter {
    pub fn new(coeffs: BiquadCoefficients, channels: usize) -> Self {
        Self {
            coeffs,
            state: vec![[0.0; 2]; channels],
        }
    }

    pub fn coefficients(&self) -> BiquadCoefficients {
        self.coeffs
    }

    pub fn reset(&mut self) {
        self.state.fill([0.0; 2]);
    }

    pub fn process_in_place(&mut self, block: &mut AudioBlock) -> Result<()> {
        if block.channels() != self.state.len() {
            return Err(AdaptError::ShapeMismatch {
                expected: self.state.len(),
                got: block.channels(),
            });
        }
        let c = self.coeffs;
        for ch in 0..block.channels() {
            let [mut s1, mut s2] = self.state[ch];
            for x in block.channel_mut(ch) {
                let xin = f64::from(*x);
                let y = c.b0 * xin + s1;
                s1 = c.b1 * xin - c.a1 * y + s2;
                s2 = c.b2 * xin - c.a2 * y;
                *x = y as f32;
            }
            self.state[ch] = [s1, s2];
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvfMode {
    Lowpass,
    Bandpass,
    Highpass,
    Notch,
}

/// Trapezoidal-integrator state variable filter.
#[derive(Debug, Clone)]
pub struct SvfFilter {
    mode: SvfMode,
    k: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    state: Vec<[f64; 2]>,
}

impl SvfFilter {
    pub fn new(mode: SvfMode, f_c: f64, q: f64, f_s: f64, channels: usize) -> Result<Self> {
        check_cutoff(f_c, f_s)?;
        if !(q > 0.0) {
            return Err(AdaptError::config(format!("Q must be positive, got {q}")));
        }
        let g = (std::f64::consts::PI * f_c / f_s).tan();
        let k = 1.0 / q;
        let a1 = 1.0 / (1.0 + g * (g + k));
        let a2 = g * a1;
        let a3 = g * a2;
        Ok(Self {
            mode,
            k,
            a1,
            a2,
            a3,
            state: vec![[0.0; 2]; channels],
        })
    }

    pub fn reset(&mut self) {
        self.state.fill([0.0; 2]);
    }

    pub fn process_in_place(&mut self, block: &mut AudioBlock) -> Result<()> {
        if block.channels() != self.state.len() {
            return Err(AdaptError::ShapeMismatch {
                expected: self.state.len(),
                got: block.channels(),
            });
        }
        for ch in 0..block.channels() {
            let [mut ic1, mut ic2] = self.state[ch];
            for x in block.channel_mut(ch) {
                let v0 = f64::from(*x);
                let v3 = v0 - ic2;
                let v1 = self.a1 * ic1 + self.a2 * v3;
                let v2 = ic2 + self.a2 * ic1 + self.a3 * v3;
                ic1 = 2.0 * v1 - ic1;
                ic2 = 2.0 * v2 - ic2;
                let y = match self.mode {
                    SvfMode::Lowpass => v2,
                    SvfMode::Bandpass => v1,
                    SvfMode::Highpass => v0 - self.k * v1 - v2,
                    SvfMode::Notch => v0 - self.k * v1,
                };
                *x = y as f32;
            }
            self.state[ch] = [ic1, ic2];
        }
        Ok(())
    }
}

/// Band edges for a windowed-sinc FIR design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirBand {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
    Bandstop(f64, f64),
}

/// Hamming-windowed sinc taps. High-pass and band-stop need an odd length.
pub fn design_fir(band: FirBand, taps: usize, f_s: f64) -> Result<Vec<f32>> {
    if taps == 0 {
        return Err(AdaptError::config("FIR needs at least one tap"));
    }
    let lowpass = |f_c: f64| -> Result<Vec<f64>> {
        check_cutoff(f_c, f_s)?;
        let fc = f_c / f_s;
        let m = (taps - 1) as f64;
        Ok((0..taps)
            .map(|n| {
                let t = n as f64 - m / 2.0;
                let sinc = if t == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
                };
                let w = if taps == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / m).cos()
                };
                sinc * w
            })
            .collect())
    };
    let normalise = |mut h: Vec<f64>| {
        let dc: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= dc);
        h
    };
    let spectral_inverse = |h: Vec<f64>| -> Result<Vec<f64>> {
        if taps.is_multiple_of(2) {
            return Err(AdaptError::config("high-pass and band-stop FIRs need an odd tap count"));
        }
        let mut h: Vec<f64> = h.into_iter().map(|v| -v).collect();
        h[taps / 2] += 1.0;
        Ok(h)
    };
    let h = match band {
        FirBand::Lowpass(f) => normalise(lowpass(f)?),
        FirBand::Highpass(f) => spectral_inverse(normalise(lowpass(f)?))?,
        FirBand::Bandstop(lo, hi) | FirBand::Bandpass(lo, hi) => {
            if lo >= hi {
                return Err(AdaptError::config("band edges must be increasing"));
            }
            let low = normalise(lowpass(lo)?);
            let high = spectral_inverse(normalise(lowpass(hi)?))?;
            let stop: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
            if matches!(band, FirBand::Bandstop(..)) {
                stop
            } else {
                spectral_inverse(stop)?
            }
        }
    };
    Ok(h.into_iter().map(|v| v as f32).collect())
}

/// FIR filter running one cached convolution per channel.
#[derive(Debug, Clone)]
pub struct FirFilter {
    convs: Vec<CachedConv1d>,
}

impl FirFilter {
    /// `taps[0]` multiplies the newest sample.
    pub fn new(taps: &[f32], channels: usize) -> Result<Self> {
        // The convolution's last tap touches the newest sample.
        let reversed: Vec<f32> = taps.iter().rev().copied().collect();
        let convs = (0..channels)
            .map(|_| CachedConv1d::new(1, 1, taps.len(), 1, reversed.clone(), vec![0.0]))
            .collect::<Result<_>>()?;
        Ok(Self { convs })
    }

    pub fn reset(&mut self) {
        self.convs.iter_mut().for_each(CachedConv1d::reset);
    }

    pub fn process(&mut self, input: &AudioBlock, output: &mut AudioBlock) -> Result<()> {
        if input.channels() != self.convs.len() || output.channels() != self.convs.len() {
            return Err(AdaptError::ShapeMismatch {
                expected: self.convs.len(),
                got: input.channels(),
            });
        }
        let n = input.frames();
        output.resize_frames(n);
        for (c, conv) in self.convs.iter_mut().enumerate() {
            conv.process_planar(input.channel(c), n, output.channel_mut(c));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    fn response(c: &BiquadCoefficients, f: f64, fs: f64) -> f64 {
        let z = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f / fs);
        let num = c.b0 + c.b1 * z + c.b2 * z * z;
        let den = 1.0 + c.a1 * z + c.a2 * z * z;
        (num / den).norm()
    }

    fn fir_response(h: &[f32], f: f64, fs: f64) -> f64 {
        h.iter()
            .enumerate()
            .map(|(n, &v)| Complex64::from_polar(v as f64, -2.0 * std::f64::consts::PI * f / fs * n as f64))
            .sum::<Complex64>()
            .norm()
    }

    #[test]
    fn lowpass_passes_dc() {
        let c = design_biquad(FilterKind::Lowpass, 1000.0, 0.707, 48000.0).unwrap();
        assert!((response(&c, 0.0, 48000.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lowpass_minus_3db_at_cutoff() {
        let fs = 48000.0;
        let c = design_biquad(FilterKind::Lowpass, fs / 8.0, std::f64::consts::FRAC_1_SQRT_2, fs).unwrap();
        let db = 20.0 * response(&c, fs / 8.0, fs).log10();
        assert!((db + 3.0).abs() <= 0.2, "{db}");
    }

    #[test]
    fn highpass_blocks_dc() {
        let c = design_biquad(FilterKind::Highpass, 1000.0, 0.707, 48000.0).unwrap();
        assert!(response(&c, 0.0, 48000.0) <= 1e-6);
    }

    #[test]
    fn band_shapes() {
        let fs = 48000.0;
        let bp = design_biquad(FilterKind::Bandpass, 2000.0, 2.0, fs).unwrap();
        assert!((response(&bp, 2000.0, fs) - 1.0).abs() < 1e-9);
        let bs = design_biquad(FilterKind::Bandstop, 2000.0, 2.0, fs).unwrap();
        assert!(response(&bs, 2000.0, fs) < 1e-9);
    }

    #[test]
    fn poles_stable_across_grid() {
        let fs = 48000.0;
        for kind in [FilterKind::Lowpass, FilterKind::Highpass, FilterKind::Bandpass, FilterKind::Bandstop] {
            for fc in [10.0, 100.0, 1000.0, 5000.0, 12000.0, 20000.0, 23900.0] {
                for q in [0.1, 0.5, 0.707, 1.0, 4.0, 20.0] {
                    assert!(design_biquad(kind, fc, q, fs).unwrap().is_stable(), "{kind:?} {fc} {q}");
                }
            }
        }
    }

    #[test]
    fn out_of_range_cutoff_rejected() {
        assert!(design_biquad(FilterKind::Lowpass, 24000.0, 0.7, 48000.0).is_err());
        assert!(design_biquad(FilterKind::Lowpass, 0.0, 0.7, 48000.0).is_err());
        assert!(design_biquad(FilterKind::Lowpass, 100.0, 0.0, 48000.0).is_err());
        assert!(SvfFilter::new(SvfMode::Lowpass, 30000.0, 0.7, 48000.0, 1).is_err());
    }

    #[test]
    fn svf_lowpass_matches_bilinear_biquad() {
        // Both are bilinear transforms of the same analog prototype.
        let fs = 48000.0;
        let mut svf = SvfFilter::new(SvfMode::Lowpass, 3000.0, 0.9, fs, 1).unwrap();
        let mut bq = BiquadFilter::new(design_biquad(FilterKind::Lowpass, 3000.0, 0.9, fs).unwrap(), 1);
        let x: Vec<f32> = (0..512).map(|i| ((i * 31 % 17) as f32 / 8.0) - 1.0).collect();
        let mut a = AudioBlock::mono(x.clone());
        let mut b = AudioBlock::mono(x);
        svf.process_in_place(&mut a).unwrap();
        bq.process_in_place(&mut b).unwrap();
        for (p, q) in a.samples().iter().zip(b.samples()) {
            assert!((p - q).abs() < 1e-5);
        }
    }

    #[test]
    fn svf_highpass_rejects_dc() {
        let mut svf = SvfFilter::new(SvfMode::Highpass, 500.0, 0.707, 48000.0, 2).unwrap();
        let mut block = AudioBlock::from_channels(&[vec![1.0; 4800], vec![-1.0; 4800]]).unwrap();
        svf.process_in_place(&mut block).unwrap();
        assert!(block.get(0, 4799).abs() < 1e-4);
        assert!(block.get(1, 4799).abs() < 1e-4);
    }

    #[test]
    fn fir_designs_have_expected_gains() {
        let fs = 48000.0;
        let lp = design_fir(FirBand::Lowpass(4000.0), 101, fs).unwrap();
        assert!((fir_response(&lp, 0.0, fs) - 1.0).abs() < 1e-5);
        assert!(fir_response(&lp, 12000.0, fs) < 0.01);
        let hp = design_fir(FirBand::Highpass(4000.0), 101, fs).unwrap();
        assert!(fir_response(&hp, 0.0, fs) < 1e-5);
        assert!((fir_response(&hp, 20000.0, fs) - 1.0).abs() < 0.01);
        let bp = design_fir(FirBand::Bandpass(2000.0, 8000.0), 101, fs).unwrap();
        assert!((fir_response(&bp, 5000.0, fs) - 1.0).abs() < 0.01);
        assert!(fir_response(&bp, 0.0, fs) < 1e-4);
        let bs = design_fir(FirBand::Bandstop(2000.0, 8000.0), 101, fs).unwrap();
        assert!(fir_response(&bs, 5000.0, fs) < 0.01);
        assert!(design_fir(FirBand::Highpass(4000.0), 100, fs).is_err());
    }

    #[test]
    fn fir_filter_applies_taps_newest_first() {
        let mut f = FirFilter::new(&[0.5, 0.25], 1).unwrap();
        let mut y = AudioBlock::new(1, 0).unwrap();
        f.process(&AudioBlock::mono(vec![1.0, 0.0, 0.0]), &mut y).unwrap();
        assert_eq!(y.samples(), &[0.5, 0.25, 0.0]);
    }
}
