//! Transforms applied on both sides of a wrapped processor: channel-count
//! normalisation and streaming sample-rate conversion.

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};
use crate::types::{AudioBlock, SampleRate, MAX_CHANNELS};

/// Maps host channels to model channels and back.
///
/// Narrowing averages the host channels that fold onto each target channel
/// (`source % target`); widening duplicates (`target % source`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelNormalizer {
    host: usize,
    model_in: usize,
    model_out: usize,
}

fn remap(input: &AudioBlock, out: &mut AudioBlock) {
    let (src, dst) = (input.channels(), out.channels());
    out.resize_frames(input.frames());
    if src == dst {
        out.samples_mut().copy_from_slice(input.samples());
    } else if dst > src {
        for d in 0..dst {
            out.channel_mut(d).copy_from_slice(input.channel(d % src));
        }
    } else {
        for d in 0..dst {
            let count = (d..src).step_by(dst).count() as f32;
            let o = out.channel_mut(d);
            o.fill(0.0);
            for s in (d..src).step_by(dst) {
                for (y, x) in o.iter_mut().zip(input.channel(s)) {
                    *y += x;
                }
            }
            o.iter_mut().for_each(|y| *y /= count);
        }
    }
}

impl ChannelNormalizer {
    pub fn new(host: usize, model_in: usize, model_out: usize) -> Result<Self> {
        if host == 0 || host > MAX_CHANNELS {
            return Err(AdaptError::UnsupportedChannelCount(host));
        }
        for ch in [model_in, model_out] {
            if !(1..=2).contains(&ch) {
                return Err(AdaptError::UnsupportedChannelCount(ch));
            }
        }
        Ok(Self {
            host,
            model_in,
            model_out,
        })
    }

    fn check(&self, block: &AudioBlock, expected: usize) -> Result<()> {
        if block.channels() != expected {
            return Err(AdaptError::UnsupportedChannelCount(block.channels()));
        }
        Ok(())
    }

    /// Host layout to model input layout, into `out`.
    pub fn normalize_in_into(&self, input: &AudioBlock, out: &mut AudioBlock) -> Result<()> {
        self.check(input, self.host)?;
        self.check(out, self.model_in)?;
        remap(input, out);
        Ok(())
    }

    /// Model output layout to host layout, into `out`.
    pub fn normalize_out_into(&self, output: &AudioBlock, out: &mut AudioBlock) -> Result<()> {
        self.check(output, self.model_out)?;
        self.check(out, self.host)?;
        remap(output, out);
        Ok(())
    }

    pub fn normalize_in(&self, input: &AudioBlock) -> Result<AudioBlock> {
        let mut out = AudioBlock::new(self.model_in, input.frames())?;
        self.normalize_in_into(input, &mut out)?;
        Ok(out)
    }

    pub fn normalize_out(&self, output: &AudioBlock) -> Result<AudioBlock> {
        let mut out = AudioBlock::new(self.host, output.frames())?;
        self.normalize_out_into(output, &mut out)?;
        Ok(out)
    }
}

/// Which interpolation kernel a resampler uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplerKind {
    Linear,
    #[default]
    Hermite,
}

impl ResamplerKind {
    /// Input-rate samples a kernel needs ahead of its interpolation origin.
    pub fn kernel_delay(self) -> usize {
        match self {
            Self::Linear => Linear::DELAY,
            Self::Hermite => Hermite4p::DELAY,
        }
    }

    pub fn build(self, f_in: SampleRate, f_out: SampleRate, channels: usize) -> Box<dyn StreamResampler> {
        match self {
            Self::Linear => Box::new(LinearResampler::new(f_in, f_out, channels)),
            Self::Hermite => Box::new(Hermite4pResampler::new(f_in, f_out, channels)),
        }
    }
}

impl std::str::FromStr for ResamplerKind {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "hermite" => Ok(Self::Hermite),
            _ => Err(AdaptError::config(format!("unknown resampler {s:?}"))),
        }
    }
}

/// An interpolation kernel over the four most recent input samples
/// `[x[n−3], x[n−2], x[n−1], x[n]]` at fractional position `x ∈ [0, 1)`.
pub trait Kernel: Send + 'static {
    const DELAY: usize;
    fn interpolate(taps: [f64; 4], x: f64) -> f64;
}

/// Triangular kernel between `x[n−1]` and `x[n]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear;

impl Kernel for Linear {
    const DELAY: usize = 1;

    #[inline]
    fn interpolate(t: [f64; 4], x: f64) -> f64 {
        (1.0 - x) * t[2] + x * t[3]
    }
}

/// 4-point, 3rd-order Hermite (Catmull-Rom) interpolation centred on `x[n−2]`.
#[derive(Debug, Clone, Copy)]
pub struct Hermite4p;

impl Kernel for Hermite4p {
    const DELAY: usize = 2;

    #[inline]
    fn interpolate(t: [f64; 4], x: f64) -> f64 {
        let [ym1, y0, y1, y2] = t;
        let c0 = y0;
        let c1 = 0.5 * (y1 - ym1);
        let c2 = ym1 - 2.5 * y0 + 2.0 * y1 - 0.5 * y2;
        let c3 = 0.5 * (y2 - ym1) + 1.5 * (y0 - y1);
        ((c3 * x + c2) * x + c1) * x + c0
    }
}

/// Streaming sample-rate conversion. Output lengths vary call to call; over
/// a session, `N` inputs always yield `ceil(N · f_out / f_in)` outputs.
pub trait StreamResampler: Send {
    /// Resamples `input` into `output`, resizing it to the produced count.
    /// Does not allocate when `output` already has room for
    /// [`StreamResampler::max_output_frames`].
    fn process(&mut self, input: &AudioBlock, output: &mut AudioBlock) -> Result<usize>;

    /// Exact number of frames the next call with `input_frames` will produce.
    fn output_frames(&self, input_frames: usize) -> usize;

    /// Upper bound on frames produced by any call with `input_frames`.
    fn max_output_frames(&self, input_frames: usize) -> usize;

    /// Kernel delay in input-rate samples; 0 when bypassed.
    fn delay(&self) -> usize;

    /// Fractional read position in `[0, 1)`.
    fn phase(&self) -> f64;

    fn reset(&mut self);
}

/// Rational-phase resampler generic over its kernel.
#[derive(Debug, Clone)]
pub struct KernelResampler<K: Kernel> {
    channels: usize,
    /// Input samples advanced per output sample is `step / den`.
    step: u64,
    den: u64,
    bypass: bool,
    history: Vec<[f64; 3]>,
    received: u64,
    produced: u64,
    next_index: u64,
    frac: u64,
    _kernel: std::marker::PhantomData<K>,
}

pub type LinearResampler = KernelResampler<Linear>;
pub type Hermite4pResampler = KernelResampler<Hermite4p>;

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl<K: Kernel> KernelResampler<K> {
    pub fn new(f_in: SampleRate, f_out: SampleRate, channels: usize) -> Self {
        let (fi, fo) = (u64::from(f_in.hz()), u64::from(f_out.hz()));
        let g = gcd_u64(fi, fo);
        Self {
            channels,
            step: fi / g,
            den: fo / g,
            bypass: fi == fo,
            history: vec![[0.0; 3]; channels],
            received: 0,
            produced: 0,
            next_index: 0,
            frac: 0,
            _kernel: std::marker::PhantomData,
        }
    }

    fn total_outputs(&self, received: u64) -> u64 {
        ((u128::from(received) * u128::from(self.den)).div_ceil(u128::from(self.step))) as u64
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn produced(&self) -> u64 {
        self.produced
    }
}

impl<K: Kernel> StreamResampler for KernelResampler<K> {
    fn process(&mut self, input: &AudioBlock, output: &mut AudioBlock) -> Result<usize> {
        if input.channels() != self.channels {
            return Err(AdaptError::ShapeMismatch {
                expected: self.channels,
                got: input.channels(),
            });
        }
        if output.channels() != self.channels {
            return Err(AdaptError::ShapeMismatch {
                expected: self.channels,
                got: output.channels(),
            });
        }
        let m = input.frames();
        if self.bypass {
            output.resize_frames(m);
            output.samples_mut().copy_from_slice(input.samples());
            self.received += m as u64;
            self.produced += m as u64;
            return Ok(m);
        }
        let n_out = (self.total_outputs(self.received + m as u64) - self.produced) as usize;
        output.resize_frames(n_out);
        let base = self.received as i64;
        let (mut next, mut frac) = (self.next_index, self.frac);
        for c in 0..self.channels {
            let x = input.channel(c);
            let hist = self.history[c];
            let at = |idx: i64| -> f64 {
                if idx >= base {
                    f64::from(x[(idx - base) as usize])
                } else {
                    // idx >= base - 3 always holds: outputs never look further back.
                    hist[(3 + idx - base) as usize]
                }
            };
            next = self.next_index;
            frac = self.frac;
            let out = output.channel_mut(c);
            for y in out.iter_mut() {
                let n = next as i64;
                let taps = [at(n - 3), at(n - 2), at(n - 1), at(n)];
                *y = K::interpolate(taps, frac as f64 / self.den as f64) as f32;
                frac += self.step;
                if frac >= self.den {
                    let whole = frac / self.den;
                    next += whole;
                    frac -= whole * self.den;
                }
            }
            let h = &mut self.history[c];
            if m >= 3 {
                *h = [f64::from(x[m - 3]), f64::from(x[m - 2]), f64::from(x[m - 1])];
            } else {
                for &v in x {
                    *h = [h[1], h[2], f64::from(v)];
                }
            }
        }
        self.next_index = next;
        self.frac = frac;
        self.received += m as u64;
        self.produced += n_out as u64;
        Ok(n_out)
    }

    fn output_frames(&self, input_frames: usize) -> usize {
        if self.bypass {
            return input_frames;
        }
        (self.total_outputs(self.received + input_frames as u64) - self.produced) as usize
    }

    fn max_output_frames(&self, input_frames: usize) -> usize {
        if self.bypass {
            return input_frames;
        }
        (input_frames as u64 * self.den).div_ceil(self.step) as usize + 1
    }

    fn delay(&self) -> usize {
        if self.bypass {
            0
        } else {
            K::DELAY
        }
    }

    fn phase(&self) -> f64 {
        self.frac as f64 / self.den as f64
    }

    fn reset(&mut self) {
        self.history.fill([0.0; 3]);
        self.received = 0;
        self.produced = 0;
        self.next_index = 0;
        self.frac = 0;
    }
}

/// Allocating convenience around [`StreamResampler::process`].
pub fn resample(resampler: &mut dyn StreamResampler, block: &AudioBlock) -> Result<AudioBlock> {
    let mut out = AudioBlock::with_capacity(block.channels(), resampler.max_output_frames(block.frames()))?;
    resampler.process(block, &mut out)?;
    Ok(out)
}

/// Zero-latency whole-signal resampling with edge clamping; sample `j` of
/// the output is the kernel evaluated at input position `j · f_in / f_out`.
pub fn resample_offline(signal: &[f32], f_in: SampleRate, f_out: SampleRate, kind: ResamplerKind) -> Vec<f32> {
    if f_in == f_out || signal.is_empty() {
        return signal.to_vec();
    }
    let (fi, fo) = (u64::from(f_in.hz()), u64::from(f_out.hz()));
    let g = gcd_u64(fi, fo);
    let (step, den) = (fi / g, fo / g);
    let len = (signal.len() as u64 * den).div_ceil(step) as usize;
    let last = signal.len() as i64 - 1;
    let at = |i: i64| f64::from(signal[i.clamp(0, last) as usize]);
    (0..len as u64)
        .map(|j| {
            let pos = j * step;
            let n = (pos / den) as i64;
            let x = (pos % den) as f64 / den as f64;
            let v = match kind {
                ResamplerKind::Linear => Linear::interpolate([0.0, 0.0, at(n), at(n + 1)], x),
                ResamplerKind::Hermite => Hermite4p::interpolate([at(n - 1), at(n), at(n + 1), at(n + 2)], x),
            };
            v as f32
        })
        .collect()
}
