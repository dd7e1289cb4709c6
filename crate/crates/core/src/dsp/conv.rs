use crate::error::{AdaptError, Result};
use crate::types::AudioBlock;

/// Causal dilated 1-D convolution that carries its own history between calls.
///
/// Taps follow the cross-correlation convention over a left-padded input:
/// `y[t] = b + Σ_j w[j] · x[t − (k − 1 − j)·d]`, so an impulse comes out as
/// the kernel reversed.
#[derive(Debug, Clone)]
pub struct CachedConv1d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    dilation: usize,
    /// `(out, in, tap)` order.
    weights: Vec<f32>,
    bias: Vec<f32>,
    /// Last `(k − 1)·d` input samples per input channel, oldest first.
    cache: Vec<f32>,
}

impl CachedConv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || dilation == 0 {
            return Err(AdaptError::config("convolution dimensions must be positive"));
        }
        if weights.len() != out_channels * in_channels * kernel {
            return Err(AdaptError::config(format!(
                "expected {} conv weights, got {}",
                out_channels * in_channels * kernel,
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(AdaptError::config(format!(
                "expected {out_channels} conv biases, got {}",
                bias.len()
            )));
        }
        let history = (kernel - 1) * dilation;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            dilation,
            weights,
            bias,
            cache: vec![0.0; in_channels * history],
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn history(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn receptive_field(&self) -> usize {
        self.history() + 1
    }

    pub fn reset(&mut self) {
        self.cache.fill(0.0);
    }

    /// Planar in, planar out: `input` holds `in_channels × frames`, `output`
    /// receives `out_channels × frames`.
    pub fn process_planar(&mut self, input: &[f32], frames: usize, output: &mut [f32]) {
        debug_assert_eq!(input.len(), self.in_channels * frames);
        debug_assert_eq!(output.len(), self.out_channels * frames);
        let hist = self.history();
        let k = self.kernel;
        for o in 0..self.out_channels {
            let out = &mut output[o * frames..(o + 1) * frames];
            out.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let x = &input[i * frames..(i + 1) * frames];
                let cache = &self.cache[i * hist..(i + 1) * hist];
                for j in 0..k {
                    let w = self.weights[(o * self.in_channels + i) * k + j];
                    let off = (k - 1 - j) * self.dilation;
                    let split = off.min(frames);
                    for (t, y) in out[..split].iter_mut().enumerate() {
                        *y += w * cache[hist - off + t];
                    }
                    for (y, xv) in out[split..].iter_mut().zip(x) {
                        *y += w * xv;
                    }
                }
            }
        }
        if hist == 0 {
            return;
        }
        for i in 0..self.in_channels {
            let x = &input[i * frames..(i + 1) * frames];
            let cache = &mut self.cache[i * hist..(i + 1) * hist];
            if frames >= hist {
                cache.copy_from_slice(&x[frames - hist..]);
            } else {
                cache.copy_within(frames.., 0);
                cache[hist - frames..].copy_from_slice(x);
            }
        }
    }

    pub fn process(&mut self, chunk: &AudioBlock, out: &mut AudioBlock) -> Result<()> {
        if chunk.channels() != self.in_channels {
            return Err(AdaptError::ShapeMismatch {
                expected: self.in_channels,
                got: chunk.channels(),
            });
        }
        if out.channels() != self.out_channels {
            return Err(AdaptError::ShapeMismatch {
                expected: self.out_channels,
                got: out.channels(),
            });
        }
        out.resize_frames(chunk.frames());
        self.process_planar(chunk.samples(), chunk.frames(), out.samples_mut());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Whole-signal causal convolution, evaluated directly in f64.
    fn oracle(x: &[Vec<f64>], out_ch: usize, k: usize, d: usize, w: &[f32], b: &[f32]) -> Vec<Vec<f64>> {
        let n = x[0].len();
        (0..out_ch)
            .map(|o| {
                (0..n)
                    .map(|t| {
                        let mut acc = b[o] as f64;
                        for (i, xi) in x.iter().enumerate() {
                            for j in 0..k {
                                let back = (k - 1 - j) * d;
                                if t >= back {
                                    acc += w[(o * x.len() + i) * k + j] as f64 * xi[t - back];
                                }
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn run_chunked(conv: &mut CachedConv1d, x: &[Vec<f32>], sizes: &[usize]) -> Vec<Vec<f32>> {
        let n = x[0].len();
        let mut out = vec![Vec::new(); conv.out_channels()];
        let mut pos = 0;
        let mut s = 0;
        while pos < n {
            let len = sizes[s % sizes.len()].min(n - pos);
            s += 1;
            let input: Vec<f32> = x.iter().flat_map(|c| c[pos..pos + len].iter().copied()).collect();
            let mut y = vec![0.0; conv.out_channels() * len];
            conv.process_planar(&input, len, &mut y);
            for (o, dst) in out.iter_mut().enumerate() {
                dst.extend_from_slice(&y[o * len..(o + 1) * len]);
            }
            pos += len;
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut c = CachedConv1d::new(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        let x = AudioBlock::mono(vec![0.5, -0.25, 1.0]);
        let mut y = AudioBlock::new(1, 0).unwrap();
        c.process(&x, &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn box_kernel_chunking_matches_oracle() {
        let x: Vec<f32> = (0..40).map(|i| ((i * 7) % 5) as f32 - 2.0).collect();
        let mut c = CachedConv1d::new(1, 1, 3, 1, vec![1.0; 3], vec![0.0]).unwrap();
        let got = run_chunked(&mut c, std::slice::from_ref(&x), &[1, 7, 3]);
        let want = oracle(&[x.iter().map(|&v| v as f64).collect()], 1, 3, 1, &[1.0; 3], &[0.0]);
        for (g, w) in got[0].iter().zip(&want[0]) {
            assert_eq!(*g as f64, *w);
        }
    }

    #[test]
    fn impulse_returns_reversed_kernel() {
        let w = vec![0.1, 0.2, 0.3, 0.4];
        let mut c = CachedConv1d::new(1, 1, 4, 2, w.clone(), vec![0.0]).unwrap();
        let mut x = vec![0.0; 10];
        x[0] = 1.0;
        let y = run_chunked(&mut c, &[x], &[3]);
        assert_eq!(y[0], vec![0.4, 0.0, 0.3, 0.0, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0]);
        assert_eq!(c.receptive_field(), 7);
    }

    #[test]
    fn bad_shapes() {
        assert!(CachedConv1d::new(1, 1, 3, 1, vec![1.0; 2], vec![0.0]).is_err());
        let mut c = CachedConv1d::new(2, 1, 1, 1, vec![1.0; 2], vec![0.0]).unwrap();
        let mut out = AudioBlock::new(1, 0).unwrap();
        assert!(matches!(
            c.process(&AudioBlock::mono(vec![0.0]), &mut out),
            Err(AdaptError::ShapeMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn random_multichannel_chunking(
            seed in any::<u32>(),
            k in 1usize..5,
            d in 1usize..4,
            sizes in prop::collection::vec(1usize..17, 1..5),
        ) {
            let (ic, oc, n) = (2, 3, 90);
            let mut s = seed as u64 | 1;
            let mut next = || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s % 2001) as f32 / 1000.0 - 1.0
            };
            let w: Vec<f32> = (0..oc * ic * k).map(|_| next()).collect();
            let b: Vec<f32> = (0..oc).map(|_| next()).collect();
            let x: Vec<Vec<f32>> = (0..ic).map(|_| (0..n).map(|_| next()).collect()).collect();
            let mut conv = CachedConv1d::new(ic, oc, k, d, w.clone(), b.clone()).unwrap();
            let got = run_chunked(&mut conv, &x, &sizes);
            let x64: Vec<Vec<f64>> = x.iter().map(|c| c.iter().map(|&v| v as f64).collect()).collect();
            let want = oracle(&x64, oc, k, d, &w, &b);
            for o in 0..oc {
                for t in 0..n {
                    // f32 accumulation against an f64 reference
                    prop_assert!((got[o][t] as f64 - want[o][t]).abs() <= 1e-5, "o={} t={}", o, t);
                }
            }
        }
    }
}
