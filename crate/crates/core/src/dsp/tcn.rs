//! Temporal convolutional network with FiLM conditioning.
//!
//! Each block computes `y = tanh(γ(c) ⊙ conv(x) + β(c)) + mix(x)`, where
//! `mix` is a fixed 1×1 residual: identity when channel counts agree, a mean
//! over folded channels when narrowing, and duplication when widening.

use crate::dsp::conv::CachedConv1d;
use crate::error::{AdaptError, Result};
use crate::types::AudioBlock;

/// Serializable weights for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnBlockWeights {
    pub kernel: usize,
    pub dilation: usize,
    /// Output channels of this block; the input count is the previous block's.
    pub channels: usize,
    /// `(out, in, tap)` order.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    /// `2·channels` rows of `condition_dim + 1` values: γ rows then β rows,
    /// each row's last entry being its bias.
    pub film: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcnWeights {
    pub in_channels: usize,
    pub out_channels: usize,
    pub condition_dim: usize,
    pub blocks: Vec<TcnBlockWeights>,
}

fn film_identity(channels: usize, condition_dim: usize) -> Vec<f32> {
    let row = condition_dim + 1;
    let mut film = vec![0.0; 2 * channels * row];
    for c in 0..channels {
        film[c * row + condition_dim] = 1.0;
    }
    film
}

impl TcnWeights {
    /// All-zero convolutions with identity FiLM: the stack reduces to its
    /// residual path.
    pub fn identity_init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilations: &[usize],
        hidden: usize,
        condition_dim: usize,
    ) -> Self {
        let mut prev = in_channels;
        let blocks = dilations
            .iter()
            .enumerate()
            .map(|(b, &dilation)| {
                let channels = if b + 1 == dilations.len() { out_channels } else { hidden };
                let block = TcnBlockWeights {
                    kernel,
                    dilation,
                    channels,
                    weights: vec![0.0; channels * prev * kernel],
                    bias: vec![0.0; channels],
                    film: film_identity(channels, condition_dim),
                };
                prev = channels;
                block
            })
            .collect();
        Self {
            in_channels,
            out_channels,
            condition_dim,
            blocks,
        }
    }

    /// Deterministic pseudo-random weights scaled to keep activations tame.
    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilations: &[usize],
        hidden: usize,
        condition_dim: usize,
        seed: u64,
    ) -> Self {
        let mut w = Self::identity_init(in_channels, out_channels, kernel, dilations, hidden, condition_dim);
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32
        };
        let mut prev = in_channels;
        for block in &mut w.blocks {
            let scale = 1.0 / ((prev * block.kernel) as f32).sqrt();
            block.weights.iter_mut().for_each(|v| *v = next() * scale);
            block.bias.iter_mut().for_each(|v| *v = next() * 0.1);
            block.film.iter_mut().for_each(|v| *v += next() * 0.2);
            prev = block.channels;
        }
        w
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.blocks.iter().map(|b| (b.kernel - 1) * b.dilation).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(AdaptError::config("TCN needs at least one block"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(AdaptError::config("TCN channel counts must be positive"));
        }
        let mut prev = self.in_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel == 0 || b.dilation == 0 || b.channels == 0 {
                return Err(AdaptError::config(format!("block {i}: zero dimension")));
            }
            if b.weights.len() != b.channels * prev * b.kernel {
                return Err(AdaptError::config(format!(
                    "block {i}: expected {} weights, got {}",
                    b.channels * prev * b.kernel,
                    b.weights.len()
                )));
            }
            if b.bias.len() != b.channels {
                return Err(AdaptError::config(format!("block {i}: bias length {}", b.bias.len())));
            }
            if b.film.len() != 2 * b.channels * (self.condition_dim + 1) {
                return Err(AdaptError::config(format!("block {i}: FiLM matrix length {}", b.film.len())));
            }
            prev = b.channels;
        }
        if prev != self.out_channels {
            return Err(AdaptError::config(format!(
                "last block has {prev} channels, header says {}",
                self.out_channels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    conv: CachedConv1d,
    film: Vec<f32>,
    gamma: Vec<f32>,
    beta: Vec<f32>,
}

/// A streaming TCN. Chunks longer than the reserved size are split, so
/// arbitrary chunk lengths never allocate.
#[derive(Debug, Clone)]
pub struct TcnStack {
    blocks: Vec<Block>,
    in_channels: usize,
    out_channels: usize,
    condition_dim: usize,
    widest: usize,
    max_chunk: usize,
    cur: Vec<f32>,
    next: Vec<f32>,
}

impl TcnStack {
    pub fn from_weights(weights: &TcnWeights, max_chunk: usize) -> Result<Self> {
        weights.validate()?;
        let mut prev = weights.in_channels;
        let mut widest = prev;
        let mut blocks = Vec::with_capacity(weights.blocks.len());
        for b in &weights.blocks {
            let conv = CachedConv1d::new(prev, b.channels, b.kernel, b.dilation, b.weights.clone(), b.bias.clone())?;
            blocks.push(Block {
                conv,
                film: b.film.clone(),
                gamma: vec![1.0; b.channels],
                beta: vec![0.0; b.channels],
            });
            prev = b.channels;
            widest = widest.max(prev);
        }
        let max_chunk = max_chunk.max(1);
        Ok(Self {
            blocks,
            in_channels: weights.in_channels,
            out_channels: weights.out_channels,
            condition_dim: weights.condition_dim,
            widest,
            max_chunk,
            cur: vec![0.0; widest * max_chunk],
            next: vec![0.0; widest * max_chunk],
        })
    }

    pub fn receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| b.conv.receptive_field() - 1)
            .sum::<usize>()
    }

    pub fn condition_dim(&self) -> usize {
        self.condition_dim
    }

    /// Grows the scratch so chunks up to `frames` run in one pass. Allocates.
    pub fn reserve_chunk(&mut self, frames: usize) {
        if frames > self.max_chunk {
            self.max_chunk = frames;
            self.cur = vec![0.0; self.widest * frames];
            self.next = vec![0.0; self.widest * frames];
        }
    }

    pub fn reset(&mut self) {
        for b in &mut self.blocks {
            b.conv.reset();
        }
    }

    fn update_film(&mut self, condition: &[f32]) {
        let d = self.condition_dim;
        for b in &mut self.blocks {
            let ch = b.gamma.len();
            for c in 0..ch {
                let g_row = &b.film[c * (d + 1)..(c + 1) * (d + 1)];
                let b_row = &b.film[(ch + c) * (d + 1)..(ch + c + 1) * (d + 1)];
                b.gamma[c] = g_row[d] + g_row[..d].iter().zip(condition).map(|(w, x)| w * x).sum::<f32>();
                b.beta[c] = b_row[d] + b_row[..d].iter().zip(condition).map(|(w, x)| w * x).sum::<f32>();
            }
        }
    }

    /// Planar forward pass over `frames` frames.
    pub fn forward_planar(&mut self, input: &[f32], frames: usize, condition: &[f32], output: &mut [f32]) -> Result<()> {
        if condition.len() != self.condition_dim {
            return Err(AdaptError::ShapeMismatch {
                expected: self.condition_dim,
                got: condition.len(),
            });
        }
        if input.len() != self.in_channels * frames {
            return Err(AdaptError::ShapeMismatch {
                expected: self.in_channels * frames,
                got: input.len(),
            });
        }
        if output.len() != self.out_channels * frames {
            return Err(AdaptError::ShapeMismatch {
                expected: self.out_channels * frames,
                got: output.len(),
            });
        }
        self.update_film(condition);
        let mut start = 0;
        while start < frames {
            let len = (frames - start).min(self.max_chunk);
            for c in 0..self.in_channels {
                self.cur[c * len..(c + 1) * len].copy_from_slice(&input[c * frames + start..c * frames + start + len]);
            }
            let mut width = self.in_channels;
            for b in &mut self.blocks {
                let out_ch = b.gamma.len();
                let x = &self.cur[..width * len];
                let y = &mut self.next[..out_ch * len];
                b.conv.process_planar(x, len, y);
                for o in 0..out_ch {
                    let (g, be) = (b.gamma[o], b.beta[o]);
                    let row = &mut y[o * len..(o + 1) * len];
                    for v in row.iter_mut() {
                        *v = (g * *v + be).tanh();
                    }
                    if width == out_ch {
                        for (v, r) in row.iter_mut().zip(&x[o * len..(o + 1) * len]) {
                            *v += r;
                        }
                    } else if width < out_ch {
                        let src = o % width;
                        for (v, r) in row.iter_mut().zip(&x[src * len..(src + 1) * len]) {
                            *v += r;
                        }
                    } else {
                        let count = (o..width).step_by(out_ch).count() as f32;
                        for src in (o..width).step_by(out_ch) {
                            for (v, r) in row.iter_mut().zip(&x[src * len..(src + 1) * len]) {
                                *v += r / count;
                            }
                        }
                    }
                }
                std::mem::swap(&mut self.cur, &mut self.next);
                width = out_ch;
            }
            for c in 0..self.out_channels {
                output[c * frames + start..c * frames + start + len].copy_from_slice(&self.cur[c * len..(c + 1) * len]);
            }
            start += len;
        }
        Ok(())
    }

    pub fn forward(&mut self, chunk: &AudioBlock, condition: &[f32], out: &mut AudioBlock) -> Result<()> {
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
        self.forward_planar(chunk.samples(), chunk.frames(), condition, out.samples_mut())
    }
}
