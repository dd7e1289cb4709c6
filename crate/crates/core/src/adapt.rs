//! Buffer-size adaptation: the ring buffer, the minimal buffering delay, and
//! the planner that picks a model rate and block size for a given host.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};
use crate::processor::{Native, ProcessorCapabilities};
use crate::sandwich::ResamplerKind;
use crate::types::{AudioBlock, SampleRate, MAX_CHANNELS};

/// Fixed-capacity planar FIFO of audio (or control) frames.
///
/// Storage is allocated once in [`CircularQueue::new`]; pushes and pops only
/// move cursors and copy samples.
#[derive(Clone)]
pub struct CircularQueue {
    channels: usize,
    capacity: usize,
    data: Vec<f32>,
    read: usize,
    fill: usize,
}

/// A pop asked for more frames than the queue holds. The queue is untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Underflow {
    pub requested: usize,
    pub available: usize,
}

impl fmt::Display for Underflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "queue underflow: requested {} frames, {} available", self.requested, self.available)
    }
}

impl std::error::Error for Underflow {}

impl fmt::Debug for CircularQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircularQueue")
            .field("channels", &self.channels)
            .field("capacity", &self.capacity)
            .field("fill", &self.fill)
            .finish()
    }
}

impl CircularQueue {
    pub fn new(channels: usize, capacity: usize) -> Self {
        Self {
            channels,
            capacity,
            data: vec![0.0; channels * capacity],
            read: 0,
            fill: 0,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[inline]
    pub fn fill(&self) -> usize {
        self.fill
    }

    #[inline]
    pub fn free(&self) -> usize {
        self.capacity - self.fill
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    pub fn clear(&mut self) {
        self.read = 0;
        self.fill = 0;
    }

    fn overflow(&self, len: usize) -> AdaptError {
        AdaptError::InvalidConfig(format!(
            "queue overflow: pushing {len} frames with {} of {} in use",
            self.fill, self.capacity
        ))
    }

    #[inline]
    fn write_pos(&self) -> usize {
        let w = self.read + self.fill;
        if w >= self.capacity {
            w - self.capacity
        } else {
            w
        }
    }

    /// Appends `len` frames produced by `sample(channel, frame)`.
    pub fn push_with(&mut self, len: usize, mut sample: impl FnMut(usize, usize) -> f32) -> Result<()> {
        if len > self.free() {
            return Err(self.overflow(len));
        }
        let start = self.write_pos();
        for c in 0..self.channels {
            let ring = &mut self.data[c * self.capacity..(c + 1) * self.capacity];
            let mut pos = start;
            for i in 0..len {
                ring[pos] = sample(c, i);
                pos += 1;
                if pos == self.capacity {
                    pos = 0;
                }
            }
        }
        self.fill += len;
        Ok(())
    }

    /// Appends frames `start..start + len` of `block`.
    pub fn push_frames(&mut self, block: &AudioBlock, start: usize, len: usize) -> Result<()> {
        if block.channels() != self.channels {
            return Err(AdaptError::ShapeMismatch {
                expected: self.channels,
                got: block.channels(),
            });
        }
        if len > self.free() {
            return Err(self.overflow(len));
        }
        let w = self.write_pos();
        let first = len.min(self.capacity - w);
        for c in 0..self.channels {
            let src = &block.channel(c)[start..start + len];
            let ring = &mut self.data[c * self.capacity..(c + 1) * self.capacity];
            ring[w..w + first].copy_from_slice(&src[..first]);
            ring[..len - first].copy_from_slice(&src[first..]);
        }
        self.fill += len;
        Ok(())
    }

    pub fn push(&mut self, block: &AudioBlock) -> Result<()> {
        self.push_frames(block, 0, block.frames())
    }

    /// Appends `len` frames of silence.
    pub fn push_silence(&mut self, len: usize) -> Result<()> {
        self.push_with(len, |_, _| 0.0)
    }

    /// Pops `frames` frames into a planar slice: channel `c` lands at
    /// `dst[c * stride + offset..]`.
    pub fn pop_planar(&mut self, frames: usize, dst: &mut [f32], stride: usize, offset: usize) -> Result<(), Underflow> {
        self.peek_planar(frames, dst, stride, offset)?;
        self.discard(frames)
    }

    /// Like [`CircularQueue::pop_planar`] but leaves the queue untouched.
    pub fn peek_planar(&self, frames: usize, dst: &mut [f32], stride: usize, offset: usize) -> Result<(), Underflow> {
        if frames > self.fill {
            return Err(Underflow {
                requested: frames,
                available: self.fill,
            });
        }
        let first = frames.min(self.capacity - self.read);
        for c in 0..self.channels {
            let ring = &self.data[c * self.capacity..(c + 1) * self.capacity];
            let out = &mut dst[c * stride + offset..c * stride + offset + frames];
            out[..first].copy_from_slice(&ring[self.read..self.read + first]);
            out[first..].copy_from_slice(&ring[..frames - first]);
        }
        Ok(())
    }

    /// Pops into `out` starting at frame `offset`.
    pub fn pop_into(&mut self, frames: usize, out: &mut AudioBlock, offset: usize) -> Result<(), Underflow> {
        debug_assert_eq!(out.channels(), self.channels);
        debug_assert!(offset + frames <= out.frames());
        let stride = out.frames();
        self.pop_planar(frames, out.samples_mut(), stride, offset)
    }

    /// Allocating convenience pop.
    pub fn pop(&mut self, frames: usize) -> Result<AudioBlock, Underflow> {
        if frames > self.fill {
            return Err(Underflow {
                requested: frames,
                available: self.fill,
            });
        }
        let mut out = AudioBlock::new(self.channels.clamp(1, MAX_CHANNELS), frames).expect("channel count");
        let stride = out.frames();
        self.pop_planar(frames, out.samples_mut(), stride, 0)?;
        Ok(out)
    }

    pub fn discard(&mut self, frames: usize) -> Result<(), Underflow> {
        if frames > self.fill {
            return Err(Underflow {
                requested: frames,
                available: self.fill,
            });
        }
        self.read += frames;
        if self.read >= self.capacity {
            self.read -= self.capacity;
        }
        self.fill -= frames;
        if self.fill == 0 {
            self.read = 0;
        }
        Ok(())
    }
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Smallest output pre-roll (in model frames) that keeps a FIFO adapter fed
/// when the host delivers `host_span` frames per callback and the processor
/// consumes `n_model` at a time.
pub fn min_buffering_delay(host_span: usize, n_model: usize) -> usize {
    n_model - gcd(host_span, n_model)
}

/// How many model-rate frames one host block turns into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockSpan {
    Exact(usize),
    /// Alternates between the two values.
    Varying(usize, usize),
}

impl BlockSpan {
    pub fn floor(self) -> usize {
        match self {
            Self::Exact(l) => l,
            Self::Varying(lo, _) => lo,
        }
    }

    pub fn ceil(self) -> usize {
        match self {
            Self::Exact(l) => l,
            Self::Varying(_, hi) => hi,
        }
    }
}

impl fmt::Display for BlockSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact(l) => write!(f, "{l}"),
            Self::Varying(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

pub fn resampled_block_span(n_daw: usize, f_daw: SampleRate, f_model: SampleRate) -> BlockSpan {
    let num = n_daw as u64 * u64::from(f_model.hz());
    let den = u64::from(f_daw.hz());
    let floor = (num / den) as usize;
    if num.is_multiple_of(den) {
        BlockSpan::Exact(floor)
    } else {
        BlockSpan::Varying(floor, floor + 1)
    }
}

/// Model rate for a host rate: the host rate itself if supported, else the
/// smallest supported rate above it, else the largest supported rate.
pub fn select_sample_rate(native: &Native<SampleRate>, f_daw: SampleRate) -> SampleRate {
    let rates = match native {
        Native::Any => return f_daw,
        Native::Only(rates) if rates.is_empty() => return f_daw,
        Native::Only(rates) => rates,
    };
    if rates.contains(&f_daw) {
        return f_daw;
    }
    rates
        .iter()
        .copied()
        .filter(|r| *r > f_daw)
        .min()
        .or_else(|| rates.iter().copied().max())
        .unwrap_or(f_daw)
}

/// Native size with the least buffering delay; ties go to the smaller size.
pub fn select_buffer_size(native: &Native<usize>, span: BlockSpan) -> usize {
    let sizes = match native {
        Native::Only(sizes) if !sizes.is_empty() => sizes,
        _ => return span.ceil().max(1),
    };
    sizes
        .iter()
        .copied()
        .min_by_key(|&n| (effective_buffering_delay(span, n), n))
        .expect("non-empty")
}

/// Buffering delay for a span that may alternate between two lengths. The
/// varying case uses the gcd of both lengths and the model size, which is
/// safe for every interleaving.
pub fn effective_buffering_delay(span: BlockSpan, n_model: usize) -> usize {
    match span {
        BlockSpan::Exact(l) => min_buffering_delay(l, n_model),
        BlockSpan::Varying(a, b) => n_model - gcd(gcd(a, b), n_model),
    }
}

pub(crate) fn mul_div_ceil(a: u64, num: u64, den: u64) -> u64 {
    (a * num).div_ceil(den)
}

pub(crate) fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// The resolved adaptation plan for one (processor, host) pairing.
///
/// Delays are in frames at the rate noted on each field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub f_daw: SampleRate,
    pub f_model: SampleRate,
    pub n_daw: usize,
    pub n_model: usize,
    pub c_daw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub block_span: BlockSpan,
    pub resampler: ResamplerKind,
    /// Model rate.
    pub d_buffering: usize,
    /// Model rate; declared by the processor.
    pub d_model: usize,
    /// Host rate (input side of the to-model resampler); 0 when bypassed.
    pub d_resample_in: usize,
    /// Model rate (input side of the to-host resampler); 0 when bypassed.
    pub d_resample_out: usize,
    /// Silence pre-seeded into the host-rate output queue.
    pub output_preroll: usize,
    /// Host rate; what the host should compensate.
    pub d_total_daw: usize,
    pub lookbehind: usize,
    pub input_queue_capacity: usize,
    pub output_queue_capacity: usize,
}

impl StreamConfig {
    pub fn is_resampling(&self) -> bool {
        self.f_daw != self.f_model
    }
}

/// Composes rate selection, size selection and the delay math into a plan.
///
/// The buffering delay is realised as silence in the host-rate output queue,
/// rounded up to whole host frames. The reported total is the exact sum of
/// that pre-roll, the resampler kernel delays and the model delay, rounded
/// half-up to host frames.
pub fn plan_stream(
    caps: &ProcessorCapabilities,
    f_daw: SampleRate,
    n_daw: usize,
    c_daw: usize,
    resampler: ResamplerKind,
) -> Result<StreamConfig> {
    caps.validate()?;
    if n_daw == 0 {
        return Err(AdaptError::config("host buffer size must be at least 1"));
    }
    if c_daw == 0 || c_daw > MAX_CHANNELS {
        return Err(AdaptError::UnsupportedChannelCount(c_daw));
    }
    let f_model = select_sample_rate(&caps.sample_rates, f_daw);
    let block_span = resampled_block_span(n_daw, f_daw, f_model);
    let n_model = select_buffer_size(&caps.buffer_sizes, block_span);
    let d_buffering = effective_buffering_delay(block_span, n_model);
    let (fd, fm) = (u64::from(f_daw.hz()), u64::from(f_model.hz()));
    let (d_resample_in, d_resample_out) = if f_daw == f_model {
        (0, 0)
    } else {
        (resampler.kernel_delay(), resampler.kernel_delay())
    };
    let d_model = caps.delay_samples;
    let output_preroll = mul_div_ceil(d_buffering as u64, fd, fm) as usize;
    let total_num = (output_preroll + d_resample_in) as u64 * fm + (d_resample_out + d_model) as u64 * fd;
    let d_total_daw = div_round_half_up(total_num, fm) as usize;

    let input_queue_capacity = n_model + block_span.ceil() + 2;
    let output_queue_capacity = output_preroll + n_daw + fd.div_ceil(fm) as usize + 4;

    Ok(StreamConfig {
        f_daw,
        f_model,
        n_daw,
        n_model,
        c_daw,
        c_in: caps.in_channels,
        c_out: caps.out_channels,
        block_span,
        resampler,
        d_buffering,
        d_model,
        d_resample_in,
        d_resample_out,
        output_preroll,
        d_total_daw,
        lookbehind: caps.lookbehind_samples,
        input_queue_capacity,
        output_queue_capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processor::Aggregation;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn sr(hz: u32) -> SampleRate {
        SampleRate::new(hz).unwrap()
    }

    /// Smallest pre-roll for which accumulate/process/emit never runs dry,
    /// found by scanning one full callback cycle.
    fn fifo_min_prefill(host: usize, model: usize) -> usize {
        let cycle = model / gcd(host, model);
        let mut queued = 0usize;
        let mut produced = 0usize;
        let mut worst = 0usize;
        for c in 1..=cycle {
            queued += host;
            while queued >= model {
                queued -= model;
                produced += model;
            }
            worst = worst.max((c * host).saturating_sub(produced));
        }
        worst
    }

    #[test]
    fn queue_fifo_basics() {
        let mut q = CircularQueue::new(1, 8);
        q.push(&AudioBlock::mono(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(q.pop(2).unwrap().samples(), &[1.0, 2.0]);
        assert_eq!(q.fill(), 1);
    }

    #[test]
    fn queue_underflow_leaves_state() {
        let mut q = CircularQueue::new(2, 4);
        assert_eq!(
            q.pop(1).unwrap_err(),
            Underflow {
                requested: 1,
                available: 0
            }
        );
        assert_eq!(q.fill(), 0);
        q.push(&AudioBlock::new(2, 3).unwrap()).unwrap();
        assert!(q.pop(4).is_err());
        assert_eq!(q.fill(), 3);
    }

    #[test]
    fn queue_overflow_is_config_error() {
        let mut q = CircularQueue::new(1, 2);
        assert!(matches!(
            q.push(&AudioBlock::mono(vec![0.0; 3])),
            Err(AdaptError::InvalidConfig(_))
        ));
    }

    #[test]
    fn queue_wraps() {
        let mut q = CircularQueue::new(1, 5);
        q.push(&AudioBlock::mono(vec![0.0; 4])).unwrap();
        q.discard(3).unwrap();
        q.push(&AudioBlock::mono(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(q.pop(5).unwrap().samples(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Push(Vec<f32>),
        Pop(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            prop::collection::vec(-1.0f32..1.0, 0..12).prop_map(Op::Push),
            (0usize..12).prop_map(Op::Pop),
        ]
    }

    proptest! {
        #[test]
        fn queue_matches_naive_fifo(ops in prop::collection::vec(op(), 1..80)) {
            let mut q = CircularQueue::new(2, 16);
            let mut model: VecDeque<(f32, f32)> = VecDeque::new();
            for op in ops {
                match op {
                    Op::Push(v) => {
                        let right: Vec<f32> = v.iter().map(|x| -x).collect();
                        let block = AudioBlock::from_channels(&[v.clone(), right]).unwrap();
                        let ok = q.push(&block).is_ok();
                        prop_assert_eq!(ok, model.len() + v.len() <= 16);
                        if ok {
                            model.extend(v.iter().map(|&x| (x, -x)));
                        }
                    }
                    Op::Pop(n) => match q.pop(n) {
                        Ok(block) => {
                            for i in 0..n {
                                let (l, r) = model.pop_front().unwrap();
                                prop_assert_eq!(block.get(0, i), l);
                                prop_assert_eq!(block.get(1, i), r);
                            }
                        }
                        Err(_) => prop_assert!(n > model.len()),
                    },
                }
                prop_assert!(q.fill() <= q.capacity());
                prop_assert_eq!(q.fill(), model.len());
            }
        }

        #[test]
        fn delay_is_gcd_homogeneous(h in 1usize..200, b in 1usize..200, k in 1usize..8) {
            prop_assert_eq!(min_buffering_delay(k * h, k * b), k * min_buffering_delay(h, b));
        }
    }

    #[test]
    fn min_delay_examples() {
        assert_eq!(min_buffering_delay(512, 512), 0);
        assert_eq!(min_buffering_delay(3, 5), 4);
        assert_eq!(min_buffering_delay(512, 2048), 1536);
        assert_eq!(min_buffering_delay(2048, 512), 0);
        for (h, b) in [(3, 5), (512, 2048), (2048, 512), (7, 7)] {
            assert_eq!(min_buffering_delay(h, b), fifo_min_prefill(h, b));
        }
    }

    #[test]
    fn min_delay_matches_fifo_small_grid() {
        for h in 1..=64 {
            for b in 1..=64 {
                assert_eq!(min_buffering_delay(h, b), fifo_min_prefill(h, b), "h={h} b={b}");
            }
        }
    }

    #[test]
    fn block_span_examples() {
        assert_eq!(resampled_block_span(512, sr(48000), sr(48000)), BlockSpan::Exact(512));
        assert_eq!(resampled_block_span(512, sr(48000), sr(24000)), BlockSpan::Exact(256));
        // 512 * 48000 / 44100 = 557.27
        assert_eq!(resampled_block_span(512, sr(44100), sr(48000)), BlockSpan::Varying(557, 558));
    }

    #[test]
    fn rate_selection() {
        assert_eq!(select_sample_rate(&Native::Any, sr(48000)), sr(48000));
        assert_eq!(select_sample_rate(&Native::Only(vec![sr(44100), sr(48000)]), sr(48000)), sr(48000));
        assert_eq!(select_sample_rate(&Native::Only(vec![sr(22050), sr(44100)]), sr(48000)), sr(44100));
        assert_eq!(select_sample_rate(&Native::Only(vec![sr(16000), sr(96000), sr(88200)]), sr(48000)), sr(88200));
    }

    #[test]
    fn size_selection() {
        assert_eq!(select_buffer_size(&Native::Any, BlockSpan::Exact(512)), 512);
        assert_eq!(select_buffer_size(&Native::Any, BlockSpan::Varying(557, 558)), 558);
        assert_eq!(select_buffer_size(&Native::Only(vec![256, 512, 2048]), BlockSpan::Exact(512)), 256);
        assert_eq!(select_buffer_size(&Native::Only(vec![2048]), BlockSpan::Varying(557, 558)), 2048);
    }

    #[test]
    fn effective_delay_examples() {
        assert_eq!(effective_buffering_delay(BlockSpan::Exact(512), 2048), 1536);
        assert_eq!(effective_buffering_delay(BlockSpan::Varying(557, 558), 2048), 2047);
        for n in [1, 7, 512, 4096] {
            assert_eq!(effective_buffering_delay(BlockSpan::Exact(n), n), 0);
        }
    }

    /// Exact per-callback model-rate counts for a resampled host stream are
    /// ceil(c·n·r) − ceil((c−1)·n·r); the conservative gcd delay must cover
    /// the worst deficit over a full phase period.
    #[test]
    fn varying_span_delay_is_safe_over_a_period() {
        let (n_daw, fd, fm, b) = (512u64, 44100u64, 48000u64, 2048u64);
        let period = fd / gcd(fd as usize, (n_daw * fm) as usize) as u64;
        let mut worst = 0u64;
        for c in 1..=(period * b) {
            let arrived = (c * n_daw * fm).div_ceil(fd);
            let processed = arrived / b * b;
            worst = worst.max(arrived - processed);
        }
        assert!(worst <= effective_buffering_delay(BlockSpan::Varying(557, 558), 2048) as u64);
    }

    fn caps(sizes: Native<usize>, rates: Native<SampleRate>) -> ProcessorCapabilities {
        ProcessorCapabilities {
            in_channels: 2,
            out_channels: 2,
            buffer_sizes: sizes,
            sample_rates: rates,
            delay_samples: 0,
            lookbehind_samples: 0,
            aggregation: Aggregation::Mean,
        }
    }

    #[test]
    fn plan_examples() {
        let any = plan_stream(&caps(Native::Any, Native::Any), sr(48000), 512, 2, ResamplerKind::Hermite).unwrap();
        assert_eq!((any.f_model, any.n_model, any.d_total_daw), (sr(48000), 512, 0));

        let fixed = caps(Native::Only(vec![2048]), Native::Only(vec![sr(48000)]));
        let p = plan_stream(&fixed, sr(48000), 512, 2, ResamplerKind::Hermite).unwrap();
        assert_eq!((p.d_buffering, p.d_total_daw), (1536, 1536));

        let p = plan_stream(&fixed, sr(44100), 512, 2, ResamplerKind::Hermite).unwrap();
        assert_eq!(p.d_buffering, 2047);
        // pre-roll ceil(2047·44100/48000) = 1881, plus 2 host frames of input
        // kernel delay and 2 model frames (1.84 host frames) of output delay.
        assert_eq!(p.output_preroll, 1881);
        assert_eq!(p.d_total_daw, 1885);
    }

    #[test]
    fn plan_rejects_bad_inputs() {
        let c = caps(Native::Only(vec![]), Native::Any);
        assert!(matches!(
            plan_stream(&c, sr(48000), 512, 2, ResamplerKind::Hermite),
            Err(AdaptError::InvalidConfig(_))
        ));
        let c = caps(Native::Any, Native::Any);
        assert!(plan_stream(&c, sr(48000), 0, 2, ResamplerKind::Hermite).is_err());
        assert!(plan_stream(&c, sr(48000), 64, 9, ResamplerKind::Hermite).is_err());
    }

    #[test]
    fn plan_is_deterministic() {
        let c = caps(Native::Only(vec![64, 2048]), Native::Only(vec![sr(16000), sr(44100)]));
        let a = plan_stream(&c, sr(48000), 333, 2, ResamplerKind::Linear).unwrap();
        let b = plan_stream(&c, sr(48000), 333, 2, ResamplerKind::Linear).unwrap();
        assert_eq!(a, b);
    }
}
