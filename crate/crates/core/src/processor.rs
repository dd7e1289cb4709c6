//! The fixed-shape realtime processor contract and the built-in processors
//! used as stand-ins for neural models.

use serde::{Deserialize, Serialize};

use crate::dsp::tcn::{TcnStack, TcnWeights};
use crate::error::{AdaptError, Result};
use crate::types::{validate_parameter_specs, AudioBlock, ModelMetadata, ParameterSpec, SampleRate};

/// A capability set: either anything, or an explicit ascending list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Native<T> {
    Any,
    Only(Vec<T>),
}

impl<T: PartialOrd> Native<T> {
    pub fn allows(&self, value: &T) -> bool {
        match self {
            Self::Any => true,
            Self::Only(v) => v.contains(value),
        }
    }

    fn check_sorted(&self, what: &str) -> Result<()> {
        if let Self::Only(v) = self {
            if v.is_empty() {
                return Err(AdaptError::config(format!("empty {what} set")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(AdaptError::config(format!("{what} set must be strictly ascending")));
            }
        }
        Ok(())
    }
}

/// How per-frame control values collapse to one value per processor call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Last,
    /// Value at the window centre; even windows take the later sample.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessorCapabilities {
    pub in_channels: usize,
    pub out_channels: usize,
    pub buffer_sizes: Native<usize>,
    pub sample_rates: Native<SampleRate>,
    /// Model-rate frames of inherent latency.
    pub delay_samples: usize,
    /// Model-rate frames of past input prepended to every call.
    pub lookbehind_samples: usize,
    pub aggregation: Aggregation,
}

impl ProcessorCapabilities {
    pub fn any(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            buffer_sizes: Native::Any,
            sample_rates: Native::Any,
            delay_samples: 0,
            lookbehind_samples: 0,
            aggregation: Aggregation::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ch in [self.in_channels, self.out_channels] {
            if !(1..=2).contains(&ch) {
                return Err(AdaptError::UnsupportedChannelCount(ch));
            }
        }
        self.buffer_sizes.check_sorted("buffer size")?;
        if let Native::Only(sizes) = &self.buffer_sizes {
            if sizes[0] == 0 {
                return Err(AdaptError::config("buffer sizes must be positive"));
            }
        }
        self.sample_rates.check_sorted("sample rate")?;
        Ok(())
    }
}

/// A processor that consumes `lookbehind + n_model` frames and produces
/// `n_model` frames per call, at one fixed rate and channel layout.
///
/// `process` sits on the realtime path: it must not allocate, lock, or block.
/// Control values arrive already aggregated, one `f32` per declared parameter
/// (categorical controls as their index).
pub trait RealtimeProcessor: Send {
    fn capabilities(&self) -> &ProcessorCapabilities;

    fn parameter_specs(&self) -> &[ParameterSpec] {
        &[]
    }

    fn metadata(&self) -> &ModelMetadata;

    /// Called off the realtime path once the plan is known; may allocate.
    fn prepare(&mut self, _f_model: SampleRate, _n_model: usize) -> Result<()> {
        Ok(())
    }

    fn process(&mut self, input: &AudioBlock, params: &[f32], output: &mut AudioBlock) -> Result<()>;

    fn reset(&mut self) {}
}

impl<P: RealtimeProcessor + ?Sized> RealtimeProcessor for Box<P> {
    fn capabilities(&self) -> &ProcessorCapabilities {
        (**self).capabilities()
    }

    fn parameter_specs(&self) -> &[ParameterSpec] {
        (**self).parameter_specs()
    }

    fn metadata(&self) -> &ModelMetadata {
        (**self).metadata()
    }

    fn prepare(&mut self, f_model: SampleRate, n_model: usize) -> Result<()> {
        (**self).prepare(f_model, n_model)
    }

    fn process(&mut self, input: &AudioBlock, params: &[f32], output: &mut AudioBlock) -> Result<()> {
        (**self).process(input, params, output)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Shape contract shared by every processor: returns the lookbehind offset.
pub fn check_process_shape(caps: &ProcessorCapabilities, input: &AudioBlock, output: &AudioBlock) -> Result<usize> {
    if input.channels() != caps.in_channels {
        return Err(AdaptError::ShapeMismatch {
            expected: caps.in_channels,
            got: input.channels(),
        });
    }
    if output.channels() != caps.out_channels {
        return Err(AdaptError::ShapeMismatch {
            expected: caps.out_channels,
            got: output.channels(),
        });
    }
    let expected = caps.lookbehind_samples + output.frames();
    if input.frames() != expected {
        return Err(AdaptError::ShapeMismatch {
            expected,
            got: input.frames(),
        });
    }
    Ok(caps.lookbehind_samples)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinKind {
    Identity,
    /// Linear gain, parameter 0 is silence and 1 is unity.
    Gain,
    /// `tanh(g·x) / tanh(g)` with drive `g = 1 + 9·p`.
    Clipper,
    DelayLine(usize),
    TcnRunner(TcnWeights),
}

impl BuiltinKind {
    /// Parses `identity`, `gain`, `clipper` and `delayline:<frames>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("identity", None) => Ok(Self::Identity),
            ("gain", None) => Ok(Self::Gain),
            ("clipper", None) => Ok(Self::Clipper),
            ("delayline", Some(d)) => d
                .parse()
                .map(Self::DelayLine)
                .map_err(|_| AdaptError::config(format!("bad delay length {d:?}"))),
            _ => Err(AdaptError::config(format!("unknown builtin processor {s:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Gain => "gain".into(),
            Self::Clipper => "clipper".into(),
            Self::DelayLine(d) => format!("delayline:{d}"),
            Self::TcnRunner(_) => "tcn".into(),
        }
    }
}

enum Engine {
    Identity,
    Gain,
    Clipper,
    DelayLine { len: usize, ring: Vec<f32>, pos: usize },
    Tcn { stack: Box<TcnStack>, condition: Vec<f32>, scratch_in: Vec<f32>, scratch_out: Vec<f32> },
}

/// One of the built-in processors.
pub struct BuiltinProcessor {
    kind: BuiltinKind,
    caps: ProcessorCapabilities,
    specs: Vec<ParameterSpec>,
    metadata: ModelMetadata,
    engine: Engine,
}

impl std::fmt::Debug for BuiltinProcessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinProcessor")
            .field("kind", &self.kind.label())
            .field("caps", &self.caps)
            .finish()
    }
}

pub fn make_builtin(kind: BuiltinKind, channels: usize) -> Result<BuiltinProcessor> {
    if !(1..=2).contains(&channels) {
        return Err(AdaptError::UnsupportedChannelCount(channels));
    }
    let mut caps = ProcessorCapabilities::any(channels, channels);
    let mut specs = Vec::new();
    let engine = match &kind {
        BuiltinKind::Identity => Engine::Identity,
        BuiltinKind::Gain => {
            specs.push(ParameterSpec::continuous("gain", "linear output gain", 1.0));
            Engine::Gain
        }
        BuiltinKind::Clipper => {
            specs.push(ParameterSpec::continuous("drive", "tanh drive amount", 0.0));
            Engine::Clipper
        }
        BuiltinKind::DelayLine(d) => {
            caps.delay_samples = *d;
            Engine::DelayLine {
                len: *d,
                ring: vec![0.0; d * channels],
                pos: 0,
            }
        }
        BuiltinKind::TcnRunner(weights) => {
            let stack = TcnStack::from_weights(weights, 64)?;
            if weights.in_channels != channels {
                return Err(AdaptError::config(format!(
                    "TCN expects {} input channels, wrapper asked for {channels}",
                    weights.in_channels
                )));
            }
            caps.out_channels = weights.out_channels;
            caps.lookbehind_samples = stack.receptive_field() - 1;
            for k in 0..weights.condition_dim {
                specs.push(ParameterSpec::continuous(&format!("cond{k}"), "FiLM condition input", 0.0));
            }
            Engine::Tcn {
                stack: Box::new(stack),
                condition: vec![0.0; weights.condition_dim],
                scratch_in: Vec::new(),
                scratch_out: Vec::new(),
            }
        }
    };
    caps.validate()?;
    let metadata = ModelMetadata::named(&kind.label());
    Ok(BuiltinProcessor {
        kind,
        caps,
        specs,
        metadata,
        engine,
    })
}

impl BuiltinProcessor {
    pub fn kind(&self) -> &BuiltinKind {
        &self.kind
    }

    /// Restricts the processor to fixed block sizes.
    pub fn with_buffer_sizes(mut self, sizes: Vec<usize>) -> Result<Self> {
        self.caps.buffer_sizes = Native::Only(sizes);
        self.caps.validate()?;
        Ok(self)
    }

    pub fn with_sample_rates(mut self, rates: Vec<SampleRate>) -> Result<Self> {
        self.caps.sample_rates = Native::Only(rates);
        self.caps.validate()?;
        Ok(self)
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.caps.aggregation = aggregation;
        self
    }

    pub fn with_metadata(mut self, metadata: ModelMetadata) -> Self {
        self.metadata = metadata;
        self
    }
}

impl RealtimeProcessor for BuiltinProcessor {
    fn capabilities(&self) -> &ProcessorCapabilities {
        &self.caps
    }

    fn parameter_specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    fn prepare(&mut self, _f_model: SampleRate, n_model: usize) -> Result<()> {
        validate_parameter_specs(&self.specs, true)?;
        if let Engine::Tcn {
            stack,
            scratch_in,
            scratch_out,
            ..
        } = &mut self.engine
        {
            let window = self.caps.lookbehind_samples + n_model;
            *scratch_in = vec![0.0; window * self.caps.in_channels];
            *scratch_out = vec![0.0; window * self.caps.out_channels];
            stack.reserve_chunk(window);
        }
        self.reset();
        Ok(())
    }

    fn process(&mut self, input: &AudioBlock, params: &[f32], output: &mut AudioBlock) -> Result<()> {
        let lookbehind = check_process_shape(&self.caps, input, output)?;
        let n = output.frames();
        match &mut self.engine {
            Engine::Identity => {
                output.copy_frames_from(0, input, lookbehind, n);
            }
            Engine::Gain => {
                let gain = params.first().copied().unwrap_or(1.0);
                for c in 0..input.channels() {
                    let src = &input.channel(c)[lookbehind..];
                    for (y, x) in output.channel_mut(c).iter_mut().zip(src) {
                        *y = x * gain;
                    }
                }
            }
            Engine::Clipper => {
                let drive = 1.0 + 9.0 * params.first().copied().unwrap_or(0.0);
                let norm = drive.tanh();
                for c in 0..input.channels() {
                    let src = &input.channel(c)[lookbehind..];
                    for (y, x) in output.channel_mut(c).iter_mut().zip(src) {
                        *y = (drive * x).tanh() / norm;
                    }
                }
            }
            Engine::DelayLine { len, ring, pos } => {
                let len = *len;
                if len == 0 {
                    output.copy_frames_from(0, input, lookbehind, n);
                } else {
                    let start = *pos;
                    for c in 0..input.channels() {
                        let line = &mut ring[c * len..(c + 1) * len];
                        let src = &input.channel(c)[lookbehind..];
                        let mut p = start;
                        for (y, x) in output.channel_mut(c).iter_mut().zip(src) {
                            *y = line[p];
                            line[p] = *x;
                            p += 1;
                            if p == len {
                                p = 0;
                            }
                        }
                    }
                    *pos = (start + n) % len;
                }
            }
            Engine::Tcn {
                stack,
                condition,
                scratch_in,
                scratch_out,
            } => {
                let window = input.frames();
                if scratch_in.len() != window * input.channels() {
                    return Err(AdaptError::NotPrepared);
                }
                for (slot, p) in condition.iter_mut().zip(params) {
                    *slot = *p;
                }
                stack.reset();
                scratch_in.copy_from_slice(input.samples());
                stack.forward_planar(scratch_in, window, condition, scratch_out)?;
                for c in 0..output.channels() {
                    let tail = &scratch_out[c * window + lookbehind..(c + 1) * window];
                    output.channel_mut(c).copy_from_slice(tail);
                }
            }
        }
        Ok(())
    }

    fn reset(&mut self) {
        match &mut self.engine {
            Engine::DelayLine { ring, pos, .. } => {
                ring.fill(0.0);
                *pos = 0;
            }
            Engine::Tcn { stack, .. } => stack.reset(),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(p: &mut BuiltinProcessor, input: &AudioBlock, params: &[f32]) -> AudioBlock {
        let n = input.frames() - p.capabilities().lookbehind_samples;
        let mut out = AudioBlock::new(p.capabilities().out_channels, n).unwrap();
        p.process(input, params, &mut out).unwrap();
        out
    }

    #[test]
    fn identity_caps_and_output() {
        let mut p = make_builtin(BuiltinKind::Identity, 1).unwrap();
        let c = p.capabilities().clone();
        assert_eq!((c.in_channels, c.out_channels), (1, 1));
        assert_eq!(c.buffer_sizes, Native::Any);
        assert_eq!(c.sample_rates, Native::Any);
        assert_eq!((c.delay_samples, c.lookbehind_samples), (0, 0));
        let block = AudioBlock::mono(vec![0.1, -0.2, 0.3]);
        assert_eq!(run(&mut p, &block, &[]), block);
    }

    #[test]
    fn gain_zero_is_silence() {
        let mut p = make_builtin(BuiltinKind::Gain, 2).unwrap();
        let ones = AudioBlock::from_channels(&[vec![1.0; 8], vec![1.0; 8]]).unwrap();
        assert!(run(&mut p, &ones, &[0.0]).samples().iter().all(|&s| s == 0.0));
        assert_eq!(run(&mut p, &ones, &[1.0]), ones);
    }

    #[test]
    fn delay_line_shifts_impulse_across_calls() {
        let mut p = make_builtin(BuiltinKind::DelayLine(64), 1).unwrap();
        assert_eq!(p.capabilities().delay_samples, 64);
        let mut stream = vec![0.0f32; 200];
        stream[0] = 1.0;
        let mut out = Vec::new();
        for chunk in stream.chunks(16) {
            out.extend_from_slice(run(&mut p, &AudioBlock::mono(chunk.to_vec()), &[]).samples());
        }
        let mut expected = vec![0.0f32; 200];
        expected[64] = 1.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn shape_contract_enforced() {
        let mut p = make_builtin(BuiltinKind::Identity, 2).unwrap();
        let input = AudioBlock::new(2, 10).unwrap();
        let mut out = AudioBlock::new(2, 9).unwrap();
        assert!(matches!(
            p.process(&input, &[], &mut out),
            Err(AdaptError::ShapeMismatch { expected: 9, got: 10 })
        ));
        let mono = AudioBlock::new(1, 9).unwrap();
        assert!(p.process(&mono, &[], &mut out).is_err());
    }

    #[test]
    fn tcn_lookbehind_from_receptive_field() {
        let w = TcnWeights::identity_init(1, 1, 3, &[1, 2, 4], 1, 0);
        let p = make_builtin(BuiltinKind::TcnRunner(w), 1).unwrap();
        assert_eq!(p.capabilities().lookbehind_samples, 14);
        assert_eq!(p.capabilities().delay_samples, 0);
    }

    #[test]
    fn tcn_zero_weights_pass_input_tail() {
        let w = TcnWeights::identity_init(2, 2, 3, &[1, 2, 4], 2, 1);
        let mut p = make_builtin(BuiltinKind::TcnRunner(w), 2).unwrap();
        p.prepare(SampleRate::new(48000).unwrap(), 32).unwrap();
        let data: Vec<f32> = (0..2 * 46).map(|k| ((k * 37) % 11) as f32 / 11.0 - 0.5).collect();
        let input = AudioBlock::from_planar(2, 46, data).unwrap();
        let out = run(&mut p, &input, &[0.3]);
        assert_eq!(out, input.slice_frames(14, 32));
    }

    #[test]
    fn malformed_tcn_weights_rejected() {
        let mut w = TcnWeights::identity_init(1, 1, 3, &[1, 2], 1, 0);
        w.blocks[0].weights.pop();
        assert!(matches!(
            make_builtin(BuiltinKind::TcnRunner(w), 1),
            Err(AdaptError::InvalidConfig(_))
        ));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(BuiltinKind::parse("delayline:64").unwrap(), BuiltinKind::DelayLine(64));
        assert_eq!(BuiltinKind::parse("gain").unwrap(), BuiltinKind::Gain);
        assert!(BuiltinKind::parse("delayline:x").is_err());
        assert!(BuiltinKind::parse("reverb").is_err());
    }

    proptest! {
        #[test]
        fn stateless_builtins_ignore_call_order(
            blocks in prop::collection::vec(prop::collection::vec(-2.0f32..2.0, 1..32), 1..6),
            p in 0.0f32..=1.0,
            seed in any::<u64>(),
        ) {
            for kind in [BuiltinKind::Identity, BuiltinKind::Gain, BuiltinKind::Clipper] {
                let mut fresh = make_builtin(kind.clone(), 1).unwrap();
                let expected: Vec<AudioBlock> = blocks
                    .iter()
                    .map(|b| run(&mut fresh, &AudioBlock::mono(b.clone()), &[p]))
                    .collect();
                let mut order: Vec<usize> = (0..blocks.len()).collect();
                let mut s = seed;
                for i in (1..order.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    order.swap(i, (s >> 33) as usize % (i + 1));
                }
                let mut shuffled = make_builtin(kind, 1).unwrap();
                for &i in &order {
                    let got = run(&mut shuffled, &AudioBlock::mono(blocks[i].clone()), &[p]);
                    prop_assert_eq!(&got, &expected[i]);
                }
            }
        }

        #[test]
        fn clipper_is_bounded_and_monotone(a in -3.0f32..3.0, b in -3.0f32..3.0, p in 0.0f32..=1.0) {
            let mut clip = make_builtin(BuiltinKind::Clipper, 1).unwrap();
            let out = run(&mut clip, &AudioBlock::mono(vec![a, b]), &[p]);
            let (ya, yb) = (out.get(0, 0), out.get(0, 1));
            prop_assert!(ya.abs() <= a.abs().max(1.0) + 1e-6);
            prop_assert!(ya.signum() == a.signum() || a == 0.0);
            if a < b {
                prop_assert!(ya <= yb);
            }
        }
    }
}
