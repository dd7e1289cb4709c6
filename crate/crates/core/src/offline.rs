//! Non-realtime processing: multi-track processors with text controls, run
//! block by block with padding, delay trimming, progress and cancellation.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::adapt::select_sample_rate;
use crate::error::{AdaptError, Result};
use crate::processor::{Native, RealtimeProcessor};
use crate::rtwrap::aggregate_params;
use crate::sandwich::{resample_offline, ResamplerKind};
use crate::types::{
    default_parameter_values, validate_parameter_specs, AudioBlock, ModelMetadata, ParameterSpec, ParameterValue,
    SampleRate, MAX_CHANNELS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineCapabilities {
    /// Channel count of each input track; empty for generators.
    pub in_tracks: Vec<usize>,
    /// Channel count of each output track.
    pub out_tracks: Vec<usize>,
    pub buffer_sizes: Native<usize>,
    pub sample_rates: Native<SampleRate>,
    /// Model-rate frames of latency.
    pub delay_samples: usize,
    /// Model-rate output length of a generator run.
    pub generated_frames: Option<usize>,
}

impl OfflineCapabilities {
    pub fn new(in_tracks: Vec<usize>, out_tracks: Vec<usize>) -> Self {
        Self {
            in_tracks,
            out_tracks,
            buffer_sizes: Native::Any,
            sample_rates: Native::Any,
            delay_samples: 0,
            generated_frames: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_tracks.is_empty() {
            return Err(AdaptError::config("an offline processor needs at least one output track"));
        }
        for &ch in self.in_tracks.iter().chain(&self.out_tracks) {
            if ch == 0 || ch > MAX_CHANNELS {
                return Err(AdaptError::UnsupportedChannelCount(ch));
            }
        }
        if self.in_tracks.is_empty() && self.generated_frames.is_none() {
            return Err(AdaptError::config("generators must declare generated_frames"));
        }
        if let Native::Only(sizes) = &self.buffer_sizes {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(AdaptError::config("buffer sizes must be a non-empty set of positive sizes"));
            }
        }
        if let Native::Only(rates) = &self.sample_rates {
            if rates.is_empty() {
                return Err(AdaptError::config("empty sample rate set"));
            }
        }
        Ok(())
    }
}

/// A processor run over whole files, one block at a time.
pub trait OfflineProcessor: Send {
    fn capabilities(&self) -> &OfflineCapabilities;

    fn parameter_specs(&self) -> &[ParameterSpec] {
        &[]
    }

    fn metadata(&self) -> &ModelMetadata;

    /// Called once per run before the first block, with the full control
    /// set (text included).
    fn begin_run(&mut self, _f_model: SampleRate, _block: usize, _params: &[ParameterValue]) -> Result<()> {
        Ok(())
    }

    /// `inputs[t]` and `outputs[t]` all hold the same number of frames.
    fn process_block(&mut self, inputs: &[AudioBlock], outputs: &mut [AudioBlock]) -> Result<()>;
}

/// Shared between a run and its observers: progress reads and one cancel.
#[derive(Debug, Default)]
pub struct RunHandle {
    progress_bits: AtomicU64,
    cancel: AtomicBool,
}

impl RunHandle {
    pub fn new() -> Self {
        Self::default()
    }

    /// In `[0, 1]`, nondecreasing; 1.0 exactly when a run has completed.
    pub fn progress(&self) -> f64 {
        f64::from_bits(self.progress_bits.load(Ordering::Acquire))
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Release);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Acquire)
    }

    fn advance(&self, value: f64) {
        // Non-negative IEEE doubles order the same as their bit patterns.
        self.progress_bits.fetch_max(value.clamp(0.0, 1.0).to_bits(), Ordering::AcqRel);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    OneShot,
    Blockwise(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineOptions {
    /// Longest input, in model-rate seconds, processed as a single block.
    pub one_shot_cap_seconds: f64,
    pub resampler: ResamplerKind,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        Self {
            one_shot_cap_seconds: 60.0,
            resampler: ResamplerKind::Hermite,
        }
    }
}

/// One block for short inputs to size-agnostic processors; otherwise the
/// largest native size, or the cap length when any size is allowed.
pub fn one_shot_or_blockwise(
    caps: &OfflineCapabilities,
    total_frames: usize,
    f_model: SampleRate,
    one_shot_cap_seconds: f64,
) -> ExecutionMode {
    let cap = ((one_shot_cap_seconds * f64::from(f_model.hz())).floor() as usize).max(1);
    match &caps.buffer_sizes {
        Native::Only(sizes) => ExecutionMode::Blockwise(*sizes.last().expect("validated non-empty")),
        Native::Any if total_frames <= cap => ExecutionMode::OneShot,
        Native::Any => ExecutionMode::Blockwise(cap),
    }
}

fn resolve_params(specs: &[ParameterSpec], params: &[ParameterValue]) -> Result<Vec<ParameterValue>> {
    if params.is_empty() {
        return Ok(default_parameter_values(specs));
    }
    if params.len() != specs.len() {
        return Err(AdaptError::ShapeMismatch {
            expected: specs.len(),
            got: params.len(),
        });
    }
    for (spec, value) in specs.iter().zip(params) {
        spec.check_value(value, None)?;
    }
    Ok(params.to_vec())
}

fn fit(mut samples: Vec<f32>, len: usize) -> Vec<f32> {
    samples.resize(len, 0.0);
    samples
}

/// Runs `processor` over whole tracks at `f_host`.
///
/// Inputs are resampled to the model rate, padded, processed block by block,
/// trimmed by the declared delay at the head and the padding at the tail,
/// then resampled back. Output tracks match the longest input in length
/// (shorter inputs are padded with silence).
pub fn run_offline<P: OfflineProcessor + ?Sized>(
    processor: &mut P,
    inputs: &[AudioBlock],
    f_host: SampleRate,
    params: &[ParameterValue],
    handle: &RunHandle,
    options: &OfflineOptions,
) -> Result<Vec<AudioBlock>> {
    let caps = processor.capabilities().clone();
    caps.validate()?;
    let specs = processor.parameter_specs().to_vec();
    validate_parameter_specs(&specs, false)?;
    let params = resolve_params(&specs, params)?;
    if inputs.len() != caps.in_tracks.len() {
        return Err(AdaptError::ShapeMismatch {
            expected: caps.in_tracks.len(),
            got: inputs.len(),
        });
    }
    for (block, &ch) in inputs.iter().zip(&caps.in_tracks) {
        if block.channels() != ch {
            return Err(AdaptError::ShapeMismatch {
                expected: ch,
                got: block.channels(),
            });
        }
    }

    let f_model = select_sample_rate(&caps.sample_rates, f_host);
    let host_len = inputs.iter().map(AudioBlock::frames).max().unwrap_or(0);
    let model_tracks: Vec<Vec<Vec<f32>>> = inputs
        .iter()
        .map(|block| {
            (0..block.channels())
                .map(|c| {
                    let padded = fit(block.channel(c).to_vec(), host_len);
                    resample_offline(&padded, f_host, f_model, options.resampler)
                })
                .collect()
        })
        .collect();
    let (model_len, out_host_len) = if inputs.is_empty() {
        let n = caps.generated_frames.unwrap_or(0);
        let host = (n as u64 * u64::from(f_host.hz())).div_ceil(u64::from(f_model.hz())) as usize;
        (n, host)
    } else {
        let n = model_tracks.first().and_then(|t| t.first()).map_or(0, Vec::len);
        (n, host_len)
    };

    let d = caps.delay_samples;
    let needed = model_len + d;
    let block = match one_shot_or_blockwise(&caps, needed, f_model, options.one_shot_cap_seconds) {
        ExecutionMode::OneShot => needed.max(1),
        ExecutionMode::Blockwise(n) => n,
    };
    let blocks = needed.div_ceil(block);
    processor.begin_run(f_model, block, &params)?;

    let mut in_blocks = caps
        .in_tracks
        .iter()
        .map(|&ch| AudioBlock::new(ch, block))
        .collect::<Result<Vec<_>>>()?;
    let mut out_blocks = caps
        .out_tracks
        .iter()
        .map(|&ch| AudioBlock::new(ch, block))
        .collect::<Result<Vec<_>>>()?;
    let mut model_out: Vec<Vec<Vec<f32>>> = caps
        .out_tracks
        .iter()
        .map(|&ch| vec![Vec::with_capacity(blocks * block); ch])
        .collect();

    for b in 0..blocks {
        if handle.is_cancelled() {
            return Err(AdaptError::Cancelled);
        }
        let start = b * block;
        let len = model_len.saturating_sub(start).min(block);
        for (dst, track) in in_blocks.iter_mut().zip(&model_tracks) {
            dst.fill(0.0);
            if len == 0 {
                continue;
            }
            for (c, samples) in track.iter().enumerate() {
                dst.channel_mut(c)[..len].copy_from_slice(&samples[start..start + len]);
            }
        }
        processor.process_block(&in_blocks, &mut out_blocks)?;
        for (acc, out) in model_out.iter_mut().zip(&out_blocks) {
            for (c, samples) in acc.iter_mut().enumerate() {
                samples.extend_from_slice(out.channel(c));
            }
        }
        handle.advance((b + 1) as f64 / (blocks + 1) as f64);
    }
    if handle.is_cancelled() {
        return Err(AdaptError::Cancelled);
    }

    let outputs = model_out
        .into_iter()
        .map(|track| {
            let channels: Vec<Vec<f32>> = track
                .into_iter()
                .map(|samples| {
                    let aligned = &samples[d.min(samples.len())..(d + model_len).min(samples.len())];
                    fit(resample_offline(aligned, f_model, f_host, options.resampler), out_host_len)
                })
                .collect();
            AudioBlock::from_channels(&channels)
        })
        .collect::<Result<Vec<_>>>()?;
    handle.advance(1.0);
    Ok(outputs)
}

/// Presents a realtime processor as a one-track offline processor. Controls
/// are held constant for the run; lookbehind is carried across blocks.
pub struct RealtimeAsOffline<P: RealtimeProcessor> {
    inner: P,
    caps: OfflineCapabilities,
    params: Vec<f32>,
    window: Option<AudioBlock>,
    out: Option<AudioBlock>,
}

impl<P: RealtimeProcessor> RealtimeAsOffline<P> {
    pub fn new(inner: P) -> Self {
        let rt = inner.capabilities();
        let caps = OfflineCapabilities {
            in_tracks: vec![rt.in_channels],
            out_tracks: vec![rt.out_channels],
            buffer_sizes: rt.buffer_sizes.clone(),
            sample_rates: rt.sample_rates.clone(),
            delay_samples: rt.delay_samples,
            generated_frames: None,
        };
        Self {
            inner,
            caps,
            params: Vec::new(),
            window: None,
            out: None,
        }
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: RealtimeProcessor> OfflineProcessor for RealtimeAsOffline<P> {
    fn capabilities(&self) -> &OfflineCapabilities {
        &self.caps
    }

    fn parameter_specs(&self) -> &[ParameterSpec] {
        self.inner.parameter_specs()
    }

    fn metadata(&self) -> &ModelMetadata {
        self.inner.metadata()
    }

    fn begin_run(&mut self, f_model: SampleRate, block: usize, params: &[ParameterValue]) -> Result<()> {
        self.inner.prepare(f_model, block)?;
        self.params = params
            .iter()
            .map(|p| match p {
                ParameterValue::ContinuousScalar(v) => *v,
                ParameterValue::ContinuousCurve(c) => aggregate_params(c, self.inner.capabilities().aggregation),
                ParameterValue::CategoricalIndex(i) => *i as f32,
                ParameterValue::TextValue(_) => 0.0,
            })
            .collect();
        let rt = self.inner.capabilities();
        self.window = Some(AudioBlock::new(rt.in_channels, rt.lookbehind_samples + block)?);
        self.out = Some(AudioBlock::new(rt.out_channels, block)?);
        Ok(())
    }

    fn process_block(&mut self, inputs: &[AudioBlock], outputs: &mut [AudioBlock]) -> Result<()> {
        let (window, out) = match (&mut self.window, &mut self.out) {
            (Some(w), Some(o)) => (w, o),
            _ => return Err(AdaptError::NotPrepared),
        };
        let lb = self.inner.capabilities().lookbehind_samples;
        let n = out.frames();
        window.copy_frames_from(lb, &inputs[0], 0, n);
        self.inner.process(window, &self.params, out)?;
        for c in 0..window.channels() {
            window.channel_mut(c).copy_within(n..n + lb, 0);
        }
        outputs[0].copy_frames_from(0, out, 0, n);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processor::{make_builtin, BuiltinKind};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sr(hz: u32) -> SampleRate {
        SampleRate::new(hz).unwrap()
    }

    fn signal(len: usize) -> Vec<f32> {
        (0..len).map(|i| (i as f32 * 0.013).sin() * 0.5 + ((i * 31) % 17) as f32 / 170.0).collect()
    }

    /// Pure delay by `d` frames with declared latency `d`.
    struct Delay {
        caps: OfflineCapabilities,
        meta: ModelMetadata,
        line: Vec<f32>,
        blocks_seen: usize,
        cancel_after: Option<(usize, Arc<RunHandle>)>,
    }

    impl Delay {
        fn new(d: usize, sizes: Native<usize>) -> Self {
            let mut caps = OfflineCapabilities::new(vec![1], vec![1]);
            caps.delay_samples = d;
            caps.buffer_sizes = sizes;
            Self {
                caps,
                meta: ModelMetadata::named("delay"),
                line: vec![0.0; d],
                blocks_seen: 0,
                cancel_after: None,
            }
        }
    }

    impl OfflineProcessor for Delay {
        fn capabilities(&self) -> &OfflineCapabilities {
            &self.caps
        }
        fn metadata(&self) -> &ModelMetadata {
            &self.meta
        }
        fn begin_run(&mut self, _: SampleRate, _: usize, _: &[ParameterValue]) -> Result<()> {
            self.line.fill(0.0);
            Ok(())
        }
        fn process_block(&mut self, inputs: &[AudioBlock], outputs: &mut [AudioBlock]) -> Result<()> {
            for (y, x) in outputs[0].channel_mut(0).iter_mut().zip(inputs[0].channel(0)) {
                self.line.push(*x);
                *y = self.line.remove(0);
            }
            self.blocks_seen += 1;
            if let Some((k, h)) = &self.cancel_after {
                if self.blocks_seen == *k {
                    h.cancel();
                }
            }
            Ok(())
        }
    }

    /// One track in, four out, each a fixed gain of the input.
    struct StemStub {
        caps: OfflineCapabilities,
        meta: ModelMetadata,
    }

    const STEM_GAINS: [f32; 4] = [1.0, 0.5, 0.25, -1.0];

    impl OfflineProcessor for StemStub {
        fn capabilities(&self) -> &OfflineCapabilities {
            &self.caps
        }
        fn parameter_specs(&self) -> &[ParameterSpec] {
            static SPECS: std::sync::OnceLock<Vec<ParameterSpec>> = std::sync::OnceLock::new();
            SPECS.get_or_init(|| vec![ParameterSpec::text("prompt", "what to extract", 64, "drums")])
        }
        fn metadata(&self) -> &ModelMetadata {
            &self.meta
        }
        fn process_block(&mut self, inputs: &[AudioBlock], outputs: &mut [AudioBlock]) -> Result<()> {
            for (out, g) in outputs.iter_mut().zip(STEM_GAINS) {
                for (y, x) in out.channel_mut(0).iter_mut().zip(inputs[0].channel(0)) {
                    *y = g * x;
                }
            }
            Ok(())
        }
    }

    #[test]
    fn mode_selection_examples() {
        let any = OfflineCapabilities::new(vec![1], vec![1]);
        assert_eq!(one_shot_or_blockwise(&any, 480_000, sr(48000), 60.0), ExecutionMode::OneShot);
        assert_eq!(
            one_shot_or_blockwise(&any, 48000 * 600, sr(48000), 60.0),
            ExecutionMode::Blockwise(48000 * 60)
        );
        let mut fixed = any.clone();
        fixed.buffer_sizes = Native::Only(vec![512, 2048]);
        assert_eq!(one_shot_or_blockwise(&fixed, 10, sr(48000), 60.0), ExecutionMode::Blockwise(2048));
    }

    #[test]
    fn identity_is_bit_exact_at_unity() {
        let mut p = RealtimeAsOffline::new(make_builtin(BuiltinKind::Identity, 2).unwrap());
        let x = AudioBlock::from_channels(&[signal(5000), signal(5000).iter().map(|v| -v).collect()]).unwrap();
        let h = RunHandle::new();
        let y = run_offline(&mut p, std::slice::from_ref(&x), sr(48000), &[], &h, &OfflineOptions::default()).unwrap();
        assert_eq!(y, vec![x]);
        assert_eq!(h.progress(), 1.0);
    }

    #[test]
    fn delay_is_compensated_blockwise() {
        for (d, size) in [(64, 2048), (3000, 512), (0, 7)] {
            let mut p = Delay::new(d, Native::Only(vec![size]));
            let x = signal(10_000);
            let h = RunHandle::new();
            let y = run_offline(&mut p, &[AudioBlock::mono(x.clone())], sr(44100), &[], &h, &OfflineOptions::default())
                .unwrap();
            assert_eq!(y[0].samples(), &x[..], "d {d} size {size}");
        }
    }

    #[test]
    fn resampled_identity_is_close() {
        let mut p = RealtimeAsOffline::new(
            make_builtin(BuiltinKind::DelayLine(64), 1)
                .unwrap()
                .with_sample_rates(vec![sr(48000)])
                .unwrap(),
        );
        let x: Vec<f32> = (0..20_000).map(|i| (i as f32 * 0.02).sin()).collect();
        let h = RunHandle::new();
        let y = run_offline(&mut p, &[AudioBlock::mono(x.clone())], sr(44100), &[], &h, &OfflineOptions::default())
            .unwrap();
        assert_eq!(y[0].frames(), x.len());
        let err = y[0].samples()[10..19_990]
            .iter()
            .zip(&x[10..19_990])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn stem_splitter_tracks_align() {
        let mut caps = OfflineCapabilities::new(vec![1], vec![1, 1, 1, 1]);
        caps.buffer_sizes = Native::Only(vec![1000]);
        let mut p = StemStub {
            caps,
            meta: ModelMetadata::named("stems"),
        };
        let x = signal(4321);
        let h = RunHandle::new();
        let params = [ParameterValue::TextValue("vocals".into())];
        let y = run_offline(&mut p, &[AudioBlock::mono(x.clone())], sr(48000), &params, &h, &OfflineOptions::default())
            .unwrap();
        assert_eq!(y.len(), 4);
        for (track, g) in y.iter().zip(STEM_GAINS) {
            let want: Vec<f32> = x.iter().map(|v| g * v).collect();
            assert_eq!(track.samples(), &want[..]);
        }
    }

    #[test]
    fn cancellation_stops_at_next_block() {
        let h = Arc::new(RunHandle::new());
        let mut p = Delay::new(10, Native::Only(vec![100]));
        p.cancel_after = Some((5, h.clone()));
        let r = run_offline(&mut p, &[AudioBlock::mono(signal(1000))], sr(48000), &[], &h, &OfflineOptions::default());
        assert_eq!(r, Err(AdaptError::Cancelled));
        assert_eq!(p.blocks_seen, 5);
        assert!(h.progress() < 1.0 && h.progress() >= 0.4);
    }

    #[test]
    fn wrong_track_count_rejected() {
        let mut p = Delay::new(0, Native::Any);
        let r = run_offline(&mut p, &[], sr(48000), &[], &RunHandle::new(), &OfflineOptions::default());
        assert!(matches!(r, Err(AdaptError::ShapeMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn progress_is_monotone_and_terminal(len in 0usize..5000, size in 1usize..700) {
            let h = Arc::new(RunHandle::new());
            let watcher = {
                let h = h.clone();
                std::thread::spawn(move || {
                    let mut last = 0.0;
                    for _ in 0..2000 {
                        let p = h.progress();
                        assert!(p >= last && (0.0..=1.0).contains(&p));
                        last = p;
                        if p == 1.0 {
                            break;
                        }
                        std::thread::yield_now();
                    }
                })
            };
            let mut p = Delay::new(17, Native::Only(vec![size]));
            let y = run_offline(&mut p, &[AudioBlock::mono(signal(len))], sr(48000), &[], &h, &OfflineOptions::default()).unwrap();
            prop_assert_eq!(y[0].frames(), len);
            prop_assert_eq!(h.progress(), 1.0);
            watcher.join().unwrap();
        }

        #[test]
        fn blockwise_equals_one_shot_for_stateless(len in 1usize..6000, cap in 1usize..3000) {
            let x = AudioBlock::mono(signal(len));
            let mut gain = RealtimeAsOffline::new(make_builtin(BuiltinKind::Clipper, 1).unwrap());
            let params = [ParameterValue::ContinuousScalar(0.3)];
            let one = run_offline(&mut gain, std::slice::from_ref(&x), sr(1000), &params, &RunHandle::new(), &OfflineOptions::default()).unwrap();
            let opts = OfflineOptions { one_shot_cap_seconds: cap as f64 / 1000.0, ..OfflineOptions::default() };
            let many = run_offline(&mut gain, &[x], sr(1000), &params, &RunHandle::new(), &opts).unwrap();
            prop_assert_eq!(one, many);
        }
    }
}
