//! The host-facing realtime wrapper: channel and rate sandwich, block-size
//! queues, control-curve queuing and lookbehind around a fixed-shape
//! [`RealtimeProcessor`].

use serde::{Deserialize, Serialize};

use crate::adapt::{plan_stream, CircularQueue, StreamConfig};
use crate::error::{AdaptError, Result};
use crate::processor::{Aggregation, RealtimeProcessor};
use crate::sandwich::{ChannelNormalizer, ResamplerKind, StreamResampler};
use crate::types::{validate_parameter_specs, AudioBlock, ParameterSpec, ParameterValue, SampleRate};

/// Where the reported latency comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayComponents {
    /// Model rate.
    pub buffering: usize,
    /// Host rate; the buffering delay as whole host frames of pre-roll.
    pub output_preroll: usize,
    /// Host rate.
    pub resample_in: usize,
    /// Model rate.
    pub resample_out: usize,
    /// Model rate.
    pub model: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayReport {
    /// Host-rate frames the host should compensate.
    pub total_daw_samples: usize,
    pub components: DelayComponents,
}

impl DelayReport {
    fn from_config(cfg: &StreamConfig) -> Self {
        Self {
            total_daw_samples: cfg.d_total_daw,
            components: DelayComponents {
                buffering: cfg.d_buffering,
                output_preroll: cfg.output_preroll,
                resample_in: cfg.d_resample_in,
                resample_out: cfg.d_resample_out,
                model: cfg.d_model,
            },
        }
    }
}

/// Queue high-water marks and fault counters since the last prepare or reset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub input_max_fill: usize,
    pub input_capacity: usize,
    pub output_max_fill: usize,
    pub output_capacity: usize,
    pub underflows: u64,
    pub callbacks: u64,
    pub model_calls: u64,
    pub frames_in: u64,
    pub frames_out: u64,
}

/// Collapses one model window of per-frame control values to a scalar.
pub fn aggregate_params(values: &[f32], policy: Aggregation) -> f32 {
    match values {
        [] => 0.0,
        _ => match policy {
            Aggregation::Mean => (values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64) as f32,
            Aggregation::Last => values[values.len() - 1],
            Aggregation::Nearest => values[values.len() / 2],
        },
    }
}

struct Engine {
    config: StreamConfig,
    report: DelayReport,
    normalizer: ChannelNormalizer,
    norm_in: AudioBlock,
    rs_in: Box<dyn StreamResampler>,
    rs_in_buf: AudioBlock,
    input_q: CircularQueue,
    /// Per-frame control values at host rate, planar by parameter.
    host_params: Vec<f32>,
    param_q: CircularQueue,
    param_window: Vec<f32>,
    aggregated: Vec<f32>,
    policies: Vec<Aggregation>,
    defaults: Vec<f32>,
    window: AudioBlock,
    model_out: AudioBlock,
    rs_out: Box<dyn StreamResampler>,
    rs_out_buf: AudioBlock,
    output_q: CircularQueue,
    out_model: AudioBlock,
    stats: QueueStats,
}

impl Engine {
    fn reset(&mut self) {
        self.input_q.clear();
        self.param_q.clear();
        self.output_q.clear();
        self.output_q
            .push_silence(self.config.output_preroll)
            .expect("output capacity covers the pre-roll");
        self.window.fill(0.0);
        self.rs_in.reset();
        self.rs_out.reset();
        self.stats = QueueStats {
            input_capacity: self.input_q.capacity(),
            output_capacity: self.output_q.capacity(),
            output_max_fill: self.output_q.fill(),
            ..QueueStats::default()
        };
    }
}

/// Runs a fixed-shape processor at any host rate, block size and channel
/// count, with an exactly reported latency.
///
/// All storage is created in [`RealtimeWrapper::prepare`];
/// [`RealtimeWrapper::process_buffer`] never allocates.
pub struct RealtimeWrapper<P: RealtimeProcessor = Box<dyn RealtimeProcessor>> {
    processor: P,
    resampler: ResamplerKind,
    engine: Option<Engine>,
}

impl<P: RealtimeProcessor> std::fmt::Debug for RealtimeWrapper<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealtimeWrapper")
            .field("resampler", &self.resampler)
            .field("config", &self.engine.as_ref().map(|e| &e.config))
            .finish()
    }
}

impl<P: RealtimeProcessor> RealtimeWrapper<P> {
    pub fn new(processor: P) -> Self {
        Self {
            processor,
            resampler: ResamplerKind::default(),
            engine: None,
        }
    }

    /// Selects the interpolation kernel; takes effect at the next prepare.
    pub fn with_resampler(mut self, kind: ResamplerKind) -> Self {
        self.resampler = kind;
        self
    }

    pub fn resampler(&self) -> ResamplerKind {
        self.resampler
    }

    pub fn processor(&self) -> &P {
        &self.processor
    }

    pub fn processor_mut(&mut self) -> &mut P {
        &mut self.processor
    }

    pub fn into_inner(self) -> P {
        self.processor
    }

    pub fn is_prepared(&self) -> bool {
        self.engine.is_some()
    }

    pub fn config(&self) -> Option<&StreamConfig> {
        self.engine.as_ref().map(|e| &e.config)
    }

    pub fn delay_report(&self) -> Option<DelayReport> {
        self.engine.as_ref().map(|e| e.report)
    }

    pub fn queue_stats(&self) -> Option<QueueStats> {
        self.engine.as_ref().map(|e| e.stats)
    }

    pub fn parameter_specs(&self) -> &[ParameterSpec] {
        self.processor.parameter_specs()
    }

    /// Plans the stream for a host configuration and allocates every buffer.
    /// Calling it again reconfigures from scratch.
    pub fn prepare(&mut self, f_daw: SampleRate, n_daw: usize, c_daw: usize) -> Result<DelayReport> {
        self.engine = None;
        let caps = self.processor.capabilities().clone();
        let specs = self.processor.parameter_specs().to_vec();
        validate_parameter_specs(&specs, true)?;
        let config = plan_stream(&caps, f_daw, n_daw, c_daw, self.resampler)?;
        self.processor.prepare(config.f_model, config.n_model)?;

        let (c_in, c_out, n_model) = (config.c_in, config.c_out, config.n_model);
        let n_params = specs.len();
        let rs_in = self.resampler.build(f_daw, config.f_model, c_in);
        let rs_out = self.resampler.build(config.f_model, f_daw, c_out);
        let rs_in_buf = AudioBlock::with_capacity(c_in, rs_in.max_output_frames(n_daw))?;
        let rs_out_buf = AudioBlock::with_capacity(c_out, rs_out.max_output_frames(n_model))?;
        let policies = specs
            .iter()
            .map(|s| match s {
                ParameterSpec::Categorical { .. } => Aggregation::Last,
                _ => caps.aggregation,
            })
            .collect();
        let defaults = specs
            .iter()
            .map(|s| match s {
                ParameterSpec::Continuous { default, .. } => *default,
                ParameterSpec::Categorical { default, .. } => *default as f32,
                ParameterSpec::Text { .. } => 0.0,
            })
            .collect();

        let mut engine = Engine {
            report: DelayReport::from_config(&config),
            normalizer: ChannelNormalizer::new(c_daw, c_in, c_out)?,
            norm_in: AudioBlock::new(c_in, n_daw)?,
            rs_in,
            rs_in_buf,
            input_q: CircularQueue::new(c_in, config.input_queue_capacity),
            host_params: vec![0.0; n_params * n_daw],
            param_q: CircularQueue::new(n_params, config.input_queue_capacity),
            param_window: vec![0.0; n_params * n_model],
            aggregated: vec![0.0; n_params],
            policies,
            defaults,
            window: AudioBlock::new(c_in, config.lookbehind + n_model)?,
            model_out: AudioBlock::new(c_out, n_model)?,
            rs_out,
            rs_out_buf,
            output_q: CircularQueue::new(c_out, config.output_queue_capacity),
            out_model: AudioBlock::new(c_out, n_daw)?,
            stats: QueueStats::default(),
            config,
        };
        engine.reset();
        let report = engine.report;
        self.engine = Some(engine);
        Ok(report)
    }

    /// Clears all streaming state; the plan and reported delay are kept.
    pub fn reset(&mut self) -> Result<()> {
        let engine = self.engine.as_mut().ok_or(AdaptError::NotPrepared)?;
        engine.reset();
        self.processor.reset();
        Ok(())
    }

    /// Processes exactly `n_daw` host frames into `output`, which must have
    /// `c_daw` channels and room for `n_daw` frames.
    ///
    /// `params` is either empty (declared defaults) or one value per declared
    /// control, in declaration order. Curves hold one value per host frame.
    pub fn process_buffer(&mut self, input: &AudioBlock, params: &[ParameterValue], output: &mut AudioBlock) -> Result<()> {
        let engine = self.engine.as_mut().ok_or(AdaptError::NotPrepared)?;
        let cfg = &engine.config;
        let (n_daw, n_model, lb) = (cfg.n_daw, cfg.n_model, cfg.lookbehind);
        if input.channels() != cfg.c_daw {
            return Err(AdaptError::ShapeMismatch {
                expected: cfg.c_daw,
                got: input.channels(),
            });
        }
        if input.frames() != n_daw {
            return Err(AdaptError::ShapeMismatch {
                expected: n_daw,
                got: input.frames(),
            });
        }
        if output.channels() != cfg.c_daw {
            return Err(AdaptError::ShapeMismatch {
                expected: cfg.c_daw,
                got: output.channels(),
            });
        }
        let specs = self.processor.parameter_specs();
        let n_params = specs.len();
        if !params.is_empty() && params.len() != n_params {
            return Err(AdaptError::ShapeMismatch {
                expected: n_params,
                got: params.len(),
            });
        }

        // Per-frame controls at host rate.
        for p in 0..n_params {
            let row = &mut engine.host_params[p * n_daw..(p + 1) * n_daw];
            match params.get(p) {
                None => row.fill(engine.defaults[p]),
                Some(value) => {
                    specs[p].check_value(value, Some(n_daw))?;
                    match value {
                        ParameterValue::ContinuousScalar(v) => row.fill(*v),
                        ParameterValue::ContinuousCurve(curve) => row.copy_from_slice(curve),
                        ParameterValue::CategoricalIndex(i) => row.fill(*i as f32),
                        ParameterValue::TextValue(_) => unreachable!("rejected by spec validation"),
                    }
                }
            }
        }

        engine.normalizer.normalize_in_into(input, &mut engine.norm_in)?;
        let m = engine.rs_in.process(&engine.norm_in, &mut engine.rs_in_buf)?;
        engine.input_q.push(&engine.rs_in_buf)?;
        if n_params > 0 {
            // Nearest host frame for each new model-rate frame.
            let host_params = &engine.host_params;
            engine.param_q.push_with(m, |p, i| {
                let idx = ((2 * i + 1) * n_daw / (2 * m)).min(n_daw - 1);
                host_params[p * n_daw + idx]
            })?;
        }
        engine.stats.input_max_fill = engine.stats.input_max_fill.max(engine.input_q.fill());

        let stride = lb + n_model;
        while engine.input_q.fill() >= n_model {
            engine
                .input_q
                .pop_planar(n_model, engine.window.samples_mut(), stride, lb)
                .expect("fill checked");
            if n_params > 0 {
                engine
                    .param_q
                    .pop_planar(n_model, &mut engine.param_window, n_model, 0)
                    .expect("parameter queue advances with audio");
                for p in 0..n_params {
                    let values = &engine.param_window[p * n_model..(p + 1) * n_model];
                    engine.aggregated[p] = aggregate_params(values, engine.policies[p]);
                }
            }
            self.processor.process(&engine.window, &engine.aggregated, &mut engine.model_out)?;
            engine.stats.model_calls += 1;
            if lb > 0 {
                for c in 0..engine.window.channels() {
                    engine.window.channel_mut(c).copy_within(n_model..n_model + lb, 0);
                }
            }
            engine.rs_out.process(&engine.model_out, &mut engine.rs_out_buf)?;
            engine.output_q.push(&engine.rs_out_buf)?;
            engine.stats.output_max_fill = engine.stats.output_max_fill.max(engine.output_q.fill());
        }

        let available = engine.output_q.fill();
        if available >= n_daw {
            engine.output_q.pop_into(n_daw, &mut engine.out_model, 0).expect("fill checked");
        } else {
            engine.stats.underflows += 1;
            engine.out_model.fill(0.0);
            engine.output_q.pop_into(available, &mut engine.out_model, 0).expect("fill checked");
        }
        engine.normalizer.normalize_out_into(&engine.out_model, output)?;
        engine.stats.callbacks += 1;
        engine.stats.frames_in += n_daw as u64;
        engine.stats.frames_out += n_daw as u64;
        Ok(())
    }

    /// Streams a whole signal through [`RealtimeWrapper::process_buffer`]
    /// and trims the reported delay, returning output aligned with `input`.
    ///
    /// Curve parameters must span the whole signal. Allocates.
    pub fn process_offline(&mut self, input: &AudioBlock, params: &[ParameterValue]) -> Result<AudioBlock> {
        let cfg = self.config().ok_or(AdaptError::NotPrepared)?.clone();
        let (n, total) = (cfg.n_daw, input.frames());
        for p in params {
            if let ParameterValue::ContinuousCurve(curve) = p {
                if curve.len() != total {
                    return Err(AdaptError::ShapeMismatch {
                        expected: total,
                        got: curve.len(),
                    });
                }
            }
        }
        let needed = total + cfg.d_total_daw;
        let blocks = needed.div_ceil(n);
        let mut out = AudioBlock::new(cfg.c_daw, blocks * n)?;
        let mut block_in = AudioBlock::new(cfg.c_daw, n)?;
        let mut block_out = AudioBlock::new(cfg.c_daw, n)?;
        let mut block_params = params.to_vec();
        for b in 0..blocks {
            let start = b * n;
            let len = total.saturating_sub(start).min(n);
            block_in.fill(0.0);
            if len > 0 {
                block_in.copy_frames_from(0, input, start, len);
            }
            for (slot, p) in block_params.iter_mut().zip(params) {
                if let ParameterValue::ContinuousCurve(curve) = p {
                    let mut chunk = vec![*curve.last().unwrap_or(&0.0); n];
                    chunk[..len].copy_from_slice(&curve[start.min(total)..start.min(total) + len]);
                    *slot = ParameterValue::ContinuousCurve(chunk);
                }
            }
            self.process_buffer(&block_in, &block_params, &mut block_out)?;
            out.copy_frames_from(start, &block_out, 0, n);
        }
        Ok(out.slice_frames(cfg.d_total_daw, total))
    }
}
