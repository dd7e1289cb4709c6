use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::alloc::{count_allocations, counting_allocator_installed};
use crate::error::{AdaptError, Result};
use crate::processor::RealtimeProcessor;
use crate::rtwrap::RealtimeWrapper;
use crate::types::{default_parameter_values, AudioBlock, SampleRate};

const RTF_RUNS: usize = 5;
const PROBE_LEN: usize = 64;
const PROBE_AT: usize = 256;
const SEARCH_SLACK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    /// Median over runs of audio seconds per wall second.
    pub rtf: f64,
    pub rtf_mean: f64,
    pub runs: Vec<f64>,
    pub buffers_per_run: usize,
    pub mean_buffer_seconds: f64,
    pub worst_buffer_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub reported: usize,
    /// Lag of the cross-correlation peak; `None` if nothing came out.
    pub measured: Option<usize>,
}

fn test_signal(channels: usize, frames: usize, offset: usize) -> AudioBlock {
    let mut b = AudioBlock::new(channels, frames).expect("channel count checked by prepare");
    for c in 0..channels {
        for (i, s) in b.channel_mut(c).iter_mut().enumerate() {
            let t = (offset + i) as f32;
            *s = 0.5 * (t * 0.031 + c as f32).sin() + 0.1 * (t * 0.27).sin();
        }
    }
    b
}

/// Real-time factor of `wrapper` at host `(f, n, channels)` over at least
/// `duration_s` of audio per run, after a warm-up pass.
pub fn bench_rtf<P: RealtimeProcessor>(
    wrapper: &mut RealtimeWrapper<P>,
    f: SampleRate,
    n: usize,
    channels: usize,
    duration_s: f64,
) -> Result<RtfReport> {
    wrapper.prepare(f, n, channels)?;
    let buffers = ((duration_s * f64::from(f.hz()) / n as f64).ceil() as usize).max(1);
    let inputs: Vec<AudioBlock> = (0..buffers.min(64)).map(|k| test_signal(channels, n, k * n)).collect();
    let mut out = AudioBlock::new(channels, n)?;
    for k in 0..(buffers / 4).max(1) {
        wrapper.process_buffer(&inputs[k % inputs.len()], &[], &mut out)?;
    }
    let audio_seconds = (buffers * n) as f64 / f64::from(f.hz());
    let mut runs = Vec::with_capacity(RTF_RUNS);
    let (mut total, mut worst) = (0.0f64, 0.0f64);
    for _ in 0..RTF_RUNS {
        let run_start = Instant::now();
        for k in 0..buffers {
            let t = Instant::now();
            wrapper.process_buffer(&inputs[k % inputs.len()], &[], &mut out)?;
            let dt = t.elapsed().as_secs_f64();
            total += dt;
            worst = worst.max(dt);
        }
        runs.push(audio_seconds / run_start.elapsed().as_secs_f64().max(1e-12));
    }
    let mut sorted = runs.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RtfReport {
        rtf: sorted[RTF_RUNS / 2],
        rtf_mean: runs.iter().sum::<f64>() / RTF_RUNS as f64,
        runs,
        buffers_per_run: buffers,
        mean_buffer_seconds: total / (RTF_RUNS * buffers) as f64,
        worst_buffer_seconds: worst,
    })
}

/// Reported latency from `prepare` against the measured lag of a short
/// Hann pulse through the wrapper.
pub fn bench_latency<P: RealtimeProcessor>(
    wrapper: &mut RealtimeWrapper<P>,
    f: SampleRate,
    n: usize,
    channels: usize,
) -> Result<LatencyReport> {
    let reported = wrapper.prepare(f, n, channels)?.total_daw_samples;
    let probe: Vec<f64> = (0..PROBE_LEN)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / PROBE_LEN as f64).sin().powi(2))
        .collect();
    let max_lag = reported + SEARCH_SLACK;
    let total = PROBE_AT + max_lag + PROBE_LEN;
    let buffers = total.div_ceil(n);
    let mut input = AudioBlock::new(channels, n)?;
    let mut out = AudioBlock::new(channels, n)?;
    let mut response = Vec::with_capacity(buffers * n);
    for b in 0..buffers {
        for c in 0..channels {
            for (i, s) in input.channel_mut(c).iter_mut().enumerate() {
                let t = b * n + i;
                *s = if (PROBE_AT..PROBE_AT + PROBE_LEN).contains(&t) {
                    (0.5 * probe[t - PROBE_AT]) as f32
                } else {
                    0.0
                };
            }
        }
        wrapper.process_buffer(&input, &[], &mut out)?;
        response.extend(out.channel(0).iter().map(|&v| f64::from(v)));
    }
    let mut best = (0.0f64, None);
    for lag in 0..=max_lag {
        let start = PROBE_AT + lag;
        let corr: f64 = probe.iter().zip(&response[start..start + PROBE_LEN]).map(|(a, b)| a * b).sum();
        if corr > best.0 {
            best = (corr, Some(lag));
        }
    }
    Ok(LatencyReport {
        reported,
        measured: best.1,
    })
}

/// Allocations made inside `buffers` calls to `process_buffer` after a
/// prepare at `(f, n, channels)`. Fails unless [`super::CountingAllocator`]
/// is the global allocator, so a zero can be trusted.
pub fn audit_allocations<P: RealtimeProcessor>(
    wrapper: &mut RealtimeWrapper<P>,
    f: SampleRate,
    n: usize,
    channels: usize,
    buffers: usize,
) -> Result<u64> {
    if !counting_allocator_installed() {
        return Err(AdaptError::config("the counting allocator is not the global allocator"));
    }
    wrapper.prepare(f, n, channels)?;
    let params = default_parameter_values(wrapper.parameter_specs());
    let inputs: Vec<AudioBlock> = (0..8).map(|k| test_signal(channels, n, k * n)).collect();
    let mut out = AudioBlock::new(channels, n)?;
    let (result, count) = count_allocations(|| {
        for k in 0..buffers {
            wrapper.process_buffer(&inputs[k % inputs.len()], &params, &mut out)?;
        }
        Ok::<_, AdaptError>(())
    });
    result?;
    Ok(count)
}
