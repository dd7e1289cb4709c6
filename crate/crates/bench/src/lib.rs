//! Shared fixtures for the criterion benches.

use streamwrap::{make_builtin, AudioBlock, BuiltinKind, BuiltinProcessor, RealtimeWrapper, SampleRate};

pub fn rate(hz: u32) -> SampleRate {
    SampleRate::new(hz).expect("valid rate")
}

/// Deterministic broadband test signal in [-1, 1).
pub fn noise(channels: usize, frames: usize) -> AudioBlock {
    let chans: Vec<Vec<f32>> = (0..channels)
        .map(|c| {
            let mut s = 0x9e37_79b9_u32.wrapping_add(c as u32);
            (0..frames)
                .map(|_| {
                    s ^= s << 13;
                    s ^= s >> 17;
                    s ^= s << 5;
                    (s >> 8) as f32 / (1 << 23) as f32 - 1.0
                })
                .collect()
        })
        .collect();
    AudioBlock::from_channels(&chans).expect("channel count in range")
}

/// A prepared wrapper around a built-in processor with one native size and rate.
pub fn prepared(
    kind: BuiltinKind,
    channels: usize,
    model_size: usize,
    model_rate: u32,
    host_rate: u32,
    host_size: usize,
) -> RealtimeWrapper<BuiltinProcessor> {
    let p = make_builtin(kind, channels)
        .and_then(|p| p.with_buffer_sizes(vec![model_size]))
        .and_then(|p| p.with_sample_rates(vec![rate(model_rate)]))
        .expect("valid built-in");
    let mut w = RealtimeWrapper::new(p);
    w.prepare(rate(host_rate), host_size, channels).expect("prepare");
    w
}
