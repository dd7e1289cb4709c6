//! Adapts fixed-shape streaming audio processors (one block size, one sample
//! rate, one channel layout) to arbitrary hosts, with minimal and exactly
//! reported latency and an allocation-free processing path.
//!
//! The realtime entry point is [`RealtimeWrapper`]; whole-file processing
//! goes through [`run_offline`]; [`Bundle`] packages a processor for export.

pub mod adapt;
pub mod bundle;
pub mod dsp;
pub mod error;
pub mod offline;
pub mod processor;
pub mod rtwrap;
pub mod sandwich;
pub mod types;

pub use adapt::{
    gcd, min_buffering_delay, plan_stream, resampled_block_span, select_buffer_size, select_sample_rate, BlockSpan,
    CircularQueue, StreamConfig, Underflow,
};
pub use bundle::{
    audit_allocations, bench_latency, bench_rtf, read_bundle, write_bundle, Bundle, BundleExample, BundleMetadata,
    CountingAllocator, LatencyReport, Payload, RtfReport,
};
pub use error::{AdaptError, Result};
pub use offline::{
    one_shot_or_blockwise, run_offline, ExecutionMode, OfflineCapabilities, OfflineOptions, OfflineProcessor,
    RealtimeAsOffline, RunHandle,
};
pub use processor::{
    make_builtin, Aggregation, BuiltinKind, BuiltinProcessor, Native, ProcessorCapabilities, RealtimeProcessor,
};
pub use rtwrap::{aggregate_params, DelayComponents, DelayReport, QueueStats, RealtimeWrapper};
pub use sandwich::{
    resample_offline, ChannelNormalizer, Hermite4pResampler, LinearResampler, ResamplerKind, StreamResampler,
};
pub use types::{AudioBlock, ModelMetadata, ParameterSpec, ParameterValue, SampleRate, MAX_CHANNELS};

#[cfg(test)]
#[global_allocator]
static ALLOC: bundle::CountingAllocator = bundle::CountingAllocator;
