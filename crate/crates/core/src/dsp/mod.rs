//! Streaming DSP building blocks. Every unit carries its state across calls
//! so that any chunking of a signal reproduces whole-signal processing.

pub mod conv;
pub mod filters;
pub mod mel;
pub mod stft;
pub mod tcn;

pub use conv::CachedConv1d;
pub use filters::{
    design_biquad, design_fir, BiquadCoefficients, BiquadFilter, FilterKind, FirBand, FirFilter, SvfFilter, SvfMode,
};
pub use mel::{mel_filterbank, CachedMelSpec};
pub use stft::{crossfade, RealtimeStft, StftAnalyzer, StftSynthesizer};
pub use tcn::{TcnBlockWeights, TcnStack, TcnWeights};
