//! Value types shared across the crate: planar audio blocks, sample rates,
//! parameter declarations and model metadata.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// Hard cap on channels per block. Host layouts beyond this are rejected.
pub const MAX_CHANNELS: usize = 8;

/// Planar multi-channel audio. Channel `c`, frame `i` lives at `c * frames + i`.
///
/// Storage can be reserved up front with [`AudioBlock::with_capacity`] so that
/// later [`AudioBlock::resize_frames`] calls never touch the allocator.
#[derive(Clone, PartialEq)]
pub struct AudioBlock {
    channels: usize,
    frames: usize,
    samples: Vec<f32>,
}

impl fmt::Debug for AudioBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioBlock")
            .field("channels", &self.channels)
            .field("frames", &self.frames)
            .finish_non_exhaustive()
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(AdaptError::UnsupportedChannelCount(channels));
    }
    Ok(())
}

impl AudioBlock {
    /// A silent block.
    pub fn new(channels: usize, frames: usize) -> Result<Self> {
        check_channels(channels)?;
        Ok(Self {
            channels,
            frames,
            samples: vec![0.0; channels * frames],
        })
    }

    /// An empty block with room for `max_frames` frames per channel.
    pub fn with_capacity(channels: usize, max_frames: usize) -> Result<Self> {
        check_channels(channels)?;
        Ok(Self {
            channels,
            frames: 0,
            samples: Vec::with_capacity(channels * max_frames),
        })
    }

    pub fn from_planar(channels: usize, frames: usize, samples: Vec<f32>) -> Result<Self> {
        check_channels(channels)?;
        if samples.len() != channels * frames {
            return Err(AdaptError::ShapeMismatch {
                expected: channels * frames,
                got: samples.len(),
            });
        }
        Ok(Self {
            channels,
            frames,
            samples,
        })
    }

    /// Builds a block from one vector per channel; all must share a length.
    pub fn from_channels<S: AsRef<[f32]>>(channels: &[S]) -> Result<Self> {
        check_channels(channels.len())?;
        let frames = channels[0].as_ref().len();
        let mut samples = Vec::with_capacity(frames * channels.len());
        for ch in channels {
            let ch = ch.as_ref();
            if ch.len() != frames {
                return Err(AdaptError::ShapeMismatch {
                    expected: frames,
                    got: ch.len(),
                });
            }
            samples.extend_from_slice(ch);
        }
        Ok(Self {
            channels: channels.len(),
            frames,
            samples,
        })
    }

    pub fn mono(samples: Vec<f32>) -> Self {
        Self {
            channels: 1,
            frames: samples.len(),
            samples,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn capacity_frames(&self) -> usize {
        self.samples.capacity() / self.channels
    }

    #[inline]
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c * self.frames..(c + 1) * self.frames]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.samples[c * self.frames..(c + 1) * self.frames]
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize) -> f32 {
        self.samples[c * self.frames + i]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, value: f32) {
        self.samples[c * self.frames + i] = value;
    }

    /// Re-shapes to `frames` frames of silence. Does not allocate as long as
    /// the new size fits the reserved capacity.
    pub fn resize_frames(&mut self, frames: usize) {
        self.samples.clear();
        self.samples.resize(self.channels * frames, 0.0);
        self.frames = frames;
    }

    pub fn fill(&mut self, value: f32) {
        self.samples.fill(value);
    }

    /// Copies `len` frames from `src[src_start..]` into `self[dst_start..]`, per channel.
    pub fn copy_frames_from(&mut self, dst_start: usize, src: &AudioBlock, src_start: usize, len: usize) {
        debug_assert_eq!(self.channels, src.channels);
        for c in 0..self.channels {
            let s = &src.channel(c)[src_start..src_start + len];
            self.channel_mut(c)[dst_start..dst_start + len].copy_from_slice(s);
        }
    }

    /// Frames `start..start + len` as a new block.
    pub fn slice_frames(&self, start: usize, len: usize) -> AudioBlock {
        let mut out = AudioBlock {
            channels: self.channels,
            frames: len,
            samples: vec![0.0; self.channels * len],
        };
        out.copy_frames_from(0, self, start, len);
        out
    }

    pub fn to_channels(&self) -> Vec<Vec<f32>> {
        (0..self.channels).map(|c| self.channel(c).to_vec()).collect()
    }
}

/// A sample rate in Hz; always at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SampleRate(u32);

impl SampleRate {
    pub fn new(hz: u32) -> Result<Self> {
        if hz == 0 {
            return Err(AdaptError::config("sample rate must be at least 1 Hz"));
        }
        Ok(Self(hz))
    }

    #[inline]
    pub fn hz(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for SampleRate {
    type Error = AdaptError;

    fn try_from(hz: u32) -> Result<Self> {
        Self::new(hz)
    }
}

impl From<SampleRate> for u32 {
    fn from(rate: SampleRate) -> u32 {
        rate.0
    }
}

impl fmt::Display for SampleRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

/// A declared control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterSpec {
    /// A knob in `[0, 1]`.
    Continuous {
        name: String,
        description: String,
        default: f32,
    },
    /// One of `n` labelled positions.
    Categorical {
        name: String,
        description: String,
        n: usize,
        labels: Vec<String>,
        default: usize,
    },
    /// Free text; offline processors only.
    Text {
        name: String,
        description: String,
        max_chars: usize,
        default: String,
    },
}

impl ParameterSpec {
    pub fn continuous(name: &str, description: &str, default: f32) -> Self {
        Self::Continuous {
            name: name.to_owned(),
            description: description.to_owned(),
            default,
        }
    }

    pub fn categorical(name: &str, description: &str, labels: &[&str], default: usize) -> Self {
        Self::Categorical {
            name: name.to_owned(),
            description: description.to_owned(),
            n: labels.len(),
            labels: labels.iter().map(|s| (*s).to_owned()).collect(),
            default,
        }
    }

    pub fn text(name: &str, description: &str, max_chars: usize, default: &str) -> Self {
        Self::Text {
            name: name.to_owned(),
            description: description.to_owned(),
            max_chars,
            default: default.to_owned(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Continuous { name, .. } | Self::Categorical { name, .. } | Self::Text { name, .. } => name,
        }
    }

    /// Checks a runtime value against this declaration. `frames` is the
    /// host block length that curves must match.
    pub fn check_value(&self, value: &ParameterValue, frames: Option<usize>) -> Result<()> {
        let in_unit = |v: f32| (0.0..=1.0).contains(&v);
        match (self, value) {
            (Self::Continuous { .. }, ParameterValue::ContinuousScalar(v)) => {
                if !in_unit(*v) {
                    return Err(AdaptError::param(format!("{}: {v} outside [0, 1]", self.name())));
                }
            }
            (Self::Continuous { .. }, ParameterValue::ContinuousCurve(curve)) => {
                if let Some(frames) = frames {
                    if curve.len() != frames {
                        return Err(AdaptError::ShapeMismatch {
                            expected: frames,
                            got: curve.len(),
                        });
                    }
                }
                if !curve.iter().copied().all(in_unit) {
                    return Err(AdaptError::param(format!("{}: curve leaves [0, 1]", self.name())));
                }
            }
            (Self::Categorical { n, .. }, ParameterValue::CategoricalIndex(i)) => {
                if i >= n {
                    return Err(AdaptError::param(format!("{}: index {i} >= {n}", self.name())));
                }
            }
            (Self::Text { max_chars, .. }, ParameterValue::TextValue(s)) => {
                if s.chars().count() > *max_chars {
                    return Err(AdaptError::param(format!(
                        "{}: text longer than {max_chars} characters",
                        self.name()
                    )));
                }
            }
            _ => {
                return Err(AdaptError::param(format!(
                    "{}: value kind does not match declaration",
                    self.name()
                )))
            }
        }
        Ok(())
    }
}

/// A runtime value for one declared control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParameterValue {
    ContinuousScalar(f32),
    /// One value per host frame.
    ContinuousCurve(Vec<f32>),
    CategoricalIndex(usize),
    TextValue(String),
}

/// Checks every declaration, name uniqueness, and that realtime processors
/// declare no text controls. Reports the first violated rule.
pub fn validate_parameter_specs(specs: &[ParameterSpec], realtime: bool) -> Result<()> {
    let mut seen = HashSet::new();
    for spec in specs {
        let name = spec.name();
        if name.is_empty() {
            return Err(AdaptError::param("parameter name is empty"));
        }
        if !seen.insert(name) {
            return Err(AdaptError::param(format!("duplicate parameter name {name:?}")));
        }
        match spec {
            ParameterSpec::Continuous { default, .. } => {
                if !(0.0..=1.0).contains(default) {
                    return Err(AdaptError::param(format!("{name}: default {default} outside [0, 1]")));
                }
            }
            ParameterSpec::Categorical { n, labels, default, .. } => {
                if *n < 2 {
                    return Err(AdaptError::param(format!("{name}: needs at least 2 positions")));
                }
                if labels.len() != *n {
                    return Err(AdaptError::param(format!(
                        "{name}: {} labels for {n} positions",
                        labels.len()
                    )));
                }
                if default >= n {
                    return Err(AdaptError::param(format!("{name}: default {default} >= {n}")));
                }
            }
            ParameterSpec::Text { max_chars, default, .. } => {
                if realtime {
                    return Err(AdaptError::param(format!(
                        "{name}: text parameters are only available offline"
                    )));
                }
                if *max_chars == 0 {
                    return Err(AdaptError::param(format!("{name}: max_chars must be positive")));
                }
                if default.chars().count() > *max_chars {
                    return Err(AdaptError::param(format!("{name}: default longer than {max_chars}")));
                }
            }
        }
    }
    Ok(())
}

pub fn default_parameter_values(specs: &[ParameterSpec]) -> Vec<ParameterValue> {
    specs
        .iter()
        .map(|spec| match spec {
            ParameterSpec::Continuous { default, .. } => ParameterValue::ContinuousScalar(*default),
            ParameterSpec::Categorical { default, .. } => ParameterValue::CategoricalIndex(*default),
            ParameterSpec::Text { default, .. } => ParameterValue::TextValue(default.clone()),
        })
        .collect()
}

/// Descriptive ("cosmetic") metadata carried with a processor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub name: String,
    pub authors: Vec<String>,
    pub description: String,
    pub tags: Vec<String>,
    pub citation: String,
    pub technical_links: BTreeMap<String, String>,
    pub version: String,
    pub is_experimental: bool,
}

impl ModelMetadata {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            version: "1.0.0".to_owned(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(AdaptError::config("metadata name is empty"));
        }
        Ok(())
    }
}
