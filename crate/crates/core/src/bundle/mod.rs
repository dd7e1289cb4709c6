//! The exported bundle: schema-checked metadata, example audio and a
//! processor payload in one little-endian container. Also home to the
//! benchmarks that qualify a bundle for realtime use.

mod alloc;
mod bench;
mod payload;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use alloc::{count_allocations, counting_allocator_installed, CountingAllocator};
pub use bench::{audit_allocations, bench_latency, bench_rtf, LatencyReport, RtfReport};
pub use payload::{decode_payload, decode_tcn, encode_builtin, encode_tcn, PayloadKind};

use crate::error::{AdaptError, Result};
use crate::processor::{make_builtin, BuiltinProcessor, ProcessorCapabilities, RealtimeProcessor};
use crate::types::{validate_parameter_specs, ModelMetadata, ParameterSpec};

pub const MAGIC: &[u8; 4] = b"NAB1";
pub const FORMAT_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

/// Functional (capabilities, controls) and cosmetic (model) metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMetadata {
    pub schema_version: u32,
    pub model: ModelMetadata,
    pub parameters: Vec<ParameterSpec>,
    pub capabilities: ProcessorCapabilities,
}

impl BundleMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(AdaptError::config(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.capabilities.validate()?;
        validate_parameter_specs(&self.parameters, true)
    }

    /// Sorted-key JSON; identical metadata always yields identical bytes.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("metadata is always representable as JSON");
        serde_json::to_vec(&value).expect("JSON values serialize")
    }
}

/// A named input/output pair of WAV files, stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleExample {
    pub name: String,
    pub input_wav: Vec<u8>,
    pub output_wav: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub format_id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub metadata: BundleMetadata,
    pub examples: Vec<BundleExample>,
    pub payload: Payload,
}

fn is_wav(bytes: &[u8]) -> bool {
    bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WAVE"
}

impl Bundle {
    /// A bundle for `processor` with no examples.
    pub fn describe(processor: &BuiltinProcessor) -> Self {
        Self {
            metadata: BundleMetadata {
                schema_version: SCHEMA_VERSION,
                model: processor.metadata().clone(),
                parameters: processor.parameter_specs().to_vec(),
                capabilities: processor.capabilities().clone(),
            },
            examples: Vec::new(),
            payload: encode_builtin(processor.kind()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.metadata.validate()?;
        for ex in &self.examples {
            if ex.name.len() > usize::from(u16::MAX) {
                return Err(AdaptError::config("example name too long"));
            }
            if !is_wav(&ex.input_wav) || !is_wav(&ex.output_wav) {
                return Err(AdaptError::config(format!("example {:?} is not RIFF/WAVE", ex.name)));
            }
        }
        if self.payload.format_id.len() > usize::from(u16::MAX) {
            return Err(AdaptError::config("payload format id too long"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let meta = self.metadata.to_canonical_json();
        let mut out = Vec::with_capacity(64 + meta.len() + self.payload.bytes.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.examples.len() as u32).to_le_bytes());
        for ex in &self.examples {
            out.extend_from_slice(&(ex.name.len() as u16).to_le_bytes());
            out.extend_from_slice(ex.name.as_bytes());
            out.extend_from_slice(&(ex.input_wav.len() as u64).to_le_bytes());
            out.extend_from_slice(&ex.input_wav);
            out.extend_from_slice(&(ex.output_wav.len() as u64).to_le_bytes());
            out.extend_from_slice(&ex.output_wav);
        }
        out.extend_from_slice(&(self.payload.format_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.payload.format_id.as_bytes());
        out.extend_from_slice(&(self.payload.bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload.bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != MAGIC {
            return Err(AdaptError::bundle(0, "bad magic"));
        }
        let version_at = r.pos as u64;
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(AdaptError::bundle(version_at, format!("unsupported format version {version}")));
        }
        let meta_len = r.len_u64("metadata length")?;
        let meta_at = r.pos as u64;
        let meta_bytes = r.take(meta_len, "metadata")?;
        let metadata: BundleMetadata = serde_json::from_slice(meta_bytes)
            .map_err(|e| AdaptError::bundle(meta_at, format!("metadata schema violation: {e}")))?;
        metadata
            .validate()
            .map_err(|e| AdaptError::bundle(meta_at, format!("metadata schema violation: {e}")))?;

        let count = r.u32("example count")? as usize;
        let mut examples = Vec::with_capacity(count.min(r.remaining() / 18));
        for _ in 0..count {
            let name_len = usize::from(r.u16("example name length")?);
            let name_at = r.pos as u64;
            let name = std::str::from_utf8(r.take(name_len, "example name")?)
                .map_err(|_| AdaptError::bundle(name_at, "example name is not UTF-8"))?
                .to_owned();
            let mut wav = |what: &str| -> Result<Vec<u8>> {
                let len = r.len_u64(what)?;
                let at = r.pos as u64;
                let bytes = r.take(len, what)?;
                if !is_wav(bytes) {
                    return Err(AdaptError::bundle(at, format!("{what} is not RIFF/WAVE")));
                }
                Ok(bytes.to_vec())
            };
            let input_wav = wav("example input")?;
            let output_wav = wav("example output")?;
            examples.push(BundleExample {
                name,
                input_wav,
                output_wav,
            });
        }

        let id_len = usize::from(r.u16("payload format id length")?);
        let id_at = r.pos as u64;
        let format_id = std::str::from_utf8(r.take(id_len, "payload format id")?)
            .map_err(|_| AdaptError::bundle(id_at, "payload format id is not UTF-8"))?
            .to_owned();
        let payload_len = r.len_u64("payload length")?;
        let payload = r.take(payload_len, "payload")?.to_vec();
        if r.remaining() != 0 {
            return Err(AdaptError::bundle(r.pos as u64, "trailing bytes after payload"));
        }
        Ok(Self {
            metadata,
            examples,
            payload: Payload {
                format_id,
                bytes: payload,
            },
        })
    }

    /// Instantiates the payload as a built-in processor configured by the
    /// bundle's capabilities and metadata.
    pub fn load_processor(&self) -> Result<BuiltinProcessor> {
        let kind = match decode_payload(&self.payload)? {
            PayloadKind::Builtin(kind) => kind,
            PayloadKind::Opaque => {
                return Err(AdaptError::config(format!(
                    "payload format {:?} is not executable here",
                    self.payload.format_id
                )))
            }
        };
        let caps = &self.metadata.capabilities;
        let mut p = make_builtin(kind, caps.in_channels)?;
        let derived = p.capabilities().clone();
        if derived.out_channels != caps.out_channels
            || derived.delay_samples != caps.delay_samples
            || derived.lookbehind_samples != caps.lookbehind_samples
        {
            return Err(AdaptError::config("bundle capabilities disagree with its payload"));
        }
        if p.parameter_specs().len() != self.metadata.parameters.len() {
            return Err(AdaptError::config("bundle parameters disagree with its payload"));
        }
        if let crate::processor::Native::Only(sizes) = &caps.buffer_sizes {
            p = p.with_buffer_sizes(sizes.clone())?;
        }
        if let crate::processor::Native::Only(rates) = &caps.sample_rates {
            p = p.with_sample_rates(rates.clone())?;
        }
        Ok(p.with_aggregation(caps.aggregation)
            .with_metadata(self.metadata.model.clone()))
    }
}

pub fn write_bundle(bundle: &Bundle, sink: &mut impl Write) -> Result<u64> {
    let bytes = bundle.to_bytes()?;
    sink.write_all(&bytes)
        .map_err(|e| AdaptError::config(format!("bundle write failed: {e}")))?;
    Ok(bytes.len() as u64)
}

pub fn read_bundle(source: &mut impl Read) -> Result<Bundle> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| AdaptError::bundle(bytes.len() as u64, format!("read failed: {e}")))?;
    Bundle::from_bytes(&bytes)
}

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if len > self.remaining() {
            return Err(AdaptError::bundle(
                self.pos as u64,
                format!("truncated {what}: need {len} bytes, {} left", self.remaining()),
            ));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }

    /// A u64 length that must fit in what is left of the buffer.
    pub(crate) fn len_u64(&mut self, what: &str) -> Result<usize> {
        let at = self.pos as u64;
        let len = u64::from_le_bytes(self.array(what)?);
        usize::try_from(len)
            .ok()
            .filter(|&l| l <= self.remaining())
            .ok_or_else(|| AdaptError::bundle(at, format!("{what} {len} exceeds the {} bytes left", self.remaining())))
    }
}
