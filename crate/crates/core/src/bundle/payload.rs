use crate::bundle::{Payload, Reader};
use crate::dsp::tcn::{TcnBlockWeights, TcnWeights};
use crate::error::{AdaptError, Result};
use crate::processor::BuiltinKind;

const IDENTITY: &str = "builtin/identity";
const GAIN: &str = "builtin/gain";
const CLIPPER: &str = "builtin/clipper";
const DELAYLINE: &str = "builtin/delayline";
const TCN: &str = "tcn/v1";

/// What a payload decodes to. Unregistered format ids stay opaque.
#[derive(Debug, Clone, PartialEq)]
pub enum PayloadKind {
    Builtin(BuiltinKind),
    Opaque,
}

pub fn encode_builtin(kind: &BuiltinKind) -> Payload {
    let (id, bytes) = match kind {
        BuiltinKind::Identity => (IDENTITY, Vec::new()),
        BuiltinKind::Gain => (GAIN, Vec::new()),
        BuiltinKind::Clipper => (CLIPPER, Vec::new()),
        BuiltinKind::DelayLine(d) => (DELAYLINE, (*d as u32).to_le_bytes().to_vec()),
        BuiltinKind::TcnRunner(w) => (TCN, encode_tcn(w)),
    };
    Payload {
        format_id: id.to_owned(),
        bytes,
    }
}

pub fn decode_payload(payload: &Payload) -> Result<PayloadKind> {
    let empty = |kind: BuiltinKind| {
        if payload.bytes.is_empty() {
            Ok(PayloadKind::Builtin(kind))
        } else {
            Err(AdaptError::bundle(0, format!("{} payload must be empty", payload.format_id)))
        }
    };
    match payload.format_id.as_str() {
        IDENTITY => empty(BuiltinKind::Identity),
        GAIN => empty(BuiltinKind::Gain),
        CLIPPER => empty(BuiltinKind::Clipper),
        DELAYLINE => {
            let mut r = Reader::new(&payload.bytes);
            let d = r.u32("delay length")?;
            if r.remaining() != 0 {
                return Err(AdaptError::bundle(r.pos as u64, "trailing bytes in delay-line payload"));
            }
            Ok(PayloadKind::Builtin(BuiltinKind::DelayLine(d as usize)))
        }
        TCN => Ok(PayloadKind::Builtin(BuiltinKind::TcnRunner(decode_tcn(&payload.bytes)?))),
        _ => Ok(PayloadKind::Opaque),
    }
}

/// Header `{in_ch, out_ch, n_blocks, condition_dim}` as u32, then per block
/// `{kernel, dilation, channels}` as u32 followed by weights in
/// `(out, in, tap)` order, bias, and the FiLM matrix, all f32.
pub fn encode_tcn(w: &TcnWeights) -> Vec<u8> {
    let mut out = Vec::new();
    let u32s = |out: &mut Vec<u8>, vals: &[usize]| {
        for &v in vals {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    };
    u32s(&mut out, &[w.in_channels, w.out_channels, w.blocks.len(), w.condition_dim]);
    for b in &w.blocks {
        u32s(&mut out, &[b.kernel, b.dilation, b.channels]);
        for v in b.weights.iter().chain(&b.bias).chain(&b.film) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tcn(bytes: &[u8]) -> Result<TcnWeights> {
    let mut r = Reader::new(bytes);
    let in_channels = r.u32("TCN input channels")? as usize;
    let out_channels = r.u32("TCN output channels")? as usize;
    let n_blocks = r.u32("TCN block count")? as usize;
    let condition_dim = r.u32("TCN condition size")? as usize;
    let floats = |r: &mut Reader<'_>, count: usize, what: &str| -> Result<Vec<f32>> {
        if count.saturating_mul(4) > r.remaining() {
            return Err(AdaptError::bundle(r.pos as u64, format!("truncated {what}")));
        }
        (0..count).map(|_| r.f32(what)).collect()
    };
    let mut blocks = Vec::with_capacity(n_blocks.min(r.remaining() / 12));
    let mut prev = in_channels;
    for _ in 0..n_blocks {
        let kernel = r.u32("kernel size")? as usize;
        let dilation = r.u32("dilation")? as usize;
        let channels = r.u32("block channels")? as usize;
        let n_weights = channels.saturating_mul(prev).saturating_mul(kernel);
        let weights = floats(&mut r, n_weights, "conv weights")?;
        let bias = floats(&mut r, channels, "conv bias")?;
        let film = floats(&mut r, channels.saturating_mul(2).saturating_mul(condition_dim + 1), "FiLM matrix")?;
        blocks.push(TcnBlockWeights {
            kernel,
            dilation,
            channels,
            weights,
            bias,
            film,
        });
        prev = channels;
    }
    if r.remaining() != 0 {
        return Err(AdaptError::bundle(r.pos as u64, "trailing bytes in TCN payload"));
    }
    let w = TcnWeights {
        in_channels,
        out_channels,
        condition_dim,
        blocks,
    };
    w.validate().map_err(|e| AdaptError::bundle(0, format!("TCN weights: {e}")))?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tcn_layout_is_bit_exact() {
        let w = TcnWeights::identity_init(1, 1, 2, &[1], 1, 0);
        let bytes = encode_tcn(&w);
        let mut want = Vec::new();
        for v in [1u32, 1, 1, 0, 2, 1, 1] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        // Two taps, one bias, FiLM γ row [1] and β row [0].
        for v in [0.0f32, 0.0, 0.0, 1.0, 0.0] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, want);
        assert_eq!(decode_tcn(&bytes).unwrap(), w);
    }

    #[test]
    fn tcn_truncations_rejected() {
        let bytes = encode_tcn(&TcnWeights::seeded(2, 1, 3, &[1, 2], 3, 1, 4));
        for cut in 0..bytes.len() {
            assert!(matches!(decode_tcn(&bytes[..cut]), Err(AdaptError::BundleFormat { .. })));
        }
    }

    #[test]
    fn builtin_round_trips() {
        for kind in [
            BuiltinKind::Identity,
            BuiltinKind::Gain,
            BuiltinKind::Clipper,
            BuiltinKind::DelayLine(480),
        ] {
            assert_eq!(decode_payload(&encode_builtin(&kind)).unwrap(), PayloadKind::Builtin(kind));
        }
    }

    #[test]
    fn huge_declared_sizes_do_not_allocate_blindly() {
        let mut bytes = Vec::new();
        for v in [1u32, 1, u32::MAX, 0, u32::MAX, 1, u32::MAX] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_tcn(&bytes), Err(AdaptError::BundleFormat { .. })));
    }
}
