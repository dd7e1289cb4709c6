//! WAV in and out: 16-bit PCM or 32-bit float read, 32-bit float written.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use streamwrap::{AudioBlock, MAX_CHANNELS};

use crate::{CliError, CliResult};

fn decode<R: Read>(reader: WavReader<R>) -> CliResult<(u32, AudioBlock)> {
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(CliError::Config(format!("unsupported WAV channel count {channels}")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(CliError::Config(format!("unsupported WAV sample format {fmt:?} {bits}-bit")));
        }
    };
    let frames = interleaved.len() / channels;
    let mut block = AudioBlock::new(channels, frames)?;
    for (i, frame) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in frame.iter().enumerate() {
            block.set(c, i, v);
        }
    }
    Ok((spec.sample_rate, block))
}

pub fn read_wav(path: &Path) -> CliResult<(u32, AudioBlock)> {
    let reader = WavReader::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode(reader)
}

pub fn read_wav_bytes(bytes: &[u8]) -> CliResult<(u32, AudioBlock)> {
    decode(WavReader::new(Cursor::new(bytes))?)
}

fn encode<W: Write + Seek>(sink: W, rate: u32, block: &AudioBlock) -> CliResult<()> {
    let spec = WavSpec {
        channels: block.channels() as u16,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::new(sink, spec)?;
    for i in 0..block.frames() {
        for c in 0..block.channels() {
            w.write_sample(block.get(c, i))?;
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn write_wav(path: &Path, rate: u32, block: &AudioBlock) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    encode(std::io::BufWriter::new(file), rate, block)
}

pub fn wav_bytes(rate: u32, block: &AudioBlock) -> CliResult<Vec<u8>> {
    let mut cur = Cursor::new(Vec::new());
    encode(&mut cur, rate, block)?;
    Ok(cur.into_inner())
}
