//! Resolving processor flags and `name=value` parameters.

use std::fs::File;
use std::io::BufReader;

use streamwrap::dsp::TcnWeights;
use streamwrap::{
    make_builtin, read_bundle, BuiltinKind, BuiltinProcessor, ParameterSpec, ParameterValue, RealtimeProcessor,
    SampleRate,
};

use crate::args::ProcessorArgs;
use crate::{CliError, CliResult};

/// Parses the built-in names understood by the core plus `tcn:<seed>`, a
/// small seeded three-block TCN.
pub fn parse_builtin(spec: &str, channels: usize) -> CliResult<BuiltinKind> {
    if let Some(seed) = spec.strip_prefix("tcn:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::Config(format!("bad TCN seed {seed:?}")))?;
        return Ok(BuiltinKind::TcnRunner(TcnWeights::seeded(channels, channels, 3, &[1, 2, 4], 4, 1, seed)));
    }
    Ok(BuiltinKind::parse(spec)?)
}

pub fn sample_rates(hz: &[u32]) -> CliResult<Vec<SampleRate>> {
    Ok(hz.iter().map(|&f| SampleRate::new(f)).collect::<Result<_, _>>()?)
}

fn restrict(mut p: BuiltinProcessor, sizes: &[usize], rates: &[u32]) -> CliResult<BuiltinProcessor> {
    if !sizes.is_empty() {
        p = p.with_buffer_sizes(sizes.to_vec())?;
    }
    if !rates.is_empty() {
        p = p.with_sample_rates(sample_rates(rates)?)?;
    }
    Ok(p)
}

pub fn build_builtin(spec: &str, channels: usize, sizes: &[usize], rates: &[u32]) -> CliResult<BuiltinProcessor> {
    let p = make_builtin(parse_builtin(spec, channels)?, channels)?;
    restrict(p, sizes, rates)
}

pub fn load_bundle_processor(path: &std::path::Path) -> CliResult<BuiltinProcessor> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let bundle = read_bundle(&mut BufReader::new(file))?;
    Ok(bundle.load_processor()?)
}

/// The processor named by `args`, with `channels` used for built-ins.
/// Without `--builtin` or `--bundle` this is the identity.
pub fn resolve(args: &ProcessorArgs, channels: usize) -> CliResult<BuiltinProcessor> {
    let p = match (&args.builtin, &args.bundle) {
        (_, Some(path)) => load_bundle_processor(path)?,
        (Some(spec), None) => make_builtin(parse_builtin(spec, channels)?, channels)?,
        (None, None) => make_builtin(BuiltinKind::Identity, channels)?,
    };
    restrict(p, &args.model_sizes, &args.model_rates)
}

/// Declaration-ordered values from `name=value` pairs; unnamed controls
/// keep their defaults.
pub fn parse_params(specs: &[ParameterSpec], pairs: &[String]) -> CliResult<Vec<ParameterValue>> {
    let mut values = streamwrap::types::default_parameter_values(specs);
    for pair in pairs {
        let (name, raw) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("parameter {pair:?} is not name=value")))?;
        let idx = specs
            .iter()
            .position(|s| s.name() == name)
            .ok_or_else(|| CliError::Config(format!("unknown parameter {name:?}")))?;
        let bad = || CliError::Config(format!("bad value {raw:?} for {name}"));
        values[idx] = match &specs[idx] {
            ParameterSpec::Continuous { .. } => ParameterValue::ContinuousScalar(raw.parse().map_err(|_| bad())?),
            ParameterSpec::Categorical { labels, .. } => ParameterValue::CategoricalIndex(
                labels
                    .iter()
                    .position(|l| l == raw)
                    .map_or_else(|| raw.parse().map_err(|_| bad()), Ok)?,
            ),
            ParameterSpec::Text { .. } => ParameterValue::TextValue(raw.to_owned()),
        };
        specs[idx].check_value(&values[idx], None)?;
    }
    Ok(values)
}

pub fn describe(p: &dyn RealtimeProcessor) -> String {
    let caps = p.capabilities();
    format!(
        "{} ({} in, {} out, delay {}, lookbehind {})",
        p.metadata().name,
        caps.in_channels,
        caps.out_channels,
        caps.delay_samples,
        caps.lookbehind_samples
    )
}
