use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use streamwrap::{
    audit_allocations, bench_latency, bench_rtf, read_bundle, resample_offline, write_bundle, AudioBlock, Bundle,
    BundleExample, BuiltinKind, BuiltinProcessor, DelayReport, ModelMetadata, RealtimeProcessor, RealtimeWrapper,
    ResamplerKind, SampleRate, StreamConfig,
};

use crate::args::{
    BenchArgs, Cli, Command, DelayTableArgs, ExportArgs, InspectArgs, RenderArgs, SimulateArgs, TableFormat,
};
use crate::procs::{build_builtin, describe, parse_params, resolve};
use crate::sim::{simulate, Reconfigure, Scenario, Schedule};
use crate::table::{delay_table, CSV_HEADER};
use crate::wav::{read_wav, read_wav_bytes, wav_bytes, write_wav};
use crate::{CliError, CliResult};

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let name = match &cli.command {
        Command::Render(_) => "render",
        Command::Simulate(_) => "simulate",
        Command::DelayTable(_) => "delay-table",
        Command::Bench(_) => "bench",
        Command::Inspect(_) => "inspect",
        Command::Export(_) => "export",
    };
    writeln!(out, "# streamwrap {name} seed={}", cli.seed)?;
    match &cli.command {
        Command::Render(a) => cmd_render(a, out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, out),
        Command::DelayTable(a) => cmd_delay_table(a, out),
        Command::Bench(a) => cmd_bench(a, cli.seed, out),
        Command::Inspect(a) => cmd_inspect(a, out),
        Command::Export(a) => cmd_export(a, cli.seed, out),
    }
}

fn rate(hz: u32) -> CliResult<SampleRate> {
    Ok(SampleRate::new(hz)?)
}

fn print_plan(out: &mut dyn Write, report: &DelayReport, cfg: &StreamConfig) -> CliResult<()> {
    let c = &report.components;
    writeln!(
        out,
        "delay: total={} buffering={} preroll={} resample_in={} resample_out={} model={}",
        report.total_daw_samples, c.buffering, c.output_preroll, c.resample_in, c.resample_out, c.model
    )?;
    writeln!(
        out,
        "config: host={}Hz/{} model={}Hz/{} span={} channels={}->{}/{} resampler={:?} queues={}/{}",
        cfg.f_daw.hz(),
        cfg.n_daw,
        cfg.f_model.hz(),
        cfg.n_model,
        cfg.block_span,
        cfg.c_daw,
        cfg.c_in,
        cfg.c_out,
        cfg.resampler,
        cfg.input_queue_capacity,
        cfg.output_queue_capacity
    )?;
    Ok(())
}

fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> CliResult<()> {
    let (file_rate, input) = read_wav(&a.input)?;
    let host = rate(a.rate.unwrap_or(file_rate))?;
    let input = if host.hz() == file_rate {
        input
    } else {
        let from = rate(file_rate)?;
        let chans: Vec<Vec<f32>> = input
            .to_channels()
            .iter()
            .map(|c| resample_offline(c, from, host, ResamplerKind::Hermite))
            .collect();
        AudioBlock::from_channels(&chans)?
    };
    if a.buffer == 0 {
        return Err(CliError::Config("--buffer must be at least 1".into()));
    }
    let p = resolve(&a.processor, input.channels().min(2))?;
    let params = parse_params(p.parameter_specs(), &a.params)?;
    writeln!(out, "processor: {}", describe(&p))?;
    let mut w = RealtimeWrapper::new(p).with_resampler(a.processor.resampler.into());
    let report = w.prepare(host, a.buffer, input.channels())?;
    print_plan(out, &report, w.config().expect("prepared"))?;
    let rendered = w.process_offline(&input, &params)?;
    write_wav(&a.output, host.hz(), &rendered)?;
    writeln!(out, "wrote {} frames to {}", rendered.frames(), a.output.display())?;
    Ok(())
}

fn scenario_from(a: &SimulateArgs, seed: u64) -> CliResult<Scenario> {
    let schedule = match (&a.buffer, &a.random_walk, &a.script) {
        (_, Some(spec), _) => {
            let (lo, hi) = spec
                .split_once(':')
                .and_then(|(l, h)| Some((l.parse().ok()?, h.parse().ok()?)))
                .ok_or_else(|| CliError::Config(format!("--random-walk {spec:?} is not MIN:MAX")))?;
            Schedule::RandomWalk { min: lo, max: hi }
        }
        (_, _, Some(sizes)) => Schedule::Script(sizes.clone()),
        (n, _, _) => Schedule::Fixed(n.unwrap_or(512)),
    };
    Ok(Scenario {
        f_daw: rate(a.rate)?,
        channels: a.channels,
        schedule,
        callbacks: a.callbacks,
        reconfigure: a.reconfigure.iter().map(|s| s.parse()).collect::<CliResult<Vec<Reconfigure>>>()?,
        seed,
        verify: a.verify,
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let scenario = scenario_from(a, seed)?;
    let p = resolve(&a.processor, a.channels.min(2))?;
    if a.verify && !matches!(p.kind(), BuiltinKind::Identity | BuiltinKind::DelayLine(_)) {
        return Err(CliError::Config("--verify needs an identity or delayline processor".into()));
    }
    writeln!(out, "processor: {}", describe(&p))?;
    let mut w = RealtimeWrapper::new(p).with_resampler(a.processor.resampler.into());
    let report = simulate(&mut w, &scenario)?;
    writeln!(out, "segment,first_callback,callbacks,host_rate,host_size,model_rate,model_size,delay,underflows")?;
    for (i, s) in report.segments.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            s.first_callback,
            s.callbacks,
            s.f_daw.hz(),
            s.n_daw,
            s.f_model.hz(),
            s.n_model,
            s.delay.total_daw_samples,
            s.stats.underflows
        )?;
    }
    writeln!(out, "frames: {}", report.total_frames)?;
    writeln!(out, "underflows: {}", report.underflows)?;
    writeln!(out, "max input queue fill: {}/{}", report.worst_input_fill.0, report.worst_input_fill.1)?;
    writeln!(out, "max output queue fill: {}/{}", report.worst_output_fill.0, report.worst_output_fill.1)?;
    match (&report.failure, a.verify) {
        (None, true) => writeln!(out, "verify: pass")?,
        (None, false) => {}
        (Some(f), _) => {
            writeln!(out, "verify: fail")?;
            return Err(CliError::Verify(f.clone()));
        }
    }
    Ok(())
}

fn parse_rate_pair(s: &str) -> CliResult<(SampleRate, SampleRate)> {
    let (h, m) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("rate pair {s:?} is not HOST:MODEL")))?;
    let hz = |v: &str| v.parse::<u32>().map_err(|_| CliError::Config(format!("bad rate {v:?}")));
    Ok((rate(hz(h)?)?, rate(hz(m)?)?))
}

fn cmd_delay_table(a: &DelayTableArgs, out: &mut dyn Write) -> CliResult<()> {
    let rates = a.rates.iter().map(|s| parse_rate_pair(s)).collect::<CliResult<Vec<_>>>()?;
    let rows = delay_table(&a.model_sizes, &a.host_sizes, &rates, a.resampler.into())?;
    match a.format {
        TableFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in &rows {
                writeln!(out, "{}", r.csv())?;
            }
        }
        TableFormat::Text => {
            for &(f_daw, f_model) in &rates {
                writeln!(out, "{} Hz host, {} Hz model: total delay (rows model size, columns host size)", f_daw.hz(), f_model.hz())?;
                write!(out, "{:>8}", "")?;
                for n in &a.host_sizes {
                    write!(out, "{n:>8}")?;
                }
                writeln!(out)?;
                for &n_model in &a.model_sizes {
                    write!(out, "{n_model:>8}")?;
                    for r in rows
                        .iter()
                        .filter(|r| r.f_daw == f_daw.hz() && r.f_model == f_model.hz() && r.n_model == n_model)
                    {
                        write!(out, "{:>8}", r.d_total_daw)?;
                    }
                    writeln!(out)?;
                }
            }
        }
    }
    Ok(())
}

fn bench_set(a: &BenchArgs, seed: u64) -> CliResult<Vec<(String, BuiltinProcessor)>> {
    if a.processor.builtin.is_some() || a.processor.bundle.is_some() {
        let p = resolve(&a.processor, a.channels.min(2))?;
        let label = a.processor.builtin.clone().unwrap_or_else(|| p.metadata().name.clone());
        return Ok(vec![(label, p)]);
    }
    let ch = a.channels.min(2);
    ["identity", "gain", "clipper", "delayline:64", &format!("tcn:{seed}")]
        .iter()
        .map(|spec| {
            Ok((
                spec.to_string(),
                build_builtin(spec, ch, &a.processor.model_sizes, &a.processor.model_rates)?,
            ))
        })
        .collect()
}

fn cmd_bench(a: &BenchArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let kernel: ResamplerKind = a.processor.resampler.into();
    let mut failures = Vec::new();
    if a.rtf {
        writeln!(out, "processor,rate,buffer,rtf_median,rtf_mean,mean_buffer_s,worst_buffer_s")?;
    } else if a.latency {
        writeln!(out, "processor,rate,buffer,reported,measured")?;
    } else {
        writeln!(out, "processor,rate,buffer,calls,allocations")?;
    }
    for (label, p) in bench_set(a, seed)? {
        let mut w = RealtimeWrapper::new(p).with_resampler(kernel);
        for &hz in &a.rates {
            let f = rate(hz)?;
            for &n in &a.buffers {
                if a.rtf {
                    let r = bench_rtf(&mut w, f, n, a.channels, a.duration)?;
                    writeln!(
                        out,
                        "{label},{hz},{n},{:.2},{:.2},{:.3e},{:.3e}",
                        r.rtf, r.rtf_mean, r.mean_buffer_seconds, r.worst_buffer_seconds
                    )?;
                } else if a.latency {
                    let r = bench_latency(&mut w, f, n, a.channels)?;
                    let measured = r.measured.map_or("none".to_owned(), |m| m.to_string());
                    writeln!(out, "{label},{hz},{n},{},{measured}", r.reported)?;
                    if r.measured.is_none_or(|m| m.abs_diff(r.reported) > 1) {
                        failures.push(format!("{label} @ {hz}/{n}: reported {} measured {measured}", r.reported));
                    }
                } else {
                    let count = audit_allocations(&mut w, f, n, a.channels, a.calls)?;
                    writeln!(out, "{label},{hz},{n},{},{count}", a.calls)?;
                    if count > 0 {
                        failures.push(format!("{label} @ {hz}/{n}: {count} allocations"));
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failures.join("; ")))
    }
}

fn read_bundle_file(path: &std::path::Path) -> CliResult<Bundle> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(read_bundle(&mut BufReader::new(file))?)
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> CliResult<()> {
    let b = read_bundle_file(&a.bundle)?;
    let meta: serde_json::Value =
        serde_json::from_slice(&b.metadata.to_canonical_json()).expect("canonical metadata is JSON");
    writeln!(out, "metadata:")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&meta).expect("JSON value serializes"))?;
    writeln!(out, "examples: {}", b.examples.len())?;
    for ex in &b.examples {
        let shape = |bytes: &[u8]| match read_wav_bytes(bytes) {
            Ok((hz, block)) => format!("{} ch, {} frames @ {hz} Hz", block.channels(), block.frames()),
            Err(_) => format!("{} bytes, unreadable", bytes.len()),
        };
        writeln!(out, "  {}: in {}; out {}", ex.name, shape(&ex.input_wav), shape(&ex.output_wav))?;
    }
    let runnable = match b.load_processor() {
        Ok(_) => "built-in".to_owned(),
        Err(e) => format!("not runnable here ({e})"),
    };
    writeln!(out, "payload: {} ({} bytes, {runnable})", b.payload.format_id, b.payload.bytes.len())?;
    Ok(())
}

fn cmd_export(a: &ExportArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let mut p = build_builtin(&a.builtin, a.channels, &a.model_sizes, &a.model_rates)?;
    if let Some(name) = &a.name {
        p = p.with_metadata(ModelMetadata::named(name));
    }
    let (ex_name, hz, input) = match &a.example {
        Some(path) => {
            let (hz, block) = read_wav(path)?;
            let name = path.file_stem().map_or("example".into(), |s| s.to_string_lossy().into_owned());
            (name, hz, block)
        }
        None => {
            let hz = a.model_rates.first().copied().unwrap_or(48000);
            let tone: Vec<f32> = (0..hz as usize / 2)
                .map(|n| 0.5 * (2.0 * std::f32::consts::PI * 441.0 * n as f32 / hz as f32).sin())
                .collect();
            ("sine".to_owned(), hz, AudioBlock::from_channels(&vec![tone; a.channels])?)
        }
    };
    let mut bundle = Bundle::describe(&p);
    let mut w = RealtimeWrapper::new(p);
    w.prepare(rate(hz)?, 512, input.channels())?;
    let rendered = w.process_offline(&input, &[])?;
    bundle.examples.push(BundleExample {
        name: ex_name,
        input_wav: wav_bytes(hz, &input)?,
        output_wav: wav_bytes(hz, &rendered)?,
    });
    let file = File::create(&a.output).map_err(|e| CliError::Io(format!("{}: {e}", a.output.display())))?;
    let mut sink = BufWriter::new(file);
    let written = write_bundle(&bundle, &mut sink)?;
    sink.flush()?;
    writeln!(out, "wrote {written} bytes to {} (seed {seed})", a.output.display())?;
    Ok(())
}
