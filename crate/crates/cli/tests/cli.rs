use std::path::Path;
use std::process::{Command, Output};

use streamwrap::{read_bundle, AudioBlock};
use streamwrap_cli::wav::{read_wav, write_wav};

fn streamwrap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamwrap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn noise(channels: usize, frames: usize) -> AudioBlock {
    let chans: Vec<Vec<f32>> = (0..channels)
        .map(|c| (0..frames).map(|n| ((n * 7919 + c * 104729) % 2001) as f32 / 1000.0 - 1.0).collect())
        .collect();
    AudioBlock::from_channels(&chans).unwrap()
}

fn render(dir: &Path, input: &AudioBlock, extra: &[&str]) -> (Output, AudioBlock) {
    let (src, dst) = (dir.join("in.wav"), dir.join("out.wav"));
    write_wav(&src, 48000, input).unwrap();
    let mut args = vec!["render", "--in", src.to_str().unwrap(), "--out", dst.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = streamwrap(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (rate, out) = read_wav(&dst).unwrap();
    assert_eq!(rate, 48000);
    (o, out)
}

#[test]
fn render_identity_is_sample_identical() {
    let dir = tempfile::tempdir().unwrap();
    let x = noise(2, 5000);
    let (o, y) = render(dir.path(), &x, &["--builtin", "identity", "--buffer", "333"]);
    assert_eq!(y, x);
    assert!(stdout(&o).contains("delay: total=0"));
}

#[test]
fn render_delayline_is_compensated() {
    let dir = tempfile::tempdir().unwrap();
    let x = noise(1, 4000);
    let (o, y) = render(dir.path(), &x, &["--builtin", "delayline:64", "--model-sizes", "256"]);
    assert_eq!(y, x);
    let text = stdout(&o);
    assert!(text.contains("model=64"), "{text}");
}

#[test]
fn render_gain_halves_rms() {
    let dir = tempfile::tempdir().unwrap();
    let x = noise(2, 6000);
    let (_, y) = render(dir.path(), &x, &["--builtin", "gain", "--param", "gain=0.5"]);
    let rms = |b: &AudioBlock| (b.samples().iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / b.samples().len() as f64).sqrt();
    assert!((rms(&y) / rms(&x) - 0.5).abs() < 1e-6);
}

#[test]
fn render_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = dir.path().join("o.wav");
    let o = streamwrap(&["render", "--in", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(!o.stderr.is_empty());

    let src = dir.path().join("in.wav");
    write_wav(&src, 48000, &noise(1, 100)).unwrap();
    let o = streamwrap(&["render", "--in", src.to_str().unwrap(), "--out", out.to_str().unwrap(), "--builtin", "reverb"]);
    assert_eq!(code(&o), 2);
    let o = streamwrap(&["render", "--in", src.to_str().unwrap(), "--out", out.to_str().unwrap(), "--builtin", "gain", "--param", "gain=3"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&streamwrap(&["render", "--bogus"])), 2);
}

#[test]
fn simulate_scenarios_pass() {
    let o = streamwrap(&["simulate", "--buffer", "512", "--model-sizes", "2048", "--callbacks", "500", "--verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# streamwrap simulate seed=0"));
    assert!(text.contains("verify: pass"));
    assert!(text.contains("0,0,500,48000,512,48000,2048,1536,0"), "{text}");

    let o = streamwrap(&[
        "simulate", "--random-walk", "32:4096", "--seed", "7", "--model-sizes", "2048", "--callbacks", "3000", "--verify",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("# streamwrap simulate seed=7"));

    let o = streamwrap(&[
        "simulate", "--buffer", "512", "--model-sizes", "2048", "--model-rates", "48000", "--callbacks", "400",
        "--reconfigure", "200:44100", "--verify",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains(",1536,0") && text.contains(",1885,0"), "{text}");
}

#[test]
fn simulate_verify_needs_a_delayed_identity() {
    let o = streamwrap(&["simulate", "--builtin", "gain", "--verify", "--callbacks", "5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn delay_table_csv() {
    let o = streamwrap(&[
        "delay-table", "--model-sizes", "512,2048", "--host-sizes", "512", "--rates", "48000:48000,44100:48000", "--format", "csv",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(
        rows,
        [
            "48000,48000,512,512,0,0",
            "48000,48000,2048,512,1536,1536",
            "44100,48000,512,512,511,474",
            "44100,48000,2048,512,2047,1885",
        ]
    );
}

#[test]
fn bench_latency_and_alloc() {
    let o = streamwrap(&["bench", "--latency", "--builtin", "identity"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("identity,48000,512,0,0"));

    let o = streamwrap(&["bench", "--alloc", "--calls", "300", "--buffers", "64,513", "--channels", "2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.ends_with(",300,0")), "{rows:?}");

    assert_eq!(code(&streamwrap(&["bench"])), 2);
}

#[test]
fn bench_rtf_prints_a_row() {
    let o = streamwrap(&["bench", "--rtf", "--builtin", "identity", "--duration", "0.2"]);
    assert_eq!(code(&o), 0);
    let row = stdout(&o).lines().nth(2).unwrap().to_owned();
    let rtf: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(rtf > 10.0, "{row}");
}

#[test]
fn export_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nab");
    let p = path.to_str().unwrap();
    let o = streamwrap(&["export", "--builtin", "delayline:32", "--channels", "2", "--model-sizes", "256", "--name", "slapback", "--out", p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let b = read_bundle(&mut std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(b.metadata.model.name, "slapback");
    assert_eq!(b.payload.format_id, "builtin/delayline");
    assert_eq!(b.examples.len(), 1);

    let o = streamwrap(&["inspect", "--bundle", p]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("\"name\": \"slapback\""), "{text}");
    assert!(text.contains("sine: in 2 ch, 24000 frames @ 48000 Hz"), "{text}");
    assert!(text.contains("payload: builtin/delayline (4 bytes, built-in)"), "{text}");

    // The exported bundle runs as a processor.
    let src = dir.path().join("in.wav");
    let dst = dir.path().join("out.wav");
    let x = noise(2, 3000);
    write_wav(&src, 48000, &x).unwrap();
    let o = streamwrap(&["render", "--bundle", p, "--in", src.to_str().unwrap(), "--out", dst.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_wav(&dst).unwrap().1, x);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&streamwrap(&["inspect", "--bundle", p])), 2);
    let missing = dir.path().join("none.nab");
    assert_eq!(code(&streamwrap(&["inspect", "--bundle", missing.to_str().unwrap()])), 3);
}

#[test]
fn export_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        assert_eq!(code(&streamwrap(&["export", "--builtin", "tcn:5", "--out", path.to_str().unwrap()])), 0);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.nab"), run("b.nab"));
}
