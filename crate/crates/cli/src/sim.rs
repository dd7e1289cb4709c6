//! Host callback simulation with end-to-end verification.
//!
//! A change of host buffer size or rate is an explicit reconfiguration: the
//! wrapper is prepared again and the stream restarts, so each run of equal
//! settings is a segment verified on its own from its first frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamwrap::{AudioBlock, DelayReport, QueueStats, RealtimeProcessor, RealtimeWrapper, SampleRate};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    Fixed(usize),
    /// Sizes hold for 16 to 256 callbacks, then move by a random factor in
    /// `[1/2, 2]`, clamped to `[min, max]`.
    RandomWalk { min: usize, max: usize },
    /// Repeated cyclically.
    Script(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reconfigure {
    pub at_callback: usize,
    pub rate: SampleRate,
    /// New size for a `Fixed` schedule.
    pub size: Option<usize>,
}

impl std::str::FromStr for Reconfigure {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("reconfigure {s:?} is not CALLBACK:RATE[:SIZE]"));
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let at_callback = parts[0].parse().map_err(|_| bad())?;
        let rate = SampleRate::new(parts[1].parse().map_err(|_| bad())?)?;
        let size = parts.get(2).map(|v| v.parse()).transpose().map_err(|_| bad())?;
        Ok(Self {
            at_callback,
            rate,
            size,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub f_daw: SampleRate,
    pub channels: usize,
    pub schedule: Schedule,
    pub callbacks: usize,
    pub reconfigure: Vec<Reconfigure>,
    pub seed: u64,
    pub verify: bool,
}

impl Scenario {
    pub fn validate(&self) -> CliResult<()> {
        let sizes_ok = match &self.schedule {
            Schedule::Fixed(n) => *n >= 1,
            Schedule::RandomWalk { min, max } => *min >= 1 && min <= max,
            Schedule::Script(s) => !s.is_empty() && s.iter().all(|&n| n >= 1),
        };
        if !sizes_ok {
            return Err(CliError::Config("buffer sizes must be at least 1".into()));
        }
        for ev in &self.reconfigure {
            if ev.size == Some(0) {
                return Err(CliError::Config("buffer sizes must be at least 1".into()));
            }
            if ev.size.is_some() && !matches!(self.schedule, Schedule::Fixed(_)) {
                return Err(CliError::Config("a reconfigure size needs a fixed schedule".into()));
            }
        }
        Ok(())
    }

    /// Host buffer size for every callback, ignoring reconfigure events.
    pub fn sizes(&self) -> Vec<usize> {
        match &self.schedule {
            Schedule::Fixed(n) => vec![*n; self.callbacks],
            Schedule::Script(s) => s.iter().copied().cycle().take(self.callbacks).collect(),
            Schedule::RandomWalk { min, max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut n = rng.gen_range(*min..=*max);
                let mut out = Vec::with_capacity(self.callbacks);
                while out.len() < self.callbacks {
                    let hold = rng.gen_range(16..=256usize).min(self.callbacks - out.len());
                    out.extend(std::iter::repeat_n(n, hold));
                    let factor = 2f64.powf(rng.gen_range(-1.0..=1.0));
                    n = ((n as f64 * factor).round() as usize).clamp(*min, *max);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub first_callback: usize,
    pub callbacks: usize,
    pub f_daw: SampleRate,
    pub n_daw: usize,
    pub n_model: usize,
    pub f_model: SampleRate,
    pub delay: DelayReport,
    pub stats: QueueStats,
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub segments: Vec<SegmentReport>,
    pub total_frames: u64,
    pub underflows: u64,
    /// Largest fill over capacity seen on either queue, as `(fill, capacity)`.
    pub worst_input_fill: (usize, usize),
    pub worst_output_fill: (usize, usize),
    pub failure: Option<String>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Deterministic test value for `(segment, channel, frame)`: a multiple of
/// 2⁻¹² in `[-1, 1)`, so channel means of equal values stay exact.
pub fn probe_value(seed: u64, segment: usize, channel: usize, frame: u64) -> f32 {
    let mut z = seed
        ^ (segment as u64).wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (channel as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB)
        ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ((z % 8192) as f32 - 4096.0) / 4096.0
}

struct Segment {
    index: usize,
    first_callback: usize,
    callbacks: usize,
    f_daw: SampleRate,
    n_daw: usize,
    delay: DelayReport,
    frames: u64,
}

fn close<P: RealtimeProcessor>(
    seg: Segment,
    wrapper: &RealtimeWrapper<P>,
    verify: bool,
    report: &mut SimReport,
) -> Option<String> {
    let cfg = wrapper.config().expect("prepared").clone();
    let stats = wrapper.queue_stats().expect("prepared");
    report.underflows += stats.underflows;
    report.total_frames += seg.frames;
    if stats.input_max_fill * report.worst_input_fill.1 >= report.worst_input_fill.0 * stats.input_capacity {
        report.worst_input_fill = (stats.input_max_fill, stats.input_capacity);
    }
    if stats.output_max_fill * report.worst_output_fill.1 >= report.worst_output_fill.0 * stats.output_capacity {
        report.worst_output_fill = (stats.output_max_fill, stats.output_capacity);
    }
    report.segments.push(SegmentReport {
        first_callback: seg.first_callback,
        callbacks: seg.callbacks,
        f_daw: seg.f_daw,
        n_daw: seg.n_daw,
        n_model: cfg.n_model,
        f_model: cfg.f_model,
        delay: seg.delay,
        stats,
        frames: seg.frames,
    });
    if !verify {
        return None;
    }
    let at = format!("segment {} (callbacks from {})", seg.index, seg.first_callback);
    if stats.underflows > 0 {
        return Some(format!("{at}: {} output underflows", stats.underflows));
    }
    if stats.frames_in != seg.frames || stats.frames_out != seg.frames {
        return Some(format!(
            "{at}: {} frames sent, {} consumed, {} produced",
            seg.frames, stats.frames_in, stats.frames_out
        ));
    }
    if stats.input_max_fill > stats.input_capacity || stats.output_max_fill > stats.output_capacity {
        return Some(format!("{at}: queue fill above capacity"));
    }
    if !cfg.is_resampling() {
        // Every frame in is either queued or consumed by a model call, and
        // every frame out came from the pre-roll or a model call.
        let consumed = stats.model_calls * cfg.n_model as u64;
        let queued = stats.frames_in.checked_sub(consumed);
        if queued.is_none_or(|q| q >= cfg.n_model as u64) {
            return Some(format!("{at}: {consumed} frames reached the model from {}", stats.frames_in));
        }
        if cfg.output_preroll as u64 + consumed < stats.frames_out {
            return Some(format!("{at}: more frames out than the model produced"));
        }
    }
    None
}

/// Runs `scenario` against `wrapper`. Failures of the verification contract
/// are reported in [`SimReport::failure`]; errors are for unusable setups.
///
/// With `verify`, the processor must be a delayed identity: at equal host
/// and model rates every output frame is checked bit-exactly against the
/// input shifted by the reported delay.
pub fn simulate<P: RealtimeProcessor>(wrapper: &mut RealtimeWrapper<P>, scenario: &Scenario) -> CliResult<SimReport> {
    scenario.validate()?;
    let mut sizes = scenario.sizes();
    let mut events = scenario.reconfigure.clone();
    events.sort_by_key(|e| e.at_callback);
    let mut fixed_override = None;
    let mut f_daw = scenario.f_daw;
    let mut next_event = 0;
    for (k, size) in sizes.iter_mut().enumerate() {
        while next_event < events.len() && events[next_event].at_callback <= k {
            if let Some(n) = events[next_event].size {
                fixed_override = Some(n);
            }
            next_event += 1;
        }
        if let Some(n) = fixed_override {
            *size = n;
        }
    }
    let max_size = sizes.iter().copied().max().unwrap_or(1);
    let c = scenario.channels;
    let c_in = wrapper.processor().capabilities().in_channels;
    let mut input = AudioBlock::with_capacity(c, max_size)?;
    let mut output = AudioBlock::with_capacity(c, max_size)?;
    let mut report = SimReport {
        segments: Vec::new(),
        total_frames: 0,
        underflows: 0,
        worst_input_fill: (0, 1),
        worst_output_fill: (0, 1),
        failure: None,
    };
    let mut seg: Option<Segment> = None;
    let mut next_event = 0;
    let mut check_alignment = false;
    for (k, &n) in sizes.iter().enumerate() {
        let mut rate_event = false;
        while next_event < events.len() && events[next_event].at_callback <= k {
            f_daw = events[next_event].rate;
            rate_event = true;
            next_event += 1;
        }
        let restart = match &seg {
            None => true,
            Some(s) => rate_event || s.n_daw != n || s.f_daw != f_daw,
        };
        if restart {
            if let Some(done) = seg.take() {
                if let Some(f) = close(done, wrapper, scenario.verify, &mut report) {
                    report.failure = Some(f);
                    return Ok(report);
                }
            }
            let delay = wrapper.prepare(f_daw, n, c)?;
            check_alignment = scenario.verify && !wrapper.config().expect("prepared").is_resampling();
            seg = Some(Segment {
                index: report.segments.len(),
                first_callback: k,
                callbacks: 0,
                f_daw,
                n_daw: n,
                delay,
                frames: 0,
            });
        }
        let s = seg.as_mut().expect("segment open");
        let t0 = s.frames;
        input.resize_frames(n);
        output.resize_frames(n);
        for ch in 0..c {
            for (i, v) in input.channel_mut(ch).iter_mut().enumerate() {
                *v = probe_value(scenario.seed, s.index, ch % c_in, t0 + i as u64);
            }
        }
        if let Err(e) = wrapper.process_buffer(&input, &[], &mut output) {
            report.failure = Some(format!("callback {k}: {e}"));
            return Ok(report);
        }
        if check_alignment {
            let d = s.delay.total_daw_samples as u64;
            for ch in 0..c {
                for (i, &got) in output.channel(ch).iter().enumerate() {
                    let t = t0 + i as u64;
                    let want = if t >= d { probe_value(scenario.seed, s.index, ch % c_in, t - d) } else { 0.0 };
                    if got != want {
                        report.failure = Some(format!(
                            "segment {} callback {k} channel {ch}: sample {t} (global {}) is {got}, expected {want}",
                            s.index,
                            report.total_frames + t
                        ));
                        return Ok(report);
                    }
                }
            }
        }
        s.frames += n as u64;
        s.callbacks += 1;
    }
    if let Some(done) = seg.take() {
        report.failure = close(done, wrapper, scenario.verify, &mut report);
    }
    Ok(report)
}
