use streamwrap::{plan_stream, Native, ProcessorCapabilities, ResamplerKind, SampleRate};

use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayRow {
    pub f_daw: u32,
    pub f_model: u32,
    pub n_model: usize,
    pub n_daw: usize,
    pub d_buffering: usize,
    pub d_total_daw: usize,
}

pub const CSV_HEADER: &str = "host_rate,model_rate,model_size,host_size,buffering_delay,total_delay";

impl DelayRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.f_daw, self.f_model, self.n_model, self.n_daw, self.d_buffering, self.d_total_daw
        )
    }
}

/// Plans a one-size, one-rate processor for every combination, rate pairs
/// outermost.
pub fn delay_table(
    model_sizes: &[usize],
    host_sizes: &[usize],
    rates: &[(SampleRate, SampleRate)],
    resampler: ResamplerKind,
) -> CliResult<Vec<DelayRow>> {
    let mut rows = Vec::with_capacity(rates.len() * model_sizes.len() * host_sizes.len());
    for &(f_daw, f_model) in rates {
        for &n_model in model_sizes {
            let mut caps = ProcessorCapabilities::any(1, 1);
            caps.buffer_sizes = Native::Only(vec![n_model]);
            caps.sample_rates = Native::Only(vec![f_model]);
            for &n_daw in host_sizes {
                let cfg = plan_stream(&caps, f_daw, n_daw, 1, resampler)?;
                rows.push(DelayRow {
                    f_daw: f_daw.hz(),
                    f_model: f_model.hz(),
                    n_model,
                    n_daw,
                    d_buffering: cfg.d_buffering,
                    d_total_daw: cfg.d_total_daw,
                });
            }
        }
    }
    Ok(rows)
}
