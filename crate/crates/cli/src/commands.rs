//! Subcommand implementations. Each writes its artifacts and returns a short
//! human-readable summary.

use std::f64::consts::TAU;

use biphoton::engines::quantum_monte_carlo;
use biphoton::rng::{substream, Stream};
use biphoton::{
    acquire_scan, classical_monte_carlo, classical_rate, fit_peaks, fit_visibility, quantum_rate_narrow,
    quantum_rate_wide, Estimate, PeakFit, VisibilityReport,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::OutputDir;
use crate::CliError;

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    text.into_bytes()
}

#[derive(Debug, Serialize)]
struct HistogramSummary {
    config_hash: String,
    duration_s: f64,
    singles_a: u64,
    singles_b: u64,
    total: u64,
    /// Expected separation of adjacent peaks, `ΔL/c` (s).
    expected_separation_s: f64,
    peaks: Option<Vec<PeakFit>>,
    peak_fit_error: Option<String>,
}

pub fn histogram(cfg: &ExperimentConfig, out: &OutputDir) -> Result<String, CliError> {
    let pipeline = cfg.pipeline()?;
    pipeline.validate()?;
    let hist = pipeline.acquire(cfg.duration, cfg.seed)?;

    let mut csv = Vec::new();
    hist.write_csv(&mut csv, &out.config_hash).map_err(|e| CliError::Io(e.to_string()))?;
    let csv_path = out.write("histogram.csv", &csv)?;

    let d = cfg.geometry.path_delay();
    let delay = cfg.tac.electrical_delay;
    let jitter = cfg.detector_a.timing_jitter_sigma.hypot(cfg.detector_b.timing_jitter_sigma);
    let (peaks, peak_fit_error) = match fit_peaks(&hist, &[delay - d, delay, delay + d], jitter.max(hist.bin_width())) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = HistogramSummary {
        config_hash: out.config_hash.clone(),
        duration_s: hist.duration,
        singles_a: hist.singles_a,
        singles_b: hist.singles_b,
        total: hist.total(),
        expected_separation_s: d,
        peaks,
        peak_fit_error,
    };
    out.write("histogram.json", &json_bytes(&summary))?;

    let mut msg = format!("{} coincidences in {} s -> {}", hist.total(), hist.duration, csv_path.display());
    if let Some(p) = &summary.peaks {
        for (i, peak) in p.iter().enumerate() {
            msg.push_str(&format!(
                "\n  peak {i}: centroid {:.4} ns, area {:.0} ± {:.0}",
                peak.centroid * 1e9,
                peak.area,
                peak.area_sigma
            ));
        }
    }
    Ok(msg)
}

#[derive(Debug, Serialize)]
struct FringeReport<'a> {
    config_hash: &'a str,
    window_ns: f64,
    report: &'a VisibilityReport,
}

/// File stem for a window width in ns.
pub fn window_stem(window_ns: f64) -> String {
    format!("fringes_{window_ns}ns")
}

/// One corpus, gated once per window.
pub fn fringes(cfg: &ExperimentConfig, windows_ns: &[f64], out: &OutputDir) -> Result<Vec<VisibilityReport>, CliError> {
    if windows_ns.is_empty() || windows_ns.iter().any(|w| w.is_nan() || *w <= 0.0) {
        return Err(CliError::Config("need at least one positive window".into()));
    }
    let pipeline = cfg.pipeline()?;
    let (offsets, volts) = cfg.scan_points();
    let corpus = acquire_scan(&pipeline, &offsets, Some(&volts), cfg.scan.duration, cfg.seed)?;
    let period = cfg.scan.lock_period.then_some(cfg.pump_wavelength);
    let mut reports = Vec::with_capacity(windows_ns.len());
    for &w in windows_ns {
        let scan = corpus.gate(w * 1e-9)?;
        let mut csv = Vec::new();
        scan.write_csv(&mut csv, &out.config_hash).map_err(|e| CliError::Io(e.to_string()))?;
        let stem = window_stem(w);
        out.write(&format!("{stem}.csv"), &csv)?;
        let report = fit_visibility(&scan, period)?;
        let doc = FringeReport { config_hash: &out.config_hash, window_ns: w, report: &report };
        out.write(&format!("{stem}.json"), &json_bytes(&doc))?;
        reports.push(report);
    }
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub pump_phase: f64,
    pub offset_m: f64,
    pub quantum_narrow: f64,
    pub quantum_wide: f64,
    pub classical: f64,
    pub mc_quantum_wide: Estimate,
    pub mc_classical: Estimate,
}

#[derive(Debug, Serialize)]
pub struct CompareTable {
    pub config_hash: String,
    /// Rates in s⁻¹.
    pub rc0: f64,
    pub delta_l_m: f64,
    pub rows: Vec<CompareRow>,
}

fn scale(e: Estimate, factor: f64) -> Estimate {
    Estimate { mean: e.mean * factor, stderr: e.stderr * factor, samples: e.samples }
}

pub fn compare(cfg: &ExperimentConfig, out: &OutputDir) -> Result<CompareTable, CliError> {
    let profile = cfg.profile()?;
    let rates = cfg.rates.resolve();
    rates.validate()?;
    cfg.geometry.validate()?;
    let n = cfg.compare.phases;
    if n == 0 || cfg.compare.mc_samples < 2 {
        return Err(CliError::Config("compare needs at least one phase and two MC samples".into()));
    }
    let base = cfg.geometry;
    let rows = (0..n)
        .map(|j| {
            let phase = TAU * j as f64 / n as f64;
            let g = base.at_pump_phase(profile.k_pump(), phase);
            let mut rng = substream(cfg.seed, Stream::MonteCarlo, j as u64);
            Ok(CompareRow {
                pump_phase: phase,
                offset_m: g.path_long_offset,
                quantum_narrow: quantum_rate_narrow(&profile, &g, &rates)?,
                quantum_wide: quantum_rate_wide(&profile, &g, &rates)?,
                classical: classical_rate(&profile, &g, &rates)?,
                mc_quantum_wide: scale(quantum_monte_carlo(&profile, &g, cfg.compare.mc_samples, &mut rng)?, rates.rc0),
                mc_classical: scale(
                    classical_monte_carlo(&profile, &g, cfg.compare.mc_samples, &mut rng)?,
                    0.5 * rates.rc0,
                ),
            })
        })
        .collect::<Result<Vec<_>, biphoton::Error>>()?;
    let table = CompareTable { config_hash: out.config_hash.clone(), rc0: rates.rc0, delta_l_m: base.delta_l(), rows };
    out.write("compare.json", &json_bytes(&table))?;
    Ok(table)
}
