//! Fringe scans, visibility fitting and the classical-bound verdict.

use std::f64::consts::TAU;
use std::io::{self, Write};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{acquire_stream, gate_count, DetectorModel, TacConfig, TacHistogram};
use crate::engines::{generate_events_chunked, SourceRates};
use crate::error::{ensure_domain, Error, Result};
use crate::interferometer::InterferometerGeometry;
use crate::rng::{substream, Stream};
use crate::spectral::SpectralProfile;

/// Visibility above which no classical field model can reach.
pub const CLASSICAL_BOUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Window wider than the path delay: all three classes are summed.
    Classical,
    /// Window narrower than the path delay: only the central class remains.
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConsistentWithClassical,
    Nonclassical,
}

/// Compares the coincidence window with `ΔL/c`.
pub fn classify_regime(window_width: f64, geometry: &InterferometerGeometry) -> Result<Regime> {
    ensure_domain(geometry.delta_l() > 0.0, || "ΔL must be positive".into())?;
    classify_window(window_width, geometry.path_delay())
}

fn classify_window(window_width: f64, path_delay: f64) -> Result<Regime> {
    if window_width > path_delay {
        Ok(Regime::Classical)
    } else if window_width < path_delay {
        Ok(Regime::Quantum)
    } else {
        Err(Error::RegimeBoundary { window_s: window_width })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PztInterpretation {
    /// The calibration is already the change in optical path difference.
    #[default]
    PathDifference,
    /// The calibration is mirror travel; the Michelson doubles it.
    MirrorDisplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PztCalibration {
    pub nm_per_volt: f64,
    pub nm_per_volt_sigma: f64,
    pub interpretation: PztInterpretation,
}

impl Default for PztCalibration {
    fn default() -> Self {
        Self { nm_per_volt: 46.0, nm_per_volt_sigma: 8.0, interpretation: PztInterpretation::PathDifference }
    }
}

impl PztCalibration {
    pub fn validate(&self) -> Result<()> {
        ensure_domain(self.nm_per_volt > 0.0 && self.nm_per_volt_sigma >= 0.0, || {
            format!("invalid PZT calibration: {self:?}")
        })
    }

    /// Path-difference change per volt (m/V).
    pub fn metres_per_volt(&self) -> f64 {
        let factor = match self.interpretation {
            PztInterpretation::PathDifference => 1.0,
            PztInterpretation::MirrorDisplacement => 2.0,
        };
        factor * self.nm_per_volt * 1e-9
    }
}

/// Path-difference offset produced by a PZT voltage.
pub fn volts_to_offset(volts: f64, cal: &PztCalibration) -> f64 {
    volts * cal.metres_per_volt()
}

pub fn offset_to_volts(offset: f64, cal: &PztCalibration) -> f64 {
    offset / cal.metres_per_volt()
}

/// One fringe-scan setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Path-difference offset (m).
    pub offset: f64,
    pub volts: Option<f64>,
    /// Singles rates (s⁻¹).
    pub singles_a: f64,
    pub singles_b: f64,
    pub coincidences: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub points: Vec<ScanPoint>,
    /// Coincidence window the counts were gated with (s).
    pub window_width: f64,
    /// Nominal path difference ΔL of the scan (m).
    pub delta_l: f64,
}

impl FringeScan {
    pub fn validate(&self) -> Result<()> {
        let increasing = self.points.windows(2).all(|w| w[1].offset > w[0].offset);
        let decreasing = self.points.windows(2).all(|w| w[1].offset < w[0].offset);
        if !(increasing || decreasing) {
            return Err(Error::Precondition("scan offsets must be strictly monotonic".into()));
        }
        ensure_domain(self.points.iter().all(|p| p.duration >= 0.0 && p.singles_a >= 0.0 && p.singles_b >= 0.0), || {
            "scan durations and rates must be non-negative".into()
        })
    }

    /// Writes a `# key=value` header and `offset_m,volts,singles_a,singles_b,coincidences,duration_s`.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: &str) -> io::Result<()> {
        writeln!(w, "# window_s={:e},delta_l_m={},config_hash={}", self.window_width, self.delta_l, config_hash)?;
        writeln!(w, "offset_m,volts,singles_a,singles_b,coincidences,duration_s")?;
        for p in &self.points {
            let volts = p.volts.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{:e},{},{},{},{},{}", p.offset, volts, p.singles_a, p.singles_b, p.coincidences, p.duration)?;
        }
        Ok(())
    }
}

/// Result of a sinusoidal fit `baseline·(1 − V cos(2π·offset/period + φ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    /// Fitted visibility, clipped to `[0, 1]`.
    pub visibility: f64,
    /// Fitted visibility before clipping.
    pub visibility_unclipped: f64,
    pub visibility_sigma: f64,
    pub period: f64,
    /// Zero when the period was held fixed.
    pub period_sigma: f64,
    pub period_locked: bool,
    pub phase: f64,
    /// Mean coincidence rate (s⁻¹).
    pub baseline: f64,
    pub baseline_sigma: f64,
    pub regime: Regime,
    pub verdict: Verdict,
    pub reduced_chi2: f64,
    pub points: usize,
}

impl VisibilityReport {
    /// Whether `[V − nσ, V + nσ]` intersects `[lo, hi]`.
    pub fn consistent_with(&self, lo: f64, hi: f64, n_sigma: f64) -> bool {
        let v = self.visibility_unclipped;
        let s = n_sigma * self.visibility_sigma;
        v + s >= lo && v - s <= hi
    }
}

pub fn verdict_for(visibility: f64, sigma: f64) -> Verdict {
    if visibility - 2.0 * sigma > CLASSICAL_BOUND {
        Verdict::Nonclassical
    } else {
        Verdict::ConsistentWithClassical
    }
}

struct Observation {
    x: f64,
    counts: f64,
    duration: f64,
}

struct LinearFit {
    params: Vector3<f64>,
    covariance: Matrix3<f64>,
    chi2: f64,
}

fn basis(x: f64, freq: f64) -> Vector3<f64> {
    let (s, c) = (TAU * freq * x).sin_cos();
    Vector3::new(1.0, c, s)
}

/// One weighted solve of counts against `duration·(a₀ + a₁cos θ + a₂sin θ)`.
fn weighted_solve(obs: &[Observation], freq: f64, variances: &[f64]) -> Option<LinearFit> {
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (o, var) in obs.iter().zip(variances) {
        let row = basis(o.x, freq) * o.duration;
        normal += row * row.transpose() / *var;
        rhs += row * (o.counts / var);
    }
    let covariance = normal.try_inverse()?;
    let params = covariance * rhs;
    let chi2 = obs
        .iter()
        .zip(variances)
        .map(|(o, v)| (o.counts - o.duration * basis(o.x, freq).dot(&params)).powi(2) / v)
        .sum();
    Some(LinearFit { params, covariance, chi2 })
}

/// Iteratively reweighted least squares with Poisson variances taken from
/// the current model.
fn fit_linear(obs: &[Observation], freq: f64, iterations: usize, start_from_data: bool) -> Option<LinearFit> {
    let mut variances: Vec<f64> = obs.iter().map(|o| if start_from_data { o.counts.max(1.0) } else { 1.0 }).collect();
    let mut prev: Option<Vector3<f64>> = None;
    for _ in 0..iterations {
        let fit = weighted_solve(obs, freq, &variances)?;
        if prev.is_some_and(|p| (p - fit.params).norm() <= 1e-10 * (1.0 + fit.params.norm())) {
            return Some(fit);
        }
        prev = Some(fit.params);
        variances = obs.iter().map(|o| (o.duration * basis(o.x, freq).dot(&fit.params)).max(1.0)).collect();
    }
    None
}

fn profile_chi2(obs: &[Observation], freq: f64) -> f64 {
    let variances: Vec<f64> = obs.iter().map(|o| o.counts.max(1.0)).collect();
    weighted_solve(obs, freq, &variances).map_or(f64::INFINITY, |f| f.chi2)
}

/// Weighted least-squares fringe fit with Poisson weights.
///
/// With `known_period` the model is linear in `(a₀, a₁, a₂)` and solved by
/// reweighting; otherwise the period is located on a frequency grid, refined
/// by golden-section search and its uncertainty taken from the full
/// four-parameter covariance.
pub fn fit_visibility(scan: &FringeScan, known_period: Option<f64>) -> Result<VisibilityReport> {
    scan.validate()?;
    let regime = classify_window(scan.window_width, scan.delta_l / crate::numeric::SPEED_OF_LIGHT)?;
    let raw: Vec<&ScanPoint> = scan.points.iter().filter(|p| p.duration > 0.0).collect();
    let needed = if known_period.is_some() { 4 } else { 5 };
    let fail = |message: String, reduced_chi2: f64| Error::Fit { message, reduced_chi2, points: raw.len() };
    if raw.len() < needed {
        return Err(fail(format!("need at least {needed} points with positive duration"), f64::NAN));
    }
    let centre = raw.iter().map(|p| p.offset).sum::<f64>() / raw.len() as f64;
    let obs: Vec<Observation> = raw
        .iter()
        .map(|p| Observation { x: p.offset - centre, counts: p.coincidences as f64, duration: p.duration })
        .collect();

    let freq = match known_period {
        Some(period) => {
            ensure_domain(period > 0.0 && period.is_finite(), || format!("invalid period {period}"))?;
            1.0 / period
        }
        None => locate_frequency(&obs).ok_or_else(|| fail("no frequency minimises chi-square".into(), f64::NAN))?,
    };

    // Bounded restarts: data-weighted start, then uniform weights.
    let fit = [true, false]
        .iter()
        .find_map(|&from_data| fit_linear(&obs, freq, 100, from_data))
        .ok_or_else(|| fail("reweighted least squares did not converge".into(), f64::NAN))?;

    let [a0, a1, a2] = [fit.params[0], fit.params[1], fit.params[2]];
    let dof = obs.len() as f64 - if known_period.is_some() { 3.0 } else { 4.0 };
    let reduced_chi2 = fit.chi2 / dof.max(1.0);
    if a0 <= 0.0 || !a0.is_finite() {
        return Err(fail(format!("non-positive baseline {a0}"), reduced_chi2));
    }

    let covariance = if known_period.is_some() {
        fit.covariance
    } else {
        full_covariance(&obs, freq, &fit.params)
            .ok_or_else(|| fail("singular covariance with free period".into(), reduced_chi2))?
            .0
    };
    let period_sigma = match known_period {
        Some(_) => 0.0,
        None => full_covariance(&obs, freq, &fit.params).map_or(f64::NAN, |c| c.1.sqrt() / (freq * freq)),
    };

    let amplitude = a1.hypot(a2);
    let v = amplitude / a0;
    let grad = if amplitude > 0.0 {
        Vector3::new(-v / a0, a1 / (a0 * amplitude), a2 / (a0 * amplitude))
    } else {
        Vector3::new(0.0, 1.0 / a0, 0.0)
    };
    let mut v_sigma = (grad.transpose() * covariance * grad)[(0, 0)].max(0.0).sqrt();
    if amplitude == 0.0 {
        v_sigma = (covariance[(1, 1)] + covariance[(2, 2)]).max(0.0).sqrt() / a0;
    }
    // 1 − V cos(2πf(x − centre) + φ_c) = 1 − V cos(2πf·x + φ).
    let phase_centre = a2.atan2(-a1);
    let phase = crate::numeric::wrap(phase_centre - TAU * freq * centre);
    let visibility = v.clamp(0.0, 1.0);

    Ok(VisibilityReport {
        visibility,
        visibility_unclipped: v,
        visibility_sigma: v_sigma,
        period: 1.0 / freq,
        period_sigma,
        period_locked: known_period.is_some(),
        phase,
        baseline: a0,
        baseline_sigma: covariance[(0, 0)].max(0.0).sqrt(),
        regime,
        verdict: verdict_for(visibility, v_sigma),
        reduced_chi2,
        points: obs.len(),
    })
}

fn locate_frequency(obs: &[Observation]) -> Option<f64> {
    let (lo, hi) = obs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.x), hi.max(o.x)));
    let span = hi - lo;
    let mut xs: Vec<f64> = obs.iter().map(|o| o.x).collect();
    xs.sort_by(f64::total_cmp);
    let min_step = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if span <= 0.0 || !min_step.is_finite() || min_step <= 0.0 {
        return None;
    }
    let (f_min, f_max) = (0.5 / span, 0.5 / min_step);
    let grid = 2000;
    let step = (f_max - f_min) / grid as f64;
    let chi: Vec<f64> = (0..=grid).map(|i| profile_chi2(obs, f_min + i as f64 * step)).collect();
    let best = chi.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?.0;
    if !chi[best].is_finite() {
        return None;
    }
    let mut a = f_min + best.saturating_sub(1) as f64 * step;
    let mut b = f_min + (best + 1).min(grid) as f64 * step;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (profile_chi2(obs, c), profile_chi2(obs, d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * b {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile_chi2(obs, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile_chi2(obs, d);
        }
    }
    Some(0.5 * (a + b))
}

/// Covariance of `(a₀, a₁, a₂)` and the variance of the frequency from the
/// four-parameter Fisher matrix.
fn full_covariance(obs: &[Observation], freq: f64, params: &Vector3<f64>) -> Option<(Matrix3<f64>, f64)> {
    let mut fisher = Matrix4::zeros();
    for o in obs {
        let theta = TAU * freq * o.x;
        let (s, c) = theta.sin_cos();
        let model = o.duration * (params[0] + params[1] * c + params[2] * s);
        let var = model.max(1.0);
        let d_freq = o.duration * TAU * o.x * (-params[1] * s + params[2] * c);
        let row = Vector4::new(o.duration, o.duration * c, o.duration * s, d_freq);
        fisher += row * row.transpose() / var;
    }
    let cov = fisher.try_inverse()?;
    Some((cov.fixed_view::<3, 3>(0, 0).into_owned(), cov[(3, 3)]))
}

/// Everything needed to turn a path offset into a start-stop histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub profile: SpectralProfile,
    pub geometry: InterferometerGeometry,
    pub rates: SourceRates,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    pub tac: TacConfig,
    /// Parallel chunks per acquisition.
    pub chunks: usize,
}

impl PipelineConfig {
    pub fn new(profile: SpectralProfile, geometry: InterferometerGeometry) -> Self {
        Self {
            profile,
            geometry,
            rates: SourceRates::default(),
            detector_a: DetectorModel::default(),
            detector_b: DetectorModel::default(),
            tac: TacConfig::default(),
            chunks: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.rates.validate()?;
        self.detector_a.validate()?;
        self.detector_b.validate()?;
        self.tac.validate_for(&self.geometry)?;
        ensure_domain(self.chunks >= 1, || "chunks must be at least 1".into())
    }

    /// Generates and acquires one histogram at the configured geometry.
    pub fn acquire(&self, duration: f64, seed: u64) -> Result<TacHistogram> {
        self.acquire_at(&self.geometry, duration, seed)
    }

    fn acquire_at(&self, geometry: &InterferometerGeometry, duration: f64, seed: u64) -> Result<TacHistogram> {
        let events = generate_events_chunked(&self.profile, geometry, &self.rates, duration, seed, self.chunks)?;
        let mut rng = substream(seed, Stream::Detection, 0);
        acquire_stream(&events, &self.detector_a, &self.detector_b, &self.tac, &mut rng)
    }
}

/// Histograms recorded at each scan offset, kept for delayed-choice gating.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCorpus {
    pub offsets: Vec<f64>,
    pub volts: Vec<Option<f64>>,
    pub histograms: Vec<TacHistogram>,
    pub delta_l: f64,
    /// Gate centre: the central-peak delay (s).
    pub window_center: f64,
}

impl ScanCorpus {
    /// Gates every recorded histogram with the same window.
    pub fn gate(&self, window_width: f64) -> Result<FringeScan> {
        let points = self
            .offsets
            .iter()
            .zip(&self.volts)
            .zip(&self.histograms)
            .map(|((&offset, &volts), h)| {
                let rate = |n: u64| if h.duration > 0.0 { n as f64 / h.duration } else { 0.0 };
                Ok(ScanPoint {
                    offset,
                    volts,
                    singles_a: rate(h.singles_a),
                    singles_b: rate(h.singles_b),
                    coincidences: gate_count(h, self.window_center, window_width)?,
                    duration: h.duration,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FringeScan { points, window_width, delta_l: self.delta_l })
    }
}

/// Checks that offsets are monotonic, number at least 8 and span a fringe.
pub fn check_scan_offsets(offsets: &[f64], period: f64) -> Result<()> {
    if offsets.len() < 8 {
        return Err(Error::Config(format!("a fringe scan needs at least 8 points, got {}", offsets.len())));
    }
    let span = (offsets[offsets.len() - 1] - offsets[0]).abs();
    if span < period * (1.0 - 1e-9) {
        return Err(Error::Config(format!("scan span {span:e} m is shorter than one fringe period {period:e} m")));
    }
    let increasing = offsets.windows(2).all(|w| w[1] > w[0]);
    let decreasing = offsets.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::Config("scan offsets must be strictly monotonic".into()));
    }
    Ok(())
}

/// Acquires one histogram per offset. Point `i` uses seeds derived from
/// `(seed, i)`, so the result does not depend on thread scheduling.
pub fn acquire_scan(
    config: &PipelineConfig,
    offsets: &[f64],
    volts: Option<&[f64]>,
    duration: f64,
    seed: u64,
) -> Result<ScanCorpus> {
    config.validate()?;
    check_scan_offsets(offsets, config.profile.pump_wavelength())?;
    ensure_domain(duration >= 0.0 && duration.is_finite(), || format!("invalid duration {duration}"))?;
    if let Some(v) = volts {
        ensure_domain(v.len() == offsets.len(), || "volts and offsets differ in length".into())?;
    }
    let histograms = offsets
        .par_iter()
        .enumerate()
        .map(|(i, &offset)| {
            let geometry = config.geometry.with_offset(offset);
            config.tac.validate_for(&geometry)?;
            let point_seed: u64 = substream(seed, Stream::ScanPoint, i as u64).random();
            config.acquire_at(&geometry, duration, point_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanCorpus {
        offsets: offsets.to_vec(),
        volts: match volts {
            Some(v) => v.iter().map(|&x| Some(x)).collect(),
            None => vec![None; offsets.len()],
        },
        histograms,
        delta_l: config.geometry.delta_l(),
        window_center: config.tac.electrical_delay,
    })
}

/// Acquires a scan and gates it with one window.
pub fn run_fringe_scan(
    config: &PipelineConfig,
    offsets: &[f64],
    window_width: f64,
    duration: f64,
    seed: u64,
) -> Result<FringeScan> {
    acquire_scan(config, offsets, None, duration, seed)?.gate(window_width)
}

/// `n` evenly spaced offsets starting at `start` and covering `span`
/// (endpoint excluded, so a whole number of periods samples phase uniformly).
pub fn scan_offsets(start: f64, span: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + span * i as f64 / n as f64).collect()
}

/// A scan with Poisson counts drawn around `rate(offset)·duration`; used to
/// drive the fitter from the analytic engines.
pub fn poisson_scan<R: Rng + ?Sized>(
    offsets: &[f64],
    rates: &[f64],
    duration: f64,
    window_width: f64,
    delta_l: f64,
    rng: &mut R,
) -> Result<FringeScan> {
    ensure_domain(offsets.len() == rates.len(), || "offsets and rates differ in length".into())?;
    let points = offsets
        .iter()
        .zip(rates)
        .map(|(&offset, &rate)| {
            let mean = rate * duration;
            let coincidences = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::Internal(e.to_string()))?.sample(rng) as u64
            } else {
                0
            };
            Ok(ScanPoint { offset, volts: None, singles_a: 0.0, singles_b: 0.0, coincidences, duration })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FringeScan { points, window_width, delta_l })
}
