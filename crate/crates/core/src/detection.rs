//! Detectors, time-to-amplitude converter and multichannel histogram.
//!
//! Detector A starts the TAC; detector B stops it after an electrical delay.
//! The recorded start-stop histogram keeps the three arrival classes apart,
//! so the coincidence window can be chosen after acquisition.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engines::{Click, EventStream};
use crate::error::{ensure_domain, Error, Result};
use crate::interferometer::{Detector, InterferometerGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    /// Gaussian timing jitter σ (s).
    pub timing_jitter_sigma: f64,
    /// Non-paralysable dead time (s).
    pub dead_time: f64,
    /// Probability that an incident click is registered.
    pub efficiency: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { timing_jitter_sigma: 300e-12, dead_time: 50e-9, efficiency: 1.0 }
    }
}

impl DetectorModel {
    /// Zero jitter, no dead time, unit efficiency.
    pub fn ideal() -> Self {
        Self { timing_jitter_sigma: 0.0, dead_time: 0.0, efficiency: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_domain(
            self.timing_jitter_sigma >= 0.0 && self.dead_time >= 0.0 && (0.0..=1.0).contains(&self.efficiency),
            || format!("invalid detector model: {self:?}"),
        )
    }

    /// Applies efficiency thinning, jitter, re-sorting and dead time to the
    /// incident click times.
    fn register<R: Rng + ?Sized>(&self, incident: impl Iterator<Item = f64>, rng: &mut R) -> Result<Vec<f64>> {
        let jitter = if self.timing_jitter_sigma > 0.0 {
            Some(Normal::new(0.0, self.timing_jitter_sigma).map_err(|e| Error::Internal(e.to_string()))?)
        } else {
            None
        };
        let mut times = Vec::new();
        for t in incident {
            if self.efficiency < 1.0 && rng.random::<f64>() >= self.efficiency {
                continue;
            }
            times.push(match &jitter {
                Some(n) => t + n.sample(rng),
                None => t,
            });
        }
        times.sort_by(f64::total_cmp);
        if self.dead_time > 0.0 {
            let mut last = f64::NEG_INFINITY;
            times.retain(|&t| {
                if t - last >= self.dead_time {
                    last = t;
                    true
                } else {
                    false
                }
            });
        }
        Ok(times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TacConfig {
    /// Delay added to the stop channel (s).
    pub electrical_delay: f64,
    /// Full-scale start-stop interval (s).
    pub range: f64,
    pub n_channels: usize,
}

impl Default for TacConfig {
    fn default() -> Self {
        Self { electrical_delay: 10e-9, range: 20e-9, n_channels: 4096 }
    }
}

impl TacConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_domain(self.range > 0.0 && self.range.is_finite(), || {
            format!("TAC range must be positive, got {}", self.range)
        })?;
        ensure_domain(self.n_channels >= 2, || format!("TAC needs at least two channels, got {}", self.n_channels))?;
        ensure_domain(self.electrical_delay >= 0.0, || {
            format!("electrical delay must be non-negative, got {}", self.electrical_delay)
        })
    }

    /// Checks that all three arrival classes land inside the range.
    pub fn validate_for(&self, geometry: &InterferometerGeometry) -> Result<()> {
        self.validate()?;
        let d = geometry.path_delay();
        if self.electrical_delay < d || self.electrical_delay + d > self.range {
            return Err(Error::Config(format!(
                "peaks at {:.3} ns ± {:.3} ns fall outside the TAC range [0, {:.3}] ns",
                self.electrical_delay * 1e9,
                d * 1e9,
                self.range * 1e9
            )));
        }
        Ok(())
    }
}

/// Start-stop interval histogram over `[0, range)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacHistogram {
    pub range: f64,
    pub counts: Vec<u64>,
    /// Acquisition time (s).
    pub duration: f64,
    /// Registered clicks per detector.
    pub singles_a: u64,
    pub singles_b: u64,
    /// Whether either detector had dead time; such histograms do not merge.
    pub dead_time: bool,
}

impl TacHistogram {
    pub fn empty(tac: &TacConfig, duration: f64, dead_time: bool) -> Self {
        Self { range: tac.range, counts: vec![0; tac.n_channels], duration, singles_a: 0, singles_b: 0, dead_time }
    }

    pub fn n_channels(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.range / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| i as f64 * self.bin_width()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn record(&mut self, dt: f64) {
        let n = self.counts.len();
        let i = ((dt / self.range) * n as f64) as usize;
        self.counts[i.min(n - 1)] += 1;
    }

    /// Bin-wise sum of two acquisitions with identical binning.
    pub fn merge(&mut self, other: &TacHistogram) -> Result<()> {
        if self.dead_time || other.dead_time {
            return Err(Error::MergeForbidden);
        }
        if self.range != other.range || self.counts.len() != other.counts.len() {
            return Err(Error::Precondition("histograms have different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.duration += other.duration;
        self.singles_a += other.singles_a;
        self.singles_b += other.singles_b;
        Ok(())
    }

    /// Writes a `# key=value` header line followed by `bin_center_s,count`.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: &str) -> io::Result<()> {
        writeln!(
            w,
            "# duration_s={},singles_a={},singles_b={},config_hash={}",
            self.duration, self.singles_a, self.singles_b, config_hash
        )?;
        writeln!(w, "bin_center_s,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:e},{}", self.bin_center(i), c)?;
        }
        Ok(())
    }
}

/// Runs detector models over time-sorted clicks and fills the TAC histogram.
///
/// Each start opens the TAC until the first stop (B time + delay) or until
/// `range` elapses; starts arriving while the TAC is busy are lost.
pub fn acquire_histogram<R: Rng + ?Sized>(
    clicks: &[Click],
    duration: f64,
    detector_a: &DetectorModel,
    detector_b: &DetectorModel,
    tac: &TacConfig,
    rng: &mut R,
) -> Result<TacHistogram> {
    detector_a.validate()?;
    detector_b.validate()?;
    tac.validate()?;
    if let Some(i) = clicks.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(Error::Precondition(format!(
            "events not time-sorted at index {}: {} > {}",
            i + 1,
            clicks[i].time,
            clicks[i + 1].time
        )));
    }
    let starts = detector_a.register(clicks.iter().filter(|c| c.detector == Detector::A).map(|c| c.time), rng)?;
    let stops: Vec<f64> = detector_b
        .register(clicks.iter().filter(|c| c.detector == Detector::B).map(|c| c.time), rng)?
        .into_iter()
        .map(|t| t + tac.electrical_delay)
        .collect();

    let dead = detector_a.dead_time > 0.0 || detector_b.dead_time > 0.0;
    let mut hist = TacHistogram::empty(tac, duration, dead);
    hist.singles_a = starts.len() as u64;
    hist.singles_b = stops.len() as u64;

    let (mut i, mut j) = (0, 0);
    let mut armed: Option<f64> = None;
    while i < starts.len() || j < stops.len() {
        let take_start = j >= stops.len() || (i < starts.len() && starts[i] <= stops[j]);
        if take_start {
            let s = starts[i];
            i += 1;
            match armed {
                Some(a) if s - a < tac.range => {}
                _ => armed = Some(s),
            }
        } else {
            let e = stops[j];
            j += 1;
            if let Some(a) = armed.take() {
                let dt = e - a;
                if dt < tac.range {
                    hist.record(dt);
                }
            }
        }
    }
    Ok(hist)
}

/// [`acquire_histogram`] over a generated stream.
pub fn acquire_stream<R: Rng + ?Sized>(
    stream: &EventStream,
    detector_a: &DetectorModel,
    detector_b: &DetectorModel,
    tac: &TacConfig,
    rng: &mut R,
) -> Result<TacHistogram> {
    acquire_histogram(&stream.clicks(), stream.duration, detector_a, detector_b, tac, rng)
}

/// Counts in the bins whose centres lie in `[center − width/2, center + width/2]`.
pub fn gate_count(hist: &TacHistogram, window_center: f64, window_width: f64) -> Result<u64> {
    let lo = window_center - 0.5 * window_width;
    let hi = window_center + 0.5 * window_width;
    ensure_domain(window_width >= 0.0 && lo >= 0.0 && hi <= hist.range, || {
        format!("window [{lo:e}, {hi:e}] s lies outside the histogram range [0, {:e}] s", hist.range)
    })?;
    Ok(hist
        .counts
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let c = hist.bin_center(*i);
            c >= lo && c <= hi
        })
        .map(|(_, &n)| n)
        .sum())
}

/// One fitted histogram peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub centroid: f64,
    pub centroid_sigma: f64,
    pub width: f64,
    pub area: f64,
    pub area_sigma: f64,
}

/// Fits Gaussian peaks plus a flat floor to a histogram by expectation
/// maximisation on the binned counts.
///
/// Overlapping tails are shared between peaks by their model weight, so
/// areas are not biased by where a window boundary cuts the tails.
pub fn fit_peaks(hist: &TacHistogram, initial_centers: &[f64], initial_width: f64) -> Result<Vec<PeakFit>> {
    ensure_domain(!initial_centers.is_empty() && initial_width > 0.0, || {
        "need at least one peak and a positive initial width".into()
    })?;
    let h = hist.bin_width();
    let bins: Vec<(f64, f64)> =
        hist.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (hist.bin_center(i), c as f64)).collect();
    let total: f64 = bins.iter().map(|b| b.1).sum();
    let m = initial_centers.len();
    let min_var = 0.25 * h * h;

    let mut centers = initial_centers.to_vec();
    let mut vars = vec![initial_width * initial_width; m];
    let mut areas = vec![total / (m + 1) as f64; m];
    let mut floor = total / (m + 1) as f64;

    if total == 0.0 {
        return Ok(centers
            .iter()
            .map(|&c| PeakFit {
                centroid: c,
                centroid_sigma: f64::INFINITY,
                width: initial_width,
                area: 0.0,
                area_sigma: 0.0,
            })
            .collect());
    }

    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut converged = false;
    let mut resp = vec![0.0; m + 1];
    for _ in 0..5000 {
        let mut new_area = vec![0.0; m];
        let mut first = vec![0.0; m];
        let mut second = vec![0.0; m];
        let mut new_floor = 0.0;
        for &(t, c) in &bins {
            let mut sum = floor * h / hist.range;
            resp[m] = sum;
            for j in 0..m {
                let sd = vars[j].sqrt();
                let z = (t - centers[j]) / sd;
                let v = areas[j] * h * (-0.5 * z * z).exp() / (norm * sd);
                resp[j] = v;
                sum += v;
            }
            if sum <= 0.0 {
                continue;
            }
            for j in 0..m {
                let w = c * resp[j] / sum;
                new_area[j] += w;
                first[j] += w * t;
            }
            new_floor += c * resp[m] / sum;
        }
        let mut shift = 0.0f64;
        let mut new_centers = centers.clone();
        for j in 0..m {
            if new_area[j] > 1e-9 {
                new_centers[j] = first[j] / new_area[j];
            }
            shift = shift.max((new_centers[j] - centers[j]).abs());
        }
        for &(t, c) in &bins {
            let mut sum = floor * h / hist.range;
            for j in 0..m {
                let sd = vars[j].sqrt();
                let z = (t - centers[j]) / sd;
                resp[j] = areas[j] * h * (-0.5 * z * z).exp() / (norm * sd);
                sum += resp[j];
            }
            if sum <= 0.0 {
                continue;
            }
            for j in 0..m {
                second[j] += c * resp[j] / sum * (t - new_centers[j]).powi(2);
            }
        }
        let mut area_change = 0.0f64;
        for j in 0..m {
            if new_area[j] > 1e-9 {
                // Sheppard's correction for binning.
                vars[j] = (second[j] / new_area[j] - h * h / 12.0).max(min_var);
            }
            area_change = area_change.max((new_area[j] - areas[j]).abs() / (1.0 + areas[j]));
        }
        centers = new_centers;
        areas = new_area;
        floor = new_floor;
        if shift < 1e-6 * h && area_change < 1e-9 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit {
            message: "peak fit did not converge".into(),
            reduced_chi2: f64::NAN,
            points: bins.len(),
        });
    }
    Ok((0..m)
        .map(|j| {
            let width = vars[j].sqrt();
            PeakFit {
                centroid: centers[j],
                centroid_sigma: if areas[j] > 0.0 { width / areas[j].sqrt() } else { f64::INFINITY },
                width,
                area: areas[j],
                area_sigma: areas[j].sqrt(),
            }
        })
        .collect())
}
