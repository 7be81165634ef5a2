//! Coincidence-rate engines.
//!
//! Three routes to the same physics, each checkable against the others:
//! analytic quantum rates (quadrature over `|Φ|²`), the classical
//! random-wavenumber model (closed form and Monte Carlo), and a Monte Carlo
//! photon-pair event generator.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::interferometer::{
    coincidence_classes, max_coincidence_probability, ClassProbabilities, CoincidenceClass, Detector,
    InterferometerGeometry, PathLabel,
};
use crate::rng::{substream, Stream};
use crate::spectral::SpectralProfile;

/// Singles rate per detector that the default background is derived from (s⁻¹).
pub const OBSERVED_SINGLES_RATE: f64 = 1.0e4;

/// Pair production and coincidence normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRates {
    /// Generated pairs per second.
    pub pair_rate: f64,
    /// Coincidence normalisation `R_c0` (s⁻¹): rate = `R_c0 × ⟨ψ_f|ψ_f⟩`.
    pub rc0: f64,
    /// Uncorrelated clicks per second on each detector.
    pub singles_background: f64,
    /// Pairs that miss a coincidence may still leave one click, chosen so that
    /// the source contributes a phase-independent singles rate.
    #[serde(default = "default_true")]
    pub unpaired_clicks: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SourceRates {
    fn default() -> Self {
        Self::from_observed_singles(1.0e5, 2.0e3, OBSERVED_SINGLES_RATE)
    }
}

impl SourceRates {
    /// Background chosen so that source clicks plus background add up to
    /// `observed_singles` per detector (balanced splitter).
    pub fn from_observed_singles(pair_rate: f64, rc0: f64, observed_singles: f64) -> Self {
        Self { pair_rate, rc0, singles_background: (observed_singles - rc0).max(0.0), unpaired_clicks: true }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_domain(
            [self.pair_rate, self.rc0, self.singles_background].iter().all(|r| r.is_finite() && *r >= 0.0),
            || format!("rates must be finite and non-negative: {self:?}"),
        )
    }

    /// Per-pair scale `η = R_c0 / pair_rate` from `⟨ψ_f|ψ_f⟩` to coincidence
    /// probability.
    pub fn coincidence_scale(&self) -> f64 {
        if self.pair_rate > 0.0 {
            self.rc0 / self.pair_rate
        } else {
            0.0
        }
    }
}

/// Visibility `(max − min)/(max + min)`.
pub fn visibility(max: f64, min: f64) -> f64 {
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

/// `⟨cos((k₁ − k₂)ΔL)⟩` over `|Φ(k₁)|²`: the residual term of the wide-window
/// rate, which dies off once ΔL exceeds the coherence length.
pub fn residual_fringe(profile: &SpectralProfile, geometry: &InterferometerGeometry) -> Result<f64> {
    let kc = profile.k_center();
    let k_diff = profile.k_pump() - 2.0 * kc;
    profile.mean_cos(geometry.phase(k_diff), -2.0 * geometry.delta_l())
}

/// Phase-averaged class probabilities `∫|Φ|² p_class dk₁`.
pub fn mean_class_probabilities(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
) -> Result<ClassProbabilities> {
    geometry.check_parameters()?;
    let t = geometry.splitter_transmittance;
    let mu = geometry.mode_overlap;
    let c = t * (1.0 - t);
    let direct = t * t + (1.0 - t) * (1.0 - t);
    let pump = geometry.phase(profile.k_pump()).cos();
    let residual = residual_fringe(profile, geometry)?;

    let central = 2.0 * c * (direct - 2.0 * mu * c * pump);
    let sides = 2.0 * c * (direct - 2.0 * mu * c * residual);
    Ok(ClassProbabilities {
        central: central.max(0.0),
        short_long: (sides * (1.0 - t) * (1.0 - t) / direct).max(0.0),
        long_short: (sides * t * t / direct).max(0.0),
    })
}

/// Coincidence rate when the window admits all three arrival classes.
///
/// At `T = ½`: `R_c0 ∫|Φ|²[½ − ¼μ cos k_pΔL − ¼μ cos((k_p − 2k₁)ΔL)] dk₁`.
pub fn quantum_rate_wide(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    rates: &SourceRates,
) -> Result<f64> {
    Ok(rates.rc0 * mean_class_probabilities(profile, geometry)?.total())
}

/// Coincidence rate when the window admits only the central class.
///
/// At `T = ½`: `(R_c0/4)(1 − μ cos k_pΔL)`.
pub fn quantum_rate_narrow(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    rates: &SourceRates,
) -> Result<f64> {
    Ok(rates.rc0 * mean_class_probabilities(profile, geometry)?.central)
}

/// Rate of the two side classes together.
pub fn side_rate(profile: &SpectralProfile, geometry: &InterferometerGeometry, rates: &SourceRates) -> Result<f64> {
    Ok(rates.rc0 * mean_class_probabilities(profile, geometry)?.sides())
}

/// Classical correlation `⟨(1 + cos k₁ΔL)(1 − cos k₂ΔL)⟩` with `k₂ = k_p − k₁`.
///
/// Expanded as `1 + ⟨cos k₁ΔL⟩ − ⟨cos k₂ΔL⟩ − ½cos k_pΔL − ½⟨cos(k₁−k₂)ΔL⟩`;
/// every average is kept, so the result is exact for any ΔL.
pub fn classical_correlation(profile: &SpectralProfile, geometry: &InterferometerGeometry) -> Result<f64> {
    geometry.check_parameters()?;
    let kc = profile.k_center();
    let dl = geometry.delta_l();
    let signal = profile.mean_cos(geometry.phase(kc), dl)?;
    let idler = profile.mean_cos(geometry.phase(profile.k_pump() - kc), -dl)?;
    let pump = geometry.phase(profile.k_pump()).cos();
    let residual = residual_fringe(profile, geometry)?;
    Ok(1.0 + signal - idler - 0.5 * pump - 0.5 * residual)
}

/// Classical coincidence rate, scaled so that its phase average matches the
/// quantum wide-window average `R_c0/2`.
pub fn classical_rate(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    rates: &SourceRates,
) -> Result<f64> {
    Ok(0.5 * rates.rc0 * classical_correlation(profile, geometry)?)
}

/// Classical rate in the `ΔL ≫ ℓ_coh` limit, where every single-photon
/// average vanishes: `(R_c0/2)(1 − ½cos k_pΔL)`.
pub fn classical_rate_limit(profile: &SpectralProfile, geometry: &InterferometerGeometry, rates: &SourceRates) -> f64 {
    0.5 * rates.rc0 * (1.0 - 0.5 * geometry.phase(profile.k_pump()).cos())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    fn from_samples<I: Iterator<Item = f64>>(values: I) -> Self {
        // Welford
        let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let stderr = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { f64::INFINITY };
        Self { mean, stderr, samples: n }
    }

    /// Distance from `value` in standard errors.
    pub fn pull(&self, value: f64) -> f64 {
        (self.mean - value) / self.stderr
    }
}

/// Monte Carlo estimate of [`classical_correlation`].
pub fn classical_monte_carlo<R: Rng + ?Sized>(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    n_samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    ensure_domain(n_samples >= 1, || "need at least one sample".into())?;
    geometry.check_parameters()?;
    let values = (0..n_samples)
        .map(|_| {
            let pair = profile.sample_pair(rng)?;
            let a = geometry.phase(pair.k1()).cos();
            let b = geometry.phase(pair.k2()).cos();
            Ok((1.0 + a) * (1.0 - b))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(values.into_iter()))
}

/// Monte Carlo estimate of the wide-window `⟨ψ_f|ψ_f⟩` from sampled pairs.
pub fn quantum_monte_carlo<R: Rng + ?Sized>(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    n_samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    ensure_domain(n_samples >= 1, || "need at least one sample".into())?;
    geometry.check_parameters()?;
    let values = (0..n_samples)
        .map(|_| {
            let pair = profile.sample_pair(rng)?;
            Ok(coincidence_classes(&pair, geometry).probabilities.total())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(values.into_iter()))
}

/// Ground-truth origin of a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthClass {
    Central,
    ShortLong,
    LongShort,
    /// One photon of a pair that did not register as a coincidence.
    Unpaired,
    Background,
}

impl TruthClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::Central => "central",
            Self::ShortLong => "short_long",
            Self::LongShort => "long_short",
            Self::Unpaired => "unpaired",
            Self::Background => "background",
        }
    }
}

impl From<CoincidenceClass> for TruthClass {
    fn from(c: CoincidenceClass) -> Self {
        match c {
            CoincidenceClass::Central => Self::Central,
            CoincidenceClass::ShortLong => Self::ShortLong,
            CoincidenceClass::LongShort => Self::LongShort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOutcome {
    Coincidence {
        class: CoincidenceClass,
        t_a: f64,
        t_b: f64,
    },
    /// Only one photon was registered.
    Single {
        detector: Detector,
        time: f64,
    },
    NoCoincidence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub emission_time: f64,
    pub k1: f64,
    pub outcome: PairOutcome,
}

/// One detector click as seen by the electronics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    pub time: f64,
    pub detector: Detector,
    /// For test introspection only; analysis code must not read it.
    pub truth: TruthClass,
}

/// Output of the event generator.
///
/// Pairs that left no click are counted in `pair_count` but not stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub duration: f64,
    pub pair_count: u64,
    pub pairs: Vec<PairEvent>,
    pub background: Vec<Click>,
}

impl EventStream {
    /// All clicks, ordered by time (detector A first on ties).
    pub fn clicks(&self) -> Vec<Click> {
        let mut out = Vec::with_capacity(2 * self.pairs.len() + self.background.len());
        for p in &self.pairs {
            match p.outcome {
                PairOutcome::Coincidence { class, t_a, t_b } => {
                    out.push(Click { time: t_a, detector: Detector::A, truth: class.into() });
                    out.push(Click { time: t_b, detector: Detector::B, truth: class.into() });
                }
                PairOutcome::Single { detector, time } => {
                    out.push(Click { time, detector, truth: TruthClass::Unpaired });
                }
                PairOutcome::NoCoincidence => {}
            }
        }
        out.extend_from_slice(&self.background);
        out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.detector.cmp(&b.detector)));
        out
    }

    /// Number of coincidence pairs of a class.
    pub fn class_count(&self, class: CoincidenceClass) -> u64 {
        self.pairs
            .iter()
            .filter(|p| matches!(p.outcome, PairOutcome::Coincidence { class: c, .. } if c == class))
            .count() as u64
    }

    /// Writes `time_s,detector,truth_class` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,detector,truth_class")?;
        for c in self.clicks() {
            let det = match c.detector {
                Detector::A => "A",
                Detector::B => "B",
            };
            writeln!(w, "{:e},{},{}", c.time, det, c.truth.label())?;
        }
        Ok(())
    }
}

/// Per-pair outcome sampler, calibrated once per configuration.
#[derive(Debug, Clone)]
pub struct EventGenerator<'a> {
    profile: &'a SpectralProfile,
    geometry: InterferometerGeometry,
    rates: SourceRates,
    scale: f64,
    single_click: f64,
}

impl<'a> EventGenerator<'a> {
    /// Fails with a configuration error when the calibrated probabilities
    /// could exceed one at some phase.
    pub fn new(profile: &'a SpectralProfile, geometry: &InterferometerGeometry, rates: &SourceRates) -> Result<Self> {
        geometry.check_parameters()?;
        rates.validate()?;
        let scale = rates.coincidence_scale();
        let p_max = max_coincidence_probability(geometry);
        if scale * p_max > 1.0 {
            return Err(Error::Config(format!(
                "R_c0/pair_rate = {scale} gives coincidence probability {} > 1",
                scale * p_max
            )));
        }
        let single_click = if rates.unpaired_clicks { scale * p_max } else { 0.0 };
        if 2.0 * single_click > 1.0 {
            return Err(Error::Config(format!(
                "R_c0/pair_rate = {scale} too large for flat unpaired singles (needs ≤ {})",
                0.5 / p_max
            )));
        }
        Ok(Self { profile, geometry: *geometry, rates: *rates, scale, single_click })
    }

    /// Per-detector click probability of every pair, independent of phase.
    pub fn single_click_probability(&self) -> f64 {
        self.single_click
    }

    pub fn coincidence_scale(&self) -> f64 {
        self.scale
    }

    fn sample_pair_event<R: Rng + ?Sized>(&self, emission_time: f64, rng: &mut R) -> Result<PairEvent> {
        let pair = self.profile.sample_pair(rng)?;
        let set = coincidence_classes(&pair, &self.geometry);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (class, &(t_a, t_b)) in CoincidenceClass::ALL.iter().zip(set.time_signatures.iter()) {
            acc += self.scale * set.probabilities.get(*class);
            if u < acc {
                return Ok(PairEvent {
                    emission_time,
                    k1: pair.k1(),
                    outcome: PairOutcome::Coincidence {
                        class: *class,
                        t_a: emission_time + t_a,
                        t_b: emission_time + t_b,
                    },
                });
            }
        }
        let unpaired = (self.single_click - acc).max(0.0);
        let time = emission_time + self.geometry.arm_time(PathLabel::S);
        let outcome = if u < acc + unpaired {
            PairOutcome::Single { detector: Detector::A, time }
        } else if u < acc + 2.0 * unpaired {
            PairOutcome::Single { detector: Detector::B, time }
        } else {
            PairOutcome::NoCoincidence
        };
        Ok(PairEvent { emission_time, k1: pair.k1(), outcome })
    }

    /// Generates pairs and background on `[start, start + duration)`.
    pub fn generate<R: Rng + ?Sized>(&self, start: f64, duration: f64, rng: &mut R) -> Result<EventStream> {
        ensure_domain(duration.is_finite() && duration >= 0.0, || {
            format!("duration must be non-negative, got {duration}")
        })?;
        let end = start + duration;
        let mut stream = EventStream { duration, ..Default::default() };
        if duration == 0.0 {
            return Ok(stream);
        }
        if self.rates.pair_rate > 0.0 {
            let gap = Exp::new(self.rates.pair_rate).map_err(|e| Error::Internal(e.to_string()))?;
            let mut t = start + gap.sample(rng);
            while t < end {
                stream.pair_count += 1;
                let ev = self.sample_pair_event(t, rng)?;
                if !matches!(ev.outcome, PairOutcome::NoCoincidence) {
                    stream.pairs.push(ev);
                }
                t += gap.sample(rng);
            }
        }
        if self.rates.singles_background > 0.0 {
            let gap = Exp::new(self.rates.singles_background).map_err(|e| Error::Internal(e.to_string()))?;
            for detector in [Detector::A, Detector::B] {
                let mut t = start + gap.sample(rng);
                while t < end {
                    stream.background.push(Click { time: t, detector, truth: TruthClass::Background });
                    t += gap.sample(rng);
                }
            }
            stream.background.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
        Ok(stream)
    }
}

/// Poisson pair emission at `pair_rate` over `[0, duration)` plus independent
/// background clicks on each detector.
pub fn generate_events<R: Rng + ?Sized>(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    rates: &SourceRates,
    duration: f64,
    rng: &mut R,
) -> Result<EventStream> {
    EventGenerator::new(profile, geometry, rates)?.generate(0.0, duration, rng)
}

/// Splits `[0, duration)` into `chunks` equal pieces generated in parallel,
/// chunk `i` drawing from substream `(seed, i)`. Deterministic for a fixed
/// `(seed, chunks)`.
pub fn generate_events_chunked(
    profile: &SpectralProfile,
    geometry: &InterferometerGeometry,
    rates: &SourceRates,
    duration: f64,
    seed: u64,
    chunks: usize,
) -> Result<EventStream> {
    ensure_domain(chunks >= 1, || "need at least one chunk".into())?;
    let generator = EventGenerator::new(profile, geometry, rates)?;
    let width = duration / chunks as f64;
    let parts = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Stream::Events, i as u64);
            let start = i as f64 * width;
            let len = if i + 1 == chunks { duration - start } else { width };
            generator.generate(start, len, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut merged = EventStream { duration, ..Default::default() };
    for part in parts {
        merged.pair_count += part.pair_count;
        merged.pairs.extend(part.pairs);
        merged.background.extend(part.background);
    }
    merged.background.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(merged)
}
