//! Biphoton spectrum of degenerate type-I down-conversion.
//!
//! The pair state is `∫dk₁ Φ(k₁)|k₁⟩|k_p − k₁⟩`: the signal wavenumber is
//! drawn from `|Φ|²` and the idler is fixed by phase matching. Wavenumbers are
//! angular (`k = 2π/λ`). `delta_k` is the 1/e half-width of `|Φ(k)|²`, so the
//! Gaussian density is `exp(-((k - k_c)/Δk)²) / (√π Δk)` and the coherence
//! length is `1/Δk`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::numeric::integrate_checked;

/// Gaussian densities are integrated and sampled over `k_c ± 6Δk`.
pub const GAUSSIAN_SUPPORT_WIDTHS: f64 = 6.0;

const MIN_PANELS: usize = 125;
const MAX_PANELS: usize = 1 << 24;
const QUADRATURE_TOL: f64 = 1e-12;
const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralShape {
    #[default]
    Gaussian,
    /// Flat density on `k_c ± Δk`.
    Rectangular,
}

/// Signal wavenumber distribution together with the pump wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    k_pump: f64,
    k_center: f64,
    delta_k: f64,
    shape: SpectralShape,
    // 1/∫|Φ|² of the analytic density over the support, as integrated.
    norm_factor: f64,
}

impl SpectralProfile {
    /// Degenerate profile centred at `k_pump / 2`.
    pub fn new(k_pump: f64, delta_k: f64, shape: SpectralShape) -> Result<Self> {
        Self::with_center(k_pump, 0.5 * k_pump, delta_k, shape)
    }

    pub fn with_center(k_pump: f64, k_center: f64, delta_k: f64, shape: SpectralShape) -> Result<Self> {
        ensure_domain(k_pump.is_finite() && k_pump > 0.0, || {
            format!("pump wavenumber must be positive, got {k_pump}")
        })?;
        ensure_domain(delta_k.is_finite() && delta_k > 0.0, || {
            format!("spectral width must be positive, got {delta_k}")
        })?;
        ensure_domain(k_center > 0.0 && k_center < k_pump, || {
            format!("centre wavenumber {k_center} must lie in (0, {k_pump})")
        })?;
        let mut profile = Self { k_pump, k_center, delta_k, shape, norm_factor: 1.0 };
        let (lo, hi) = profile.support();
        ensure_domain(lo > 0.0 && hi < k_pump, || {
            format!("spectral support [{lo}, {hi}] must lie inside (0, k_pump)")
        })?;
        let norm = profile.expectation(|_| 1.0, 0.0)?;
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Internal(format!("spectral density integrates to {norm}, expected 1")));
        }
        profile.norm_factor = 1.0 / norm;
        Ok(profile)
    }

    /// Builds a profile from the pump wavelength and the coherence length.
    pub fn from_wavelength(pump_wavelength: f64, coherence_length: f64, shape: SpectralShape) -> Result<Self> {
        ensure_domain(coherence_length.is_finite() && coherence_length > 0.0, || {
            format!("coherence length must be positive, got {coherence_length}")
        })?;
        Self::new(wavelength_to_wavenumber(pump_wavelength)?, 1.0 / coherence_length, shape)
    }

    pub fn k_pump(&self) -> f64 {
        self.k_pump
    }

    pub fn k_center(&self) -> f64 {
        self.k_center
    }

    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    pub fn shape(&self) -> SpectralShape {
        self.shape
    }

    pub fn pump_wavelength(&self) -> f64 {
        TAU / self.k_pump
    }

    /// Standard deviation of `k₁` under `|Φ|²`.
    pub fn std_dev(&self) -> f64 {
        match self.shape {
            SpectralShape::Gaussian => self.delta_k / 2f64.sqrt(),
            SpectralShape::Rectangular => self.delta_k / 3f64.sqrt(),
        }
    }

    /// Interval outside which `|Φ|²` is treated as zero.
    pub fn support(&self) -> (f64, f64) {
        let half = self.support_half_width();
        (self.k_center - half, self.k_center + half)
    }

    fn support_half_width(&self) -> f64 {
        match self.shape {
            SpectralShape::Gaussian => GAUSSIAN_SUPPORT_WIDTHS * self.delta_k,
            SpectralShape::Rectangular => self.delta_k,
        }
    }

    /// `|Φ(k)|²`, normalised to unit integral.
    pub fn density(&self, k: f64) -> f64 {
        let (lo, hi) = self.support();
        if k < lo || k > hi {
            return 0.0;
        }
        let raw = match self.shape {
            SpectralShape::Gaussian => {
                let x = (k - self.k_center) / self.delta_k;
                (-x * x).exp() / (PI.sqrt() * self.delta_k)
            }
            SpectralShape::Rectangular => 0.5 / self.delta_k,
        };
        raw * self.norm_factor
    }

    /// Real, non-negative wave-packet amplitude `Φ(k)`.
    pub fn amplitude(&self, k: f64) -> f64 {
        self.density(k).sqrt()
    }

    /// `∫|Φ(k)|² f(k) dk` over the support.
    ///
    /// `max_rate` is the largest angular rate (rad per unit k) at which `f`
    /// oscillates; panels are sized so each covers at most one oscillation.
    /// The result is accepted once it agrees with the doubled-resolution
    /// value to 1e-12.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, max_rate: f64) -> Result<f64> {
        let (kc, dk) = (self.k_center, self.delta_k);
        self.reduced_expectation(|u| f(kc + dk * u), max_rate * dk)
    }

    /// `∫|Φ(k)|² cos(phase_at_center + rate·(k − k_c)) dk`.
    pub fn mean_cos(&self, phase_at_center: f64, rate: f64) -> Result<f64> {
        let scaled = rate * self.delta_k;
        self.reduced_expectation(|u| (phase_at_center + scaled * u).cos(), scaled)
    }

    /// Expectation over the reduced variable `u = (k − k_c)/Δk`.
    fn reduced_expectation<F: Fn(f64) -> f64>(&self, f: F, max_rate: f64) -> Result<f64> {
        let half = self.support_half_width() / self.delta_k;
        let periods = 2.0 * half * max_rate.abs() / TAU;
        let panels = MIN_PANELS.max(periods.ceil() as usize + 1);
        let norm = self.norm_factor;
        let g = |u: f64| {
            let w = match self.shape {
                SpectralShape::Gaussian => (-u * u).exp() / PI.sqrt(),
                SpectralShape::Rectangular => 0.5,
            };
            norm * w * f(u)
        };
        integrate_checked(&g, -half, half, panels, QUADRATURE_TOL, MAX_PANELS)
    }

    /// Draws `k₁` from `|Φ|²` by rejection against the support.
    pub fn sample_k1<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let (lo, hi) = self.support();
        match self.shape {
            SpectralShape::Rectangular => {
                let k = lo + (hi - lo) * rng.random::<f64>();
                Ok(k.clamp(lo, hi))
            }
            SpectralShape::Gaussian => {
                let normal = Normal::new(self.k_center, self.std_dev()).map_err(|e| Error::Internal(e.to_string()))?;
                for _ in 0..MAX_REJECTIONS {
                    let k = normal.sample(rng);
                    if (lo..=hi).contains(&k) {
                        return Ok(k);
                    }
                }
                Err(Error::Internal(format!("rejection sampler exceeded {MAX_REJECTIONS} attempts")))
            }
        }
    }

    /// Draws a phase-matched pair with `k₁ ~ |Φ|²`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WavenumberPair> {
        Ok(WavenumberPair::new(self.k_pump, self.sample_k1(rng)?))
    }
}

/// Signal/idler wavenumbers with `k1 + k2 == k_pump` exactly in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavenumberPair {
    k_pump: f64,
    k1: f64,
}

impl WavenumberPair {
    /// Snaps `k1` onto the set of values for which `k_pump - k1` is exact, so
    /// the phase-matching sum holds bit-for-bit.
    ///
    /// # Panics
    /// If `k1` is not inside `(0, k_pump)`.
    pub fn new(k_pump: f64, k1: f64) -> Self {
        assert!(k1 > 0.0 && k1 < k_pump, "k1 = {k1} outside (0, {k_pump})");
        // Sterbenz: k_pump - x is exact for x in [k_pump/2, k_pump].
        let k1 = if k1 >= 0.5 * k_pump { k1 } else { k_pump - (k_pump - k1) };
        Self { k_pump, k1 }
    }

    pub fn k_pump(&self) -> f64 {
        self.k_pump
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k_pump - self.k1
    }

    /// The same pair with signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.k_pump, self.k2())
    }
}

/// `ℓ_coh = 1/Δk`.
pub fn coherence_length(profile: &SpectralProfile) -> f64 {
    1.0 / profile.delta_k
}

/// `1/Δk` for a bare width.
pub fn coherence_length_from_width(delta_k: f64) -> Result<f64> {
    ensure_domain(delta_k.is_finite() && delta_k > 0.0, || format!("spectral width must be positive, got {delta_k}"))?;
    Ok(1.0 / delta_k)
}

/// Converts a wavelength linewidth `Δλ` at `λ` into `Δk = 2πΔλ/λ²`.
pub fn linewidth_to_delta_k(wavelength: f64, linewidth: f64) -> Result<f64> {
    ensure_domain(wavelength > 0.0 && linewidth > 0.0, || {
        format!("wavelength {wavelength} and linewidth {linewidth} must be positive")
    })?;
    Ok(TAU * linewidth / (wavelength * wavelength))
}

/// `k = 2π/λ`.
pub fn wavelength_to_wavenumber(wavelength: f64) -> Result<f64> {
    ensure_domain(wavelength.is_finite() && wavelength > 0.0, || {
        format!("wavelength must be positive, got {wavelength}")
    })?;
    Ok(TAU / wavelength)
}

/// `λ = 2π/k`.
pub fn wavenumber_to_wavelength(k: f64) -> Result<f64> {
    ensure_domain(k.is_finite() && k > 0.0, || format!("wavenumber must be positive, got {k}"))?;
    Ok(TAU / k)
}
