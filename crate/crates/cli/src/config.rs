//! Experiment configuration file.

use std::path::Path;

use biphoton::analysis::{offset_to_volts, scan_offsets, volts_to_offset};
use biphoton::{
    coherence_length, DetectorModel, InterferometerGeometry, PipelineConfig, PztCalibration, SourceRates,
    SpectralProfile, SpectralShape, TacConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Singles rate the background is tuned to reach when not given explicitly.
pub const DEFAULT_OBSERVED_SINGLES: f64 = 1.0e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Pump wavelength (m).
    pub pump_wavelength: f64,
    /// Single-photon coherence length `1/Δk` (m). Mutually exclusive with `delta_k`.
    pub coherence_length: Option<f64>,
    /// Spectral half-width `Δk` (rad/m).
    pub delta_k: Option<f64>,
    pub shape: SpectralShape,
    /// Acquisition time of the `histogram` command (s).
    pub duration: f64,
    pub seed: u64,
    /// Coincidence windows for `fringes` (ns).
    pub window_ns: Vec<f64>,
    /// Parallel chunks per acquisition.
    pub chunks: usize,
    /// Output directory; overridden by `--out`.
    pub output_dir: Option<String>,
    pub geometry: InterferometerGeometry,
    pub rates: RatesConfig,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    pub tac: TacConfig,
    pub scan: ScanConfig,
    pub pzt: PztCalibration,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pump_wavelength: 427e-9,
            coherence_length: None,
            delta_k: None,
            shape: SpectralShape::Gaussian,
            duration: 10.0,
            seed: 1,
            window_ns: vec![5.0, 1.0],
            chunks: 4,
            output_dir: None,
            geometry: InterferometerGeometry::default(),
            rates: RatesConfig::default(),
            detector_a: DetectorModel::default(),
            detector_b: DetectorModel::default(),
            tac: TacConfig::default(),
            scan: ScanConfig::default(),
            pzt: PztCalibration::default(),
            compare: CompareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    /// Generated pairs per second.
    pub pair_rate: f64,
    /// Coincidence normalisation (s⁻¹).
    pub rc0: f64,
    /// Background clicks per detector (s⁻¹); defaults to `1e4 − rc0`.
    pub singles_background: Option<f64>,
    pub unpaired_clicks: bool,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self { pair_rate: 1e5, rc0: 2e3, singles_background: None, unpaired_clicks: true }
    }
}

impl RatesConfig {
    pub fn resolve(&self) -> SourceRates {
        SourceRates {
            pair_rate: self.pair_rate,
            rc0: self.rc0,
            singles_background: self.singles_background.unwrap_or((DEFAULT_OBSERVED_SINGLES - self.rc0).max(0.0)),
            unpaired_clicks: self.unpaired_clicks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub points: usize,
    /// Scanned path-difference range (m); defaults to two pump wavelengths.
    pub span: Option<f64>,
    /// First offset (m).
    pub start: f64,
    /// Acquisition time per point (s).
    pub duration: f64,
    /// PZT voltages; when given they replace `points`/`span`.
    pub volts: Option<Vec<f64>>,
    /// Fit with the period fixed to the pump wavelength.
    pub lock_period: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { points: 24, span: None, start: 0.0, duration: 2.0, volts: None, lock_period: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Pump phases on `[0, 2π)`.
    pub phases: usize,
    pub mc_samples: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { phases: 8, mc_samples: 100_000 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
        }
    }

    pub fn profile(&self) -> Result<SpectralProfile, CliError> {
        let profile = match (self.coherence_length, self.delta_k) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either coherence_length or delta_k, not both".into()))
            }
            (None, Some(dk)) => SpectralProfile::new(
                biphoton::spectral::wavelength_to_wavenumber(self.pump_wavelength)?,
                dk,
                self.shape,
            )?,
            (ell, None) => SpectralProfile::from_wavelength(self.pump_wavelength, ell.unwrap_or(1e-4), self.shape)?,
        };
        Ok(profile)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let mut p = PipelineConfig::new(self.profile()?, self.geometry);
        p.rates = self.rates.resolve();
        p.detector_a = self.detector_a;
        p.detector_b = self.detector_b;
        p.tac = self.tac;
        p.chunks = self.chunks;
        Ok(p)
    }

    /// Cross-field checks. Returns warnings that do not stop a run.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let mut warnings = Vec::new();
        let profile = self.profile()?;
        self.geometry.validate()?;
        self.pipeline()?.validate()?;
        self.pzt.validate()?;
        if self.duration < 0.0 || self.scan.duration < 0.0 {
            return Err(CliError::Config("durations must be non-negative".into()));
        }
        if self.window_ns.iter().any(|w| w.is_nan() || *w <= 0.0) {
            return Err(CliError::Config("windows must be positive".into()));
        }
        let ell = coherence_length(&profile);
        if self.geometry.delta_l() < 100.0 * ell {
            warnings.push(format!(
                "ΔL = {:e} m is less than 100 coherence lengths ({:e} m); single-photon fringes will leak into the singles",
                self.geometry.delta_l(),
                100.0 * ell
            ));
        }
        Ok(warnings)
    }

    /// Scan offsets (m) and the PZT voltages they correspond to.
    pub fn scan_points(&self) -> (Vec<f64>, Vec<f64>) {
        let start = self.scan.start;
        match &self.scan.volts {
            Some(volts) => (volts.iter().map(|&v| start + volts_to_offset(v, &self.pzt)).collect(), volts.clone()),
            None => {
                let span = self.scan.span.unwrap_or(2.0 * self.pump_wavelength);
                let offsets = scan_offsets(start, span, self.scan.points);
                let volts = offsets.iter().map(|&x| offset_to_volts(x - start, &self.pzt)).collect();
                (offsets, volts)
            }
        }
    }

    /// Hex digest of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self { output_dir: None, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Effective configuration as TOML, with units.
    pub fn to_documented_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("config serialises");
        format!("{UNITS_HEADER}\n{body}")
    }
}

const UNITS_HEADER: &str = "\
# Units: lengths in m, times in s, rates in s⁻¹, delta_k in rad/m, windows in ns.
# coherence_length defaults to 1e-4 m when neither it nor delta_k is set.
# rates.singles_background defaults to 1e4 − rc0 when unset.
# scan.span defaults to two pump wavelengths; scan.volts overrides points/span.
# pzt.interpretation: \"path_difference\" or \"mirror_displacement\".";
