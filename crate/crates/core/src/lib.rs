//! Simulation and analysis of time-windowed two-photon interference in an
//! unbalanced Michelson interferometer fed by parametric down-conversion.
//!
//! The pipeline runs from the biphoton spectrum ([`spectral`]) through the
//! interferometer ([`interferometer`]) and the rate engines and event generator
//! ([`engines`]) to detectors and the TAC histogram ([`detection`]), ending in
//! fringe fitting and the classical-bound verdict ([`analysis`]).

pub mod analysis;
pub mod detection;
pub mod engines;
pub mod error;
pub mod interferometer;
pub mod numeric;
pub mod rng;
pub mod spectral;

pub use analysis::{
    acquire_scan, classify_regime, fit_visibility, run_fringe_scan, volts_to_offset, FringeScan, PipelineConfig,
    PztCalibration, PztInterpretation, Regime, ScanCorpus, ScanPoint, Verdict, VisibilityReport,
};
pub use detection::{acquire_histogram, fit_peaks, gate_count, DetectorModel, PeakFit, TacConfig, TacHistogram};
pub use engines::{
    classical_monte_carlo, classical_rate, classical_rate_limit, generate_events, quantum_rate_narrow,
    quantum_rate_wide, Click, Estimate, EventStream, PairEvent, PairOutcome, SourceRates, TruthClass,
};
pub use error::{Error, Result};
pub use interferometer::{
    coincidence_classes, detector_amplitudes, ClassProbabilities, CoincidenceClass, CoincidenceClassSet,
    CoincidenceTerm, Detector, InterferometerGeometry, PathLabel,
};
pub use numeric::SPEED_OF_LIGHT;
pub use rng::SimRng;
pub use spectral::{coherence_length, SpectralProfile, SpectralShape, WavenumberPair};
