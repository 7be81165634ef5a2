//! Unbalanced Michelson interferometer with a short arm `S` and a long arm `L`.
//!
//! A photon entering the splitter leaves through port A or B after one of the
//! two arms. For a pair, the eight (A, B) coincidence terms are grouped by
//! their arrival-time signature: `(S,S)` and `(L,L)` arrive together and form
//! the central class, `(S,L)` and `(L,S)` arrive `±ΔL/c` apart.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{ensure_domain, Result};
use crate::numeric::{wrap, wrapped_phase, SPEED_OF_LIGHT};
use crate::spectral::WavenumberPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathLabel {
    S,
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    A,
    B,
}

/// Arm lengths and splitter parameters.
///
/// The long arm is `path_long_base + path_long_offset`; the offset is the fine
/// scan coordinate and enters every phase without being added to the metre
/// scale base first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferometerGeometry {
    pub path_short: f64,
    pub path_long_base: f64,
    pub path_long_offset: f64,
    /// Power transmittance `T` of the splitter.
    pub splitter_transmittance: f64,
    /// Scales every interference cross-term (1 = perfect mode matching).
    pub mode_overlap: f64,
}

impl Default for InterferometerGeometry {
    fn default() -> Self {
        Self::new(0.50, 1.05)
    }
}

impl InterferometerGeometry {
    /// Balanced splitter, perfect overlap, zero scan offset.
    pub fn new(path_short: f64, path_long_base: f64) -> Self {
        Self { path_short, path_long_base, path_long_offset: 0.0, splitter_transmittance: 0.5, mode_overlap: 1.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.path_long_offset = offset;
        self
    }

    pub fn with_transmittance(mut self, t: f64) -> Self {
        self.splitter_transmittance = t;
        self
    }

    pub fn with_mode_overlap(mut self, mu: f64) -> Self {
        self.mode_overlap = mu;
        self
    }

    /// Checks parameter ranges; `ΔL = 0` is accepted here.
    pub fn check_parameters(&self) -> Result<()> {
        ensure_domain(
            self.path_short.is_finite()
                && self.path_long_base.is_finite()
                && self.path_long_offset.is_finite()
                && self.path_short >= 0.0,
            || format!("path lengths must be finite and non-negative: {self:?}"),
        )?;
        ensure_domain(self.splitter_transmittance > 0.0 && self.splitter_transmittance < 1.0, || {
            format!("transmittance {} outside (0, 1)", self.splitter_transmittance)
        })?;
        ensure_domain((0.0..=1.0).contains(&self.mode_overlap), || {
            format!("mode overlap {} outside [0, 1]", self.mode_overlap)
        })?;
        ensure_domain(self.delta_l() >= 0.0, || format!("long arm shorter than short arm (ΔL = {})", self.delta_l()))
    }

    /// Full validity check: parameters in range and `L > S`.
    pub fn validate(&self) -> Result<()> {
        self.check_parameters()?;
        ensure_domain(self.delta_l() > 0.0, || "degenerate interferometer: ΔL must be positive".to_string())
    }

    /// `L_base − S`, the part of ΔL that does not move during a scan.
    pub fn coarse_difference(&self) -> f64 {
        self.path_long_base - self.path_short
    }

    /// `ΔL = (L_base + δ) − S`.
    pub fn delta_l(&self) -> f64 {
        self.coarse_difference() + self.path_long_offset
    }

    /// Arrival-time difference `ΔL/c` between the arms.
    pub fn path_delay(&self) -> f64 {
        self.delta_l() / SPEED_OF_LIGHT
    }

    /// `k·ΔL` reduced to `[-π, π]`, with the coarse and fine lengths reduced
    /// separately.
    pub fn phase(&self, k: f64) -> f64 {
        wrap(wrapped_phase(k, self.coarse_difference()) + wrapped_phase(k, self.path_long_offset))
    }

    /// Propagation phase `k·l` through one arm, reduced to `[-π, π]`.
    pub fn arm_phase(&self, k: f64, path: PathLabel) -> f64 {
        let short = wrapped_phase(k, self.path_short);
        match path {
            PathLabel::S => short,
            PathLabel::L => wrap(short + self.phase(k)),
        }
    }

    /// Transit time through one arm.
    pub fn arm_time(&self, path: PathLabel) -> f64 {
        match path {
            PathLabel::S => self.path_short / SPEED_OF_LIGHT,
            PathLabel::L => (self.path_short + self.delta_l()) / SPEED_OF_LIGHT,
        }
    }

    /// Moves the scan offset to the smallest non-negative value that puts the
    /// pump phase `k_p·ΔL` at `target` (mod 2π).
    pub fn at_pump_phase(&self, k_pump: f64, target: f64) -> Self {
        let coarse = wrapped_phase(k_pump, self.coarse_difference());
        let needed = (target - coarse).rem_euclid(TAU);
        self.with_offset(needed / k_pump)
    }
}

/// `ΔL` of a geometry.
pub fn delta_l(geometry: &InterferometerGeometry) -> f64 {
    geometry.delta_l()
}

/// Single-photon amplitudes to reach each detector through each arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorAmplitudes {
    pub a_short: Complex64,
    pub a_long: Complex64,
    pub b_short: Complex64,
    pub b_long: Complex64,
}

impl DetectorAmplitudes {
    pub fn get(&self, detector: Detector, path: PathLabel) -> Complex64 {
        match (detector, path) {
            (Detector::A, PathLabel::S) => self.a_short,
            (Detector::A, PathLabel::L) => self.a_long,
            (Detector::B, PathLabel::S) => self.b_short,
            (Detector::B, PathLabel::L) => self.b_long,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.a_short.norm_sqr() + self.a_long.norm_sqr() + self.b_short.norm_sqr() + self.b_long.norm_sqr()
    }
}

/// Real path factors `[A·S, A·L, B·S, B·L]` of a lossless symmetric splitter
/// with transmittance `T`, traversed twice.
///
/// With `t = √T`, `r = i√(1−T)`: port A collects `t·r` (either arm) and port B
/// collects `t·t` via S and `r·r = −(1−T)` via L. The common factor `i` on
/// port A is dropped, which reproduces `(½, ½, ½, −½)` at `T = ½`.
pub fn splitter_factors(transmittance: f64) -> [f64; 4] {
    let t = transmittance;
    let cross = (t * (1.0 - t)).sqrt();
    [cross, cross, t, -(1.0 - t)]
}

pub fn detector_amplitudes(k: f64, geometry: &InterferometerGeometry) -> DetectorAmplitudes {
    let [a_s, a_l, b_s, b_l] = splitter_factors(geometry.splitter_transmittance);
    let short = Complex64::from_polar(1.0, geometry.arm_phase(k, PathLabel::S));
    let long = Complex64::from_polar(1.0, geometry.arm_phase(k, PathLabel::L));
    DetectorAmplitudes { a_short: short * a_s, a_long: long * a_l, b_short: short * b_s, b_long: long * b_l }
}

/// One of the eight (A, B) terms of the post-interferometer pair state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceTerm {
    pub path_at_a: PathLabel,
    pub path_at_b: PathLabel,
    pub k_at_a: f64,
    pub k_at_b: f64,
    pub amplitude: Complex64,
}

impl CoincidenceTerm {
    pub fn class(&self) -> CoincidenceClass {
        match (self.path_at_a, self.path_at_b) {
            (PathLabel::S, PathLabel::S) | (PathLabel::L, PathLabel::L) => CoincidenceClass::Central,
            (PathLabel::S, PathLabel::L) => CoincidenceClass::ShortLong,
            (PathLabel::L, PathLabel::S) => CoincidenceClass::LongShort,
        }
    }
}

const PATH_ORDER: [(PathLabel, PathLabel); 4] = [
    (PathLabel::S, PathLabel::S),
    (PathLabel::L, PathLabel::L),
    (PathLabel::S, PathLabel::L),
    (PathLabel::L, PathLabel::S),
];

/// Enumerates the eight coincidence terms: first with `k₁` at A, then with
/// `k₂` at A, each in the order `(S,S), (L,L), (S,L), (L,S)`.
pub fn coincidence_terms(pair: &WavenumberPair, geometry: &InterferometerGeometry) -> [CoincidenceTerm; 8] {
    let amp1 = detector_amplitudes(pair.k1(), geometry);
    let amp2 = detector_amplitudes(pair.k2(), geometry);
    let modes = [(pair.k1(), &amp1, pair.k2(), &amp2), (pair.k2(), &amp2, pair.k1(), &amp1)];
    std::array::from_fn(|i| {
        let (k_a, amp_a, k_b, amp_b) = modes[i / 4];
        let (x, y) = PATH_ORDER[i % 4];
        CoincidenceTerm {
            path_at_a: x,
            path_at_b: y,
            k_at_a: k_a,
            k_at_b: k_b,
            amplitude: amp_a.get(Detector::A, x) * amp_b.get(Detector::B, y),
        }
    })
}

/// Arrival-time signature of a coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceClass {
    /// `(S,S)` or `(L,L)`: both photons arrive together.
    Central,
    /// A via S, B via L: `t_B − t_A = +ΔL/c`.
    ShortLong,
    /// A via L, B via S: `t_B − t_A = −ΔL/c`.
    LongShort,
}

impl CoincidenceClass {
    pub const ALL: [CoincidenceClass; 3] = [Self::Central, Self::ShortLong, Self::LongShort];

    /// Stop-minus-start delay `t_B − t_A`.
    pub fn time_offset(self, geometry: &InterferometerGeometry) -> f64 {
        match self {
            Self::Central => 0.0,
            Self::ShortLong => geometry.path_delay(),
            Self::LongShort => -geometry.path_delay(),
        }
    }

    /// Arm transit times `(t_A, t_B)` relative to emission. The central class
    /// is reported on the short-arm timing.
    pub fn arrival_times(self, geometry: &InterferometerGeometry) -> (f64, f64) {
        let s = geometry.arm_time(PathLabel::S);
        let l = geometry.arm_time(PathLabel::L);
        match self {
            Self::Central => (s, s),
            Self::ShortLong => (s, l),
            Self::LongShort => (l, s),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Central => "central",
            Self::ShortLong => "short_long",
            Self::LongShort => "long_short",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassProbabilities {
    pub central: f64,
    pub short_long: f64,
    pub long_short: f64,
}

impl ClassProbabilities {
    pub fn get(&self, class: CoincidenceClass) -> f64 {
        match class {
            CoincidenceClass::Central => self.central,
            CoincidenceClass::ShortLong => self.short_long,
            CoincidenceClass::LongShort => self.long_short,
        }
    }

    pub fn sides(&self) -> f64 {
        self.short_long + self.long_short
    }

    pub fn total(&self) -> f64 {
        self.central + self.sides()
    }
}

/// Coincidence probabilities per arrival-time class for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceClassSet {
    pub probabilities: ClassProbabilities,
    /// `(t_A, t_B)` per class, in the order of [`CoincidenceClass::ALL`].
    pub time_signatures: [(f64, f64); 3],
}

/// Groups the eight terms by arrival-time class.
///
/// Terms with the same photon at A are the same two-mode state and add
/// coherently; the two photon assignments are orthogonal. Within a mode the
/// `(S,S)/(L,L)` cross-term belongs to the central class. The `(S,L)/(L,S)`
/// cross-term carries the residual `cos((k₁−k₂)ΔL)` fringe and is shared
/// between the side classes in proportion to their direct weights, which
/// keeps each class non-negative. Every cross-term is scaled by the mode
/// overlap `μ`.
pub fn coincidence_classes(pair: &WavenumberPair, geometry: &InterferometerGeometry) -> CoincidenceClassSet {
    let terms = coincidence_terms(pair, geometry);
    let mu = geometry.mode_overlap;
    let mut p = ClassProbabilities::default();
    for mode in terms.chunks_exact(4) {
        let [ss, ll, sl, ls] = [mode[0].amplitude, mode[1].amplitude, mode[2].amplitude, mode[3].amplitude];
        p.central += ss.norm_sqr() + ll.norm_sqr() + 2.0 * mu * (ss * ll.conj()).re;

        let (w_sl, w_ls) = (sl.norm_sqr(), ls.norm_sqr());
        let cross = 2.0 * mu * (sl * ls.conj()).re;
        let share = if w_sl + w_ls > 0.0 { w_sl / (w_sl + w_ls) } else { 0.5 };
        p.short_long += w_sl + share * cross;
        p.long_short += w_ls + (1.0 - share) * cross;
    }
    // Roundoff can leave −1e-17 at an exact null.
    p.central = p.central.max(0.0);
    p.short_long = p.short_long.max(0.0);
    p.long_short = p.long_short.max(0.0);
    CoincidenceClassSet { probabilities: p, time_signatures: CoincidenceClass::ALL.map(|c| c.arrival_times(geometry)) }
}

/// Largest per-pair coincidence probability any phase can produce.
pub fn max_coincidence_probability(geometry: &InterferometerGeometry) -> f64 {
    let [a_s, a_l, b_s, b_l] = splitter_factors(geometry.splitter_transmittance).map(f64::abs);
    let mu = geometry.mode_overlap;
    let bound = |x: f64, y: f64| x * x + y * y + 2.0 * mu * x * y;
    2.0 * (bound(a_s * b_s, a_l * b_l) + bound(a_s * b_l, a_l * b_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::wavelength_to_wavenumber;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn kp() -> f64 {
        wavelength_to_wavenumber(427e-9).unwrap()
    }

    #[test]
    fn delta_l_examples() {
        let g = InterferometerGeometry::new(0.50, 1.05);
        assert!((g.delta_l() - 0.55).abs() < 1e-15);
        let g = g.with_offset(100e-9);
        assert!((g.delta_l() - g.coarse_difference() - 100e-9).abs() < 2e-16);
        assert!((g.delta_l() - 0.550_000_1).abs() < 1e-15);
        let flat = InterferometerGeometry::new(0.5, 0.5);
        assert_eq!(delta_l(&flat), 0.0);
        assert!(flat.check_parameters().is_ok());
        assert!(flat.validate().is_err());
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        let g = InterferometerGeometry::default();
        assert!(g.with_transmittance(0.0).validate().is_err());
        assert!(g.with_transmittance(1.0).validate().is_err());
        assert!(g.with_mode_overlap(1.2).validate().is_err());
        assert!(g.with_mode_overlap(-0.1).validate().is_err());
        assert!(InterferometerGeometry::new(1.0, 0.5).check_parameters().is_err());
    }

    #[test]
    fn balanced_amplitudes_follow_sign_pattern() {
        let g = InterferometerGeometry::default();
        let amp = detector_amplitudes(7.3e6, &g);
        for a in [amp.a_short, amp.a_long, amp.b_short, amp.b_long] {
            assert!((a.norm() - 0.5).abs() < 1e-15);
        }
        // (B,L) carries the opposite sign relative to (A,L).
        assert!((amp.b_long + amp.a_long).norm() < 1e-15);
        assert!((amp.b_short - amp.a_short).norm() < 1e-15);
    }

    #[test]
    fn amplitudes_equal_at_integer_fringe() {
        let g = InterferometerGeometry::default().at_pump_phase(kp(), 0.0);
        let k = kp();
        let amp = detector_amplitudes(k, &g);
        // e^{ikS} and e^{ikL} evaluated directly from the wrapped phases.
        assert!(g.phase(k).abs() < 1e-12);
        assert!((amp.a_short - amp.a_long).norm() < 1e-12);
    }

    #[test]
    fn pump_phase_targeting() {
        let g = InterferometerGeometry::default();
        for target in [0.0, 0.5, PI / 2.0, PI, -2.0] {
            let h = g.at_pump_phase(kp(), target);
            assert!(h.path_long_offset >= 0.0 && h.path_long_offset < 427e-9);
            assert!(wrap(h.phase(kp()) - target).abs() < 1e-13);
        }
    }

    #[test]
    fn central_class_vanishes_at_zero_pump_phase() {
        let g = InterferometerGeometry::default().at_pump_phase(kp(), 0.0);
        let pair = WavenumberPair::new(kp(), 0.5 * kp() + 1234.5);
        let set = coincidence_classes(&pair, &g);
        assert!(set.probabilities.central < 1e-24);
        let g = g.at_pump_phase(kp(), PI);
        let set = coincidence_classes(&pair, &g);
        assert!((set.probabilities.central - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_makes_central_class_incoherent() {
        let pair = WavenumberPair::new(kp(), 0.5 * kp() - 777.0);
        for phase in [0.0, 1.0, PI] {
            let g = InterferometerGeometry::default().with_mode_overlap(0.0).at_pump_phase(kp(), phase);
            let terms = coincidence_terms(&pair, &g);
            let incoherent: f64 =
                terms.iter().filter(|t| t.class() == CoincidenceClass::Central).map(|t| t.amplitude.norm_sqr()).sum();
            let set = coincidence_classes(&pair, &g);
            assert!((set.probabilities.central - incoherent).abs() < 1e-15);
            assert!((set.probabilities.central - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn time_signatures() {
        let g = InterferometerGeometry::default();
        let d = g.path_delay();
        assert_eq!(CoincidenceClass::Central.time_offset(&g), 0.0);
        assert_eq!(CoincidenceClass::ShortLong.time_offset(&g), d);
        assert_eq!(CoincidenceClass::LongShort.time_offset(&g), -d);
        for c in CoincidenceClass::ALL {
            let (ta, tb) = c.arrival_times(&g);
            assert!((tb - ta - c.time_offset(&g)).abs() < 1e-20);
        }
        // 0.55 m / c, independent evaluation.
        assert!((d - 1.834_602_523_589_836e-9).abs() < 1e-21);
    }

    #[test]
    fn balanced_bound_is_unity() {
        assert!((max_coincidence_probability(&InterferometerGeometry::default()) - 1.0).abs() < 1e-15);
    }

    // Norm of the eight-term state with every same-mode term added coherently,
    // compared against ½[1 − ½cos k_pΔL − ½cos((k_p − 2k₁)ΔL)].
    fn full_state_norm(terms: &[CoincidenceTerm; 8]) -> f64 {
        terms.chunks_exact(4).map(|m| m.iter().map(|t| t.amplitude).sum::<Complex64>().norm_sqr()).sum()
    }

    proptest! {
        #[test]
        fn unitarity(t in 0.001f64..0.999, k in 1e5f64..1e8, off in 0f64..1e-6) {
            let g = InterferometerGeometry::default().with_transmittance(t).with_offset(off);
            let amp = detector_amplitudes(k, &g);
            prop_assert!((amp.total_probability() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn eight_terms_reproduce_wide_window_bracket(
            detune in -6e4f64..6e4,
            off in 0f64..1e-6,
            base in 0.5f64..1.5,
        ) {
            let k_p = kp();
            let g = InterferometerGeometry::new(0.5, base).with_offset(off);
            let pair = WavenumberPair::new(k_p, 0.5 * k_p + detune);
            let terms = coincidence_terms(&pair, &g);
            let bracket = 1.0 - 0.5 * g.phase(k_p).cos() - 0.5 * g.phase(pair.k2() - pair.k1()).cos();
            prop_assert!((full_state_norm(&terms) - 0.5 * bracket).abs() < 1e-12);
            let set = coincidence_classes(&pair, &g);
            prop_assert!((set.probabilities.total() - 0.5 * bracket).abs() < 1e-12);
        }

        #[test]
        fn exchange_symmetry(
            detune in -6e4f64..6e4,
            off in 0f64..1e-6,
            t in 0.05f64..0.95,
            mu in 0f64..1.0,
        ) {
            let k_p = kp();
            let g = InterferometerGeometry::default().with_offset(off).with_transmittance(t).with_mode_overlap(mu);
            let pair = WavenumberPair::new(k_p, 0.5 * k_p + detune);
            let a = coincidence_classes(&pair, &g).probabilities;
            let b = coincidence_classes(&pair.swapped(), &g).probabilities;
            prop_assert!((a.central - b.central).abs() < 1e-12);
            prop_assert!((a.short_long - b.short_long).abs() < 1e-12);
            prop_assert!((a.long_short - b.long_short).abs() < 1e-12);
        }

        #[test]
        fn class_probabilities_bounded(
            detune in -6e4f64..6e4,
            off in 0f64..1e-6,
            t in 0.01f64..0.99,
            mu in 0f64..1.0,
        ) {
            let k_p = kp();
            let g = InterferometerGeometry::default().with_offset(off).with_transmittance(t).with_mode_overlap(mu);
            let pair = WavenumberPair::new(k_p, 0.5 * k_p + detune);
            let p = coincidence_classes(&pair, &g).probabilities;
            for c in CoincidenceClass::ALL {
                prop_assert!((0.0..=1.0).contains(&p.get(c)));
            }
            prop_assert!(p.total() <= max_coincidence_probability(&g) + 1e-12);
            let terms = coincidence_terms(&pair, &g);
            if (t - 0.5).abs() < 1e-12 {
                for term in terms {
                    prop_assert!((term.amplitude.norm() - 0.25).abs() < 1e-15);
                }
            }
        }
    }
}
