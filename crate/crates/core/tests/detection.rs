use biphoton::detection::acquire_stream;
use biphoton::rng::{substream, Stream};
use biphoton::spectral::wavelength_to_wavenumber;
use biphoton::{
    gate_count, generate_events, CoincidenceClass, DetectorModel, InterferometerGeometry, SourceRates, SpectralProfile,
    SpectralShape, TacConfig,
};

fn profile() -> SpectralProfile {
    SpectralProfile::from_wavelength(427e-9, 1e-4, SpectralShape::Gaussian).unwrap()
}

fn kp() -> f64 {
    wavelength_to_wavenumber(427e-9).unwrap()
}

fn clean_rates() -> SourceRates {
    SourceRates { pair_rate: 1e4, rc0: 200.0, singles_background: 0.0, unpaired_clicks: false }
}

#[test]
fn ideal_peaks_sit_at_delay_and_plus_minus_path_delay() {
    let g = InterferometerGeometry::default().at_pump_phase(kp(), std::f64::consts::FRAC_PI_2);
    let tac = TacConfig::default();
    let ideal = DetectorModel::ideal();
    let events = generate_events(&profile(), &g, &clean_rates(), 20.0, &mut substream(1, Stream::Events, 0)).unwrap();
    let hist = acquire_stream(&events, &ideal, &ideal, &tac, &mut substream(1, Stream::Detection, 0)).unwrap();
    let occupied: Vec<f64> =
        (0..hist.n_channels()).filter(|&i| hist.counts[i] > 0).map(|i| hist.bin_center(i)).collect();
    let d: f64 = 0.55 / 299_792_458.0;
    assert!((d - 1.834_602_523_589_836e-9).abs() < 1e-20);
    let targets = [tac.electrical_delay - d, tac.electrical_delay, tac.electrical_delay + d];
    // A target on a channel edge may split across the two adjacent channels.
    for t in &occupied {
        assert!(targets.iter().any(|want| (t - want).abs() <= hist.bin_width()), "stray bin at {t}");
    }
    for want in targets {
        assert!(occupied.iter().any(|t| (t - want).abs() <= hist.bin_width()), "no counts near {want}");
    }
}

#[test]
fn null_phase_empties_the_central_peak() {
    let g = InterferometerGeometry::default().at_pump_phase(kp(), 0.0);
    let tac = TacConfig::default();
    let ideal = DetectorModel::ideal();
    let events = generate_events(&profile(), &g, &clean_rates(), 50.0, &mut substream(2, Stream::Events, 0)).unwrap();
    assert_eq!(events.class_count(CoincidenceClass::Central), 0);
    let hist = acquire_stream(&events, &ideal, &ideal, &tac, &mut substream(2, Stream::Detection, 0)).unwrap();
    assert_eq!(gate_count(&hist, tac.electrical_delay, 1e-9).unwrap(), 0);
    let d = g.path_delay();
    let early = gate_count(&hist, tac.electrical_delay - d, 1e-9).unwrap() as f64;
    let late = gate_count(&hist, tac.electrical_delay + d, 1e-9).unwrap() as f64;
    assert!(early > 1000.0);
    assert!((early - late).abs() < 3.0 * (early + late).sqrt(), "{early} vs {late}");
}

#[test]
fn narrow_gate_counts_central_truth_exactly() {
    let tac = TacConfig::default();
    let ideal = DetectorModel::ideal();
    for (seed, phase) in [(3, 1.0), (4, 2.5), (5, 3.1)] {
        let g = InterferometerGeometry::default().at_pump_phase(kp(), phase);
        let events =
            generate_events(&profile(), &g, &clean_rates(), 10.0, &mut substream(seed, Stream::Events, 0)).unwrap();
        let hist = acquire_stream(&events, &ideal, &ideal, &tac, &mut substream(seed, Stream::Detection, 0)).unwrap();
        assert_eq!(
            gate_count(&hist, tac.electrical_delay, 1e-9).unwrap(),
            events.class_count(CoincidenceClass::Central)
        );
    }
}

#[test]
fn accidental_floor_matches_singles_product() {
    let g = InterferometerGeometry::default();
    let tac = TacConfig::default();
    let ideal = DetectorModel::ideal();
    let rate = 2e5;
    let rates = SourceRates { pair_rate: 0.0, rc0: 0.0, singles_background: rate, unpaired_clicks: true };
    let duration = 5.0;
    let events = generate_events(&profile(), &g, &rates, duration, &mut substream(6, Stream::Events, 0)).unwrap();
    let hist = acquire_stream(&events, &ideal, &ideal, &tac, &mut substream(6, Stream::Detection, 0)).unwrap();
    for width in [1e-9, 5e-9] {
        let n = gate_count(&hist, tac.electrical_delay, width).unwrap() as f64;
        let expected = rate * rate * width * duration;
        assert!((n - expected).abs() < 4.0 * expected.sqrt(), "width {width}: {n} vs {expected}");
    }
}

#[test]
fn no_sources_give_an_empty_histogram() {
    let rates = SourceRates { pair_rate: 0.0, rc0: 0.0, singles_background: 0.0, unpaired_clicks: true };
    let events = generate_events(
        &profile(),
        &InterferometerGeometry::default(),
        &rates,
        1.0,
        &mut substream(7, Stream::Events, 0),
    )
    .unwrap();
    let hist = acquire_stream(
        &events,
        &DetectorModel::default(),
        &DetectorModel::default(),
        &TacConfig::default(),
        &mut substream(7, Stream::Detection, 0),
    )
    .unwrap();
    assert_eq!(hist.total(), 0);
    assert!(hist.counts.iter().all(|&c| c == 0));
}
