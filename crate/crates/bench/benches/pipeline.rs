use std::hint::black_box;

use biphoton::analysis::{poisson_scan, scan_offsets};
use biphoton::detection::acquire_stream;
use biphoton::engines::residual_fringe;
use biphoton::rng::{substream, Stream};
use biphoton::{
    fit_visibility, generate_events, quantum_rate_narrow, DetectorModel, InterferometerGeometry, SourceRates,
    SpectralProfile, SpectralShape, TacConfig,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn profile() -> SpectralProfile {
    SpectralProfile::from_wavelength(427e-9, 1e-4, SpectralShape::Gaussian).unwrap()
}

fn quadrature(c: &mut Criterion) {
    let p = profile();
    let g = InterferometerGeometry::default();
    c.bench_function("residual_fringe_0.55m", |b| b.iter(|| residual_fringe(black_box(&p), black_box(&g)).unwrap()));
}

fn events(c: &mut Criterion) {
    let p = profile();
    let g = InterferometerGeometry::default();
    let rates = SourceRates::default();
    c.bench_function("generate_events_0.1s", |b| {
        let mut rng = substream(1, Stream::Events, 0);
        b.iter(|| generate_events(&p, &g, &rates, 0.1, &mut rng).unwrap())
    });
    let stream = generate_events(&p, &g, &rates, 0.1, &mut substream(2, Stream::Events, 0)).unwrap();
    let det = DetectorModel::default();
    let tac = TacConfig::default();
    c.bench_function("acquire_histogram_0.1s", |b| {
        let mut rng = substream(2, Stream::Detection, 0);
        b.iter(|| acquire_stream(&stream, &det, &det, &tac, &mut rng).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let p = profile();
    let rates = SourceRates::default();
    let offsets = scan_offsets(0.0, 2.0 * 427e-9, 24);
    let g = InterferometerGeometry::default();
    let model: Vec<f64> =
        offsets.iter().map(|&x| quantum_rate_narrow(&p, &g.with_offset(x), &rates).unwrap()).collect();
    let scan = poisson_scan(&offsets, &model, 2.0, 1e-9, 0.55, &mut substream(3, Stream::MonteCarlo, 0)).unwrap();
    c.bench_function("fit_visibility_locked", |b| b.iter(|| fit_visibility(black_box(&scan), Some(427e-9)).unwrap()));
    c.bench_function("fit_visibility_free", |b| b.iter(|| fit_visibility(black_box(&scan), None).unwrap()));
}

criterion_group!(benches, quadrature, events, fitting);
criterion_main!(benches);
