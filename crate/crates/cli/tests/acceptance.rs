//! Acceptance suite. Runs every criterion, prints one line each, and fails
//! the target if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use biphoton::engines::{mean_class_probabilities, residual_fringe, visibility, EventGenerator};
use biphoton::rng::{substream, Stream};
use biphoton::{
    acquire_scan, classical_monte_carlo, classical_rate, classical_rate_limit, coherence_length, fit_peaks,
    fit_visibility, quantum_rate_narrow, quantum_rate_wide, CoincidenceClass, InterferometerGeometry, ScanCorpus,
    SourceRates, SpectralProfile, SpectralShape, TacHistogram, SPEED_OF_LIGHT,
};
use biphoton_cli::ExperimentConfig;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("committed config parses")
}

fn chi2_p(chi2: f64, dof: f64) -> f64 {
    1.0 - ChiSquared::new(dof).unwrap().cdf(chi2)
}

fn profile() -> SpectralProfile {
    SpectralProfile::from_wavelength(427e-9, 1e-4, SpectralShape::Gaussian).unwrap()
}

fn corpus_for(cfg: &ExperimentConfig) -> ScanCorpus {
    let pipeline = cfg.pipeline().unwrap();
    let (offsets, volts) = cfg.scan_points();
    acquire_scan(&pipeline, &offsets, Some(&volts), cfg.scan.duration, cfg.seed).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = profile();
    let r = SourceRates::default();
    let g = InterferometerGeometry::default();
    let at = |g: &InterferometerGeometry, phase: f64| g.at_pump_phase(p.k_pump(), phase);

    let v_narrow = visibility(
        quantum_rate_narrow(&p, &at(&g, PI), &r).map_err(|e| e.to_string())?,
        quantum_rate_narrow(&p, &at(&g, 0.0), &r).map_err(|e| e.to_string())?,
    );
    check((v_narrow - 1.0).abs() < 1e-9, format!("narrow V = {v_narrow}"))?;

    let g100 = InterferometerGeometry::new(0.5, 0.5 + 100.0 * coherence_length(&p));
    let v_wide = visibility(
        quantum_rate_wide(&p, &at(&g100, PI), &r).map_err(|e| e.to_string())?,
        quantum_rate_wide(&p, &at(&g100, 0.0), &r).map_err(|e| e.to_string())?,
    );
    check((v_wide - 0.5).abs() < 1e-6, format!("wide V = {v_wide}"))?;

    let v_classical = visibility(classical_rate_limit(&p, &at(&g, PI), &r), classical_rate_limit(&p, &at(&g, 0.0), &r));
    check(v_classical == 0.5, format!("classical closed-form V = {v_classical}"))?;
    let v_classical_full = visibility(
        classical_rate(&p, &at(&g, PI), &r).map_err(|e| e.to_string())?,
        classical_rate(&p, &at(&g, 0.0), &r).map_err(|e| e.to_string())?,
    );
    check((v_classical_full - 0.5).abs() < 1e-12, format!("classical V with all averages = {v_classical_full}"))?;

    let elapsed = start.elapsed().as_secs_f64();
    check(elapsed < 1.0, format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "V_narrow = {v_narrow:.12}, V_wide(100 l_coh) = {v_wide:.9}, V_classical = {v_classical} ({elapsed:.3} s)"
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = profile();
    let ell = coherence_length(&p);
    let mut worst: f64 = 0.0;
    for multiple in [10.0, 12.5, 20.0, 100.0] {
        for offset in [0.0, 1.3e-7] {
            let g = InterferometerGeometry::new(0.5, 0.5 + multiple * ell).with_offset(offset);
            worst = worst.max(residual_fringe(&p, &g).map_err(|e| e.to_string())?.abs());
        }
    }
    let long = residual_fringe(&p, &InterferometerGeometry::default()).map_err(|e| e.to_string())?;
    worst = worst.max(long.abs());
    check(worst < 1e-6, format!("|residual| = {worst:e} at ΔL ≥ 10 l_coh"))?;
    let zero = residual_fringe(&p, &InterferometerGeometry::new(0.5, 0.5)).map_err(|e| e.to_string())?;
    check((zero - 1.0).abs() < 1e-9, format!("residual at ΔL = 0 is {zero}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    check(elapsed < 1.0, format!("took {elapsed:.2} s"))?;
    Ok(format!("max |residual| (ΔL ≥ 10 l_coh) = {worst:.2e}, residual(0) = {zero:.12} ({elapsed:.3} s)"))
}

fn criterion_3() -> Outcome {
    let cfg = load("ideal.toml");
    let start = Instant::now();
    let pipeline = cfg.pipeline().map_err(|e| e.to_string())?;
    let (offsets, _) = cfg.scan_points();
    check(offsets.len() == 24, format!("{} scan points", offsets.len()))?;
    let expected_per_point = offsets
        .iter()
        .map(|&x| quantum_rate_wide(&pipeline.profile, &pipeline.geometry.with_offset(x), &pipeline.rates).unwrap())
        .sum::<f64>()
        / offsets.len() as f64
        * cfg.scan.duration;
    let corpus = corpus_for(&cfg);
    let narrow = fit_visibility(&corpus.gate(1e-9).map_err(|e| e.to_string())?, Some(cfg.pump_wavelength))
        .map_err(|e| e.to_string())?;
    let wide = fit_visibility(&corpus.gate(5e-9).map_err(|e| e.to_string())?, Some(cfg.pump_wavelength))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = format!(
        "V(1 ns) = {:.3} ± {:.3}, V(5 ns) = {:.3} ± {:.3}, {expected_per_point:.0} expected coincidences/point ({elapsed:.1} s)",
        narrow.visibility, narrow.visibility_sigma, wide.visibility, wide.visibility_sigma
    );
    check((1500.0..=2500.0).contains(&expected_per_point), format!("{summary}: counts/point off target"))?;
    check(narrow.visibility - wide.visibility > 0.25, format!("{summary}: difference too small"))?;
    check(narrow.visibility >= 0.95, format!("{summary}: narrow below 0.95"))?;
    check(wide.consistent_with(0.45, 0.55, 3.0), format!("{summary}: wide outside [0.45, 0.55] at 3σ"))?;
    check(elapsed < 60.0, format!("{summary}: over 60 s"))?;
    Ok(summary)
}

fn criterion_4() -> Outcome {
    let cfg = load("experiment.toml");
    let corpus = corpus_for(&cfg);
    let narrow = fit_visibility(&corpus.gate(1e-9).map_err(|e| e.to_string())?, Some(cfg.pump_wavelength))
        .map_err(|e| e.to_string())?;
    let wide = fit_visibility(&corpus.gate(5e-9).map_err(|e| e.to_string())?, Some(cfg.pump_wavelength))
        .map_err(|e| e.to_string())?;
    let summary = format!(
        "configs/experiment.toml (μ = {}, background = {} s⁻¹): V_narrow = {:.3} ± {:.3}, V_wide = {:.3} ± {:.3}",
        cfg.geometry.mode_overlap,
        cfg.rates.resolve().singles_background,
        narrow.visibility,
        narrow.visibility_sigma,
        wide.visibility,
        wide.visibility_sigma
    );
    check((0.70..=0.90).contains(&narrow.visibility), format!("{summary}: narrow outside [0.70, 0.90]"))?;
    check((0.31..=0.51).contains(&wide.visibility), format!("{summary}: wide outside [0.31, 0.51]"))?;
    Ok(summary)
}

fn summed(histograms: &[TacHistogram]) -> TacHistogram {
    // Independent acquisitions at different phases; summing bins is a phase
    // average, not a merge of chunks from one stream.
    let mut total = histograms[0].clone();
    for h in &histograms[1..] {
        for (a, b) in total.counts.iter_mut().zip(&h.counts) {
            *a += b;
        }
        total.duration += h.duration;
    }
    total
}

fn criterion_5(corpus: &ScanCorpus, cfg: &ExperimentConfig) -> Outcome {
    let d = cfg.geometry.delta_l() / SPEED_OF_LIGHT;
    let delay = cfg.tac.electrical_delay;
    let width = cfg.detector_a.timing_jitter_sigma.hypot(cfg.detector_b.timing_jitter_sigma);
    let centres = [delay - d, delay, delay + d];

    let average = summed(&corpus.histograms);
    let peaks = fit_peaks(&average, &centres, width).map_err(|e| e.to_string())?;
    let mut sep_ok = true;
    let mut seps = Vec::new();
    for pair in peaks.windows(2) {
        let sep = pair[1].centroid - pair[0].centroid;
        let sigma = pair[0].centroid_sigma.hypot(pair[1].centroid_sigma);
        sep_ok &= (sep - d).abs() <= 3.0 * sigma;
        seps.push(format!("{:.4} ± {:.4}", sep * 1e9, sigma * 1e9));
    }
    check(sep_ok, format!("separations {seps:?} ns vs ΔL/c = {:.4} ns", d * 1e9))?;

    let central = peaks[1].area;
    let sides = peaks[0].area + peaks[2].area;
    let sigma = (peaks[1].area_sigma.powi(2) + peaks[0].area_sigma.powi(2) + peaks[2].area_sigma.powi(2)).sqrt();
    check(
        (central - sides).abs() <= 3.0 * sigma,
        format!("phase-averaged central {central:.0} vs sides {sides:.0} (σ = {sigma:.0})"),
    )?;

    let mut p_values = Vec::new();
    for side in [0, 2] {
        let fits: Vec<_> = corpus
            .histograms
            .iter()
            .map(|h| fit_peaks(h, &centres, width).map(|p| p[side]))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let w: Vec<f64> = fits.iter().map(|f| 1.0 / f.area_sigma.powi(2)).collect();
        let mean = fits.iter().zip(&w).map(|(f, w)| f.area * w).sum::<f64>() / w.iter().sum::<f64>();
        let chi2: f64 = fits.iter().zip(&w).map(|(f, w)| (f.area - mean).powi(2) * w).sum();
        p_values.push(chi2_p(chi2, (fits.len() - 1) as f64));
    }
    check(p_values.iter().all(|&p| p > 1e-3), format!("side flatness p-values {p_values:?}"))?;
    Ok(format!(
        "separations {seps:?} ns (ΔL/c = {:.4} ns); central {central:.0} vs sides {sides:.0} ± {sigma:.0}; side flatness p = {:.3}, {:.3}",
        d * 1e9,
        p_values[0],
        p_values[1]
    ))
}

fn criterion_6(corpus: &ScanCorpus) -> Outcome {
    let mut parts = Vec::new();
    type Singles = fn(&TacHistogram) -> u64;
    let channels: [(&str, Singles); 2] = [("A", |h| h.singles_a), ("B", |h| h.singles_b)];
    for (name, get) in channels {
        let counts: Vec<f64> = corpus.histograms.iter().map(|h| get(h) as f64).collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|c| (c - mean).powi(2) / mean).sum();
        let p = chi2_p(chi2, (counts.len() - 1) as f64);
        let rate = mean / corpus.histograms[0].duration;
        check(p > 1e-3, format!("detector {name}: singles χ² = {chi2:.1}, p = {p:.2e}"))?;
        parts.push(format!("{name}: {rate:.0} s⁻¹, p = {p:.3}"));
    }
    Ok(parts.join("; "))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let p = profile();
    let ell = coherence_length(&p);
    let cases = [
        (InterferometerGeometry::default().at_pump_phase(p.k_pump(), 1.0), 31u64),
        (
            InterferometerGeometry::new(0.5, 0.5 + 0.8 * ell)
                .with_transmittance(0.4)
                .with_mode_overlap(0.8)
                .with_offset(90e-9),
            32,
        ),
    ];
    let mut lines = Vec::new();
    for (g, seed) in cases {
        let rates = SourceRates { pair_rate: 1e6, rc0: 4e5, singles_background: 0.0, unpaired_clicks: false };
        let generator = EventGenerator::new(&p, &g, &rates).map_err(|e| e.to_string())?;
        let stream =
            generator.generate(0.0, 1.0, &mut substream(seed, Stream::MonteCarlo, 0)).map_err(|e| e.to_string())?;
        let n = stream.pair_count as f64;
        let eta = generator.coincidence_scale();
        let mean = mean_class_probabilities(&p, &g).map_err(|e| e.to_string())?;
        let mut chi2 = 0.0;
        let mut accounted = 0.0;
        for class in CoincidenceClass::ALL {
            let expected = n * eta * mean.get(class);
            accounted += expected;
            chi2 += (stream.class_count(class) as f64 - expected).powi(2) / expected;
        }
        let none = n - stream.pairs.len() as f64;
        chi2 += (none - (n - accounted)).powi(2) / (n - accounted);
        let pv = chi2_p(chi2, 3.0);
        check(pv > 1e-3, format!("class χ² = {chi2:.2} (p = {pv:.2e}) over {n} pairs"))?;
        lines.push(format!("classes p = {pv:.3} ({n:.0} pairs)"));
    }
    let mut worst_pull: f64 = 0.0;
    for (i, g) in [
        InterferometerGeometry::default().at_pump_phase(p.k_pump(), 0.0),
        InterferometerGeometry::default().at_pump_phase(p.k_pump(), 2.0),
        InterferometerGeometry::new(0.5, 0.5 + 1.5 * ell).with_offset(40e-9),
    ]
    .iter()
    .enumerate()
    {
        let est = classical_monte_carlo(&p, g, 1_000_000, &mut substream(40 + i as u64, Stream::MonteCarlo, 0))
            .map_err(|e| e.to_string())?;
        let exact = biphoton::engines::classical_correlation(&p, g).map_err(|e| e.to_string())?;
        worst_pull = worst_pull.max(est.pull(exact).abs());
    }
    check(worst_pull < 4.0, format!("classical MC pull {worst_pull:.2}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    check(elapsed < 30.0, format!("took {elapsed:.1} s"))?;
    lines.push(format!("classical MC max |pull| = {worst_pull:.2} ({elapsed:.1} s)"));
    Ok(lines.join("; "))
}

fn run_binary(config: &Path, out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--seed")
        .arg("17")
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))
}

fn criterion_8() -> Outcome {
    let root = std::env::temp_dir().join(format!("biphoton-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let config = root.join("run.toml");
    std::fs::write(&config, "duration = 2.0\nchunks = 3\n[scan]\nduration = 0.25\n[compare]\nmc_samples = 20000\n")
        .map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let out = root.join(run);
        for cmd in [&["histogram"][..], &["fringes", "--window", "5", "--window", "1"], &["compare"]] {
            run_binary(&config, &out, cmd)?;
        }
    }
    let mut names: Vec<_> =
        std::fs::read_dir(root.join("a")).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    check(names.len() == 7, format!("expected 7 outputs, found {names:?}"))?;
    for name in &names {
        let a = std::fs::read(root.join("a").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(root.join("b").join(name)).map_err(|e| e.to_string())?;
        check(a == b, format!("{} differs between runs", name.to_string_lossy()))?;
    }
    std::fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
    Ok(format!("{} output files byte-identical across two runs", names.len()))
}

fn main() {
    let default_cfg = ExperimentConfig::default();
    let mut results: Vec<(u32, Outcome)> =
        vec![(1, criterion_1()), (2, criterion_2()), (3, criterion_3()), (4, criterion_4())];
    let corpus = corpus_for(&default_cfg);
    results.push((5, criterion_5(&corpus, &default_cfg)));
    results.push((6, criterion_6(&corpus)));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));

    let mut failed = 0;
    for (n, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL  {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
