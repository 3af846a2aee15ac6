//! Reduced-scale invariant checks across all modules.

use std::path::Path;
use std::time::Instant;

use qpcorr::detection::{acquire, sample_shots, RunTag};
use qpcorr::dynamics::{bell_target, jc_hamiltonian, prepare_bell, Transition};
use qpcorr::hilbert::{
    annihilation, fidelity_to_pure, lindblad_evolve, transmon_lowering, unnormalized_trace, Collapse, Level, C64,
    DEFAULT_DT,
};
use qpcorr::tomography::{
    deconvolve, mle_rho, moment_operator, moments_to_rho_linear, physicality, MleConfig, Moment, MomentSet,
};
use qpcorr::{Basis, DensityMatrix, DetectorConfig, ExperimentParams, Histogram3D, HilbertSpec, KetState, Sigma};

use crate::cache;
use crate::config::CliConfig;

type Suite = fn(&Path) -> Result<String, String>;

fn check(ok: bool, what: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn hilbert(_: &Path) -> Result<String, String> {
    let space = HilbertSpec::new(2, 3).map_err(|e| e.to_string())?;
    let rho = DensityMatrix::from_ket(&KetState::basis(space, Level::E, 0));
    let g = 2.0 * std::f64::consts::PI * 65e6;
    let h = jc_hamiltonian(space, Transition::GE, g).map_err(|e| e.to_string())?;
    let c = [
        Collapse::new(annihilation(space), 4e7),
        Collapse::new(transmon_lowering(space), 1e6),
    ];
    let t = 5e-9;
    let drift = (unnormalized_trace(&rho, &h, &c, t, DEFAULT_DT) - 1.0).abs();
    check(drift < 1e-8, format!("trace drift {drift:.1e}"))?;
    let out = lindblad_evolve(&rho, &h, &[], t, DEFAULT_DT).map_err(|e| e.to_string())?;
    let rabi = (out.population(Level::E, 0) - (g * t).cos().powi(2)).abs();
    check(rabi < 1e-9, format!("vacuum Rabi error {rabi:.1e}"))?;
    let bell = prepare_bell(&ExperimentParams::default(), true).map_err(|e| e.to_string())?;
    let f = fidelity_to_pure(&bell, &bell_target()).map_err(|e| e.to_string())?;
    check(f > 0.999, format!("ideal Bell preparation fidelity {f:.5}"))?;
    Ok(format!("trace drift {drift:.1e}, Rabi error {rabi:.1e}, ideal Bell F {f:.5}"))
}

fn detection(_: &Path) -> Result<String, String> {
    let det = DetectorConfig::default();
    let vac = DensityMatrix::from_ket(&KetState::basis(HilbertSpec::RECONSTRUCTION, Level::G, 0));
    let shots = sample_shots(&vac, Basis::Z, 200_000, &det).map_err(|e| e.to_string())?;
    let n = shots.len() as f64;
    let mean = shots.shots.iter().map(|s| s.x).sum::<f64>() / n;
    let std = (shots.shots.iter().map(|s| (s.x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected = (0.5 / det.eta).sqrt();
    check((std / expected - 1.0).abs() < 0.01, format!("vacuum std {std:.4}, expected {expected:.4}"))?;

    let mut whole = Histogram3D::for_config(Basis::Z, &det).map_err(|e| e.to_string())?;
    whole.accumulate(&shots.shots).map_err(|e| e.to_string())?;
    let (a, b) = shots.shots.split_at(shots.len() / 3);
    let mut ha = whole.empty_like();
    let mut hb = whole.empty_like();
    ha.accumulate(a).map_err(|e| e.to_string())?;
    hb.accumulate(b).map_err(|e| e.to_string())?;
    check(ha.merge(&hb).map_err(|e| e.to_string())? == whole, "split accumulation differs")?;

    let mut buf = Vec::new();
    whole.write_binary(&mut buf).map_err(|e| e.to_string())?;
    check(Histogram3D::read_binary(buf.as_slice()).map_err(|e| e.to_string())? == whole, "binary round trip")?;

    let rho = DensityMatrix::from_ket(&bell_target());
    let pooled = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?
            .install(|| acquire(&rho, Basis::X, &det, RunTag::Signal, 20_000, 8))
            .map_err(|e| e.to_string())
    };
    check(pooled(1)? == pooled(3)?, "acquisition depends on worker count")?;
    Ok(format!("vacuum std {std:.4} (expected {expected:.4}), merge, round trip and worker independence hold"))
}

fn exact_moments(rho: &DensityMatrix, max_order: usize, err: f64) -> Result<MomentSet, String> {
    let space = rho.space();
    let mut set = MomentSet::new(max_order).map_err(|e| e.to_string())?;
    for n in 0..=max_order {
        for m in 0..=n.min(max_order - n) {
            for s in Sigma::ALL {
                let value = (moment_operator(space, n, m, s) * rho.matrix()).trace();
                set.insert(n, m, s, Moment { value, std_error: err }).map_err(|e| e.to_string())?;
            }
        }
    }
    Ok(set)
}

fn tomography(_: &Path) -> Result<String, String> {
    let bell = DensityMatrix::from_ket(&bell_target());
    let mixed = DensityMatrix::maximally_mixed(bell.space());
    let rho = DensityMatrix::mixture(&[(0.8, &bell), (0.2, &mixed)]).map_err(|e| e.to_string())?;
    let set = exact_moments(&rho, 8, 0.0)?;
    let back = moments_to_rho_linear(&set, rho.space()).map_err(|e| e.to_string())?;
    let lin = (back.matrix() - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    check(lin < 1e-8, format!("linear round trip error {lin:.1e}"))?;

    // thermal noise on a larger space: ⟨hᵖ(h†)^q⟩ = δ_pq p! Nᵖ
    let space = HilbertSpec::new(2, 9).map_err(|e| e.to_string())?;
    let wide = DensityMatrix::from_ket(
        &KetState::normalized(
            space,
            qpcorr::hilbert::CVector::from_fn(space.dim(), |i, _| C64::new(0.5f64.powi((i % 10) as i32), 0.1 * i as f64)),
        )
        .map_err(|e| e.to_string())?,
    );
    let noise = 1.0 / 0.15 - 1.0;
    let h = |p: usize, q: usize| -> C64 {
        if p == q {
            C64::new((1..=p).map(|k| k as f64 * noise).product(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let signal = exact_moments(&wide, 8, 0.0)?;
    let mut raw = MomentSet::new(8).map_err(|e| e.to_string())?;
    let mut reference = MomentSet::new(8).map_err(|e| e.to_string())?;
    for ((n, m, s), _) in signal.iter() {
        let mut v = C64::new(0.0, 0.0);
        for j in 0..=n {
            for k in 0..=m {
                v += signal.value(j, k, s).map_err(|e| e.to_string())? * h(n - j, m - k) * (binom(n, j) * binom(m, k));
            }
        }
        raw.insert(n, m, s, Moment::exact(v)).map_err(|e| e.to_string())?;
        if s == Sigma::Identity {
            reference.insert(n, m, s, Moment::exact(h(n, m))).map_err(|e| e.to_string())?;
        }
    }
    let out = deconvolve(&raw, &reference, 8).map_err(|e| e.to_string())?;
    let mut dec = 0.0_f64;
    for ((n, m, s), mo) in out.iter() {
        dec = dec.max((mo.value - signal.value(n, m, s).map_err(|e| e.to_string())?).norm());
    }
    check(dec < 1e-10, format!("deconvolution error {dec:.1e}"))?;

    let mut noisy = exact_moments(&rho, 8, 0.01)?;
    let v = noisy.value(2, 2, Sigma::Identity).map_err(|e| e.to_string())?;
    noisy
        .insert(2, 2, Sigma::Identity, Moment { value: v - 0.2, std_error: 0.01 })
        .map_err(|e| e.to_string())?;
    let fit = match mle_rho(&noisy, rho.space(), &MleConfig::default()) {
        Ok(out) => out,
        Err(qpcorr::Error::MleNotConverged(out)) => *out,
        Err(e) => return Err(e.to_string()),
    };
    let (min_eig, tr, herm) = physicality(&fit.rho);
    check(
        min_eig >= -1e-12 && tr <= 1e-12 && herm <= 1e-12 && fit.chi2_final <= fit.chi2_initial,
        format!("MLE output λmin {min_eig:.1e}, χ² {:.3} → {:.3}", fit.chi2_initial, fit.chi2_final),
    )?;
    Ok(format!("linear {lin:.1e}, deconvolution {dec:.1e}, MLE χ² {:.1} → {:.1}", fit.chi2_initial, fit.chi2_final))
}

fn cache_consistency(cache_dir: &Path) -> Result<String, String> {
    let (entries, failures) = cache::verify_all(cache_dir);
    check(failures.is_empty(), failures.join("; "))?;
    Ok(format!("{entries} entries in {} consistent", cache_dir.display()))
}

fn small_config(dir: &Path, tag: &str) -> Result<(CliConfig, String), String> {
    let text = format!(
        "experiment = reference_g\nshots_per_basis = 40000\nbatches = 4\noutput_dir = {tag}\ncache_dir = cache-{tag}\n"
    );
    let config = CliConfig::parse(&text, dir).map_err(|e| e.0)?;
    Ok((config, text))
}

fn determinism(_: &Path) -> Result<String, String> {
    let scratch = std::env::temp_dir().join(format!("qpcorr-selftest-{}", std::process::id()));
    let result = (|| {
        let mut files = Vec::new();
        for tag in ["a", "b"] {
            let (config, text) = small_config(&scratch, tag)?;
            crate::execute(&config, &text)?;
            files.push(std::fs::read(config.output_dir.join("manifest.txt")).map_err(|e| e.to_string())?);
            let metrics = std::fs::read_to_string(config.output_dir.join("metrics.txt")).map_err(|e| e.to_string())?;
            let sz = metrics
                .lines()
                .find_map(|l| l.strip_prefix("sigma_z = "))
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or("metrics lack sigma_z")?;
            check(sz > 0.9, format!("reference_g gives ⟨σ_z⟩ = {sz:.3}"))?;
        }
        // manifests list every file's digest, config.txt aside
        let strip = |m: &[u8]| -> String {
            String::from_utf8_lossy(m)
                .lines()
                .filter(|l| !l.starts_with("config.txt"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        check(strip(&files[0]) == strip(&files[1]), "two seeded runs differ")?;
        Ok("two seeded reference_g runs are byte-identical, ⟨σ_z⟩ > 0.9".to_string())
    })();
    let _ = std::fs::remove_dir_all(&scratch);
    result
}

/// Runs every suite; returns whether all passed.
pub fn run(cache_dir: &Path) -> bool {
    let suites: [(&str, Suite); 5] = [
        ("hilbert", hilbert),
        ("detection", detection),
        ("tomography", tomography),
        ("vacuum-reference cache", cache_consistency),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut all = true;
    for (name, suite) in suites {
        let t = Instant::now();
        match suite(cache_dir) {
            Ok(detail) => println!("selftest {name}: PASS ({detail}; {:.1} s)", t.elapsed().as_secs_f64()),
            Err(detail) => {
                all = false;
                println!("selftest {name}: FAIL ({detail})");
            }
        }
    }
    println!(
        "selftest: {} in {:.1} s",
        if all { "all suites passed" } else { "failures" },
        start.elapsed().as_secs_f64()
    );
    all
}
