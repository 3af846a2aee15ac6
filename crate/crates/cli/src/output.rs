//! Run-directory artifacts.
//!
//! `run` writes the primary data (histograms, readout references, moments)
//! and then renders everything derived from it; `report` repeats only the
//! rendering from the files on disk, so both produce identical bytes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use qpcorr::detection::{stream_rng, Histogram1D, RunTag, ShotSampler};
use qpcorr::hilbert::HilbertSpec;
use qpcorr::tomography::{
    basis_labels, extract_populations, mle_rho, moments_to_rho_linear, report_metrics, write_matrix_csv, MleOutcome,
    MIN_COUNT,
};
use qpcorr::{Basis, Histogram3D, MomentSet, RunResult, Sigma};

use crate::cache::hex_digest;
use crate::config::CliConfig;

type Res<T> = Result<T, String>;

fn create(dir: &Path, name: &str) -> Res<BufWriter<File>> {
    File::create(dir.join(name))
        .map(BufWriter::new)
        .map_err(|e| format!("{name}: {e}"))
}

fn open(dir: &Path, name: &str) -> Res<BufReader<File>> {
    File::open(dir.join(name))
        .map(BufReader::new)
        .map_err(|e| format!("{name}: {e}"))
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Res<()>
where
    F: FnOnce(&mut BufWriter<File>) -> qpcorr::Result<()>,
{
    let mut w = create(dir, name)?;
    f(&mut w).map_err(|e| format!("{name}: {e}"))?;
    w.flush().map_err(|e| format!("{name}: {e}"))
}

/// File name, figure it backs, description. `report` rewrites the derived part.
const MANIFEST: &[(&str, &str, &str)] = &[
    ("config.txt", "-", "run file as given"),
    ("readout_g.csv", "1e", "Q histogram of the |0g> reference"),
    ("readout_e.csv", "1e", "Q histogram of the |0e> reference"),
    ("histogram_x.bin", "2a", "3-D (X, P, Q) counts, x basis, binary"),
    ("histogram_y.bin", "2a", "3-D (X, P, Q) counts, y basis, binary"),
    ("histogram_z.bin", "2a", "3-D (X, P, Q) counts, z basis, binary"),
    ("histogram_x.csv", "2a", "3-D (X, P, Q) counts, x basis"),
    ("histogram_y.csv", "2a", "3-D (X, P, Q) counts, y basis"),
    ("histogram_z.csv", "2a", "3-D (X, P, Q) counts, z basis"),
    ("grid_x.csv", "2a", "excited weight and <sigma_x> per (X, P) bin"),
    ("grid_y.csv", "2a", "excited weight and <sigma_y> per (X, P) bin"),
    ("grid_z.csv", "2a", "excited weight and <sigma_z> per (X, P) bin"),
    ("raw_moments.tsv", "2b", "noisy-amplitude moments <(S+)^n S^m sigma_i>"),
    ("moments.tsv", "2b", "deconvolved moments <(a+)^n a^m sigma_i> with batch errors"),
    ("rho_linear_re.csv", "2c/3", "linear-inversion density matrix, real part"),
    ("rho_linear_im.csv", "2c/3", "linear-inversion density matrix, imaginary part"),
    ("rho_mle_re.csv", "2c/3", "maximum-likelihood density matrix, real part"),
    ("rho_mle_im.csv", "2c/3", "maximum-likelihood density matrix, imaginary part"),
    ("metrics.txt", "2c/3", "fidelity, concurrence, populations, fit summary"),
];

fn basis_file(prefix: &str, basis: Basis, ext: &str) -> String {
    format!("{prefix}_{basis}.{ext}")
}

pub fn write_run(config: &CliConfig, config_text: &str, result: &RunResult) -> Res<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    fs::write(dir.join("config.txt"), config_text).map_err(|e| e.to_string())?;
    write_with(dir, "readout_g.csv", |w| result.readout_g.write_csv(w))?;
    write_with(dir, "readout_e.csv", |w| result.readout_e.write_csv(w))?;
    for (basis, h) in Basis::ALL.iter().zip(&result.histograms) {
        write_with(dir, &basis_file("histogram", *basis, "bin"), |w| h.write_binary(w))?;
    }
    write_with(dir, "raw_moments.tsv", |w| result.raw.write_table(w))?;
    write_with(dir, "moments.tsv", |w| result.moments.write_table(w))?;
    let mut logs = Vec::new();
    if config.shot_logs {
        logs = write_shot_logs(config, result)?;
    }
    render(dir, config, &result.histograms, &result.readout_g, &result.readout_e, &result.moments, &logs)
}

/// Shot logs replay the acquisition streams, so they hold exactly the
/// shots that were histogrammed.
fn write_shot_logs(config: &CliConfig, result: &RunResult) -> Res<Vec<String>> {
    let run = &config.run;
    let mut names = Vec::new();
    for basis in Basis::ALL {
        let sampler = ShotSampler::new(&result.prepared, basis, &run.detector).map_err(|e| e.to_string())?;
        let name = basis_file("shots", basis, "log");
        let mut w = create(&config.output_dir, &name)?;
        for b in 0..run.batches {
            let mut rng = stream_rng(run.detector.seed, RunTag::Signal, basis, b as u32);
            let batch = sampler.batch(&mut rng, run.shots_per_batch()).map_err(|e| e.to_string())?;
            batch.write_log(&mut w).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
        names.push(name);
    }
    Ok(names)
}

/// Re-render the derived files of an existing run directory.
pub fn report(dir: &Path) -> Res<String> {
    let config = CliConfig::from_file(&dir.join("config.txt")).map_err(|e| e.0)?;
    let readout_g = Histogram1D::read_csv(open(dir, "readout_g.csv")?).map_err(|e| e.to_string())?;
    let readout_e = Histogram1D::read_csv(open(dir, "readout_e.csv")?).map_err(|e| e.to_string())?;
    let histograms = Basis::ALL
        .iter()
        .map(|&b| {
            let name = basis_file("histogram", b, "bin");
            Histogram3D::read_binary(open(dir, &name)?).map_err(|e| format!("{name}: {e}"))
        })
        .collect::<Res<Vec<_>>>()?;
    let moments = MomentSet::read_table(open(dir, "moments.tsv")?).map_err(|e| e.to_string())?;
    let logs: Vec<String> = Basis::ALL
        .iter()
        .map(|&b| basis_file("shots", b, "log"))
        .filter(|n| dir.join(n).exists())
        .collect();
    render(dir, &config, &histograms, &readout_g, &readout_e, &moments, &logs)?;
    fs::read_to_string(dir.join("metrics.txt")).map_err(|e| e.to_string())
}

fn render(
    dir: &Path,
    config: &CliConfig,
    histograms: &[Histogram3D],
    readout_g: &Histogram1D,
    readout_e: &Histogram1D,
    moments: &MomentSet,
    logs: &[String],
) -> Res<()> {
    let err = |e: qpcorr::Error| e.to_string();
    for (basis, h) in Basis::ALL.iter().zip(histograms) {
        write_with(dir, &basis_file("histogram", *basis, "csv"), |w| h.write_csv(w))?;
        let grid = extract_populations(h, readout_g, readout_e, MIN_COUNT).map_err(err)?;
        write_with(dir, &basis_file("grid", *basis, "csv"), |w| grid.write_csv(h, w))?;
    }

    let space = HilbertSpec::RECONSTRUCTION;
    let labels = basis_labels(space.transmon_levels(), space.fock_dim());
    let linear = moments_to_rho_linear(moments, space).map_err(err)?;
    let mle = match mle_rho(moments, space, &config.run.mle) {
        Ok(out) => out,
        Err(qpcorr::Error::MleNotConverged(out)) => *out,
        Err(e) => return Err(e.to_string()),
    };
    for (name, m, imaginary) in [
        ("rho_linear_re.csv", linear.matrix(), false),
        ("rho_linear_im.csv", linear.matrix(), true),
        ("rho_mle_re.csv", mle.rho.matrix(), false),
        ("rho_mle_im.csv", mle.rho.matrix(), true),
    ] {
        write_with(dir, name, |w| write_matrix_csv(m, &labels, imaginary, w))?;
    }
    write_metrics(dir, config, moments, linear.min_eigenvalue(), &mle)?;
    write_manifest(dir, logs)
}

fn write_metrics(dir: &Path, config: &CliConfig, moments: &MomentSet, linear_min_eig: f64, mle: &MleOutcome) -> Res<()> {
    let target = config.run.experiment.target();
    let metrics = report_metrics(&mle.rho, &target).map_err(|e| e.to_string())?;
    let value = |n, m, s| moments.get(n, m, s).map_err(|e| e.to_string());
    let field_max = moments
        .iter()
        .filter(|((n, m, _), _)| (1..=2).contains(&(n + m)))
        .map(|(_, mo)| mo.value.norm())
        .fold(0.0, f64::max);
    let ab = value(2, 2, Sigma::Identity)?;
    write_with(dir, "metrics.txt", |w| {
        writeln!(w, "experiment = {}", config.run.experiment)?;
        metrics.write_summary(&mut *w)?;
        for s in [Sigma::X, Sigma::Y, Sigma::Z] {
            let v = moments.get(0, 0, s)?;
            writeln!(w, "sigma_{s} = {:.6}", v.value.re)?;
            writeln!(w, "sigma_{s}_error = {:.6}", v.std_error)?;
        }
        writeln!(w, "max_field_moment_order_1_2 = {field_max:.6}")?;
        writeln!(w, "antibunching = {:.6}", ab.value.re)?;
        writeln!(w, "antibunching_error = {:.6}", ab.std_error)?;
        writeln!(w, "linear_min_eigenvalue = {linear_min_eig:.6}")?;
        writeln!(w, "mle_chi2_initial = {:.6}", mle.chi2_initial)?;
        writeln!(w, "mle_chi2_final = {:.6}", mle.chi2_final)?;
        writeln!(w, "mle_terms = {}", mle.terms)?;
        writeln!(w, "mle_iterations = {}", mle.iterations)?;
        writeln!(w, "mle_converged = {}", mle.converged)?;
        Ok(())
    })
}

fn write_manifest(dir: &Path, logs: &[String]) -> Res<()> {
    let mut w = create(dir, "manifest.txt")?;
    let io = |e: std::io::Error| e.to_string();
    writeln!(w, "# file\tfigure\tsha256\tdescription").map_err(io)?;
    let entries = MANIFEST
        .iter()
        .map(|&(n, f, d)| (n.to_string(), f, d))
        .chain(logs.iter().map(|n| (n.clone(), "-", "shot log, 25-byte records")));
    for (name, figure, description) in entries {
        let data = fs::read(dir.join(&name)).map_err(|e| format!("{name}: {e}"))?;
        writeln!(w, "{name}\t{figure}\t{}\t{description}", hex_digest(&data)).map_err(io)?;
    }
    w.flush().map_err(io)
}
