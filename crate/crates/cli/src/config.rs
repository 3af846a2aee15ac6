//! Flat `key = value` run files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qpcorr::{Experiment, RunConfig};

/// A parsed run file. Relative paths are resolved against the file's directory.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub run: RunConfig,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub shot_logs: bool,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ConfigError(format!("{key}: expected a number, got {v:?}")))
}

/// Integers may be written in exponent form (`1e6`) when exact.
fn integer(key: &str, v: &str) -> Result<u64, ConfigError> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let x = float(key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
        Ok(x as u64)
    } else {
        Err(ConfigError(format!("{key}: expected a non-negative integer, got {v:?}")))
    }
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn range(key: &str, v: &str) -> Result<Option<(f64, f64)>, ConfigError> {
    if v == "auto" {
        return Ok(None);
    }
    match v.split_once(',') {
        Some((a, b)) => Ok(Some((float(key, a.trim())?, float(key, b.trim())?))),
        None => Err(ConfigError(format!("{key}: expected \"lo,hi\" or \"auto\", got {v:?}"))),
    }
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(ConfigError(format!("line {}: duplicate key {k:?}", i + 1)));
            }
            pairs.push((k.to_string(), v.to_string()));
        }
        let experiment = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .ok_or_else(|| ConfigError("missing key \"experiment\"".into()))?
            .1
            .parse::<Experiment>()
            .map_err(|e| ConfigError(e.to_string()))?;

        let mut run = RunConfig::new(experiment);
        let mut output_dir = PathBuf::from("runs").join(experiment.label());
        let mut cache_dir = PathBuf::from(".qpcorr-cache");
        let mut shot_logs = false;
        for (k, v) in &pairs {
            let (key, v) = (k.as_str(), v.as_str());
            let p = &mut run.params;
            let d = &mut run.detector;
            match key {
                "experiment" => {}
                "ideal" => run.ideal = boolean(key, v)?,
                "shots_per_basis" => run.shots_per_basis = integer(key, v)? as usize,
                "batches" => run.batches = integer(key, v)? as usize,
                "max_order" => run.max_order = integer(key, v)? as usize,
                "seed" => d.seed = integer(key, v)?,
                "output_dir" => output_dir = PathBuf::from(v),
                "cache_dir" => cache_dir = PathBuf::from(v),
                "shot_logs" => shot_logs = boolean(key, v)?,
                "sequence" => run.sequence = Some(v.parse().map_err(|e: qpcorr::Error| ConfigError(format!("{key}: {e}")))?),
                "g_coupling" => p.g_coupling = float(key, v)?,
                "kappa" => p.kappa = float(key, v)?,
                "t1" => p.t1 = float(key, v)?,
                "t2_star" => p.t2_star = float(key, v)?,
                "eta" => {
                    p.eta = float(key, v)?;
                    d.eta = p.eta;
                }
                "qubit_wait" => p.qubit_wait = float(key, v)?,
                "pi_pulse_len" => p.pi_pulse_len = float(key, v)?,
                "chi" => p.chi = float(key, v)?,
                "prep_fock_cutoff" => p.prep_fock_cutoff = integer(key, v)? as usize,
                "dt" => p.dt = float(key, v)?,
                "readout_mu_g" => d.readout_mu_g = float(key, v)?,
                "readout_mu_e" => d.readout_mu_e = float(key, v)?,
                "readout_sigma" => d.readout_sigma = float(key, v)?,
                "readout_decay_mix" => d.readout_decay_mix = float(key, v)?,
                "hist_range_xp" => d.hist_range_xp = float(key, v)?,
                "hist_bins_xp" => d.hist_bins_xp = integer(key, v)? as usize,
                "hist_bins_q" => d.hist_bins_q = integer(key, v)? as usize,
                "hist_range_q" => d.hist_range_q = range(key, v)?,
                "mle_max_iterations" => run.mle.max_iterations = integer(key, v)? as usize,
                "mle_rel_tolerance" => run.mle.rel_tolerance = float(key, v)?,
                "mle_window" => run.mle.window = integer(key, v)? as usize,
                "mle_gradient_tolerance" => run.mle.gradient_tolerance = float(key, v)?,
                _ => return Err(ConfigError(format!("unknown key {key:?}"))),
            }
        }
        run.mle.max_order = run.max_order;
        run.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(CliConfig {
            run,
            output_dir: base.join(output_dir),
            cache_dir: base.join(cache_dir),
            shot_logs,
        })
    }

    /// Every setting that determines the vacuum reference, in a fixed order.
    pub fn reference_key(&self) -> String {
        let d = &self.run.detector;
        let mut s = String::new();
        let q = match d.hist_range_q {
            Some((lo, hi)) => format!("{lo:e},{hi:e}"),
            None => "auto".into(),
        };
        for (k, v) in [
            ("eta", format!("{:e}", d.eta)),
            ("readout_mu_g", format!("{:e}", d.readout_mu_g)),
            ("readout_mu_e", format!("{:e}", d.readout_mu_e)),
            ("readout_sigma", format!("{:e}", d.readout_sigma)),
            ("readout_decay_mix", format!("{:e}", d.readout_decay_mix)),
            ("hist_range_xp", format!("{:e}", d.hist_range_xp)),
            ("hist_bins_xp", d.hist_bins_xp.to_string()),
            ("hist_bins_q", d.hist_bins_q.to_string()),
            ("hist_range_q", q),
            ("seed", d.seed.to_string()),
            ("shots_per_batch", self.run.shots_per_batch().to_string()),
            ("batches", self.run.batches.to_string()),
            ("max_order", self.run.max_order.to_string()),
        ] {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CliConfig, ConfigError> {
        CliConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn defaults_and_overrides() {
        let c = parse("experiment = bell  # comment\nshots_per_basis = 2e6\neta = 0.147\nideal = true\n").unwrap();
        assert_eq!(c.run.shots_per_basis, 2_000_000);
        assert_eq!(c.run.detector.eta, 0.147);
        assert_eq!(c.run.params.eta, 0.147);
        assert!(c.run.ideal);
        assert_eq!(c.output_dir, Path::new("/base/runs/bell"));
        assert_eq!(c.cache_dir, Path::new("/base/.qpcorr-cache"));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "experiment = bell\ncolour = red\n",
            "shots_per_basis = 1000\n",
            "experiment = ghz\n",
            "experiment = bell\nbatches = 4\nbatches = 5\n",
            "experiment = bell\nshots_per_basis = 1.5\n",
            "experiment = bell\nshots_per_basis = 100\n",
            "experiment = bell\nhist_range_q = 3\n",
            "experiment bell\n",
            "experiment = reference_g\nsequence = idle 1e-9\n",
            "experiment = bell\nsequence = pulse ge pi 1e-8\n",
        ] {
            assert!(parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn sequence_key() {
        let c = parse("experiment = bell\nsequence = pulse ge pi x 10e-9; swap ge 1.9e-9  # half swap\n").unwrap();
        assert_eq!(c.run.sequence.unwrap().segments().len(), 2);
    }

    #[test]
    fn reference_key_tracks_detector_and_layout() {
        let a = parse("experiment = bell\n").unwrap();
        let b = parse("experiment = two_photon\nt1 = 2e-6\n").unwrap();
        let c = parse("experiment = bell\nseed = 1\n").unwrap();
        let d = parse("experiment = bell\nbatches = 8\n").unwrap();
        assert_eq!(a.reference_key(), b.reference_key());
        assert_ne!(a.reference_key(), c.reference_key());
        assert_ne!(a.reference_key(), d.reference_key());
    }
}
