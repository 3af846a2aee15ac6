//! On-disk vacuum references keyed by the SHA-256 of the reference key.
//!
//! An entry holds `key.txt`, `histogram.bin`, `pooled.tsv`, one
//! `batch_NNN.tsv` per batch and `SHA256SUMS` over all of them.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use qpcorr::pipeline::vacuum_reference;
use qpcorr::tomography::identity_moments;
use qpcorr::{Histogram3D, MomentSet, VacuumReference};
use sha2::{Digest, Sha256};

use crate::config::CliConfig;

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn entry_dir(cache: &Path, key: &str) -> PathBuf {
    cache.join(hex_digest(key.as_bytes()))
}

fn checksums(files: &[(String, Vec<u8>)]) -> String {
    files
        .iter()
        .map(|(name, data)| format!("{}  {name}\n", hex_digest(data)))
        .collect()
}

fn serialize(key: &str, reference: &VacuumReference) -> Result<Vec<(String, Vec<u8>)>, String> {
    let table = |set: &MomentSet| -> Result<Vec<u8>, String> {
        let mut buf = Vec::new();
        set.write_table(&mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let mut hist = Vec::new();
    reference.histogram.write_binary(&mut hist).map_err(|e| e.to_string())?;
    let mut files = vec![
        ("key.txt".to_string(), key.as_bytes().to_vec()),
        ("histogram.bin".to_string(), hist),
        ("pooled.tsv".to_string(), table(&reference.pooled)?),
    ];
    for (i, b) in reference.batches.iter().enumerate() {
        files.push((format!("batch_{i:03}.tsv"), table(b)?));
    }
    Ok(files)
}

pub fn store(dir: &Path, key: &str, reference: &VacuumReference) -> Result<(), String> {
    let files = serialize(key, reference)?;
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, data) in &files {
        fs::write(dir.join(name), data).map_err(|e| format!("{name}: {e}"))?;
    }
    fs::write(dir.join("SHA256SUMS"), checksums(&files)).map_err(|e| e.to_string())
}

/// Load and verify one entry: file checksums, the stored key, the batch
/// layout, and the pooled moments against the stored histogram.
pub fn load(dir: &Path) -> Result<(String, VacuumReference), String> {
    let sums = fs::read_to_string(dir.join("SHA256SUMS")).map_err(|e| format!("SHA256SUMS: {e}"))?;
    for line in sums.lines() {
        let (digest, name) = line.split_once("  ").ok_or_else(|| format!("bad checksum line {line:?}"))?;
        let data = fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if hex_digest(&data) != digest {
            return Err(format!("{name}: checksum mismatch"));
        }
    }
    let key = fs::read_to_string(dir.join("key.txt")).map_err(|e| format!("key.txt: {e}"))?;
    if dir.file_name().and_then(|n| n.to_str()) != Some(hex_digest(key.as_bytes()).as_str()) {
        return Err("entry name does not match its key".into());
    }
    let read_table = |name: &str| -> Result<MomentSet, String> {
        let f = fs::File::open(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        MomentSet::read_table(BufReader::new(f)).map_err(|e| format!("{name}: {e}"))
    };
    let f = fs::File::open(dir.join("histogram.bin")).map_err(|e| format!("histogram.bin: {e}"))?;
    let histogram = Histogram3D::read_binary(BufReader::new(f)).map_err(|e| format!("histogram.bin: {e}"))?;
    let pooled = read_table("pooled.tsv")?;
    let batches_expected = key
        .lines()
        .find_map(|l| l.strip_prefix("batches = "))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or("key.txt has no batch count")?;
    let batches = (0..batches_expected)
        .map(|i| read_table(&format!("batch_{i:03}.tsv")))
        .collect::<Result<Vec<_>, _>>()?;
    let recomputed = identity_moments(&histogram, pooled.max_order()).map_err(|e| e.to_string())?;
    for ((n, m, s), mo) in recomputed.iter() {
        let stored = pooled.value(n, m, s).map_err(|e| e.to_string())?;
        if (stored - mo.value).norm() > 1e-9 * (1.0 + mo.value.norm()) {
            return Err(format!("pooled moment ({n},{m}) disagrees with the stored histogram"));
        }
    }
    Ok((
        key,
        VacuumReference {
            batches,
            pooled,
            histogram,
        },
    ))
}

/// Cached reference for `config`, computed and stored when missing or
/// inconsistent. Returns the reference and whether it came from the cache.
pub fn obtain(config: &CliConfig) -> Result<(VacuumReference, bool), String> {
    let key = config.reference_key();
    let dir = entry_dir(&config.cache_dir, &key);
    if dir.exists() {
        match load(&dir) {
            Ok((stored, reference)) if stored == key => return Ok((reference, true)),
            Ok(_) => eprintln!("warning: cache entry {} has a different key; recomputing", dir.display()),
            Err(e) => eprintln!("warning: cache entry {} is inconsistent ({e}); recomputing", dir.display()),
        }
    }
    let run = &config.run;
    let reference = vacuum_reference(&run.detector, run.shots_per_batch(), run.batches, run.max_order)
        .map_err(|e| e.to_string())?;
    store(&dir, &key, &reference)?;
    Ok((reference, false))
}

/// Verify every entry below `cache`; returns `(entries, failures)`.
pub fn verify_all(cache: &Path) -> (usize, Vec<String>) {
    let Ok(read) = fs::read_dir(cache) else {
        return (0, Vec::new());
    };
    let mut dirs: Vec<PathBuf> = read.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    let failures = dirs
        .iter()
        .filter_map(|d| load(d).err().map(|e| format!("{}: {e}", d.display())))
        .collect();
    (dirs.len(), failures)
}
