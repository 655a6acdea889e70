//! Per-run metadata: the configuration echo, seed, tool version and
//! content hashes of every input. No timestamps, so reruns with the same
//! inputs produce the same file.

use std::fmt::{Display, Write as _};
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

const HEADER: &str = "# vdnapr run metadata v1";

pub struct RunMeta {
    command: &'static str,
    seed: Option<u64>,
    config: Vec<(String, String)>,
    inputs: Vec<(String, String, String)>,
}

impl RunMeta {
    pub fn new(command: &'static str) -> Self {
        Self { command, seed: None, config: Vec::new(), inputs: Vec::new() }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input(&mut self, role: &str, path: &Path) -> io::Result<&mut Self> {
        let digest = hash_path(path)?;
        self.inputs.push((role.to_string(), path.display().to_string(), digest));
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\ncommand\t{}\nversion\t{}\n", self.command, env!("CARGO_PKG_VERSION"));
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "seed\t{seed}");
            }
            None => s.push_str("seed\tnone\n"),
        }
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}\t{v}");
        }
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(s, "input.{role}\t{path}\tsha256:{digest}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_text())
    }
}

fn hash_file(path: &Path) -> io::Result<[u8; 32]> {
    let mut h = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            return Ok(h.finalize().into());
        }
        h.update(&buf[..n]);
    }
}

/// SHA-256 of a file, or of a directory's regular files (by sorted name).
pub fn hash_path(path: &Path) -> io::Result<String> {
    if !path.is_dir() {
        return Ok(hex::encode(hash_file(path)?));
    }
    let mut entries: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.path())
        .collect();
    entries.sort();
    let mut h = Sha256::new();
    for p in entries {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update([0]);
        h.update(hash_file(&p)?);
    }
    Ok(hex::encode(h.finalize()))
}
