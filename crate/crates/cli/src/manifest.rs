//! Run manifests and the file writers that stamp every output with the
//! manifest hash.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use spt_core::{DeviceParams, Error, ProtocolConfig, Result};

pub fn io_error(path: &Path, e: impl ToString) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        message: format!("{}: {e}", path.display()),
        line: e.line(),
        column: e.column(),
    })?;
    Ok((value, bytes))
}

/// Device from `path`, or the built-in reference device. Also returns the
/// SHA-256 of the file bytes (of the canonical JSON for the defaults).
pub fn load_device(path: Option<&Path>) -> Result<(DeviceParams, String)> {
    match path {
        Some(p) => {
            let (d, bytes): (DeviceParams, _) = read_json(p)?;
            d.validate()?;
            Ok((d, sha256_hex(&bytes)))
        }
        None => {
            let d = DeviceParams::paper_defaults();
            let hash = sha256_hex(d.to_json().as_bytes());
            Ok((d, hash))
        }
    }
}

pub fn load_protocol(path: Option<&Path>, seed: Option<u64>, shots: Option<usize>) -> Result<ProtocolConfig> {
    let mut cfg = match path {
        Some(p) => read_json::<ProtocolConfig>(p)?.0,
        None => ProtocolConfig::paper_point(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = shots {
        cfg.n_shots = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub device_sha256: Option<String>,
    pub protocol: Option<ProtocolConfig>,
    pub seed: Option<u64>,
    /// SHA-256 over everything above; identical for identical runs.
    pub hash: String,
    pub timestamp_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        parameters: Value,
        device_sha256: Option<String>,
        protocol: Option<ProtocolConfig>,
    ) -> Self {
        let seed = protocol.as_ref().map(|p| p.seed);
        let identity = json!({
            "command": command,
            "parameters": parameters,
            "device_sha256": device_sha256,
            "protocol": protocol,
            "seed": seed,
        });
        let hash = sha256_hex(&serde_json::to_vec(&identity).expect("manifest serializes"));
        Self {
            command: command.into(),
            parameters,
            device_sha256,
            protocol,
            seed,
            hash,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            outputs: Vec::new(),
        }
    }
}

/// Output directory bound to one manifest.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Writes `name` as CSV: a `# manifest <hash>` line, the header, then rows.
    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
        I: IntoIterator<Item = R>,
    {
        let path = self.dir.join(name);
        let mut buf = format!("# manifest {}\n", self.manifest.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(|e| io_error(&path, e))?;
            for row in rows {
                w.write_record(row).map_err(|e| io_error(&path, e))?;
            }
            w.flush().map_err(|e| io_error(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io_error(&path, e))?;
        self.manifest.outputs.push(name.into());
        Ok(path)
    }

    /// Writes `value` as pretty JSON with the manifest hash under `manifest`.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut v = serde_json::to_value(value).map_err(|e| io_error(&path, e))?;
        if let Value::Object(map) = &mut v {
            map.insert("manifest".into(), Value::String(self.manifest.hash.clone()));
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| io_error(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        self.manifest.outputs.push(name.into());
        Ok(path)
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self
            .dir
            .join(format!("{}.manifest.json", self.manifest.command.replace('-', "_")));
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| io_error(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}

/// Shortest round-trip decimal form; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}
