//! Run manifest and the binary solver checkpoint.

use std::path::{Path, PathBuf};

use nlsdecay_core::io::write_atomic;
use nlsdecay_core::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_DIR: &str = "history";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// In progress, or killed before finishing.
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub step: u64,
    pub time: f64,
    pub message: String,
    /// Step of the last checkpoint written before the failure.
    pub last_checkpoint_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix: u64,
    #[serde(default)]
    pub finished_unix: Option<u64>,
    /// `t_wrap` of the datum on the run's grid, where it applies.
    #[serde(default)]
    pub validity_window: Option<f64>,
    /// Output files relative to the run directory.
    pub artifacts: Vec<String>,
    pub status: RunStatus,
    #[serde(default)]
    pub failure: Option<FailureInfo>,
    /// Set on the returned value (never on disk) when a rerun found the
    /// same configuration already complete.
    #[serde(skip)]
    pub already_complete: bool,
}

impl RunManifest {
    pub fn new(scenario: &str, config_hash: &str) -> Self {
        RunManifest {
            scenario: scenario.to_string(),
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            validity_window: None,
            artifacts: Vec::new(),
            status: RunStatus::Running,
            failure: None,
            already_complete: false,
        }
    }

    pub fn add_artifact(&mut self, name: impl Into<String>) {
        let name = name.into();
        if !self.artifacts.contains(&name) {
            self.artifacts.push(name);
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes()).map_err(std::io::Error::other)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Everything needed to continue a run bit-identically: the integrator's
/// raw spectral state and the trace rows measured so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Number of times `dt` has been halved for this run.
    pub halvings: u32,
    pub step: u64,
    pub snapshots: u64,
    pub state: Vec<Complex64>,
    /// `(t, sup, mass, energy, Hs, Lr)` per trace row; NaN marks an absent value.
    pub rows: Vec<[f64; 6]>,
}

const MAGIC: &[u8; 8] = b"NLSCKPT1";

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.state.len() * 16 + self.rows.len() * 48);
        out.extend_from_slice(MAGIC);
        let hash = self.config_hash.as_bytes();
        out.extend_from_slice(&(hash.len() as u64).to_le_bytes());
        out.extend_from_slice(hash);
        out.extend_from_slice(&self.halvings.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.snapshots.to_le_bytes());
        out.extend_from_slice(&(self.state.len() as u64).to_le_bytes());
        for z in &self.state {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for row in &self.rows {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err("checkpoint checksum mismatch".into());
        }
        let mut r = Reader { buf: body, pos: 8 };
        let hash_len = r.u64()? as usize;
        let config_hash = String::from_utf8(r.take(hash_len)?.to_vec()).map_err(|e| e.to_string())?;
        let halvings = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let step = r.u64()?;
        let snapshots = r.u64()?;
        let n = r.u64()? as usize;
        let mut state = Vec::with_capacity(n);
        for _ in 0..n {
            state.push(Complex64::new(r.f64()?, r.f64()?));
        }
        let m = r.u64()? as usize;
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let mut row = [0.0; 6];
            for v in &mut row {
                *v = r.f64()?;
            }
            rows.push(row);
        }
        if r.pos != body.len() {
            return Err("trailing bytes in checkpoint".into());
        }
        Ok(Checkpoint {
            config_hash,
            halvings,
            step,
            snapshots,
            state,
            rows,
        })
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        write_atomic(&dir.join(CHECKPOINT_FILE), &self.encode()).map_err(std::io::Error::other)
    }

    pub fn read(dir: &Path) -> std::io::Result<Option<Self>> {
        let path: PathBuf = dir.join(CHECKPOINT_FILE);
        match std::fs::read(&path) {
            Ok(bytes) => Checkpoint::decode(&bytes)
                .map(Some)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated checkpoint")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
