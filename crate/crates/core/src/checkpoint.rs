//! Adapter checkpoints on disk.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/blobs/<hash>.a     A factor, rows x rank
//! <dir>/blobs/<hash>.b     B factor, rank x cols
//! ```
//!
//! `<hash>` is the 16-digit lowercase hex FNV-1a-64 of the UTF-8 tensor name.
//! Blobs hold IEEE-754 binary32 values, little-endian, row-major, with no
//! header. The manifest is pretty-printed JSON with a fixed key order, so
//! identical checkpoints produce identical bytes.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnv::{fnv1a_64, name_hash_hex};
use crate::matrix::Matrix;
use crate::par;
use crate::squeeze::{squeeze, squeeze_expand, LoraFactorPair, SqueezeMethod, SqueezeReport};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub operation: String,
    pub method: String,
    pub source_rank: usize,
    pub target_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterCheckpoint {
    pub format_version: u32,
    pub base_model: Option<String>,
    /// LoRA scaling constant, carried through transformations unchanged.
    pub alpha: f64,
    /// Permits tensors of different ranks.
    pub heterogeneous: bool,
    pub tensors: Vec<LoraFactorPair>,
    pub provenance: Vec<ProvenanceEntry>,
}

impl AdapterCheckpoint {
    /// Homogeneous checkpoint with `alpha` equal to the shared rank.
    pub fn new(tensors: Vec<LoraFactorPair>) -> Result<Self> {
        let alpha = tensors.first().map_or(1.0, |t| t.rank() as f64);
        let ckpt = AdapterCheckpoint {
            format_version: FORMAT_VERSION,
            base_model: None,
            alpha,
            heterogeneous: false,
            tensors,
            provenance: Vec::new(),
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// The shared rank, or `None` for empty or heterogeneous checkpoints.
    pub fn rank(&self) -> Option<usize> {
        let first = self.tensors.first()?.rank();
        self.tensors
            .iter()
            .all(|t| t.rank() == first)
            .then_some(first)
    }

    /// Smallest `min(m, n)` over all tensors.
    pub fn max_rank(&self) -> Option<usize> {
        self.tensors.iter().map(LoraFactorPair::max_rank).min()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidCheckpoint("alpha must be finite".into()));
        }
        let mut names = HashSet::new();
        let mut hashes = HashSet::new();
        for t in &self.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(Error::DuplicateName(t.name.clone()));
            }
            if !hashes.insert(fnv1a_64(t.name.as_bytes())) {
                return Err(Error::InvalidCheckpoint(format!(
                    "tensor name `{}` collides with another name's hash",
                    t.name
                )));
            }
            if t.a.cols() != t.b.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "tensor `{}` factors are not conformable",
                    t.name
                )));
            }
        }
        if !self.heterogeneous && !self.tensors.is_empty() && self.rank().is_none() {
            return Err(Error::InvalidCheckpoint(
                "tensors have different ranks but the checkpoint is not marked heterogeneous"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    base_model: Option<String>,
    alpha: f64,
    rank: Option<usize>,
    heterogeneous: bool,
    tensors: Vec<TensorEntry>,
    provenance: Vec<ProvenanceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    hash: String,
    rows: usize,
    cols: usize,
    rank: usize,
    a: String,
    b: String,
}

fn blob_paths(hash: &str) -> (String, String) {
    (
        format!("{BLOB_DIR}/{hash}.a"),
        format!("{BLOB_DIR}/{hash}.b"),
    )
}

fn encode(m: &Matrix, tensor: &str) -> Result<Vec<u8>> {
    let values = m.to_f32();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "tensor `{tensor}` does not fit in binary32"
        )));
    }
    Ok(values.iter().flat_map(|v| v.to_le_bytes()).collect())
}

fn load_blob(dir: &Path, rel: &str, tensor: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let path = dir.join(rel);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingBlob {
                tensor: tensor.into(),
                path,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let expected = (rows * cols * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::BlobSizeMismatch {
            tensor: tensor.into(),
            path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Matrix::from_f32(rows, cols, &values).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite(format!("blob {}", path.display())),
        other => other,
    })
}

pub fn read_checkpoint(dir: impl AsRef<Path>) -> Result<AdapterCheckpoint> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(manifest.format_version));
    }
    let mut seen = HashSet::new();
    for t in &manifest.tensors {
        if !seen.insert(t.name.as_str()) {
            return Err(Error::DuplicateName(t.name.clone()));
        }
        if t.hash != name_hash_hex(&t.name) {
            return Err(Error::InvalidCheckpoint(format!(
                "tensor `{}` has hash {}, expected {}",
                t.name,
                t.hash,
                name_hash_hex(&t.name)
            )));
        }
        if t.rows == 0 || t.cols == 0 || t.rank == 0 {
            return Err(Error::InvalidCheckpoint(format!(
                "tensor `{}` has an empty dimension",
                t.name
            )));
        }
        let (a, b) = blob_paths(&t.hash);
        if t.a != a || t.b != b {
            return Err(Error::InvalidCheckpoint(format!(
                "tensor `{}` points at unexpected blob paths",
                t.name
            )));
        }
        if !manifest.heterogeneous {
            if let Some(rank) = manifest.rank {
                if rank != t.rank {
                    return Err(Error::InvalidCheckpoint(format!(
                        "tensor `{}` has rank {} but the checkpoint rank is {rank}",
                        t.name, t.rank
                    )));
                }
            }
        }
    }

    let tensors = manifest
        .tensors
        .iter()
        .map(|t| {
            let a = load_blob(dir, &t.a, &t.name, t.rows, t.rank)?;
            let b = load_blob(dir, &t.b, &t.name, t.rank, t.cols)?;
            LoraFactorPair::new(t.name.clone(), a, b)
        })
        .collect::<Result<Vec<_>>>()?;

    let ckpt = AdapterCheckpoint {
        format_version: manifest.format_version,
        base_model: manifest.base_model,
        alpha: manifest.alpha,
        heterogeneous: manifest.heterogeneous,
        tensors,
        provenance: manifest.provenance,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

fn manifest_for(ckpt: &AdapterCheckpoint) -> Manifest {
    Manifest {
        format_version: ckpt.format_version,
        base_model: ckpt.base_model.clone(),
        alpha: ckpt.alpha,
        rank: if ckpt.heterogeneous {
            None
        } else {
            ckpt.rank()
        },
        heterogeneous: ckpt.heterogeneous,
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| {
                let hash = name_hash_hex(&t.name);
                let (a, b) = blob_paths(&hash);
                let (rows, cols) = t.delta_shape();
                TensorEntry {
                    name: t.name.clone(),
                    hash,
                    rows,
                    cols,
                    rank: t.rank(),
                    a,
                    b,
                }
            })
            .collect(),
        provenance: ckpt.provenance.clone(),
    }
}

fn sibling(dir: &Path, tag: &str) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    dir.with_file_name(format!(".{name}.{tag}-{}-{nanos}", std::process::id()))
}

/// Writes into a temporary sibling directory and renames it into place, so
/// readers never observe a partial checkpoint. An existing directory at
/// `dir` is replaced.
pub fn write_checkpoint(ckpt: &AdapterCheckpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ckpt.validate()?;
    let manifest = manifest_for(ckpt);
    let mut blobs = Vec::with_capacity(ckpt.tensors.len() * 2);
    for (t, entry) in ckpt.tensors.iter().zip(&manifest.tensors) {
        blobs.push((entry.a.clone(), encode(&t.a, &t.name)?));
        blobs.push((entry.b.clone(), encode(&t.b, &t.name)?));
    }
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');

    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = sibling(dir, "tmp");
    let staged = (|| -> Result<()> {
        fs::create_dir_all(tmp.join(BLOB_DIR))?;
        for (rel, bytes) in &blobs {
            fs::write(tmp.join(rel), bytes)?;
        }
        fs::write(tmp.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }

    if dir.exists() {
        let old = sibling(dir, "old");
        fs::rename(dir, &old)?;
        if let Err(e) = fs::rename(&tmp, dir) {
            let _ = fs::rename(&old, dir);
            let _ = fs::remove_dir_all(&tmp);
            return Err(e.into());
        }
        fs::remove_dir_all(&old)?;
    } else if let Err(e) = fs::rename(&tmp, dir) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// Seed for one tensor: the base seed XOR the FNV-1a-64 hash of its name.
/// Independent of processing order.
pub fn tensor_seed(base_seed: u64, name: &str) -> u64 {
    base_seed ^ fnv1a_64(name.as_bytes())
}

fn transform_all<F>(
    ckpt: &AdapterCheckpoint,
    provenance: ProvenanceEntry,
    f: F,
) -> Result<(AdapterCheckpoint, Vec<SqueezeReport>)>
where
    F: Fn(&LoraFactorPair) -> Result<(LoraFactorPair, SqueezeReport)> + Sync + Send,
{
    ckpt.validate()?;
    let results = par::try_map_ordered(&ckpt.tensors, f)?;
    let (tensors, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut out = AdapterCheckpoint {
        format_version: ckpt.format_version,
        base_model: ckpt.base_model.clone(),
        alpha: ckpt.alpha,
        heterogeneous: false,
        tensors,
        provenance: ckpt.provenance.clone(),
    };
    out.provenance.push(provenance);
    out.validate()?;
    Ok((out, reports))
}

fn source_rank_of(ckpt: &AdapterCheckpoint) -> usize {
    ckpt.rank()
        .or_else(|| ckpt.tensors.iter().map(LoraFactorPair::rank).max())
        .unwrap_or(0)
}

/// Squeezes every tensor to `target_rank`. Randomized backends use
/// [`tensor_seed`] for each tensor. Any failure aborts the whole checkpoint.
pub fn squeeze_checkpoint(
    ckpt: &AdapterCheckpoint,
    target_rank: usize,
    method: &SqueezeMethod,
    base_seed: u64,
) -> Result<(AdapterCheckpoint, Vec<SqueezeReport>)> {
    let provenance = ProvenanceEntry {
        operation: "squeeze".into(),
        method: method.label().into(),
        source_rank: source_rank_of(ckpt),
        target_rank,
        seed: method.seed().map(|_| base_seed),
    };
    transform_all(ckpt, provenance, |pair| {
        let m = method.with_seed(tensor_seed(base_seed, &pair.name));
        squeeze(pair, target_rank, &m)
    })
}

/// Raises every tensor to `target_rank` without changing any product.
pub fn expand_checkpoint(
    ckpt: &AdapterCheckpoint,
    target_rank: usize,
) -> Result<(AdapterCheckpoint, Vec<SqueezeReport>)> {
    let provenance = ProvenanceEntry {
        operation: "expand".into(),
        method: SqueezeMethod::FullSvd.label().into(),
        source_rank: source_rank_of(ckpt),
        target_rank,
        seed: None,
    };
    transform_all(ckpt, provenance, |pair| squeeze_expand(pair, target_rank))
}
