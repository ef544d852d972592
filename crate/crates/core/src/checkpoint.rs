//! Named-tensor archives and their text manifests.
//!
//! Archive layout (little endian): the magic `BASNETCK`, a `u32` format
//! version, a `u32` entry count, then per entry a `u32` name length, the UTF-8
//! name, a `u32` rank, `u64` dimensions and the `f32` values.
//!
//! The manifest is line oriented:
//!
//! ```text
//! format basnet-checkpoint 1
//! config arch=eds_rrm_ours ...
//! config_hash <sha256 of the config line>
//! archive_sha256 <sha256 of the archive file>
//! param prednet.conv1.weight 64x3x3x3
//! buffer prednet.bn1.running_mean 64
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Module, Param, Visitor};

const MAGIC: &[u8; 8] = b"BASNETCK";
const VERSION: u32 = 1;
pub const MANIFEST_HEADER: &str = "format basnet-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub trainable: bool,
}

/// An ordered map from tensor name to contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    tensors: BTreeMap<String, NamedTensor>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
        trainable: bool,
    ) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.insert(
            name.into(),
            NamedTensor {
                shape,
                data,
                trainable,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NamedTensor)> {
        self.tensors.iter()
    }

    /// Snapshot of every parameter and buffer of `module`.
    pub fn from_module(module: &mut dyn Module) -> Self {
        struct Collect(TensorArchive);
        impl Visitor for Collect {
            fn param(&mut self, name: &str, p: &mut Param) {
                self.0.insert(name, p.shape.clone(), p.value.clone(), true);
            }
            fn buffer(&mut self, name: &str, shape: &[usize], data: &mut Vec<f32>) {
                self.0.insert(name, shape.to_vec(), data.clone(), false);
            }
        }
        let mut c = Collect(TensorArchive::new());
        module.visit("", &mut c);
        c.0
    }

    /// Overwrites every parameter and buffer of `module`; every name must be
    /// present with a matching shape and the archive may hold nothing extra.
    pub fn load_into(&self, module: &mut dyn Module) -> Result<()> {
        struct Apply<'a> {
            archive: &'a TensorArchive,
            seen: Vec<String>,
            problems: Vec<String>,
        }
        impl Apply<'_> {
            fn apply(&mut self, name: &str, shape: &[usize], dst: &mut [f32]) {
                self.seen.push(name.to_string());
                match self.archive.get(name) {
                    None => self.problems.push(format!(
                        "- {name} {} (missing from checkpoint)",
                        format_shape(shape)
                    )),
                    Some(t) if t.shape != shape => self.problems.push(format!(
                        "~ {name} checkpoint {} vs model {}",
                        format_shape(&t.shape),
                        format_shape(shape)
                    )),
                    Some(t) => dst.copy_from_slice(&t.data),
                }
            }
        }
        impl Visitor for Apply<'_> {
            fn param(&mut self, name: &str, p: &mut Param) {
                let shape = p.shape.clone();
                self.apply(name, &shape, &mut p.value);
            }
            fn buffer(&mut self, name: &str, shape: &[usize], data: &mut Vec<f32>) {
                self.apply(name, shape, data);
            }
        }
        let mut a = Apply {
            archive: self,
            seen: Vec::new(),
            problems: Vec::new(),
        };
        module.visit("", &mut a);
        let seen: std::collections::BTreeSet<_> = a.seen.iter().cloned().collect();
        for (name, t) in &self.tensors {
            if !seen.contains(name) {
                a.problems.push(format!(
                    "+ {name} {} (not in model)",
                    format_shape(&t.shape)
                ));
            }
        }
        if a.problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ManifestMismatch(a.problems))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.trainable as u8);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "<archive>".into(),
            reason: reason.into(),
        };
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |r: &mut &[u8]| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u32::from_le_bytes(b))
        };
        if u32_at(&mut r)? != VERSION {
            return Err(bad("unsupported version"));
        }
        let count = u32_at(&mut r)?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let len = u32_at(&mut r)? as usize;
            if r.len() < len + 1 {
                return Err(bad("truncated name"));
            }
            let name = std::str::from_utf8(&r[..len])
                .map_err(|_| bad("name is not UTF-8"))?
                .to_string();
            let trainable = r[len] != 0;
            r = &r[len + 1..];
            let rank = u32_at(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| bad("truncated shape"))?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            if r.len() < n * 4 {
                return Err(bad("truncated data"));
            }
            let data = r[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            r = &r[n * 4..];
            archive.insert(name, shape, data, trainable);
        }
        Ok(archive)
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        write_atomic(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn read(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => e.into(),
        })?;
        let archive = Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })?;
        Ok((archive, sha256_hex(&bytes)))
    }
}

pub fn format_shape(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parsed checkpoint manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub config: String,
    pub config_hash: String,
    pub archive_sha256: String,
    /// `(name, shape, trainable)` in archive order.
    pub entries: Vec<(String, Vec<usize>, bool)>,
}

impl Manifest {
    pub fn from_archive(config: &str, archive: &TensorArchive, archive_sha256: &str) -> Self {
        Self {
            config: config.to_string(),
            config_hash: sha256_hex(config.as_bytes()),
            archive_sha256: archive_sha256.to_string(),
            entries: archive
                .iter()
                .map(|(n, t)| (n.clone(), t.shape.clone(), t.trainable))
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{MANIFEST_HEADER}\nconfig {}\nconfig_hash {}\narchive_sha256 {}\n",
            self.config, self.config_hash, self.archive_sha256
        );
        for (name, shape, trainable) in &self.entries {
            let kind = if *trainable { "param" } else { "buffer" };
            s.push_str(&format!("{kind} {name} {}\n", format_shape(shape)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: "manifest".into(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut config = None;
        let mut config_hash = None;
        let mut archive_sha256 = None;
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (key, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            match key {
                "config" => config = Some(rest.to_string()),
                "config_hash" => config_hash = Some(rest.trim().to_string()),
                "archive_sha256" => archive_sha256 = Some(rest.trim().to_string()),
                "param" | "buffer" => {
                    let (name, shape) = rest
                        .rsplit_once(' ')
                        .ok_or_else(|| bad(format!("malformed entry {line:?}")))?;
                    let shape = if shape == "scalar" {
                        Vec::new()
                    } else {
                        shape
                            .split('x')
                            .map(|d| {
                                d.parse::<usize>()
                                    .map_err(|_| bad(format!("bad shape in {line:?}")))
                            })
                            .collect::<Result<Vec<_>>>()?
                    };
                    entries.push((name.to_string(), shape, key == "param"));
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(Self {
            config: config.ok_or_else(|| bad("missing config".into()))?,
            config_hash: config_hash.ok_or_else(|| bad("missing config_hash".into()))?,
            archive_sha256: archive_sha256.ok_or_else(|| bad("missing archive_sha256".into()))?,
            entries,
        })
    }

    /// Lines describing how `self` differs from `other` (empty when equal).
    pub fn diff(&self, other: &Manifest) -> Vec<String> {
        let mine: BTreeMap<_, _> = self.entries.iter().map(|(n, s, _)| (n, s)).collect();
        let theirs: BTreeMap<_, _> = other.entries.iter().map(|(n, s, _)| (n, s)).collect();
        let mut out = Vec::new();
        if self.config_hash != other.config_hash {
            out.push(format!("config: {} vs {}", self.config, other.config));
        }
        for (n, s) in &mine {
            match theirs.get(n) {
                None => out.push(format!("- {n} {}", format_shape(s))),
                Some(t) if t != s => {
                    out.push(format!("~ {n} {} vs {}", format_shape(s), format_shape(t)))
                }
                _ => {}
            }
        }
        for (n, t) in &theirs {
            if !mine.contains_key(n) {
                out.push(format!("+ {n} {}", format_shape(t)));
            }
        }
        out
    }
}
