//! `.psck` checkpoints: a TOML manifest, a separator line, and one
//! little-endian binary blob.
//!
//! ```text
//! format = "psck"
//! version = 1
//! kind = "agent"
//! step = 20000
//! blob_bytes = 123456
//!
//! [task]        # task descriptor
//! [config]      # run configuration snapshot
//! [[rng]]       # name, seed (hex), stream, word_pos (hex)
//! [[tensors]]   # name, dtype ("f64" | "i32"), shape, len, offset (bytes)
//! %%BLOB%%
//! <blob_bytes bytes>
//! ```
//!
//! Tensors are stored back to back in manifest order. `f64` values are
//! IEEE-754 binary64 and `i32` values two's complement, both little-endian.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::TaskDescriptor;
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::optim::Adam;
use crate::popcode::EncoderParams;
use crate::popsan::PopSanParams;

pub const FORMAT: &str = "psck";
pub const VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"\n%%BLOB%%\n";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    I32(Vec<i32>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F64(_) => "f64",
            TensorData::I32(_) => "i32",
        }
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

/// Named tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorTable {
    entries: Vec<(String, Tensor)>,
}

impl TensorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_f64(&mut self, name: impl Into<String>, shape: &[usize], data: &[f64]) {
        self.insert(name.into(), shape.to_vec(), TensorData::F64(data.to_vec()));
    }

    pub fn insert_i32(&mut self, name: impl Into<String>, shape: &[usize], data: &[i32]) {
        self.insert(name.into(), shape.to_vec(), TensorData::I32(data.to_vec()));
    }

    fn insert(&mut self, name: String, shape: Vec<usize>, data: TensorData) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor {name}");
        let tensor = Tensor { shape, data };
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Malformed(format!("missing tensor `{name}`")))?;
        if t.shape != shape {
            return Err(Error::Malformed(format!(
                "tensor `{name}` has shape {:?}, the network expects {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    pub fn f64s(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        match &self.lookup(name, shape)?.data {
            TensorData::F64(v) => Ok(v),
            TensorData::I32(_) => Err(Error::Malformed(format!("tensor `{name}` is i32, expected f64"))),
        }
    }

    pub fn i32s(&self, name: &str, shape: &[usize]) -> Result<&[i32]> {
        match &self.lookup(name, shape)?.data {
            TensorData::I32(v) => Ok(v),
            TensorData::F64(_) => Err(Error::Malformed(format!("tensor `{name}` is f64, expected i32"))),
        }
    }

    /// Copies a stored `f64` tensor into `dst`, whose shape must match.
    pub fn read_into(&self, name: &str, shape: &[usize], dst: &mut [f64]) -> Result<()> {
        dst.copy_from_slice(self.f64s(name, shape)?);
        Ok(())
    }
}

/// Types that can write themselves into a tensor table and be restored
/// into an instance of identical architecture.
pub trait Persist {
    fn store(&self, prefix: &str, table: &mut TensorTable);
    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()>;
}

impl Persist for Mlp {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        for (k, l) in self.layers.iter().enumerate() {
            table.insert_f64(format!("{prefix}.{k}.weights"), &[l.n_out, l.n_in], &l.weights);
            table.insert_f64(format!("{prefix}.{k}.biases"), &[l.n_out], &l.biases);
        }
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        for (k, l) in self.layers.iter_mut().enumerate() {
            table.read_into(&format!("{prefix}.{k}.weights"), &[l.n_out, l.n_in], &mut l.weights)?;
            table.read_into(&format!("{prefix}.{k}.biases"), &[l.n_out], &mut l.biases)?;
        }
        Ok(())
    }
}

impl Persist for EncoderParams {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        let shape = [self.obs_dim(), self.pop_size()];
        table.insert_f64(format!("{prefix}.means"), &shape, &self.means);
        table.insert_f64(format!("{prefix}.stds"), &shape, &self.stds);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        let shape = [self.obs_dim(), self.pop_size()];
        table.read_into(&format!("{prefix}.means"), &shape, &mut self.means)?;
        table.read_into(&format!("{prefix}.stds"), &shape, &mut self.stds)?;
        self.validate()
    }
}

impl Persist for PopSanParams {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.encoder.store(&format!("{prefix}.encoder"), table);
        for (k, l) in self.layers.iter().enumerate() {
            table.insert_f64(format!("{prefix}.layers.{k}.weights"), &[l.n_out(), l.n_in()], &l.weights);
            table.insert_f64(format!("{prefix}.layers.{k}.biases"), &[l.n_out()], &l.biases);
        }
        let d = &self.decoder;
        table.insert_f64(format!("{prefix}.decoder.weights"), &[d.act_dim(), d.pop_size()], &d.weights);
        table.insert_f64(format!("{prefix}.decoder.biases"), &[d.act_dim()], &d.biases);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.encoder.restore(&format!("{prefix}.encoder"), table)?;
        for (k, l) in self.layers.iter_mut().enumerate() {
            let (n_out, n_in) = (l.n_out(), l.n_in());
            table.read_into(&format!("{prefix}.layers.{k}.weights"), &[n_out, n_in], &mut l.weights)?;
            table.read_into(&format!("{prefix}.layers.{k}.biases"), &[n_out], &mut l.biases)?;
        }
        let d = &mut self.decoder;
        let shape = [d.act_dim(), d.pop_size()];
        table.read_into(&format!("{prefix}.decoder.weights"), &shape, &mut d.weights)?;
        let act = [d.act_dim()];
        table.read_into(&format!("{prefix}.decoder.biases"), &act, &mut d.biases)?;
        Ok(())
    }
}

impl Persist for Vec<f64> {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        table.insert_f64(prefix, &[self.len()], self);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        let shape = [self.len()];
        table.read_into(prefix, &shape, self)
    }
}

impl Persist for Adam {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        // The step count stays exact in an f64 up to 2^53.
        table.insert_f64(format!("{prefix}.step"), &[1], &[self.step as f64]);
        for (i, (m, v)) in self.first_moment.iter().zip(&self.second_moment).enumerate() {
            table.insert_f64(format!("{prefix}.m.{i}"), &[m.len()], m);
            table.insert_f64(format!("{prefix}.v.{i}"), &[v.len()], v);
        }
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        let step = table.f64s(&format!("{prefix}.step"), &[1])?[0];
        if !(step >= 0.0 && step.fract() == 0.0) {
            return Err(Error::Malformed(format!("optimizer step {step} is not a count")));
        }
        self.step = step as u64;
        for (i, (m, v)) in self.first_moment.iter_mut().zip(&mut self.second_moment).enumerate() {
            let shape = [m.len()];
            table.read_into(&format!("{prefix}.m.{i}"), &shape, m)?;
            table.read_into(&format!("{prefix}.v.{i}"), &shape, v)?;
        }
        Ok(())
    }
}

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub name: String,
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(name: &str, rng: &ChaCha8Rng) -> Self {
        Self {
            name: name.to_string(),
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn rebuild(&self) -> ChaCha8Rng {
        use rand::SeedableRng as _;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub step: u64,
    pub task: TaskDescriptor,
    /// Configuration snapshot; enough to rebuild every network in `tensors`.
    pub config: toml::Table,
    pub rng: Vec<RngState>,
    pub tensors: TensorTable,
}

impl Checkpoint {
    pub fn new(kind: &str, task: TaskDescriptor, config: toml::Table) -> Self {
        Self {
            kind: kind.to_string(),
            step: 0,
            task,
            config,
            rng: Vec::new(),
            tensors: TensorTable::new(),
        }
    }

    pub fn rng(&self, name: &str) -> Option<ChaCha8Rng> {
        self.rng.iter().find(|r| r.name == name).map(RngState::rebuild)
    }

    /// Fails unless the checkpoint was written for `task`.
    pub fn ensure_task(&self, task: &TaskDescriptor) -> Result<()> {
        if self.task.name != task.name || self.task.obs_dim != task.obs_dim || self.task.act_dim != task.act_dim {
            return Err(Error::DescriptorMismatch {
                expected: task.name.clone(),
                found: self.task.name.clone(),
            });
        }
        Ok(())
    }

    pub fn ensure_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Malformed(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors.entries {
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: t.data.dtype().to_string(),
                shape: t.shape.clone(),
                len: t.data.len(),
                offset: blob.len(),
            });
            match &t.data {
                TensorData::F64(v) => v.iter().for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
                TensorData::I32(v) => v.iter().for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: self.kind.clone(),
            step: self.step,
            blob_bytes: blob.len(),
            task: self.task.clone(),
            config: self.config.clone(),
            rng: self
                .rng
                .iter()
                .map(|r| RngEntry {
                    name: r.name.clone(),
                    seed: hex(&r.seed),
                    stream: format!("{:#018x}", r.stream),
                    word_pos: format!("{:#034x}", r.word_pos),
                })
                .collect(),
            tensors: entries,
        };
        let text = toml::to_string(&manifest).expect("manifest is representable as TOML");
        let mut out = text.into_bytes();
        if out.last() == Some(&b'\n') {
            out.pop();
        }
        out.extend_from_slice(SEPARATOR);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(SEPARATOR.len())
            .position(|w| w == SEPARATOR)
            .ok_or_else(|| Error::Malformed("no blob separator".into()))?;
        let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Malformed("manifest is not UTF-8".into()))?;
        let blob = &bytes[split + SEPARATOR.len()..];

        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Malformed(e.message().to_string()))?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(Error::Malformed("not a psck checkpoint".into()));
        }
        let version = raw
            .get("version")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| Error::Malformed("missing version".into()))?;
        if version != i64::from(VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: VERSION,
            });
        }
        let manifest: Manifest = toml::Value::Table(raw)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Malformed(e.message().to_string()))?;
        if blob.len() != manifest.blob_bytes {
            return Err(Error::Truncated {
                expected: manifest.blob_bytes,
                found: blob.len(),
            });
        }

        let mut tensors = TensorTable::new();
        for e in &manifest.tensors {
            let elements: usize = e.shape.iter().product();
            if elements != e.len {
                return Err(Error::ShapeMismatch {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    expected: elements,
                    found: e.len,
                });
            }
            let width = match e.dtype.as_str() {
                "f64" => 8,
                "i32" => 4,
                other => return Err(Error::Malformed(format!("tensor `{}` has unknown dtype `{other}`", e.name))),
            };
            let end = e.offset.checked_add(e.len * width).filter(|&end| end <= blob.len()).ok_or(Error::Truncated {
                expected: e.offset.saturating_add(e.len * width),
                found: blob.len(),
            })?;
            let bytes = &blob[e.offset..end];
            let data = if width == 8 {
                TensorData::F64(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            } else {
                TensorData::I32(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect())
            };
            tensors.insert(e.name.clone(), e.shape.clone(), data);
        }

        let rng = manifest
            .rng
            .iter()
            .map(|r| {
                let seed = unhex(&r.seed)
                    .and_then(|v| <[u8; 32]>::try_from(v).ok())
                    .ok_or_else(|| Error::Malformed(format!("bad seed for stream `{}`", r.name)))?;
                let stream = parse_hex_u128(&r.stream).and_then(|v| u64::try_from(v).ok());
                let word_pos = parse_hex_u128(&r.word_pos);
                match (stream, word_pos) {
                    (Some(stream), Some(word_pos)) => Ok(RngState {
                        name: r.name.clone(),
                        seed,
                        stream,
                        word_pos,
                    }),
                    _ => Err(Error::Malformed(format!("bad position for stream `{}`", r.name))),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            kind: manifest.kind,
            step: manifest.step,
            task: manifest.task,
            config: manifest.config,
            rng,
            tensors,
        })
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&checkpoint.to_bytes())?;
    file.sync_all()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    kind: String,
    step: u64,
    blob_bytes: usize,
    task: TaskDescriptor,
    config: toml::Table,
    #[serde(default)]
    rng: Vec<RngEntry>,
    #[serde(default)]
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngEntry {
    name: String,
    seed: String,
    stream: String,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    len: usize,
    offset: usize,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

fn parse_hex_u128(s: &str) -> Option<u128> {
    u128::from_str_radix(s.strip_prefix("0x")?, 16).ok()
}
