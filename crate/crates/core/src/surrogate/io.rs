//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! header   magic "PYROFLUX" (8) | major u16 | minor u16 | patch u16
//!          | kind u8 (1 = forest, 2 = mlp) | reserved u8 = 0
//!          | payload length u64 | SHA-256 of payload (32)
//! payload  d u32 | input mean f64 x d | input std f64 x d
//! forest   seed u64 | n_trees u32 | max_depth u32 | min_leaf u32
//!          | feature_subsample u32 (0 = sqrt d)
//!          | per tree: n_nodes u32, then per node
//!              tag u8 = 0: leaf, value f64 x 6
//!              tag u8 = 1: split, feature u32 | threshold f64 | left u32 | right u32
//! mlp      n_sizes u32 | sizes u32 x n_sizes
//!          | per layer: weights f64 x (out * in), row-major | biases f64 x out
//!          | target mean f64 x 6 | target std f64 x 6
//! ```
//!
//! Readers accept files with the same major version and a minor version no
//! newer than their own.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{
    MlpModel, Normalizer, RandomForestModel, RfHyperparams, SurrogateError, SurrogateModel, TargetScaler, Tree,
    TreeNode,
};
use crate::tga::{N_FEATURES, N_TARGETS};

pub const MAGIC: &[u8; 8] = b"PYROFLUX";
pub const FORMAT_VERSION: (u16, u16, u16) = (1, 0, 0);
const HEADER_LEN: usize = 8 + 6 + 2 + 8 + 32;
const KIND_RF: u8 = 1;
const KIND_MLP: u8 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend(x.to_le_bytes());
        }
    }
    fn normalizer(&mut self, n: &Normalizer) {
        self.u32(n.dim());
        self.f64s(&n.mean);
        self.f64s(&n.std);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SurrogateError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| SurrogateError::Corrupt(format!("payload ends early at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SurrogateError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, SurrogateError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, SurrogateError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, SurrogateError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SurrogateError> {
        if n > self.buf.len() {
            return Err(SurrogateError::Corrupt(format!("implausible array length {n}")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn normalizer(&mut self, expected: usize) -> Result<Normalizer, SurrogateError> {
        let d = self.u32()?;
        if d != expected {
            return Err(SurrogateError::Corrupt(format!("normalizer width {d}, expected {expected}")));
        }
        let n = Normalizer { mean: self.f64s(d)?, std: self.f64s(d)? };
        if n.mean.iter().chain(&n.std).any(|v| !v.is_finite()) || n.std.iter().any(|s| *s <= 0.0) {
            return Err(SurrogateError::Corrupt("normalizer statistics not finite and positive".into()));
        }
        Ok(n)
    }
}

/// Serializes a model into the versioned, checksummed byte format.
pub fn write_model(model: &SurrogateModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let kind = match model {
        SurrogateModel::RandomForest(m) => {
            w.normalizer(&m.normalizer);
            w.u64(m.seed);
            w.u32(m.trees.len());
            w.u32(m.hp.max_depth);
            w.u32(m.hp.min_leaf);
            w.u32(m.hp.feature_subsample.unwrap_or(0));
            for t in &m.trees {
                w.u32(t.nodes.len());
                for n in &t.nodes {
                    match n {
                        TreeNode::Leaf { value } => {
                            w.u8(0);
                            w.f64s(value);
                        }
                        TreeNode::Split { feature, threshold, left, right } => {
                            w.u8(1);
                            w.u32(*feature);
                            w.f64s(&[*threshold]);
                            w.u32(*left);
                            w.u32(*right);
                        }
                    }
                }
            }
            KIND_RF
        }
        SurrogateModel::Mlp(m) => {
            w.normalizer(&m.input);
            w.u32(m.sizes.len());
            for &s in &m.sizes {
                w.u32(s);
            }
            for (wt, b) in m.weights.iter().zip(&m.biases) {
                w.f64s(wt);
                w.f64s(b);
            }
            w.f64s(&m.target.norm.mean);
            w.f64s(&m.target.norm.std);
            KIND_MLP
        }
    };
    let payload = w.0;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend(MAGIC);
    for v in [FORMAT_VERSION.0, FORMAT_VERSION.1, FORMAT_VERSION.2] {
        out.extend(v.to_le_bytes());
    }
    out.push(kind);
    out.push(0);
    out.extend((payload.len() as u64).to_le_bytes());
    out.extend(Sha256::digest(&payload));
    out.extend(payload);
    out
}

pub fn save_model(model: &SurrogateModel, path: &Path) -> Result<(), SurrogateError> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SurrogateModel, SurrogateError> {
    read_model(&std::fs::read(path)?)
}

fn version_string(v: (u16, u16, u16)) -> String {
    format!("{}.{}.{}", v.0, v.1, v.2)
}

/// Parses and verifies a model file image.
pub fn read_model(bytes: &[u8]) -> Result<SurrogateModel, SurrogateError> {
    if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] != MAGIC {
        return Err(SurrogateError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(SurrogateError::Checksum(format!("file truncated to {} bytes inside the header", bytes.len())));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let found = (u16_at(8), u16_at(10), u16_at(12));
    if found.0 != FORMAT_VERSION.0 || found.1 > FORMAT_VERSION.1 {
        return Err(SurrogateError::Version {
            found: version_string(found),
            supported: version_string(FORMAT_VERSION),
        });
    }
    let kind = bytes[14];
    let len = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let checksum = &bytes[24..56];
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != len {
        return Err(SurrogateError::Checksum(format!("payload is {} bytes, header declares {len}", payload.len())));
    }
    if Sha256::digest(payload)[..] != checksum[..] {
        return Err(SurrogateError::Checksum("payload digest differs from header".into()));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let model = match kind {
        KIND_RF => SurrogateModel::RandomForest(read_forest(&mut r)?),
        KIND_MLP => SurrogateModel::Mlp(read_mlp(&mut r)?),
        k => return Err(SurrogateError::Corrupt(format!("unknown model kind {k}"))),
    };
    if r.pos != payload.len() {
        return Err(SurrogateError::Corrupt(format!("{} trailing bytes", payload.len() - r.pos)));
    }
    Ok(model)
}

fn read_forest(r: &mut Reader) -> Result<RandomForestModel, SurrogateError> {
    let normalizer = r.normalizer(N_FEATURES)?;
    let seed = r.u64()?;
    let n_trees = r.u32()?;
    let max_depth = r.u32()?;
    let min_leaf = r.u32()?;
    let fs = r.u32()?;
    let hp = RfHyperparams { n_trees, max_depth, min_leaf, feature_subsample: (fs > 0).then_some(fs) };
    if n_trees == 0 {
        return Err(SurrogateError::Corrupt("forest without trees".into()));
    }
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        let n = r.u32()?;
        let mut nodes = Vec::new();
        for _ in 0..n {
            nodes.push(match r.u8()? {
                0 => TreeNode::Leaf { value: r.f64s(N_TARGETS)?.try_into().unwrap() },
                1 => {
                    let (feature, threshold, left, right) = (r.u32()?, r.f64()?, r.u32()?, r.u32()?);
                    if feature >= N_FEATURES || left >= n || right >= n {
                        return Err(SurrogateError::Corrupt("split node indices out of range".into()));
                    }
                    TreeNode::Split { feature, threshold, left, right }
                }
                t => return Err(SurrogateError::Corrupt(format!("unknown node tag {t}"))),
            });
        }
        if nodes.is_empty() {
            return Err(SurrogateError::Corrupt("empty tree".into()));
        }
        trees.push(Tree { nodes });
    }
    Ok(RandomForestModel { trees, hp, seed, normalizer })
}

fn read_mlp(r: &mut Reader) -> Result<MlpModel, SurrogateError> {
    let input = r.normalizer(N_FEATURES)?;
    let n_sizes = r.u32()?;
    if !(2..=64).contains(&n_sizes) {
        return Err(SurrogateError::Corrupt(format!("{n_sizes} layer sizes")));
    }
    let sizes: Vec<usize> = (0..n_sizes).map(|_| r.u32()).collect::<Result<_, _>>()?;
    if sizes[0] != N_FEATURES || sizes[n_sizes - 1] != N_TARGETS || sizes.contains(&0) {
        return Err(SurrogateError::Corrupt(format!("incompatible layer sizes {sizes:?}")));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in sizes.windows(2) {
        weights.push(r.f64s(w[0] * w[1])?);
        biases.push(r.f64s(w[1])?);
    }
    let target = TargetScaler { norm: Normalizer { mean: r.f64s(N_TARGETS)?, std: r.f64s(N_TARGETS)? } };
    let all = weights.iter().chain(&biases).flatten().chain(&target.norm.mean).chain(&target.norm.std);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(SurrogateError::Corrupt("non-finite parameter".into()));
    }
    Ok(MlpModel { sizes, weights, biases, input, target })
}
