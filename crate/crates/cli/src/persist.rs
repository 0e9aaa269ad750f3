//! Binary model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "EON1"                      magic
//! u16                         format version (1)
//! u16 side, u16 kernel_side, u8 filters, u32 neurons,
//! u16 active, u16 t_learn0, u16 clusters              config block
//! per neuron:
//!   u16 t_learn, u16 t_fire (0xFFFF = inactive), u32 learned_count,
//!   ceil(side² / 2) bytes of weights, two 4-bit elements per byte,
//!   low nibble = even pixel index
//! u32                         CRC-32 of every preceding byte
//! ```

use std::path::{Path, PathBuf};

use eon_core::network::{Layer, ModelConfig, Neuron};
use eon_core::vector::{pack_nibbles, unpack_nibbles, CompressedVector, WeightVector};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EON1";
pub const VERSION: u16 = 1;
pub const INACTIVE: u16 = 0xFFFF;
const HEADER_LEN: usize = 4 + 2 + 15;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("not a model file (magic {found:?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated model file: {needed} bytes needed, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{extra} unexpected bytes after the checksum")]
    TrailingData { extra: usize },
    #[error("model config {found:?} does not match the expected {expected:?}")]
    ConfigMismatch {
        expected: ModelConfig,
        found: ModelConfig,
    },
    #[error("model does not fit the file format: {0}")]
    Unrepresentable(String),
    #[error("invalid model contents: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, PersistError>;

fn narrow<T: TryFrom<u64>>(value: u64, what: &str) -> Result<T> {
    T::try_from(value).map_err(|_| PersistError::Unrepresentable(format!("{what} = {value}")))
}

fn record_len(config: &ModelConfig) -> usize {
    2 + 2 + 4 + config.pixels().div_ceil(2)
}

/// Serializes `layer`; fails only if a field exceeds its on-disk width.
pub fn encode_model(layer: &Layer) -> Result<Vec<u8>> {
    let c = layer.config();
    let mut out = Vec::with_capacity(HEADER_LEN + c.neurons * record_len(c) + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(c.side as u64, "side")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(c.kernel_side as u64, "kernel_side")?.to_le_bytes());
    out.push(c.filters);
    out.extend_from_slice(&narrow::<u32>(c.neurons as u64, "neurons")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(c.active as u64, "active")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(c.t_learn0 as u64, "t_learn0")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(c.clusters as u64, "clusters")?.to_le_bytes());
    for n in layer.neurons() {
        out.extend_from_slice(&narrow::<u16>(n.t_learn as u64, "t_learn")?.to_le_bytes());
        let t_fire = match n.t_fire {
            None => INACTIVE,
            Some(t) if t < INACTIVE as u32 => t as u16,
            Some(t) => return Err(PersistError::Unrepresentable(format!("t_fire = {t}"))),
        };
        out.extend_from_slice(&t_fire.to_le_bytes());
        out.extend_from_slice(&n.learned_count.to_le_bytes());
        out.extend_from_slice(&pack_nibbles(n.weights.elems()));
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn u8(&mut self) -> u8 {
        self.take(1)[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take(2).try_into().unwrap())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
}

/// Parses a model file image. Structural checks run in order: magic,
/// version, length, checksum, then contents.
pub fn decode_model(bytes: &[u8]) -> Result<Layer> {
    if bytes.len() < MAGIC.len() {
        return Err(PersistError::Truncated {
            needed: HEADER_LEN + CRC_LEN,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(PersistError::BadMagic {
            found: bytes[..4].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(PersistError::Truncated {
            needed: HEADER_LEN + CRC_LEN,
            available: bytes.len(),
        });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u16();
    if version != VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let config = ModelConfig {
        side: cur.u16() as usize,
        kernel_side: cur.u16() as usize,
        filters: cur.u8(),
        neurons: cur.u32() as usize,
        active: cur.u16() as usize,
        t_learn0: cur.u16() as u32,
        clusters: cur.u16() as usize,
    };
    let needed = HEADER_LEN + config.neurons * record_len(&config) + CRC_LEN;
    if bytes.len() < needed {
        return Err(PersistError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(PersistError::TrailingData {
            extra: bytes.len() - needed,
        });
    }
    let body = &bytes[..needed - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[needed - CRC_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(PersistError::ChecksumMismatch { stored, computed });
    }
    config
        .validate()
        .map_err(|e| PersistError::Invalid(e.to_string()))?;
    let pixels = config.pixels();
    let mut neurons = Vec::with_capacity(config.neurons);
    for _ in 0..config.neurons {
        let t_learn = cur.u16() as u32;
        let t_fire = match cur.u16() {
            INACTIVE => None,
            t => Some(t as u32),
        };
        let learned_count = cur.u32();
        let elems = unpack_nibbles(cur.take(pixels.div_ceil(2)), pixels);
        let weights = CompressedVector::new(config.side, config.filters, elems)
            .and_then(|v| WeightVector::new(v, config.active))
            .map_err(|e| PersistError::Invalid(e.to_string()))?;
        neurons.push(Neuron {
            weights,
            t_learn,
            t_fire,
            learned_count,
        });
    }
    Layer::from_parts(config, neurons).map_err(|e| PersistError::Invalid(e.to_string()))
}

pub fn save_model(layer: &Layer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(layer)?;
    std::fs::write(path, bytes).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Layer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}

/// Loads a model and insists its config equals `expected`.
pub fn load_model_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Layer> {
    let layer = load_model(path)?;
    if layer.config() != expected {
        return Err(PersistError::ConfigMismatch {
            expected: *expected,
            found: *layer.config(),
        });
    }
    Ok(layer)
}
