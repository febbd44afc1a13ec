//! `TFLT` float checkpoint, the hand-off between training and packaging.
//!
//! Little-endian: magic `TFLT`, u16 format version, u16 class count, class-name
//! table (u8 length-prefixed UTF-8), 12 f32 channel statistics (6 means then
//! 6 deviations), then every parameter as f32 in layer order (conv1, conv2,
//! dense1, head; weights before bias).

use std::path::Path;

use super::{Architecture, CnnModel, NnError, Params, Result};
use crate::codec::{put_f32, put_short_str, put_u16, Reader};
use crate::signal::{ChannelStats, CHANNELS};
use crate::ClassMap;

pub const MAGIC: &[u8; 4] = b"TFLT";
pub const FORMAT_VERSION: u16 = 1;

/// A trained float model and the normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CnnModel,
    pub stats: ChannelStats,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = &self.model;
        if m.arch != Architecture::default() {
            return Err(NnError::Checkpoint(
                "only the default architecture can be checkpointed".into(),
            ));
        }
        let mut out = Vec::with_capacity(64 + 4 * m.param_count());
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, FORMAT_VERSION);
        put_u16(&mut out, m.num_classes() as u16);
        for name in m.classes.names() {
            if name.len() > u8::MAX as usize {
                return Err(NnError::Checkpoint(format!("class name too long: {name}")));
            }
            put_short_str(&mut out, name);
        }
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            put_f32(&mut out, *v);
        }
        for v in m.params.iter() {
            put_f32(&mut out, *v as f32);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |e: crate::codec::DecodeError| NnError::Checkpoint(e.to_string());
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(bad)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = r.u16().map_err(bad)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.u16().map_err(bad)? as usize;
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            names.push(r.short_str().map_err(bad)?);
        }
        let classes = ClassMap::new(names);
        if classes.len() != n || n < 2 {
            return Err(NnError::Checkpoint("invalid class table".into()));
        }
        let mut stats = ChannelStats::identity();
        for c in 0..CHANNELS {
            stats.mean[c] = r.f32().map_err(bad)?;
        }
        for c in 0..CHANNELS {
            stats.std[c] = r.f32().map_err(bad)?;
        }
        let arch = Architecture::default();
        let mut params: Params = Params::zeros(&arch, n);
        for v in params.iter_mut() {
            *v = r.f32().map_err(bad)? as f64;
        }
        if r.remaining() != 0 {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        if !params.all_finite() || !stats.is_valid() {
            return Err(NnError::Checkpoint(
                "non-finite parameters or invalid statistics".into(),
            ));
        }
        Ok(Self {
            model: CnnModel {
                arch,
                classes,
                params,
                trainable: [true; 4],
                seed: 0,
            },
            stats,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
