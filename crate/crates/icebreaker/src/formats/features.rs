//! `ICEB` feature files.

use std::path::Path;

use icebreaker_core::dataset::{FeatureKind, FeatureSet};

use super::bin::{read_file, write_file, Reader, Writer};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ICEB";
const VERSION: u16 = 1;

fn kind_code(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::VideoLevel => 0,
        FeatureKind::FrameLevel => 1,
    }
}

pub fn encode_features(fs: &FeatureSet) -> Result<Vec<u8>> {
    let mut w = Writer::with_header(MAGIC, VERSION);
    w.u8(kind_code(fs.kind()));
    w.len32(fs.len())?;
    w.len32(fs.dim())?;
    for (id, values) in fs.iter() {
        w.id(id)?;
        if fs.kind() == FeatureKind::FrameLevel {
            w.len32(values.len() / fs.dim())?;
        }
        for &v in values {
            w.f32(v);
        }
    }
    Ok(w.into_bytes())
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader::with_header(bytes, MAGIC, VERSION, "feature file")?;
    let kind = match r.u8()? {
        0 => FeatureKind::VideoLevel,
        1 => FeatureKind::FrameLevel,
        k => return Err(Error::Format(format!("feature file: unknown kind {k}"))),
    };
    let count = r.count(2)?;
    let dim = r.usize()?;
    if dim == 0 {
        return Err(Error::Format("feature file: dim is 0".into()));
    }
    let mut fs = FeatureSet::new(kind, dim)?;
    for _ in 0..count {
        let id = r.id()?;
        let frames = match kind {
            FeatureKind::VideoLevel => 1,
            FeatureKind::FrameLevel => r.usize()?,
        };
        if frames == 0 {
            return Err(Error::Format(format!("feature file: {id} has no frames")));
        }
        let n = frames
            .checked_mul(dim)
            .ok_or_else(|| Error::Format(format!("feature file: {id} payload size overflows")))?;
        let payload = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
        let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        fs.insert(id, values)?;
    }
    r.finish()?;
    Ok(fs)
}

pub fn save_features(path: &Path, fs: &FeatureSet) -> Result<()> {
    write_file(path, &encode_features(fs)?)
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    decode_features(&read_file(path)?)
}
