//! Little-endian primitives shared by the binary formats.

use icebreaker_core::dataset::VideoId;
use icebreaker_core::nn::Tensor;

use crate::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(magic);
        w.u16(version);
        w
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Lengths and counts that must fit the on-disk `u32`.
    pub fn len32(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("{n} exceeds the u32 range")))?;
        self.u32(n);
        Ok(())
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// `u16` length + UTF-8.
    pub fn id(&mut self, id: &VideoId) -> Result<()> {
        let len = u16::try_from(id.as_str().len())
            .map_err(|_| Error::Format(format!("video id longer than {} bytes", u16::MAX)))?;
        self.u16(len);
        self.bytes(id.as_str().as_bytes());
        Ok(())
    }

    /// `u32` length + UTF-8.
    pub fn text(&mut self, s: &str) -> Result<()> {
        self.len32(s.len())?;
        self.bytes(s.as_bytes());
        Ok(())
    }

    /// Rank `u8`, dims as `u32`, then the payload narrowed to `f32`.
    pub fn tensor(&mut self, t: &Tensor) -> Result<()> {
        self.u8(t.shape().len() as u8);
        for &d in t.shape() {
            self.len32(d)?;
        }
        for &v in t.data() {
            self.f32(v as f32);
        }
        Ok(())
    }

    pub fn tensors<'a>(&mut self, ts: impl ExactSizeIterator<Item = &'a Tensor>) -> Result<()> {
        self.len32(ts.len())?;
        ts.into_iter().try_for_each(|t| self.tensor(t))
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks magic and version; `what` names the format in errors.
    pub fn with_header(buf: &'a [u8], magic: &[u8; 4], version: u16, what: &'static str) -> Result<Self> {
        let mut r = Self { buf, pos: 0, what };
        if r.take(4)? != magic {
            return Err(Error::Format(format!("{what}: bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        let v = r.u16()?;
        if v != version {
            return Err(Error::Format(format!("{what}: unsupported version {v}")));
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
                Error::Format(format!("{}: truncated at byte {} (need {n} more)", self.what, self.pos))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    pub fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    /// A count of items each at least `min_item_bytes` long, rejected early if
    /// the remaining input cannot hold them.
    pub fn count(&mut self, min_item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(min_item_bytes) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("{}: count {n} exceeds remaining input", self.what)));
        }
        Ok(n)
    }

    fn utf8(&self, bytes: &[u8]) -> Result<String> {
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("{}: invalid UTF-8", self.what)))
    }

    pub fn id(&mut self) -> Result<VideoId> {
        let n = usize::from(self.u16()?);
        let bytes = self.take(n)?;
        Ok(VideoId::new(self.utf8(bytes)?)?)
    }

    pub fn text(&mut self) -> Result<String> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        self.utf8(bytes)
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let rank = usize::from(self.u8()?);
        let shape = (0..rank).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let len = len
            .filter(|&n| n.saturating_mul(4) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Format(format!("{}: tensor shape {shape:?} exceeds remaining input", self.what)))?;
        let data = (0..len).map(|_| self.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(icebreaker_core::Error::Data(format!("{}: non-finite parameter", self.what)).into());
        }
        Ok(Tensor::from_vec(&shape, data)?)
    }

    pub fn tensors(&mut self) -> Result<Vec<Tensor>> {
        let n = self.count(1)?;
        (0..n).map(|_| self.tensor()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{}: {} trailing bytes", self.what, self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
