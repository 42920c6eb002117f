//! Canonical byte encoding primitives.
//!
//! Lengths and counts are unsigned 64-bit big-endian. Decoding is total: any
//! byte string either decodes or yields a [`WireError`], and no length field
//! can trigger an allocation larger than the remaining input.

use thiserror::Error;

use crate::id::{ElementId, DIGEST_LEN};

/// Version byte prefixed to every top-level wire message.
pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("unknown tag {0:#04x}")]
    Tag(u8),
    #[error("length field exceeds remaining input")]
    Length,
    #[error("digest list is not strictly ascending")]
    Unsorted,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("malformed field: {0}")]
    Malformed(&'static str),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u64(bytes.len() as u64);
        self.raw(bytes)
    }

    /// Count-prefixed digests, in iteration order.
    pub fn digests<'a>(&mut self, ids: impl ExactSizeIterator<Item = &'a ElementId>) -> &mut Self {
        self.u64(ids.len() as u64);
        for id in ids {
            self.raw(id.as_bytes());
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if n > self.buf.len() {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, WireError> {
        let b = self.take(8)?;
        Ok(i64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    /// Reads a count and checks that `count * unit` bytes remain.
    pub fn count(&mut self, unit: usize) -> Result<usize, WireError> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| WireError::Length)?;
        if n.checked_mul(unit.max(1)).is_none_or(|need| need > self.remaining()) {
            return Err(WireError::Length);
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.count(1)?;
        self.take(n)
    }

    pub fn digest(&mut self) -> Result<ElementId, WireError> {
        let b = self.take(DIGEST_LEN)?;
        Ok(ElementId(b.try_into().expect("digest length")))
    }

    /// Count-prefixed digests, required to be strictly ascending.
    pub fn sorted_digests(&mut self) -> Result<Vec<ElementId>, WireError> {
        let n = self.count(DIGEST_LEN)?;
        let mut out: Vec<ElementId> = Vec::with_capacity(n);
        for _ in 0..n {
            let d = self.digest()?;
            if out.last().is_some_and(|prev| *prev >= d) {
                return Err(WireError::Unsorted);
            }
            out.push(d);
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Trailing(self.buf.len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversized_count_is_rejected_without_allocating() {
        let mut w = Writer::new();
        w.u64(u64::MAX);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.count(32), Err(WireError::Length));
    }

    #[test]
    fn unsorted_digests_rejected() {
        let a = ElementId([1; 32]);
        let b = ElementId([2; 32]);
        let mut w = Writer::new();
        w.digests([b, a].iter());
        let bytes = w.finish();
        assert_eq!(Reader::new(&bytes).sorted_digests(), Err(WireError::Unsorted));
    }

    #[test]
    fn trailing_bytes_detected() {
        let r = Reader::new(&[0]);
        assert_eq!(r.finish(), Err(WireError::Trailing(1)));
    }
}
