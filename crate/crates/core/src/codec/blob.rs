//! `MRB1` blob byte layout (all integers little-endian):
//!
//! ```text
//! "MRB1" | codec u8 | dims 3 x u64 | eb f64 | adaptive u8 | alpha f64 | beta f64
//! | arrangement u8 (255 = plain volume) | padded u8 | u u32
//! | block count u64 | block coords (3 x u64 each)
//! | literal count u64
//! | table: symbol count u32, then (symbol u32, length u8) per symbol
//! | payload length u64 | payload
//! ```

use alloc::vec::Vec;

use super::entropy::HuffmanTable;
use super::ErrorBoundPolicy;
use crate::error::{bail, Result};
use crate::grid::BlockCoord;
use crate::layout::Arrangement;

pub const BLOB_MAGIC: &[u8; 4] = b"MRB1";
const NO_ARRANGEMENT: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CodecId {
    /// Values stored verbatim.
    Raw,
    Interp,
    BlockLorenzo,
}

impl CodecId {
    pub fn id(self) -> u8 {
        match self {
            CodecId::Raw => 0,
            CodecId::Interp => 1,
            CodecId::BlockLorenzo => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(CodecId::Raw),
            1 => Ok(CodecId::Interp),
            2 => Ok(CodecId::BlockLorenzo),
            _ => bail!(Format, "unknown codec id {id}"),
        }
    }
}

/// How a merged array was built, so the decoder can rebuild it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldLayout {
    pub arrangement: Arrangement,
    pub padded: bool,
    pub unit: usize,
    pub order: Vec<BlockCoord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobHeader {
    pub codec: CodecId,
    pub dims: [usize; 3],
    pub policy: ErrorBoundPolicy,
    /// `None` for a plain volume.
    pub layout: Option<FieldLayout>,
    pub literal_count: u64,
}

/// Self-delimiting compressed array.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlob {
    pub header: BlobHeader,
    pub table: HuffmanTable,
    pub payload: Vec<u8>,
}

impl CompressedBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 128);
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        let h = &self.header;
        out.extend_from_slice(BLOB_MAGIC);
        out.push(h.codec.id());
        for d in h.dims {
            put_u64(out, d as u64);
        }
        out.extend_from_slice(&h.policy.eb.to_le_bytes());
        out.push(u8::from(h.policy.adaptive));
        out.extend_from_slice(&h.policy.alpha.to_le_bytes());
        out.extend_from_slice(&h.policy.beta.to_le_bytes());
        match &h.layout {
            Some(l) => {
                out.push(l.arrangement.id());
                out.push(u8::from(l.padded));
                out.extend_from_slice(&(l.unit as u32).to_le_bytes());
                put_u64(out, l.order.len() as u64);
                for c in &l.order {
                    put_u64(out, c.bx as u64);
                    put_u64(out, c.by as u64);
                    put_u64(out, c.bz as u64);
                }
            }
            None => {
                out.push(NO_ARRANGEMENT);
                out.push(0);
                out.extend_from_slice(&0u32.to_le_bytes());
                put_u64(out, 0);
            }
        }
        put_u64(out, h.literal_count);
        out.extend_from_slice(&(self.table.entries.len() as u32).to_le_bytes());
        for &(sym, len) in &self.table.entries {
            out.extend_from_slice(&sym.to_le_bytes());
            out.push(len);
        }
        put_u64(out, self.payload.len() as u64);
        out.extend_from_slice(&self.payload);
    }

    /// Parses one blob from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOB_MAGIC {
            bail!(Format, "bad blob magic");
        }
        let codec = CodecId::from_id(r.u8()?)?;
        let dims = [r.usize()?, r.usize()?, r.usize()?];
        let eb = r.f64()?;
        let adaptive = r.bool()?;
        let alpha = r.f64()?;
        let beta = r.f64()?;
        let arrangement = r.u8()?;
        let padded = r.bool()?;
        let unit = r.u32()? as usize;
        let count = r.usize()?;
        let layout = if arrangement == NO_ARRANGEMENT {
            if padded || unit != 0 || count != 0 {
                bail!(Format, "plain-volume blob carries layout fields");
            }
            None
        } else {
            let arrangement = Arrangement::from_id(arrangement)?;
            if count > r.remaining() / 24 {
                bail!(Format, "block count {count} exceeds blob size");
            }
            let mut order = Vec::with_capacity(count);
            for _ in 0..count {
                order.push(BlockCoord::new(r.usize()?, r.usize()?, r.usize()?));
            }
            Some(FieldLayout {
                arrangement,
                padded,
                unit,
                order,
            })
        };
        let literal_count = r.u64()?;
        let symbols = r.u32()? as usize;
        if symbols > r.remaining() / 5 {
            bail!(Format, "symbol count {symbols} exceeds blob size");
        }
        let mut entries = Vec::with_capacity(symbols);
        for _ in 0..symbols {
            entries.push((r.u32()?, r.u8()?));
        }
        let len = r.usize()?;
        let payload = r.take(len)?.to_vec();
        Ok((
            Self {
                header: BlobHeader {
                    codec,
                    dims,
                    policy: ErrorBoundPolicy {
                        eb,
                        adaptive,
                        alpha,
                        beta,
                    },
                    layout,
                    literal_count,
                },
                table: HuffmanTable { entries },
                payload,
            },
            r.pos,
        ))
    }

    pub fn encoded_len(&self) -> usize {
        let layout = self.header.layout.as_ref().map_or(0, |l| l.order.len() * 24);
        4 + 1 + 24 + 8 + 1 + 16 + 2 + 4 + 8 + layout + 8 + 4 + self.table.entries.len() * 5 + 8 + self.payload.len()
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Little-endian cursor shared by the blob and container parsers.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            bail!(Format, "unexpected end of data at byte {}", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => bail!(Format, "invalid flag byte {b}"),
        }
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| crate::Error::Format("value exceeds usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress, CodecConfig};
    use crate::grid::Volume;
    use crate::layout::{linear_merge, UnitBlock};

    #[test]
    fn header_fields_are_where_documented() {
        let v = Volume::from_fn([3, 2, 2], |x, y, z| (x + y + z) as f64).unwrap();
        let blob = compress(&v, &CodecConfig::new(CodecId::Interp, ErrorBoundPolicy::adaptive(0.5))).unwrap();
        let bytes = blob.to_bytes();
        assert_eq!(&bytes[..4], b"MRB1");
        assert_eq!(bytes[4], 1);
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[29..37].try_into().unwrap()), 0.5);
        assert_eq!(bytes[37], 1);
        assert_eq!(f64::from_le_bytes(bytes[38..46].try_into().unwrap()), 2.25);
        assert_eq!(f64::from_le_bytes(bytes[46..54].try_into().unwrap()), 8.0);
        assert_eq!(bytes[54], 255);
        assert_eq!(bytes.len(), blob.encoded_len());
        let (back, used) = CompressedBlob::from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, blob);
    }

    #[test]
    fn merged_layout_round_trip() {
        let blocks: Vec<_> = (0..2)
            .map(|i| UnitBlock::new(BlockCoord::new(i, 1, 2), 4, alloc::vec![i as f64; 64]).unwrap())
            .collect();
        let m = linear_merge(&blocks).unwrap();
        let blob = compress(&m, &CodecConfig::new(CodecId::BlockLorenzo, ErrorBoundPolicy::uniform(0.1))).unwrap();
        let bytes = blob.to_bytes();
        assert_eq!(bytes.len(), blob.encoded_len());
        let (back, _) = CompressedBlob::from_bytes(&bytes).unwrap();
        assert_eq!(back, blob);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_bad_magic() {
        let v = Volume::filled([2, 2, 2], 1.0).unwrap();
        let bytes = compress(&v, &CodecConfig::new(CodecId::Interp, ErrorBoundPolicy::uniform(0.1)))
            .unwrap()
            .to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(CompressedBlob::from_bytes(&bytes[..cut]), Err(crate::Error::Format(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CompressedBlob::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 7;
        assert!(CompressedBlob::from_bytes(&bad).is_err());
    }
}
