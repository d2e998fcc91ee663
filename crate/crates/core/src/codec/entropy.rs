//! Canonical Huffman coding of quantization codes, followed by an optional
//! general-purpose lossless pass.
//!
//! Symbols are `code + cap` for regular codes and `2 cap + 1` for the
//! literal marker. The table stores `(symbol, length)` pairs; codes are
//! assigned canonically (by length, then symbol). A one-symbol alphabet gets
//! length 0 and costs no bits at all.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::quantize::{QuantizedStream, LITERAL};
use crate::error::{bail, Result};

const MAX_CODE_LEN: u8 = 32;

/// Lossless transform applied to the Huffman bitstream and literals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LosslessPass {
    #[default]
    Identity,
    /// DEFLATE at the given level (0-10).
    Deflate(u8),
}

impl LosslessPass {
    pub fn id(self) -> u8 {
        match self {
            LosslessPass::Identity => 0,
            LosslessPass::Deflate(_) => 1,
        }
    }

    pub fn encode(self, data: &[u8]) -> Vec<u8> {
        match self {
            LosslessPass::Identity => data.to_vec(),
            LosslessPass::Deflate(level) => miniz_oxide::deflate::compress_to_vec(data, level.min(10)),
        }
    }

    /// Inverts the pass identified by `id`.
    pub fn decode(id: u8, data: &[u8]) -> Result<Vec<u8>> {
        match id {
            0 => Ok(data.to_vec()),
            1 => miniz_oxide::inflate::decompress_to_vec(data)
                .map_err(|e| crate::Error::Format(alloc::format!("inflate failed: {e:?}"))),
            _ => bail!(Format, "unknown lossless pass id {id}"),
        }
    }
}

/// Code lengths of the symbols in use, sorted by symbol.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HuffmanTable {
    pub entries: Vec<(u32, u8)>,
}

impl HuffmanTable {
    /// Builds length-limited code lengths from symbol frequencies.
    pub fn from_frequencies(freqs: &[(u32, u64)]) -> Self {
        let mut freqs: Vec<(u32, u64)> = freqs.iter().copied().filter(|&(_, f)| f > 0).collect();
        freqs.sort_unstable_by_key(|&(s, _)| s);
        match freqs.len() {
            0 => return Self::default(),
            1 => {
                return Self {
                    entries: vec![(freqs[0].0, 0)],
                }
            }
            _ => {}
        }
        loop {
            let lengths = code_lengths(&freqs);
            if lengths.iter().all(|&l| l <= MAX_CODE_LEN) {
                return Self {
                    entries: freqs.iter().zip(lengths).map(|(&(s, _), l)| (s, l)).collect(),
                };
            }
            for f in &mut freqs {
                f.1 = (f.1 / 2).max(1);
            }
        }
    }

    /// Canonical `(symbol, code, length)` triples ordered by (length, symbol).
    fn canonical(&self) -> Vec<(u32, u32, u8)> {
        let mut order: Vec<(u8, u32)> = self.entries.iter().map(|&(s, l)| (l, s)).collect();
        order.sort_unstable();
        let mut code: u64 = 0;
        let mut prev_len = order.first().map_or(0, |e| e.0);
        let mut out = Vec::with_capacity(order.len());
        for (len, sym) in order {
            code <<= len - prev_len;
            prev_len = len;
            out.push((sym, code as u32, len));
            code += 1;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.entries.len() == 1 {
            return Ok(());
        }
        let mut kraft = 0u128;
        for &(_, l) in &self.entries {
            if l == 0 || l > MAX_CODE_LEN {
                bail!(Format, "invalid Huffman code length {l}");
            }
            kraft += 1u128 << (MAX_CODE_LEN - l);
        }
        if kraft > 1u128 << MAX_CODE_LEN {
            bail!(Format, "Huffman table is over-subscribed");
        }
        for w in self.entries.windows(2) {
            if w[0].0 >= w[1].0 {
                bail!(Format, "Huffman table symbols are not strictly increasing");
            }
        }
        Ok(())
    }
}

/// Plain Huffman tree construction; ties broken by node id so the result is
/// deterministic.
fn code_lengths(freqs: &[(u32, u64)]) -> Vec<u8> {
    let n = freqs.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        freqs.iter().enumerate().map(|(i, &(_, f))| Reverse((f, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((fa + fb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth[..n].iter().map(|&d| d.min(255) as u8).collect()
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    #[inline]
    fn put(&mut self, code: u32, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | u64::from(code);
        self.nbits += u32::from(len);
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.bytes
    }
}

/// Map from `QuantizedStream` codes to Huffman symbols.
#[inline]
fn symbol_of(code: i32, cap: i32) -> u32 {
    if code == LITERAL {
        2 * cap as u32 + 1
    } else {
        (code + cap) as u32
    }
}

/// Result of [`entropy_encode`]: the code table and the payload bytes
/// (pass id, then the pass output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropyCoded {
    pub table: HuffmanTable,
    pub payload: Vec<u8>,
}

/// Huffman-codes the stream. The payload before the lossless pass is the
/// literals as little-endian `f64` followed by the code bitstream.
pub fn entropy_encode(stream: &QuantizedStream, pass: LosslessPass) -> EntropyCoded {
    let cap = stream.code_cap;
    let alphabet = 2 * cap as usize + 2;
    let mut counts = vec![0u64; alphabet];
    for &c in &stream.codes {
        counts[symbol_of(c, cap) as usize] += 1;
    }
    let freqs: Vec<(u32, u64)> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &f)| f > 0)
        .map(|(s, &f)| (s as u32, f))
        .collect();
    let table = HuffmanTable::from_frequencies(&freqs);
    let mut lookup = vec![(0u32, 0u8); alphabet];
    for (sym, code, len) in table.canonical() {
        lookup[sym as usize] = (code, len);
    }

    let mut raw = Vec::with_capacity(stream.literals.len() * 8 + stream.codes.len() / 4);
    for v in &stream.literals {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let mut bits = BitWriter::new();
    for &c in &stream.codes {
        let (code, len) = lookup[symbol_of(c, cap) as usize];
        bits.put(code, len);
    }
    raw.extend_from_slice(&bits.finish());

    let mut payload = Vec::with_capacity(raw.len() + 1);
    payload.push(pass.id());
    payload.extend_from_slice(&pass.encode(&raw));
    EntropyCoded { table, payload }
}

/// Inverse of [`entropy_encode`] for `n_codes` codes and `n_literals`
/// literals.
pub fn entropy_decode(
    table: &HuffmanTable,
    payload: &[u8],
    n_codes: usize,
    n_literals: usize,
    code_cap: i32,
) -> Result<QuantizedStream> {
    table.validate()?;
    let Some((&pass, body)) = payload.split_first() else {
        bail!(Format, "empty entropy payload");
    };
    let raw = LosslessPass::decode(pass, body)?;
    let lit_bytes = n_literals
        .checked_mul(8)
        .filter(|&n| n <= raw.len())
        .ok_or_else(|| crate::Error::Format("literal section truncated".into()))?;
    let literals: Vec<f64> = raw[..lit_bytes]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bits = &raw[lit_bytes..];

    let cap = code_cap;
    let literal_symbol = 2 * cap as u32 + 1;
    let to_code = |sym: u32| -> Result<i32> {
        if sym == literal_symbol {
            Ok(LITERAL)
        } else if sym < literal_symbol {
            Ok(sym as i32 - cap)
        } else {
            bail!(Format, "symbol {sym} outside the code alphabet")
        }
    };

    let mut codes = Vec::with_capacity(n_codes);
    match table.entries.len() {
        0 if n_codes == 0 => {}
        0 => bail!(Format, "empty Huffman table for {n_codes} codes"),
        1 => {
            let code = to_code(table.entries[0].0)?;
            codes.resize(n_codes, code);
        }
        _ => {
            // Canonical decoding: per length, first code and the index of
            // its first symbol in the canonical order.
            let canon = table.canonical();
            let max_len = canon.iter().map(|c| c.2).max().unwrap_or(0) as usize;
            let mut count = vec![0u32; max_len + 1];
            for c in &canon {
                count[c.2 as usize] += 1;
            }
            let mut first_code = vec![0u64; max_len + 1];
            let mut first_index = vec![0usize; max_len + 1];
            let (mut code, mut index) = (0u64, 0usize);
            for len in 1..=max_len {
                code = (code + u64::from(count[len - 1])) << 1;
                first_code[len] = code;
                first_index[len] = index;
                index += count[len] as usize;
            }
            let symbols: Vec<u32> = canon.iter().map(|c| c.0).collect();
            let total_bits = bits.len() * 8;
            let mut pos = 0usize;
            for _ in 0..n_codes {
                let mut acc = 0u64;
                let mut len = 0usize;
                loop {
                    if pos >= total_bits || len >= max_len {
                        bail!(Format, "Huffman bitstream truncated or corrupt");
                    }
                    let bit = (bits[pos >> 3] >> (7 - (pos & 7))) & 1;
                    pos += 1;
                    acc = (acc << 1) | u64::from(bit);
                    len += 1;
                    let offset = acc.wrapping_sub(first_code[len]);
                    if acc >= first_code[len] && offset < u64::from(count[len]) {
                        codes.push(to_code(symbols[first_index[len] + offset as usize])?);
                        break;
                    }
                }
            }
        }
    }
    let markers = codes.iter().filter(|&&c| c == LITERAL).count();
    if markers != literals.len() {
        bail!(Format, "{markers} literal markers but {} literals", literals.len());
    }
    Ok(QuantizedStream {
        codes,
        literals,
        code_cap,
    })
}
