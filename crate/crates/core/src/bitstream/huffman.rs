//! Canonical Huffman coding over the byte alphabet.
//!
//! Code lengths are capped at [`MAX_CODE_LEN`] bits so the table fits in 128
//! bytes (one nibble per symbol). Codes are assigned canonically: shorter
//! codes first, ties broken by symbol value, bits written MSB first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

pub const MAX_CODE_LEN: u8 = 15;
/// Size of the nibble-packed length table.
pub const TABLE_BYTES: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HuffmanError {
    #[error("code lengths over-subscribe the code space")]
    OversubscribedTable,
    #[error("code table is empty but {0} symbols were expected")]
    EmptyTable(usize),
    #[error("invalid code at bit {0}")]
    InvalidCode(usize),
    #[error("bit stream ended after {decoded} of {expected} symbols")]
    Exhausted { decoded: usize, expected: usize },
}

/// Code lengths for each byte value; 0 means the symbol is absent.
pub type CodeLengths = [u8; 256];

/// Huffman code lengths for `freqs`, limited to [`MAX_CODE_LEN`].
pub fn code_lengths(freqs: &[u64; 256]) -> CodeLengths {
    let mut lengths = [0u8; 256];
    let used: Vec<usize> = (0..256).filter(|&s| freqs[s] > 0).collect();
    match used.len() {
        0 => return lengths,
        1 => {
            lengths[used[0]] = 1;
            return lengths;
        }
        _ => {}
    }

    // Nodes 0..256 are leaves; internal nodes are appended. Ties break on
    // node id so the tree is deterministic.
    let mut parent: Vec<usize> = vec![usize::MAX; 256];
    let mut heap = BinaryHeap::new();
    for &s in &used {
        heap.push(Reverse((freqs[s], s)));
    }
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        let id = parent.len();
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
        heap.push(Reverse((fa + fb, id)));
    }
    let depth_of = |mut node: usize| {
        let mut d = 0usize;
        while parent[node] != usize::MAX {
            node = parent[node];
            d += 1;
        }
        d
    };
    let mut depths: Vec<(usize, usize)> = used.iter().map(|&s| (s, depth_of(s))).collect();

    let max = MAX_CODE_LEN as usize;
    if depths.iter().any(|&(_, d)| d > max) {
        // Clamp, then repair the Kraft sum by lengthening codes.
        let mut count = vec![0usize; max + 1];
        for &(_, d) in &depths {
            count[d.min(max)] += 1;
        }
        let mut kraft: usize = (1..=max).map(|l| count[l] << (max - l)).sum();
        while kraft > 1 << max {
            count[max] -= 1;
            for l in (1..max).rev() {
                if count[l] > 0 {
                    count[l] -= 1;
                    count[l + 1] += 2;
                    break;
                }
            }
            kraft -= 1;
        }
        // most frequent symbols take the shortest lengths
        depths.sort_by_key(|&(s, _)| (Reverse(freqs[s]), s));
        let mut it = depths.iter_mut();
        for (l, &c) in count.iter().enumerate().skip(1) {
            for _ in 0..c {
                it.next().unwrap().1 = l;
            }
        }
    }
    for (s, d) in depths {
        lengths[s] = d as u8;
    }
    lengths
}

/// Canonical code values for `lengths`.
fn canonical_codes(lengths: &CodeLengths) -> [u16; 256] {
    let mut codes = [0u16; 256];
    let mut order: Vec<usize> = (0..256).filter(|&s| lengths[s] > 0).collect();
    order.sort_by_key(|&s| (lengths[s], s));
    let mut code: u32 = 0;
    let mut prev_len = 0u8;
    for s in order {
        code <<= lengths[s] - prev_len;
        codes[s] = code as u16;
        code += 1;
        prev_len = lengths[s];
    }
    codes
}

fn check_kraft(lengths: &CodeLengths) -> Result<(), HuffmanError> {
    let max = MAX_CODE_LEN as u32;
    let kraft: u64 = lengths
        .iter()
        .filter(|&&l| l > 0)
        .map(|&l| 1u64 << (max - l as u32))
        .sum();
    if kraft > 1 << max {
        return Err(HuffmanError::OversubscribedTable);
    }
    Ok(())
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    bits: u32,
}

impl BitWriter {
    fn new(capacity: usize) -> Self {
        Self {
            out: Vec::with_capacity(capacity),
            acc: 0,
            bits: 0,
        }
    }

    #[inline]
    fn put(&mut self, code: u16, len: u8) {
        self.acc = (self.acc << len) | code as u64;
        self.bits += len as u32;
        while self.bits >= 8 {
            self.bits -= 8;
            self.out.push((self.acc >> self.bits) as u8);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.bits > 0 {
            self.out.push((self.acc << (8 - self.bits)) as u8);
        }
        self.out
    }
}

/// Encodes `data`, returning the code lengths and the packed bit stream.
pub fn encode(data: &[u8]) -> (CodeLengths, Vec<u8>) {
    let mut freqs = [0u64; 256];
    for &b in data {
        freqs[b as usize] += 1;
    }
    let lengths = code_lengths(&freqs);
    let codes = canonical_codes(&lengths);
    let mut w = BitWriter::new(data.len() / 2 + 8);
    for &b in data {
        w.put(codes[b as usize], lengths[b as usize]);
    }
    (lengths, w.finish())
}

/// Decodes exactly `count` symbols from `bits`.
pub fn decode(lengths: &CodeLengths, bits: &[u8], count: usize) -> Result<Vec<u8>, HuffmanError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    check_kraft(lengths)?;
    if lengths.iter().all(|&l| l == 0) {
        return Err(HuffmanError::EmptyTable(count));
    }
    let max = MAX_CODE_LEN as u32;
    // (symbol, length) for every max-length bit pattern; length 0 marks a hole
    let codes = canonical_codes(lengths);
    let mut table = vec![(0u8, 0u8); 1 << max];
    for s in 0..256 {
        let l = lengths[s];
        if l == 0 {
            continue;
        }
        let shift = max - l as u32;
        let start = (codes[s] as usize) << shift;
        for slot in &mut table[start..start + (1 << shift)] {
            *slot = (s as u8, l);
        }
    }

    let total_bits = bits.len() * 8;
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    let mut acc: u64 = 0;
    let mut acc_bits: u32 = 0;
    let mut next_byte = 0usize;
    while out.len() < count {
        while acc_bits <= 56 {
            let byte = bits.get(next_byte).copied().unwrap_or(0);
            next_byte += 1;
            acc |= (byte as u64) << (56 - acc_bits);
            acc_bits += 8;
        }
        let peek = (acc >> (64 - max)) as usize;
        let (sym, len) = table[peek];
        if len == 0 {
            return Err(HuffmanError::InvalidCode(pos));
        }
        if pos + len as usize > total_bits {
            return Err(HuffmanError::Exhausted {
                decoded: out.len(),
                expected: count,
            });
        }
        out.push(sym);
        pos += len as usize;
        acc <<= len;
        acc_bits -= len as u32;
    }
    Ok(out)
}

/// Nibble-packs a length table (even symbol in the low nibble).
pub fn pack_lengths(lengths: &CodeLengths) -> [u8; TABLE_BYTES] {
    let mut out = [0u8; TABLE_BYTES];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = (lengths[2 * i] & 0x0f) | (lengths[2 * i + 1] << 4);
    }
    out
}

pub fn unpack_lengths(packed: &[u8; TABLE_BYTES]) -> CodeLengths {
    let mut lengths = [0u8; 256];
    for (i, &byte) in packed.iter().enumerate() {
        lengths[2 * i] = byte & 0x0f;
        lengths[2 * i + 1] = byte >> 4;
    }
    lengths
}

/// A pluggable lossless backend for the blob payload.
pub trait EntropyCoder {
    /// Self-delimiting encoding of `data`.
    fn encode(&self, data: &[u8]) -> Vec<u8>;
    /// Inverse of `encode`; returns the data and the number of bytes consumed.
    fn decode(&self, bytes: &[u8]) -> Result<(Vec<u8>, usize), HuffmanError>;
}

/// `raw_len: u32 | lengths: [u8; 128] | coded_len: u32 | coded bits`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalHuffman;

/// Bytes of framing that precede the coded bits.
pub const FRAME_HEADER: usize = 4 + TABLE_BYTES + 4;

impl EntropyCoder for CanonicalHuffman {
    fn encode(&self, data: &[u8]) -> Vec<u8> {
        let (lengths, bits) = encode(data);
        let mut out = Vec::with_capacity(FRAME_HEADER + bits.len());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&pack_lengths(&lengths));
        out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
        out.extend_from_slice(&bits);
        out
    }

    fn decode(&self, bytes: &[u8]) -> Result<(Vec<u8>, usize), HuffmanError> {
        let exhausted = |expected| HuffmanError::Exhausted { decoded: 0, expected };
        if bytes.len() < FRAME_HEADER {
            return Err(exhausted(0));
        }
        let raw_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let table: [u8; TABLE_BYTES] = bytes[4..4 + TABLE_BYTES].try_into().unwrap();
        let coded_len = u32::from_le_bytes(bytes[4 + TABLE_BYTES..FRAME_HEADER].try_into().unwrap()) as usize;
        let end = FRAME_HEADER
            .checked_add(coded_len)
            .filter(|&e| e <= bytes.len())
            .ok_or(exhausted(raw_len))?;
        // every symbol takes at least one bit
        if raw_len > coded_len.saturating_mul(8) {
            return Err(exhausted(raw_len));
        }
        let data = decode(&unpack_lengths(&table), &bytes[FRAME_HEADER..end], raw_len)?;
        Ok((data, end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single_symbol() {
        let (l, bits) = encode(&[]);
        assert!(bits.is_empty() && l.iter().all(|&x| x == 0));
        let data = vec![7u8; 100];
        let (l, bits) = encode(&data);
        assert_eq!(l[7], 1);
        assert_eq!(bits.len(), 13);
        assert_eq!(decode(&l, &bits, 100).unwrap(), data);
    }

    #[test]
    fn skewed_distribution_is_length_limited() {
        // Fibonacci frequencies force a very deep unconstrained tree
        let mut freqs = [0u64; 256];
        let (mut a, mut b) = (1u64, 1u64);
        for f in freqs.iter_mut().take(40) {
            *f = a;
            let c = a + b;
            a = b;
            b = c;
        }
        let lengths = code_lengths(&freqs);
        assert!(lengths.iter().all(|&l| l <= MAX_CODE_LEN));
        assert!(check_kraft(&lengths).is_ok());
        let data: Vec<u8> = (0..40u8).flat_map(|s| std::iter::repeat_n(s, 1 + s as usize)).collect();
        let (l, bits) = encode(&data);
        assert_eq!(decode(&l, &bits, data.len()).unwrap(), data);
    }

    #[test]
    fn repetitive_data_shrinks() {
        let data: Vec<u8> = (0..10_000).map(|i| (i % 3) as u8).collect();
        let framed = CanonicalHuffman.encode(&data);
        assert!(framed.len() < data.len() / 3);
        let (back, used) = CanonicalHuffman.decode(&framed).unwrap();
        assert_eq!(back, data);
        assert_eq!(used, framed.len());
    }

    #[test]
    fn oversubscribed_table_rejected() {
        let mut l = [0u8; 256];
        l[0] = 1;
        l[1] = 1;
        l[2] = 1;
        assert_eq!(decode(&l, &[0], 1), Err(HuffmanError::OversubscribedTable));
    }

    #[test]
    fn truncated_stream_rejected() {
        let data: Vec<u8> = (0..=255u8).collect();
        let (l, bits) = encode(&data);
        assert!(matches!(
            decode(&l, &bits[..bits.len() - 2], data.len()),
            Err(HuffmanError::Exhausted { .. })
        ));
    }

    #[test]
    fn table_packing() {
        let mut l = [0u8; 256];
        l[0] = 3;
        l[1] = 15;
        l[255] = 9;
        assert_eq!(unpack_lengths(&pack_lengths(&l)), l);
    }
}
