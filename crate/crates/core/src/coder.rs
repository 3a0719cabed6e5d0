//! Exact arithmetic (range) coder over 16-bit cumulative frequency tables.
//!
//! Carry-less 64-bit state with byte renormalization: a byte is emitted as
//! soon as the top byte of `low` and `low + range` agree, and a straddling
//! interval is force-shrunk once `range` falls below 2^48. The decoder
//! mirrors the `low`/`range` updates exactly, so the byte stream is a
//! deterministic function of the (symbol, table) sequence.

use crate::error::{Error, Result};

/// Frequency precision: totals are always `2^16`.
pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;

const TOP: u64 = 1 << 56;
const BOTTOM: u64 = 1 << 48;

/// Cumulative frequency table. `cum` has one entry per symbol plus a final
/// `2^16`; every symbol keeps a nonzero frequency so any symbol the encoder
/// can emit is decodable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    cum: Vec<u32>,
}

impl CdfTable {
    pub fn from_cumulative(cum: Vec<u32>) -> Result<Self> {
        if cum.len() < 2 || cum[0] != 0 || *cum.last().unwrap() != PROB_TOTAL {
            return Err(Error::format("cdf table", "cumulative bounds must be [0, 2^16]"));
        }
        if cum.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::format("cdf table", "cumulative counts must strictly increase"));
        }
        Ok(CdfTable { cum })
    }

    pub fn num_symbols(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.cum[symbol + 1] - self.cum[symbol]
    }

    fn span(&self, symbol: usize) -> (u32, u32) {
        (self.cum[symbol], self.cum[symbol + 1])
    }

    /// Largest symbol whose cumulative start is <= `value`.
    fn lookup(&self, value: u32) -> usize {
        self.cum.partition_point(|&c| c <= value) - 1
    }
}

/// Quantize a probability vector to integer frequencies summing to exactly
/// `2^16`, each symbol keeping at least one count (stolen from the largest).
pub fn cdf_quantize(probabilities: &[f64]) -> Result<CdfTable> {
    let n = probabilities.len();
    if n == 0 {
        return Err(Error::format("cdf table", "empty alphabet"));
    }
    if n as u32 > PROB_TOTAL {
        return Err(Error::format("cdf table", "alphabet exceeds 2^16 symbols"));
    }
    if probabilities.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::format("cdf table", "probabilities must be finite and non-negative"));
    }
    let sum: f64 = probabilities.iter().sum();
    if sum <= 0.0 {
        return Err(Error::format("cdf table", "probabilities sum to zero"));
    }

    let mut freqs: Vec<u64> = probabilities
        .iter()
        .map(|&p| ((p / sum) * PROB_TOTAL as f64).round().max(1.0) as u64)
        .collect();
    let mut total: u64 = freqs.iter().sum();

    // Settle the rounding surplus or deficit on the largest entries, never
    // dropping a frequency below one.
    while total != PROB_TOTAL as u64 {
        if total > PROB_TOTAL as u64 {
            let (i, _) = freqs
                .iter()
                .enumerate()
                .max_by_key(|&(i, &f)| (f, std::cmp::Reverse(i)))
                .unwrap();
            let take = (total - PROB_TOTAL as u64).min(freqs[i] - 1);
            if take == 0 {
                return Err(Error::format("cdf table", "cannot satisfy minimum frequencies"));
            }
            freqs[i] -= take;
            total -= take;
        } else {
            let (i, _) = freqs
                .iter()
                .enumerate()
                .max_by_key(|&(i, &f)| (f, std::cmp::Reverse(i)))
                .unwrap();
            freqs[i] += PROB_TOTAL as u64 - total;
            total = PROB_TOTAL as u64;
        }
    }

    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0u32;
    cum.push(0);
    for f in freqs {
        acc += f as u32;
        cum.push(acc);
    }
    CdfTable::from_cumulative(cum)
}

#[derive(Debug, Default)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u64::MAX, out: Vec::new() }
    }

    pub fn encode(&mut self, symbol: usize, table: &CdfTable) {
        debug_assert!(symbol < table.num_symbols());
        let (lo, hi) = table.span(symbol);
        let r = self.range >> PROB_BITS;
        self.low += r * lo as u64;
        self.range = r * (hi - lo) as u64;
        self.normalize();
    }

    fn normalize(&mut self) {
        loop {
            // The interval end can sit exactly on 2^64, hence wrapping_add.
            if (self.low ^ self.low.wrapping_add(self.range)) < TOP {
                // Top byte settled.
            } else if self.range < BOTTOM {
                // Interval straddles a byte boundary; clip it to the
                // boundary so the byte can be emitted.
                self.range = BOTTOM - (self.low & (BOTTOM - 1));
            } else {
                break;
            }
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    /// Flush the final state; the stream always ends with 8 tail bytes.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..8 {
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut dec = RangeDecoder { low: 0, range: u64::MAX, code: 0, bytes, pos: 0 };
        for _ in 0..8 {
            dec.code = (dec.code << 8) | dec.next_byte()? as u64;
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or(Error::Truncated("range-coded payload"))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<usize> {
        let r = self.range >> PROB_BITS;
        // wrapping_sub tolerates corrupt streams; they decode to garbage
        // symbols rather than panicking.
        let value = (self.code.wrapping_sub(self.low) / r).min((PROB_TOTAL - 1) as u64) as u32;
        let symbol = table.lookup(value);
        let (lo, hi) = table.span(symbol);
        self.low += r * lo as u64;
        self.range = r * (hi - lo) as u64;
        self.normalize()?;
        Ok(symbol)
    }

    fn normalize(&mut self) -> Result<()> {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) < TOP {
                // Top byte settled.
            } else if self.range < BOTTOM {
                self.range = BOTTOM - (self.low & (BOTTOM - 1));
            } else {
                return Ok(());
            }
            self.code = (self.code << 8) | self.next_byte()? as u64;
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    /// Bytes consumed so far (including the 8-byte preload).
    pub fn consumed(&self) -> usize {
        self.pos
    }
}
