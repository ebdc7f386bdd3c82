//! Bit-exact frames for compressed gradients and per-scheme bit accounting.
//!
//! Frame layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4  b"HSQG"
//! version 2  u16
//! scheme  1  u8   (0 = HSQ unbiased, 1 = HSQ greedy)
//! d       4  u32  gradient length
//! d'      4  u32  segment length
//! m       4  u32  codeword count
//! s       4  u32  pseudo-norm intervals (0 = raw)
//! u_min   4  f32
//! u_max   4  f32
//! payload    ceil(d/d') records, MSB-first, zero-padded to a byte
//! ```
//!
//! Each record is `ceil(log2 m)` index bits followed by `ceil(log2(s+1))`
//! level bits, or by the 32 bits of an IEEE-754 f32 when `s = 0`.

use crate::error::{Error, Result};
use crate::hsq::{segment_count, CompressedGradient, Magnitude, SegmentCode, Variant};
use crate::scheme::QuantizerScheme;

pub const FRAME_MAGIC: [u8; 4] = *b"HSQG";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_BYTES: usize = 4 + 2 + 1 + 4 * 4 + 4 + 4;

/// Bits per uncompressed coordinate.
pub const FLOAT_BITS: u32 = 32;

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

pub fn index_bits(codeword_count: usize) -> u32 {
    ceil_log2(codeword_count as u64)
}

/// Bits carrying a segment's pseudo-norm.
pub fn level_bits(levels: u32) -> u32 {
    if levels == 0 {
        FLOAT_BITS
    } else {
        ceil_log2(levels as u64 + 1)
    }
}

pub fn hsq_payload_bits(total_dim: usize, segment_dim: usize, codeword_count: usize, levels: u32) -> u64 {
    segment_count(total_dim, segment_dim) as u64 * (index_bits(codeword_count) + level_bits(levels)) as u64
}

fn scheme_code(v: Variant) -> u8 {
    match v {
        Variant::Unbiased => 0,
        Variant::Greedy => 1,
    }
}

fn to_u32(v: usize, field: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Overflow(field))
}

pub fn encode(cg: &CompressedGradient) -> Result<Vec<u8>> {
    cg.validate()?;
    let d = to_u32(cg.total_dim, "d")?;
    let dp = to_u32(cg.segment_dim, "d_prime")?;
    let m = to_u32(cg.codeword_count, "m")?;
    let payload_bits = hsq_payload_bits(cg.total_dim, cg.segment_dim, cg.codeword_count, cg.levels);
    let mut out = Vec::with_capacity(FRAME_HEADER_BYTES + payload_bits.div_ceil(8) as usize);
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    out.push(scheme_code(cg.variant));
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&dp.to_le_bytes());
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&cg.levels.to_le_bytes());
    out.extend_from_slice(&cg.u_min.to_le_bytes());
    out.extend_from_slice(&cg.u_max.to_le_bytes());

    let ib = index_bits(cg.codeword_count);
    let lb = level_bits(cg.levels);
    let mut w = BitWriter::new(out);
    for seg in &cg.segments {
        w.write(seg.codeword_index as u64, ib);
        match seg.magnitude {
            Magnitude::Level(l) => w.write(l as u64, lb),
            Magnitude::Raw(u) => w.write(u.to_bits() as u64, FLOAT_BITS),
        }
    }
    Ok(w.finish())
}

pub fn decode(bytes: &[u8]) -> Result<CompressedGradient> {
    if bytes.len() < FRAME_HEADER_BYTES {
        return Err(Error::Format("frame shorter than header".into()));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(Error::Format("bad frame magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != FRAME_VERSION {
        return Err(Error::Format(format!("unsupported frame version {version}")));
    }
    let variant = match bytes[6] {
        0 => Variant::Unbiased,
        1 => Variant::Greedy,
        other => return Err(Error::UnknownScheme(format!("frame scheme code {other}"))),
    };
    let total_dim = u32_at(7) as usize;
    let segment_dim = u32_at(11) as usize;
    let codeword_count = u32_at(15) as usize;
    let levels = u32_at(19);
    let u_min = f32::from_bits(u32_at(23));
    let u_max = f32::from_bits(u32_at(27));
    if total_dim == 0 {
        return Err(Error::EmptyInput);
    }
    if segment_dim == 0 || codeword_count == 0 {
        return Err(Error::Format("zero segment length or codeword count".into()));
    }

    let payload = &bytes[FRAME_HEADER_BYTES..];
    let bits = hsq_payload_bits(total_dim, segment_dim, codeword_count, levels);
    if payload.len() as u64 != bits.div_ceil(8) {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            bits.div_ceil(8)
        )));
    }
    let ib = index_bits(codeword_count);
    let lb = level_bits(levels);
    let mut r = BitReader::new(payload);
    let n_seg = segment_count(total_dim, segment_dim);
    let mut segments = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        let codeword_index = r.read(ib) as u32;
        let raw = r.read(lb);
        let magnitude = if levels == 0 {
            Magnitude::Raw(f32::from_bits(raw as u32))
        } else {
            Magnitude::Level(raw as u32)
        };
        segments.push(SegmentCode {
            codeword_index,
            magnitude,
        });
    }
    if !r.rest_is_zero() {
        return Err(Error::Format("nonzero padding bits".into()));
    }
    let cg = CompressedGradient {
        variant,
        total_dim,
        segment_dim,
        codeword_count,
        levels,
        u_min,
        u_max,
        segments,
    };
    cg.validate()?;
    Ok(cg)
}

/// MSB-first bit sink appending to a byte buffer.
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    used: u32,
}

impl BitWriter {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self { bytes, acc: 0, used: 0 }
    }

    /// Append the low `n` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 32);
        if n == 0 {
            return;
        }
        let value = value & ((1u64 << n) - 1);
        self.acc = (self.acc << n) | value;
        self.used += n;
        while self.used >= 8 {
            self.used -= 8;
            self.bytes.push((self.acc >> self.used) as u8);
        }
        self.acc &= (1u64 << self.used) - 1;
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.bytes.push((self.acc << (8 - self.used)) as u8);
        }
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, bit: 0 }
    }

    /// Read `n <= 32` bits MSB-first. Reading past the end yields zeros.
    pub fn read(&mut self, n: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..n {
            let byte = self.bytes.get(self.bit / 8).copied().unwrap_or(0);
            let b = (byte >> (7 - self.bit % 8)) & 1;
            v = (v << 1) | b as u64;
            self.bit += 1;
        }
        v
    }

    fn rest_is_zero(&self) -> bool {
        let total = self.bytes.len() * 8;
        (self.bit..total).all(|i| (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 0)
    }
}

/// Uplink payload bits for one gradient of length `d`, excluding fixed headers
/// (frame header, `u_min`/`u_max`, bucket norms, scalers).
///
/// TernGrad is charged the information content `d·log2 3`, which is not an
/// integer; every other scheme returns a whole number of bits.
pub fn payload_bits(scheme: &QuantizerScheme, d: usize) -> f64 {
    match scheme {
        QuantizerScheme::Identity => FLOAT_BITS as f64 * d as f64,
        QuantizerScheme::Hsq(p) => hsq_payload_bits(d, p.segment_dim, p.codeword_count, p.levels) as f64,
        QuantizerScheme::Qsgd { levels, .. } => d as f64 * (1 + ceil_log2(*levels as u64 + 1)) as f64,
        QuantizerScheme::TernGrad => d as f64 * 3f64.log2(),
        QuantizerScheme::SignSgd => d as f64,
    }
}

/// Per-message overhead excluded by [`payload_bits`].
pub fn header_bits(scheme: &QuantizerScheme, d: usize) -> f64 {
    match scheme {
        QuantizerScheme::Identity | QuantizerScheme::SignSgd => 0.0,
        QuantizerScheme::Hsq(p) => {
            let payload = hsq_payload_bits(d, p.segment_dim, p.codeword_count, p.levels);
            // Header plus byte-alignment padding of the payload.
            (FRAME_HEADER_BYTES as u64 * 8 + payload.div_ceil(8) * 8 - payload) as f64
        }
        QuantizerScheme::Qsgd { bucket, .. } => FLOAT_BITS as f64 * d.div_ceil(*bucket) as f64,
        QuantizerScheme::TernGrad => FLOAT_BITS as f64,
    }
}

/// Bits of an uncompressed 32-bit gradient divided by the scheme's bits.
pub fn compression_ratio(scheme: &QuantizerScheme, d: usize, include_header: bool) -> f64 {
    let mut bits = payload_bits(scheme, d);
    if include_header {
        bits += header_bits(scheme, d);
    }
    FLOAT_BITS as f64 * d as f64 / bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookMethod;
    use crate::scheme::HsqParams;
    use proptest::prelude::*;

    fn hsq(dp: usize, m: usize, s: u32) -> QuantizerScheme {
        QuantizerScheme::Hsq(HsqParams {
            variant: Variant::Greedy,
            segment_dim: dp,
            codeword_count: m,
            levels: s,
            codebook: CodebookMethod::KMeansGaussian,
            codebook_seed: 0,
        })
    }

    #[test]
    fn log2_helpers() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(256), 8);
        assert_eq!(ceil_log2(257), 9);
        assert_eq!(level_bits(63), 6);
        assert_eq!(level_bits(64), 7);
        assert_eq!(level_bits(0), 32);
    }

    #[test]
    fn eight_dim_frame_payload_is_two_bytes() {
        let cg = CompressedGradient {
            variant: Variant::Greedy,
            total_dim: 8,
            segment_dim: 8,
            codeword_count: 256,
            levels: 63,
            u_min: -1.0,
            u_max: 2.0,
            segments: vec![SegmentCode {
                codeword_index: 0xAB,
                magnitude: Magnitude::Level(0b101101),
            }],
        };
        let bytes = encode(&cg).unwrap();
        assert_eq!(bytes.len(), FRAME_HEADER_BYTES + 2);
        // 10101011 101101|00
        assert_eq!(&bytes[FRAME_HEADER_BYTES..], &[0xAB, 0b1011_0100]);
        assert_eq!(decode(&bytes).unwrap(), cg);
    }

    #[test]
    fn header_fields_little_endian() {
        let cg = CompressedGradient {
            variant: Variant::Unbiased,
            total_dim: 0x0102_0304,
            segment_dim: 0x0102_0304,
            codeword_count: 1,
            levels: 0,
            u_min: 1.5,
            u_max: 1.5,
            segments: vec![SegmentCode {
                codeword_index: 0,
                magnitude: Magnitude::Raw(1.5),
            }],
        };
        let bytes = encode(&cg).unwrap();
        assert_eq!(&bytes[..4], b"HSQG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 0);
        assert_eq!(&bytes[7..11], &[4, 3, 2, 1]);
        assert_eq!(&bytes[23..27], &1.5f32.to_le_bytes());
        // m = 1: zero index bits, raw f32 payload.
        assert_eq!(&bytes[FRAME_HEADER_BYTES..], &1.5f32.to_bits().to_be_bytes());
    }

    #[test]
    fn rejects_empty_and_corrupt() {
        let empty = CompressedGradient {
            variant: Variant::Greedy,
            total_dim: 0,
            segment_dim: 4,
            codeword_count: 4,
            levels: 1,
            u_min: 0.0,
            u_max: 0.0,
            segments: vec![],
        };
        assert_eq!(encode(&empty), Err(Error::EmptyInput));

        let cg = CompressedGradient {
            variant: Variant::Greedy,
            total_dim: 3,
            segment_dim: 3,
            codeword_count: 3,
            levels: 2,
            u_min: 0.0,
            u_max: 1.0,
            segments: vec![SegmentCode {
                codeword_index: 2,
                magnitude: Magnitude::Level(2),
            }],
        };
        let bytes = encode(&cg).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        // index 3 >= m
        *bad.last_mut().unwrap() = 0b1110_0000;
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() |= 1;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[6] = 9;
        assert!(matches!(decode(&bad), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn table_two_ratios() {
        let r = |s: &QuantizerScheme, d| format!("{:.1}", compression_ratio(s, d, false));
        assert_eq!(r(&hsq(8, 256, 63), 8 * 1000), "18.3");
        assert_eq!(r(&hsq(16, 256, 63), 16 * 1000), "36.6");
        assert_eq!(r(&hsq(64, 256, 63), 64 * 1000), "146.3");
        assert_eq!(r(&QuantizerScheme::TernGrad, 1000), "20.2");
        assert_eq!(r(&QuantizerScheme::SignSgd, 1000), "32.0");
        assert_eq!(r(&QuantizerScheme::Identity, 1000), "1.0");
        assert_eq!(r(&QuantizerScheme::Qsgd { levels: 7, bucket: 512 }, 1000), "8.0");
        assert_eq!(
            r(
                &QuantizerScheme::Qsgd {
                    levels: 127,
                    bucket: 512
                },
                1000
            ),
            "4.0"
        );
    }

    #[test]
    fn extreme_configuration_bits() {
        // One segment, m = d, raw norm: 32 + log2 d bits.
        assert_eq!(payload_bits(&hsq(1024, 1024, 0), 1024), 42.0);
    }

    #[test]
    fn header_changes_ratio() {
        let s = hsq(8, 256, 63);
        let with = compression_ratio(&s, 8, true);
        let without = compression_ratio(&s, 8, false);
        assert!(with < without);
        assert_eq!(header_bits(&s, 8), (31 * 8 + 2) as f64);
    }

    proptest! {
        #[test]
        fn bit_writer_roundtrip(fields in prop::collection::vec((any::<u32>(), 0u32..=32), 0..50)) {
            let mut w = BitWriter::new(Vec::new());
            for &(v, n) in &fields {
                w.write(v as u64, n);
            }
            let bytes = w.finish();
            let total: u32 = fields.iter().map(|f| f.1).sum();
            prop_assert_eq!(bytes.len() as u32, total.div_ceil(8));
            let mut r = BitReader::new(&bytes);
            for &(v, n) in &fields {
                let mask = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
                prop_assert_eq!(r.read(n) as u32, v & mask);
            }
        }
    }
}
