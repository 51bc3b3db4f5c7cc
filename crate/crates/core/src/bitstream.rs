//! Fixed-width packing of base tokens for transmission or storage.
//!
//! Layout (all multi-byte integers little-endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `"CSTK"`             |
//! | 4      | 1    | version (= 1)              |
//! | 5      | 4    | sample rate (Hz)           |
//! | 9      | 4    | token rate numerator       |
//! | 13     | 4    | token rate denominator     |
//! | 17     | 1    | number of streams          |
//! | 18     | 4    | codebook size `M`          |
//! | 22     | 4    | frame count `T`            |
//! | 26     | ...  | payload                    |
//!
//! The payload holds `T × streams` fields of `ceil(log2 M)` bits each, frame
//! major (frame 0 stream 1, frame 0 stream 2, frame 1 stream 1, ...). Each
//! field stores `token - 1` most significant bit first, and the last byte is
//! zero-padded.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAGIC: &[u8; 4] = b"CSTK";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return invalid(format!("rate {num}/{den} must be positive"));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Bits needed for one token of a size-`m` codebook.
pub fn bits_per_token(m: u32) -> u32 {
    assert!(m >= 2, "codebook size must be at least 2");
    32 - (m - 1).leading_zeros()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bitrate {
    pub per_stream_bps: f64,
    pub total_bps: f64,
}

/// `token_rate × ceil(log2 M) × stages`, per stream and over all streams.
pub fn bitrate_of(token_rate: Rational, m: u32, streams: u32, stages: u32) -> Bitrate {
    let per_stream = token_rate.as_f64() * bits_per_token(m) as f64 * stages as f64;
    Bitrate {
        per_stream_bps: per_stream,
        total_bps: per_stream * streams as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub sample_rate_hz: u32,
    pub token_rate: Rational,
    pub num_streams: u8,
    pub codebook_size: u32,
    pub num_frames: u32,
}

impl BitstreamHeader {
    pub fn payload_bits(&self) -> usize {
        self.num_frames as usize * self.num_streams as usize * bits_per_token(self.codebook_size) as usize
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload_bits().div_ceil(8)
    }

    fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            return invalid("codebook size must be at least 2");
        }
        if self.num_streams == 0 {
            return invalid("at least one stream required");
        }
        if self.sample_rate_hz == 0 {
            return invalid("sample rate must be positive");
        }
        Rational::new(self.token_rate.num, self.token_rate.den)?;
        Ok(())
    }
}

/// Decoded bitstream: `tokens[s][t]` is the 1-based base token of stream `s` at frame `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBitstream {
    pub header: BitstreamHeader,
    pub tokens: Vec<Vec<u32>>,
}

impl TokenBitstream {
    pub fn new(header: BitstreamHeader, tokens: Vec<Vec<u32>>) -> Result<Self> {
        header.validate()?;
        if tokens.len() != header.num_streams as usize {
            return invalid(format!(
                "header declares {} streams, {} given",
                header.num_streams,
                tokens.len()
            ));
        }
        for (s, row) in tokens.iter().enumerate() {
            if row.len() != header.num_frames as usize {
                return invalid(format!(
                    "stream {s} has {} frames, header declares {}",
                    row.len(),
                    header.num_frames
                ));
            }
            if let Some(&t) = row.iter().find(|&&t| t == 0 || t > header.codebook_size) {
                return invalid(format!(
                    "stream {s} token {t} outside 1..={}",
                    header.codebook_size
                ));
            }
        }
        Ok(Self { header, tokens })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + h.payload_bytes());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&h.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&h.token_rate.num.to_le_bytes());
        out.extend_from_slice(&h.token_rate.den.to_le_bytes());
        out.push(h.num_streams);
        out.extend_from_slice(&h.codebook_size.to_le_bytes());
        out.extend_from_slice(&h.num_frames.to_le_bytes());

        let width = bits_per_token(h.codebook_size);
        let mut writer = BitWriter::new(&mut out);
        for t in 0..h.num_frames as usize {
            for stream in &self.tokens {
                writer.write(stream[t] - 1, width);
            }
        }
        writer.finish();
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(parse_err(0, format!("bad magic {magic:02x?}")));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(parse_err(4, format!("unsupported version {version}")));
        }
        let sample_rate_hz = r.u32()?;
        let num = r.u32()?;
        let den = r.u32()?;
        let num_streams = r.u8()?;
        let codebook_size = r.u32()?;
        let num_frames = r.u32()?;
        let header = BitstreamHeader {
            sample_rate_hz,
            token_rate: Rational { num, den },
            num_streams,
            codebook_size,
            num_frames,
        };
        if sample_rate_hz == 0 {
            return Err(parse_err(5, "sample rate is zero"));
        }
        if num == 0 || den == 0 {
            return Err(parse_err(9, format!("token rate {num}/{den} is not positive")));
        }
        if num_streams == 0 {
            return Err(parse_err(17, "stream count is zero"));
        }
        if codebook_size < 2 {
            return Err(parse_err(18, format!("codebook size {codebook_size} below 2")));
        }

        let payload_len = header.payload_bytes();
        let available = bytes.len() - HEADER_LEN;
        if available < payload_len {
            return Err(parse_err(
                bytes.len(),
                format!("payload truncated: {payload_len} bytes expected, {available} present"),
            ));
        }
        if available > payload_len {
            return Err(parse_err(
                HEADER_LEN + payload_len,
                format!("{} unexpected trailing bytes", available - payload_len),
            ));
        }

        let payload = &bytes[HEADER_LEN..];
        let width = bits_per_token(codebook_size);
        let mut tokens = vec![Vec::with_capacity(num_frames as usize); num_streams as usize];
        let mut reader = BitReader { bytes: payload, bit: 0 };
        for _ in 0..num_frames {
            for stream in tokens.iter_mut() {
                let offset = HEADER_LEN + reader.bit / 8;
                let v = reader.read(width);
                if v >= codebook_size {
                    return Err(parse_err(
                        offset,
                        format!("token field {v} exceeds codebook size {codebook_size}"),
                    ));
                }
                stream.push(v + 1);
            }
        }
        let used = header.payload_bits();
        if used % 8 != 0 {
            let last = payload[payload_len - 1];
            let pad_mask = (1u8 << (8 - used % 8)) - 1;
            if last & pad_mask != 0 {
                return Err(parse_err(HEADER_LEN + payload_len - 1, "nonzero padding bits"));
            }
        }
        Ok(Self { header, tokens })
    }
}

/// Packs 1-based tokens (`streams × T`) under `header`.
pub fn pack(tokens: &[Vec<u32>], header: BitstreamHeader) -> Result<Vec<u8>> {
    Ok(TokenBitstream::new(header, tokens.to_vec())?.to_bytes())
}

pub fn unpack(bytes: &[u8]) -> Result<TokenBitstream> {
    TokenBitstream::from_bytes(bytes)
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(parse_err(
                self.bytes.len(),
                format!("header truncated: need {} bytes", self.pos + n),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn write(&mut self, value: u32, width: u32) {
        self.acc = (self.acc << width) | value as u64;
        self.nbits += width;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn finish(self) {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl BitReader<'_> {
    fn read(&mut self, width: u32) -> u32 {
        let mut v = 0u32;
        for _ in 0..width {
            let byte = self.bytes[self.bit / 8];
            let b = (byte >> (7 - self.bit % 8)) & 1;
            v = (v << 1) | b as u32;
            self.bit += 1;
        }
        v
    }
}
