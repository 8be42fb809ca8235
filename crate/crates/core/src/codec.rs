//! Bit-packed stream format, bitrate accounting and packetization.
//!
//! Layout (multi-byte integers little-endian):
//!
//! ```text
//! "DSRC" | version u8 | sample_rate u32 | content_hop u16 | content_vocab u16
//!        | f0_vocab u16 | f0_group u8 | speaker_id u16 | num_content_frames u32
//! content codes, ceil(log2 K) bits each, MSB-first, zero-padded to a byte
//! F0 codes, ceil(log2 K') bits each, MSB-first, zero-padded to a byte
//! ```
//!
//! Packets: packet 0 is `seq u32 = 0 | frames_per_packet u32 | header`; packet
//! `s >= 1` is `seq u32` followed by the content bits and then the F0 bits of
//! its frame range, each section padded to a byte.

use std::collections::BTreeMap;
use std::path::Path;

use crate::io::{read_file, write_file, ByteReader};
use crate::quantize::{F0CodeSequence, UnitSequence, F0_DOWNSAMPLE};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DSRC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;

/// Fixed code width for a vocabulary of `vocab` symbols.
pub fn bits_per_code(vocab: u32) -> Result<u32> {
    if vocab == 0 {
        return Err(Error::Config("vocabulary must hold at least one code".into()));
    }
    Ok(32 - (vocab - 1).leading_zeros())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    pub sample_rate: u32,
    pub content_hop: u16,
    pub content_vocab: u16,
    pub f0_vocab: u16,
    pub f0_group: u8,
}

impl CodecConfig {
    pub fn new(sample_rate: u32, content_hop: u16, content_vocab: u16, f0_vocab: u16, f0_group: u8) -> Result<Self> {
        let cfg = Self {
            sample_rate,
            content_hop,
            content_vocab,
            f0_vocab,
            f0_group,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// HuBERT-style units: 16 kHz, hop 320 (50 Hz), K=50, K'=20, 4 frames per F0 code.
    pub fn hubert50() -> Self {
        Self {
            sample_rate: 16000,
            content_hop: 320,
            content_vocab: 50,
            f0_vocab: 20,
            f0_group: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.content_hop == 0 || self.f0_group == 0 {
            return Err(Error::Config(
                "sample_rate, content_hop and f0_group must be positive".into(),
            ));
        }
        if self.content_vocab == 0 || self.f0_vocab == 0 {
            return Err(Error::Config("vocabulary must hold at least one code".into()));
        }
        Ok(())
    }

    pub fn content_frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.content_hop as f64
    }

    pub fn f0_frame_rate(&self) -> f64 {
        self.sample_rate as f64 / (self.content_hop as f64 * self.f0_group as f64)
    }

    pub fn content_bits(&self) -> u32 {
        bits_per_code(self.content_vocab as u32).unwrap_or(0)
    }

    pub fn f0_bits(&self) -> u32 {
        bits_per_code(self.f0_vocab as u32).unwrap_or(0)
    }

    /// Number of F0 codes that accompany `frames` content frames.
    pub fn f0_count(&self, frames: usize) -> usize {
        frames.div_ceil(self.f0_group as usize)
    }

    /// Payload size in bytes, padding included.
    pub fn payload_len(&self, frames: usize) -> usize {
        section_len(frames, self.content_bits()) + section_len(self.f0_count(frames), self.f0_bits())
    }
}

fn section_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bitrate {
    pub content_bps: f64,
    pub f0_bps: f64,
    pub total_bps: f64,
}

/// Nominal bitrate. The F0 code rate is rounded up to a whole number of
/// codes per second, so 12.5 Hz at 5 bits accounts for 65 bps.
pub fn bitrate(config: &CodecConfig) -> Result<Bitrate> {
    config.validate()?;
    let content_bps = bits_per_code(config.content_vocab as u32)? as f64 * config.content_frame_rate();
    let f0_denominator = config.content_hop as u64 * config.f0_group as u64;
    let f0_rate = (config.sample_rate as u64).div_ceil(f0_denominator);
    let f0_bps = bits_per_code(config.f0_vocab as u32)? as f64 * f0_rate as f64;
    Ok(Bitrate {
        content_bps,
        f0_bps,
        total_bps: content_bps + f0_bps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u8,
    pub config: CodecConfig,
    pub speaker_id: u16,
    pub num_content_frames: u32,
}

impl StreamHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        let c = &self.config;
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = self.version;
        out[5..9].copy_from_slice(&c.sample_rate.to_le_bytes());
        out[9..11].copy_from_slice(&c.content_hop.to_le_bytes());
        out[11..13].copy_from_slice(&c.content_vocab.to_le_bytes());
        out[13..15].copy_from_slice(&c.f0_vocab.to_le_bytes());
        out[15] = c.f0_group;
        out[16..18].copy_from_slice(&self.speaker_id.to_le_bytes());
        out[18..22].copy_from_slice(&self.num_content_frames.to_le_bytes());
        out
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        r.expect_magic(&MAGIC)?;
        r.expect_version("stream", VERSION)?;
        let version = VERSION;
        let config = CodecConfig {
            sample_rate: r.u32()?,
            content_hop: r.u16()?,
            content_vocab: r.u16()?,
            f0_vocab: r.u16()?,
            f0_group: r.u8()?,
        };
        let speaker_id = r.u16()?;
        let num_content_frames = r.u32()?;
        config.validate()?;
        if num_content_frames == 0 {
            return Err(Error::InvalidInput("stream holds no frames".into()));
        }
        Ok(Self {
            version,
            config,
            speaker_id,
            num_content_frames,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "stream header");
        let header = Self::read(&mut r)?;
        r.finish()?;
        Ok(header)
    }

    /// Duration implied by the frame count.
    pub fn duration_secs(&self) -> f64 {
        self.num_content_frames as f64 / self.config.content_frame_rate()
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 8,
        }
    }

    fn push(&mut self, value: u32, bits: u32) {
        for i in (0..bits).rev() {
            if self.used == 8 {
                self.bytes.push(0);
                self.used = 0;
            }
            let bit = ((value >> i) & 1) as u8;
            *self.bytes.last_mut().expect("byte pushed above") |= bit << (7 - self.used);
            self.used += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads `count` codes of `bits` each from a byte-padded section.
fn unpack(section: &[u8], count: usize, bits: u32, vocab: u32) -> Result<Vec<u32>> {
    let mut codes = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for _ in 0..bits {
            let bit = (section[pos / 8] >> (7 - pos % 8)) & 1;
            v = (v << 1) | bit as u32;
            pos += 1;
        }
        if v >= vocab {
            return Err(Error::CodeOutOfRange { code: v, vocab });
        }
        codes.push(v);
    }
    // padding must be zero
    while pos < section.len() * 8 {
        if (section[pos / 8] >> (7 - pos % 8)) & 1 != 0 {
            return Err(Error::InvalidInput("nonzero padding bits".into()));
        }
        pos += 1;
    }
    Ok(codes)
}

fn pack(codes: &[u32], bits: u32, vocab: u32) -> Result<Vec<u8>> {
    let mut w = BitWriter::new();
    for &c in codes {
        if c >= vocab {
            return Err(Error::CodeOutOfRange { code: c, vocab });
        }
        w.push(c, bits);
    }
    Ok(w.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    header: StreamHeader,
    payload: Vec<u8>,
}

impl Bitstream {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Payload bits before padding.
    pub fn payload_bits(&self) -> usize {
        let c = &self.header.config;
        let l = self.header.num_content_frames as usize;
        l * c.content_bits() as usize + c.f0_count(l) * c.f0_bits() as usize
    }

    /// Payload bits per second of stream time.
    pub fn measured_bps(&self) -> f64 {
        8.0 * self.payload.len() as f64 / self.header.duration_secs()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "stream");
        let header = StreamHeader::read(&mut r)?;
        let n = header.config.payload_len(header.num_content_frames as usize);
        let payload = r.take(n)?.to_vec();
        r.finish()?;
        Ok(Self { header, payload })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }

    /// Same codes, different speaker.
    pub fn with_speaker(&self, speaker_id: u16) -> Self {
        let mut out = self.clone();
        out.header.speaker_id = speaker_id;
        out
    }
}

/// Codes and metadata recovered from a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedStream {
    pub content: Vec<u32>,
    pub f0: Vec<u32>,
    pub speaker_id: u16,
    pub config: CodecConfig,
}

impl DecodedStream {
    pub fn units(&self) -> Result<UnitSequence> {
        UnitSequence::new(
            self.content.clone(),
            self.config.content_vocab as u32,
            self.config.content_frame_rate(),
        )
    }

    /// F0 codes; the pitch-frame count is restored when `f0_group` divides
    /// the pitch window evenly.
    pub fn f0_codes(&self) -> Result<F0CodeSequence> {
        let group = self.config.f0_group as usize;
        let source_frames = if F0_DOWNSAMPLE.is_multiple_of(group) {
            self.content.len() * (F0_DOWNSAMPLE / group)
        } else {
            0
        };
        F0CodeSequence::new(
            self.f0.clone(),
            self.config.f0_vocab as u32,
            self.config.f0_frame_rate(),
            source_frames,
        )
    }
}

pub fn encode_stream(content: &[u32], f0: &[u32], speaker_id: u16, config: &CodecConfig) -> Result<Bitstream> {
    config.validate()?;
    if content.is_empty() {
        return Err(Error::InvalidInput("no content codes".into()));
    }
    let frames = u32::try_from(content.len())
        .map_err(|_| Error::InvalidInput("too many content frames".into()))?;
    let expected = config.f0_count(content.len());
    if f0.len() != expected {
        return Err(Error::LengthMismatch {
            left: expected,
            right: f0.len(),
        });
    }
    let mut payload = pack(content, config.content_bits(), config.content_vocab as u32)?;
    payload.extend(pack(f0, config.f0_bits(), config.f0_vocab as u32)?);
    Ok(Bitstream {
        header: StreamHeader {
            version: VERSION,
            config: *config,
            speaker_id,
            num_content_frames: frames,
        },
        payload,
    })
}

pub fn decode_stream(stream: &Bitstream) -> Result<DecodedStream> {
    let h = &stream.header;
    if h.version != VERSION {
        return Err(Error::Version {
            format: "stream",
            expected: VERSION,
            found: h.version,
        });
    }
    let c = &h.config;
    c.validate()?;
    let l = h.num_content_frames as usize;
    let content_len = section_len(l, c.content_bits());
    if stream.payload.len() != c.payload_len(l) {
        return Err(if stream.payload.len() < c.payload_len(l) {
            Error::Truncated("stream payload")
        } else {
            Error::TrailingBytes("stream payload")
        });
    }
    let (cs, fs) = stream.payload.split_at(content_len);
    Ok(DecodedStream {
        content: unpack(cs, l, c.content_bits(), c.content_vocab as u32)?,
        f0: unpack(fs, c.f0_count(l), c.f0_bits(), c.f0_vocab as u32)?,
        speaker_id: h.speaker_id,
        config: *c,
    })
}

pub fn packet_count(frames: usize, frames_per_packet: usize) -> usize {
    1 + frames.div_ceil(frames_per_packet)
}

pub fn packetize(stream: &Bitstream, frames_per_packet: usize) -> Result<Vec<Vec<u8>>> {
    let c = stream.header.config;
    let group = c.f0_group as usize;
    if frames_per_packet == 0 || !frames_per_packet.is_multiple_of(group) {
        return Err(Error::Config(format!(
            "frames per packet ({frames_per_packet}) must be a positive multiple of {group}"
        )));
    }
    let fpp = u32::try_from(frames_per_packet).map_err(|_| Error::Config("packet too large".into()))?;
    let decoded = decode_stream(stream)?;
    let mut packets = Vec::with_capacity(packet_count(decoded.content.len(), frames_per_packet));

    let mut head = Vec::with_capacity(8 + HEADER_LEN);
    head.extend_from_slice(&0u32.to_le_bytes());
    head.extend_from_slice(&fpp.to_le_bytes());
    head.extend_from_slice(&stream.header.to_bytes());
    packets.push(head);

    let f0_per_packet = frames_per_packet / group;
    for (i, chunk) in decoded.content.chunks(frames_per_packet).enumerate() {
        let f0_start = i * f0_per_packet;
        let f0_end = (f0_start + c.f0_count(chunk.len())).min(decoded.f0.len());
        let mut p = Vec::new();
        p.extend_from_slice(&(i as u32 + 1).to_le_bytes());
        p.extend(pack(chunk, c.content_bits(), c.content_vocab as u32)?);
        p.extend(pack(&decoded.f0[f0_start..f0_end], c.f0_bits(), c.f0_vocab as u32)?);
        packets.push(p);
    }
    Ok(packets)
}

pub fn depacketize<P: AsRef<[u8]>>(packets: &[P]) -> Result<Bitstream> {
    let mut by_seq: BTreeMap<u32, &[u8]> = BTreeMap::new();
    for p in packets {
        let p = p.as_ref();
        let seq = ByteReader::new(p, "packet").u32()?;
        if by_seq.insert(seq, &p[4..]).is_some() {
            return Err(Error::DuplicatePacket(seq));
        }
    }
    let head = by_seq.remove(&0).ok_or(Error::MissingHeaderPacket)?;
    let mut r = ByteReader::new(head, "header packet");
    let fpp = r.u32()? as usize;
    let header = StreamHeader::read(&mut r)?;
    r.finish()?;
    let c = header.config;
    let group = c.f0_group as usize;
    if fpp == 0 || !fpp.is_multiple_of(group) {
        return Err(Error::InvalidInput(format!("bad frames per packet {fpp}")));
    }

    let frames = header.num_content_frames as usize;
    let n = frames.div_ceil(fpp);
    let missing: Vec<u32> = (1..=n as u32).filter(|s| !by_seq.contains_key(s)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingPackets(missing));
    }
    if let Some((&extra, _)) = by_seq.range(n as u32 + 1..).next() {
        return Err(Error::InvalidInput(format!("unexpected packet sequence {extra}")));
    }

    let mut content = Vec::with_capacity(frames);
    let mut f0 = Vec::with_capacity(c.f0_count(frames));
    for (&seq, body) in &by_seq {
        let start = (seq as usize - 1) * fpp;
        let count = fpp.min(frames - start);
        let f0_count = c.f0_count(count);
        let clen = section_len(count, c.content_bits());
        let flen = section_len(f0_count, c.f0_bits());
        if body.len() != clen + flen {
            return Err(if body.len() < clen + flen {
                Error::Truncated("packet")
            } else {
                Error::TrailingBytes("packet")
            });
        }
        content.extend(unpack(&body[..clen], count, c.content_bits(), c.content_vocab as u32)?);
        f0.extend(unpack(&body[clen..], f0_count, c.f0_bits(), c.f0_vocab as u32)?);
    }
    encode_stream(&content, &f0, header.speaker_id, &c)
}
