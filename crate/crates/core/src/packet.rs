//! Packets, fields and bit-exact field access.
//!
//! A [`Field`] locates a value inside a packet by byte offset, byte length
//! and a big-endian mask written over the whole span. Masked bits are
//! compacted from most- to least-significant, so non-contiguous masks are
//! allowed.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest field span, in bytes. Values must fit a `u64`.
pub const MAX_FIELD_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Rrc,
    Mac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Network to UE.
    Downlink,
    /// UE to network.
    Uplink,
}

/// Logical channel carrying a packet. Replays never cross channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Ccch,
    Dcch,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Rrc => "RRC",
            Layer::Mac => "MAC",
        })
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RRC" => Ok(Layer::Rrc),
            "MAC" => Ok(Layer::Mac),
            _ => Err(Error::Domain(format!("unknown layer {s:?}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Downlink => "DL",
            Direction::Uplink => "UL",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DL" | "DOWNLINK" => Ok(Direction::Downlink),
            "UL" | "UPLINK" => Ok(Direction::Uplink),
            _ => Err(Error::Domain(format!("unknown direction {s:?}"))),
        }
    }
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Downlink => Direction::Uplink,
            Direction::Uplink => Direction::Downlink,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Ccch => "CCCH",
            Channel::Dcch => "DCCH",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CCCH" => Ok(Channel::Ccch),
            "DCCH" => Ok(Channel::Dcch),
            _ => Err(Error::Domain(format!("unknown channel {s:?}"))),
        }
    }
}

/// A named bit region of a packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    /// Disambiguates repeated names within one packet.
    pub index: u32,
    pub offset: usize,
    pub length: usize,
    pub mask: u64,
}

impl Field {
    pub fn new(
        name: impl Into<String>,
        index: u32,
        offset: usize,
        length: usize,
        mask: u64,
    ) -> Result<Self> {
        let field = Field {
            name: name.into(),
            index,
            offset,
            length,
            mask,
        };
        field.validate()?;
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidField {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.length == 0 || self.length > MAX_FIELD_LEN {
            return bad("length must be within 1..=8 bytes");
        }
        if self.mask == 0 {
            return bad("mask must not be zero");
        }
        if self.length < MAX_FIELD_LEN && self.mask >> (self.length * 8) != 0 {
            return bad("mask does not fit the field span");
        }
        if self.name.is_empty() || self.name.contains(|c: char| c.is_whitespace() || c == '#')
        {
            return bad("name must be non-empty without whitespace or '#'");
        }
        Ok(())
    }

    /// Number of value bits, `popcount(mask)`.
    pub fn value_bits(&self) -> u32 {
        self.mask.count_ones()
    }

    /// Largest representable value.
    pub fn max_value(&self) -> u64 {
        low_bits(self.value_bits())
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    pub fn fits(&self, packet_len: usize) -> bool {
        self.end() <= packet_len
    }

    fn check_bounds(&self, packet_len: usize) -> Result<()> {
        if self.fits(packet_len) {
            Ok(())
        } else {
            Err(Error::FieldOutOfBounds {
                name: self.name.clone(),
                index: self.index,
                offset: self.offset,
                length: self.length,
                packet_len,
            })
        }
    }
}

/// Value read from, or written to, a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldValue {
    pub value: u64,
    pub width_bits: u32,
}

impl FieldValue {
    pub fn new(value: u64, width_bits: u32) -> Result<Self> {
        if width_bits == 0 || width_bits > 64 || value > low_bits(width_bits) {
            return Err(Error::ValueOutOfRange {
                value,
                capacity_bits: width_bits,
            });
        }
        Ok(FieldValue { value, width_bits })
    }

    /// Number of representable values, saturated at `u64::MAX` for 64-bit fields.
    pub fn capacity(&self) -> u64 {
        capacity_of(self.width_bits)
    }
}

/// `2^bits`, saturating for 64-bit widths.
pub fn capacity_of(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        1u64 << bits
    }
}

fn low_bits(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn read_span(bytes: &[u8], offset: usize, length: usize) -> u64 {
    bytes[offset..offset + length]
        .iter()
        .fold(0u64, |acc, b| (acc << 8) | u64::from(*b))
}

fn write_span(bytes: &mut [u8], offset: usize, length: usize, word: u64) {
    for (i, byte) in bytes[offset..offset + length].iter_mut().enumerate() {
        let shift = 8 * (length - 1 - i);
        *byte = (word >> shift) as u8;
    }
}

/// `Some(shift)` when the mask is a single run of ones.
fn contiguous_shift(mask: u64) -> Option<u32> {
    let shift = mask.trailing_zeros();
    let run = mask >> shift;
    (run & run.wrapping_add(1) == 0).then_some(shift)
}

fn gather_bits(word: u64, mask: u64) -> u64 {
    if let Some(shift) = contiguous_shift(mask) {
        return (word & mask) >> shift;
    }
    let mut out = 0u64;
    for bit in (0..64).rev() {
        if mask >> bit & 1 == 1 {
            out = (out << 1) | (word >> bit & 1);
        }
    }
    out
}

fn scatter_bits(value: u64, mask: u64) -> u64 {
    if let Some(shift) = contiguous_shift(mask) {
        return (value << shift) & mask;
    }
    let mut out = 0u64;
    let mut next = 0;
    for bit in 0..64 {
        if mask >> bit & 1 == 1 {
            out |= (value >> next & 1) << bit;
            next += 1;
        }
    }
    out
}

/// Reads the masked value of `field` from raw bytes.
pub fn read_field(bytes: &[u8], field: &Field) -> Result<u64> {
    field.check_bounds(bytes.len())?;
    Ok(gather_bits(
        read_span(bytes, field.offset, field.length),
        field.mask,
    ))
}

/// Writes `value` into the masked bits of `field`, leaving every other bit alone.
pub fn write_field(bytes: &mut [u8], field: &Field, value: u64) -> Result<()> {
    field.check_bounds(bytes.len())?;
    if value > field.max_value() {
        return Err(Error::ValueOutOfRange {
            value,
            capacity_bits: field.value_bits(),
        });
    }
    let word = read_span(bytes, field.offset, field.length);
    let word = (word & !field.mask) | scatter_bits(value, field.mask);
    write_span(bytes, field.offset, field.length, word);
    Ok(())
}

/// An intercepted packet together with its dissection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub bytes: Vec<u8>,
    pub layer: Layer,
    pub direction: Direction,
    pub channel: Channel,
    pub packet_type: String,
    pub fields: Vec<Field>,
}

impl Packet {
    pub fn field(&self, name: &str, index: u32) -> Option<&Field> {
        self.fields
            .iter()
            .find(|f| f.name == name && f.index == index)
    }

    /// Reads a field by name, index 0. Missing fields read as `None`.
    pub fn get(&self, name: &str) -> Option<u64> {
        self.field(name, 0)
            .and_then(|f| read_field(&self.bytes, f).ok())
    }

    /// Text form used in logs and trace files: `TYPE dir chan layer : <hex>`.
    pub fn hex_line(&self) -> String {
        format!(
            "{} {} {} {} : {}",
            self.packet_type,
            self.direction,
            self.channel,
            self.layer,
            hex::encode(&self.bytes)
        )
    }
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex_line())
    }
}

/// The parsed form of a [`Packet::hex_line`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexLine {
    pub packet_type: String,
    pub direction: Direction,
    pub channel: Channel,
    pub layer: Layer,
    pub bytes: Vec<u8>,
}

impl FromStr for HexLine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, hex_part) = s
            .split_once(" : ")
            .ok_or_else(|| Error::Domain(format!("missing ' : ' separator in {s:?}")))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [packet_type, direction, channel, layer] = parts.as_slice() else {
            return Err(Error::Domain(format!(
                "expected `TYPE dir chan layer`, got {head:?}"
            )));
        };
        let bytes = hex::decode(hex_part.trim())
            .map_err(|e| Error::Domain(format!("bad hex payload: {e}")))?;
        Ok(HexLine {
            packet_type: packet_type.to_string(),
            direction: direction.parse()?,
            channel: channel.parse()?,
            layer: layer.parse()?,
            bytes,
        })
    }
}

/// Reads `field` out of `packet`.
pub fn extract_field(packet: &Packet, field: &Field) -> Result<FieldValue> {
    let value = read_field(&packet.bytes, field)?;
    FieldValue::new(value, field.value_bits())
}

/// Returns a copy of `packet` with `field` set to `value`.
pub fn apply_field(packet: &Packet, field: &Field, value: FieldValue) -> Result<Packet> {
    let mut out = packet.clone();
    write_field(&mut out.bytes, field, value.value)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(bytes: &[u8]) -> Packet {
        Packet {
            bytes: bytes.to_vec(),
            layer: Layer::Rrc,
            direction: Direction::Downlink,
            channel: Channel::Ccch,
            packet_type: "Test".into(),
            fields: Vec::new(),
        }
    }

    #[test]
    fn extracts_harq_style_field() {
        let f = Field::new("max_harq_tx", 0, 1, 1, 0x70).unwrap();
        let v = extract_field(&packet(&[0x2C, 0x91]), &f).unwrap();
        assert_eq!(v.value, 1);
        assert_eq!(v.width_bits, 3);
    }

    #[test]
    fn full_mask_and_zero_cases() {
        let full = Field::new("all", 0, 0, 1, 0xFF).unwrap();
        assert_eq!(extract_field(&packet(&[0xFF]), &full).unwrap().value, 255);
        let mid = Field::new("mid", 0, 0, 2, 0x0FF0).unwrap();
        assert_eq!(extract_field(&packet(&[0, 0]), &mid).unwrap().value, 0);
    }

    #[test]
    fn apply_sets_only_masked_bits() {
        let f = Field::new("max_harq_tx", 0, 1, 1, 0x70).unwrap();
        let p = packet(&[0x2C, 0x91]);
        let out = apply_field(&p, &f, FieldValue::new(5, 3).unwrap()).unwrap();
        assert_eq!(out.bytes, vec![0x2C, 0xD1]);
        let same = apply_field(&p, &f, extract_field(&p, &f).unwrap()).unwrap();
        assert_eq!(same.bytes, p.bytes);
    }

    #[test]
    fn non_contiguous_mask_compacts_high_to_low() {
        // mask 1010_0101: bits 7,5,2,0
        let f = Field::new("sparse", 0, 0, 1, 0xA5).unwrap();
        assert_eq!(read_field(&[0b1000_0001], &f).unwrap(), 0b1001);
        let mut bytes = [0u8];
        write_field(&mut bytes, &f, 0b0110).unwrap();
        assert_eq!(bytes[0], 0b0010_0100);
    }

    #[test]
    fn multi_byte_is_big_endian() {
        let f = Field::new("word", 0, 1, 2, 0xFFFF).unwrap();
        assert_eq!(read_field(&[0, 0x12, 0x34], &f).unwrap(), 0x1234);
        let wide = Field::new("u64", 0, 0, 8, u64::MAX).unwrap();
        let mut bytes = [0u8; 8];
        write_field(&mut bytes, &wide, u64::MAX - 1).unwrap();
        assert_eq!(read_field(&bytes, &wide).unwrap(), u64::MAX - 1);
    }

    #[test]
    fn out_of_bounds_and_overflow_are_errors() {
        let f = Field::new("tail", 0, 1, 2, 0xFFFF).unwrap();
        assert!(matches!(
            read_field(&[0, 0], &f),
            Err(Error::FieldOutOfBounds { .. })
        ));
        let small = Field::new("small", 0, 0, 1, 0x70).unwrap();
        let mut bytes = [0u8];
        assert!(matches!(
            write_field(&mut bytes, &small, 8),
            Err(Error::ValueOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Field::new("zero", 0, 0, 1, 0).is_err());
        assert!(Field::new("wide", 0, 0, 1, 0x1FF).is_err());
        assert!(Field::new("long", 0, 0, 9, 1).is_err());
        assert!(Field::new("a b", 0, 0, 1, 1).is_err());
    }

    #[test]
    fn hex_line_parses_back() {
        let mut p = packet(&[0x24, 0xAB]);
        p.packet_type = "ConnSetup".into();
        let line = p.hex_line();
        assert_eq!(line, "ConnSetup DL CCCH RRC : 24ab");
        let parsed: HexLine = line.parse().unwrap();
        assert_eq!(parsed.bytes, p.bytes);
        assert_eq!(parsed.channel, Channel::Ccch);
        assert_eq!(parsed.direction, Direction::Downlink);
    }
}
