//! Constants and helpers shared by both simulated machines.

use crate::dissector::{identify, schema_by_type, MessageSchema};
use crate::packet::Channel;

use super::trace::{arm, Tracer};

pub const UE_TMSI: u64 = 0x3C1F_A077;
pub const MME_CODE: u64 = 0x1A;
pub const REGISTERED_MME: u64 = 0x1A01;
pub const UE_SECURITY_CAPS: u64 = 0xE0E0;
pub const UE_IMEISV: u64 = 0x3512_3456;
pub const SQN_WINDOW: (u64, u64) = (0x0120, 0x0140);
pub const AUTH_RAND: u64 = 0x5A3C_96E1;
pub const DEFAULT_GUTI: u64 = 0xC1A0_0001;
/// Invalid information elements the UE tolerates in one message.
pub const UE_REJECT_THRESHOLD: u32 = 3;
/// Connection requests a UE sends before giving up.
pub const MAX_CONN_ATTEMPTS: u32 = 3;
pub const MAX_AUTH_ROUNDS: u32 = 3;
pub const MAX_SMC_ROUNDS: u32 = 2;
/// Spin count after which a looping machine is declared hung.
pub const HANG_SPIN: u64 = 200;

/// Keyed 32-bit digest standing in for the NAS/AS integrity functions.
pub fn digest32(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c908;
    for &p in parts {
        h ^= p;
        h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(29) ^ (h >> 17);
    }
    (h ^ (h >> 32)) & 0xFFFF_FFFF
}

pub fn autn_mac(rand: u64, sqn: u64) -> u64 {
    digest32(&[0xA7, rand, sqn])
}

pub fn expected_res(rand: u64) -> u64 {
    digest32(&[0x5E, rand])
}

pub fn resync_token(sqn: u64) -> u64 {
    digest32(&[0x55, sqn]) & 0xFFFF
}

/// Integrity code of a protected message; `tag` separates message kinds.
pub fn nas_mac(tag: u64, count: u64) -> u64 {
    digest32(&[0x4E, tag, count])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub channel: Channel,
    pub payload: Vec<u8>,
}

impl Outgoing {
    pub fn encode(packet_type: &str, values: &[(&str, u64)]) -> Self {
        let schema = schema_by_type(packet_type).expect("registered message type");
        Outgoing {
            channel: schema.channel,
            payload: schema.encode(values),
        }
    }
}

/// What a machine does after receiving one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reaction {
    Send(Outgoing),
    /// Packet dropped; the machine waits for something else.
    Ignore,
    /// The attach procedure finished successfully.
    Complete,
    Reject,
    Crash(&'static str),
    Hang(&'static str),
}

/// A received message with its schema, for field access by name.
pub struct Message<'a> {
    pub schema: &'static MessageSchema,
    pub payload: &'a [u8],
}

impl Message<'_> {
    pub fn get(&self, name: &str) -> u64 {
        self.schema.read(self.payload, name)
    }

    pub fn type_code(&self) -> u64 {
        (self.schema.discriminator.value >> 4) as u64
    }
}

/// Parses the MAC header and identifies the payload. `strict` machines
/// drop frames with reserved header bits set.
pub fn receive_frame<'a>(
    t: &mut Tracer,
    base: u64,
    frame: &'a [u8],
    strict: bool,
) -> Option<(Channel, &'a [u8])> {
    if t.check(arm(base, 0x10), frame.len() < 2) {
        return None;
    }
    let reserved = frame[0] >> 5;
    if t.check(arm(base, 0x11), reserved != 0) && strict {
        return None;
    }
    let channel = match t.lookup(arm(base, 0x12), (frame[0] & 0x1F) as u64, &[0, 1]) {
        Some(0) => Channel::Ccch,
        Some(_) => Channel::Dcch,
        None => return None,
    };
    let payload = &frame[2..];
    let declared = frame[1] as usize;
    if !t.check(arm(base, 0x13), declared == payload.len()) {
        return None;
    }
    Some((channel, payload))
}

pub fn parse<'a>(t: &mut Tracer, base: u64, channel: Channel, payload: &'a [u8]) -> Option<Message<'a>> {
    let schema = identify(payload, channel);
    if !t.check(arm(base, 0x14), schema.is_some()) {
        return None;
    }
    schema.map(|schema| Message { schema, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_32_bit_and_keyed() {
        let a = autn_mac(AUTH_RAND, 0x120);
        assert!(a <= 0xFFFF_FFFF);
        assert_ne!(a, autn_mac(AUTH_RAND, 0x121));
        assert_ne!(expected_res(1), expected_res(2));
    }
}
