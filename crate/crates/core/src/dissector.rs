//! Message schemas of the simulated attach procedure and the dissector that
//! maps raw bytes onto them.
//!
//! Every message is a fixed-layout binary record. The high nibble of the
//! first payload byte carries the message type; schemas sharing a channel
//! use distinct type values. MAC-layer packets prepend a two-byte header
//! (`mac.lcid`, `mac.length`) in front of the RRC payload.

use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::packet::{read_field, write_field, Channel, Direction, Field, Layer, Packet};

pub const UNKNOWN_TYPE: &str = "UNKNOWN";
pub const RAW_FIELD: &str = "raw";
pub const MAC_HEADER_LEN: usize = 2;
pub const MSG_TYPE_FIELD: &str = "msg_type";

/// Byte offset, mask and expected value identifying a message type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discriminator {
    pub offset: usize,
    pub mask: u8,
    pub value: u8,
}

impl Discriminator {
    pub fn matches(&self, payload: &[u8]) -> bool {
        payload
            .get(self.offset)
            .is_some_and(|b| b & self.mask == self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub index: u32,
    pub offset: usize,
    pub length: usize,
    pub mask: u64,
}

impl FieldSpec {
    fn to_field(&self, shift: usize) -> Field {
        Field {
            name: self.name.to_string(),
            index: self.index,
            offset: self.offset + shift,
            length: self.length,
            mask: self.mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSchema {
    pub packet_type: &'static str,
    pub channel: Channel,
    /// Direction the message naturally travels in.
    pub direction: Direction,
    /// Payload length in bytes.
    pub length: usize,
    pub discriminator: Discriminator,
    pub field_specs: Vec<FieldSpec>,
}

impl MessageSchema {
    pub fn fields(&self) -> Vec<Field> {
        self.field_specs.iter().map(|s| s.to_field(0)).collect()
    }

    pub fn spec(&self, name: &str) -> Option<&FieldSpec> {
        self.field_specs.iter().find(|s| s.name == name && s.index == 0)
    }

    /// Encodes a payload from `(name, value)` pairs. Unlisted fields are zero;
    /// the message type is always set.
    pub fn encode(&self, values: &[(&str, u64)]) -> Vec<u8> {
        let mut bytes = vec![0u8; self.length];
        bytes[self.discriminator.offset] = self.discriminator.value;
        for (name, value) in values {
            let (name, index) = split_index(name);
            let spec = self
                .field_specs
                .iter()
                .find(|s| s.name == name && s.index == index)
                .unwrap_or_else(|| panic!("{} has no field {name}#{index}", self.packet_type));
            write_field(&mut bytes, &spec.to_field(0), *value)
                .unwrap_or_else(|e| panic!("encoding {}: {e}", self.packet_type));
        }
        bytes
    }

    /// Reads a named field from a payload of this schema.
    pub fn read(&self, payload: &[u8], name: &str) -> u64 {
        let (name, index) = split_index(name);
        self.field_specs
            .iter()
            .find(|s| s.name == name && s.index == index)
            .and_then(|s| read_field(payload, &s.to_field(0)).ok())
            .unwrap_or(0)
    }
}

fn split_index(name: &str) -> (&str, u32) {
    match name.split_once('#') {
        Some((n, i)) => (n, i.parse().expect("numeric field index")),
        None => (name, 0),
    }
}

type RawSpec = (&'static str, usize, usize, u64);

fn schema(
    packet_type: &'static str,
    channel: Channel,
    direction: Direction,
    type_code: u8,
    length: usize,
    raw: &[RawSpec],
) -> MessageSchema {
    let mut field_specs: Vec<FieldSpec> = Vec::with_capacity(raw.len());
    for &(name, offset, len, mask) in raw {
        let index = field_specs.iter().filter(|s| s.name == name).count() as u32;
        field_specs.push(FieldSpec {
            name,
            index,
            offset,
            length: len,
            mask,
        });
    }
    MessageSchema {
        packet_type,
        channel,
        direction,
        length,
        discriminator: Discriminator {
            offset: 0,
            mask: 0xF0,
            value: type_code << 4,
        },
        field_specs,
    }
}

fn build_registry() -> Vec<MessageSchema> {
    use Channel::{Ccch, Dcch};
    use Direction::{Downlink as DL, Uplink as UL};
    vec![
        schema("ConnRequest", Ccch, UL, 0x1, 8, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("est_cause", 0, 1, 0x0E),
            ("ue_id_type", 0, 1, 0x01),
            ("mmec", 1, 1, 0xFF),
            ("m_tmsi", 2, 4, 0xFFFF_FFFF),
            ("ue_category", 6, 1, 0xF0),
            ("access_class", 6, 1, 0x0F),
            ("ra_attempt", 7, 1, 0xC0),
            ("ra_preamble_id", 7, 1, 0x3F),
        ]),
        schema("ConnSetup", Ccch, DL, 0x2, 12, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("transaction_id", 0, 1, 0x0C),
            ("crit_ext", 0, 1, 0x03),
            ("contention_id", 1, 2, 0xFFFF),
            ("tti_bundling", 3, 1, 0x80),
            ("max_harq_tx", 3, 1, 0x70),
            ("periodic_bsr_timer", 3, 1, 0x0F),
            ("dsr_trans_max", 4, 2, 0xF800),
            ("sr_pucch_resource_index", 4, 2, 0x07FF),
            ("cqi_report_config", 6, 1, 0xFF),
            ("p_max", 7, 1, 0xFF),
            ("drb_to_add_count", 8, 1, 0xFF),
            ("p0_nominal_pusch", 9, 1, 0xF8),
            ("alpha", 9, 1, 0x07),
            ("time_alignment_timer", 10, 1, 0xE0),
            ("srb_identity", 10, 1, 0x18),
            ("antenna_ports", 10, 1, 0x07),
            ("ul_specific_params", 11, 1, 0xFF),
        ]),
        schema("ConnSetupComplete", Dcch, UL, 0x3, 14, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("transaction_id", 0, 1, 0x0C),
            ("crit_ext", 0, 1, 0x03),
            ("selected_plmn_index", 1, 1, 0xF8),
            ("nas_ksi", 1, 1, 0x07),
            ("registered_mme", 2, 2, 0xFFFF),
            ("attach_type", 4, 1, 0x70),
            ("tsc", 4, 1, 0x08),
            ("pdn_type", 4, 1, 0x07),
            ("ue_net_cap", 5, 2, 0xFFFF),
            ("cfg_report", 7, 1, 0xFF),
            ("cfg_report", 8, 1, 0xFF),
            ("cfg_report", 9, 1, 0xFF),
            ("cfg_report", 10, 1, 0xFF),
            ("drb_ack", 11, 1, 0xFF),
            ("ue_radio_cap", 12, 2, 0x0FFF),
            ("ue_cap_flags", 12, 2, 0xF000),
        ]),
        schema("AuthRequest", Dcch, DL, 0x4, 14, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("dedicated_info_type", 0, 1, 0x08),
            ("ksi_asme", 0, 1, 0x07),
            ("rand", 1, 4, 0xFFFF_FFFF),
            ("sqn", 5, 2, 0xFFFF),
            ("amf", 7, 2, 0xFFFF),
            ("autn_mac", 9, 4, 0xFFFF_FFFF),
            ("auth_param_len", 13, 1, 0xFF),
        ]),
        schema("AuthResponse", Dcch, UL, 0x5, 14, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("res_status", 0, 1, 0x0C),
            ("ksi_echo", 0, 1, 0x03),
            ("res", 1, 4, 0xFFFF_FFFF),
            ("auts", 5, 2, 0xFFFF),
            ("res_len", 7, 1, 0xFF),
            ("auth_report", 8, 1, 0xFF),
            ("sec_cap_echo", 9, 2, 0xFFFF),
            ("diag_report", 11, 2, 0xFFFF),
            ("diag_flags", 13, 1, 0xFF),
        ]),
        schema("SecModeCommand", Dcch, DL, 0x6, 11, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("transaction_id", 0, 1, 0x0C),
            ("crit_ext", 0, 1, 0x03),
            ("ciphering_algorithm", 1, 1, 0xE0),
            ("integrity_prot_algorithm", 1, 1, 0x1C),
            ("security_ext", 1, 1, 0x03),
            ("replayed_ue_cap", 2, 2, 0xFFFF),
            ("imeisv_request", 4, 1, 0x70),
            ("emm_toi", 4, 1, 0x0F),
            ("nas_count", 5, 1, 0xFF),
            ("nas_ksi", 6, 1, 0xE0),
            ("smc_flags", 6, 1, 0x1F),
            ("mac_i", 7, 4, 0xFFFF_FFFF),
        ]),
        schema("SecModeComplete", Dcch, UL, 0x7, 15, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("transaction_id", 0, 1, 0x0C),
            ("smc_status", 0, 1, 0x03),
            ("imeisv", 1, 4, 0xFFFF_FFFF),
            ("nas_count_ul", 5, 1, 0xFF),
            ("sec_report", 6, 1, 0xFF),
            ("sec_report", 7, 1, 0xFF),
            ("mac_i", 8, 4, 0xFFFF_FFFF),
            ("diag_report", 12, 2, 0xFFFF),
            ("diag_flags", 14, 1, 0xFF),
        ]),
        schema("AttachAccept", Dcch, DL, 0x8, 16, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("sms_only", 0, 1, 0x08),
            ("eps_attach_result", 0, 1, 0x07),
            ("t3412_unit", 1, 1, 0xE0),
            ("t3412_value", 1, 1, 0x1F),
            ("tai_list_len", 2, 1, 0xFF),
            ("guti_mmec", 3, 1, 0xFF),
            ("guti_m_tmsi", 4, 4, 0xFFFF_FFFF),
            ("esm_container_len", 8, 2, 0xFFFF),
            ("emm_cause", 10, 1, 0xFF),
            ("eps_network_feature", 11, 1, 0xFF),
            ("mac_i", 12, 4, 0xFFFF_FFFF),
        ]),
        schema("AttachComplete", Dcch, UL, 0x9, 14, &[
            (MSG_TYPE_FIELD, 0, 1, 0xF0),
            ("eps_bearer_id", 0, 1, 0x0F),
            ("pti", 1, 1, 0xFF),
            ("accept_report", 2, 1, 0xFF),
            ("guti_ack", 3, 4, 0xFFFF_FFFF),
            ("mac_i", 7, 4, 0xFFFF_FFFF),
            ("diag_report", 11, 2, 0xFFFF),
            ("diag_flags", 13, 1, 0xFF),
        ]),
    ]
}

/// The nine attach-flow schemas, in protocol order.
pub fn schema_registry() -> &'static [MessageSchema] {
    static REGISTRY: OnceLock<Vec<MessageSchema>> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

pub fn schema_by_type(packet_type: &str) -> Option<&'static MessageSchema> {
    schema_registry()
        .iter()
        .find(|s| s.packet_type == packet_type)
}

/// Finds the schema a payload belongs to on `channel`.
pub fn identify(payload: &[u8], channel: Channel) -> Option<&'static MessageSchema> {
    schema_registry().iter().find(|s| {
        s.channel == channel && s.length == payload.len() && s.discriminator.matches(payload)
    })
}

pub fn lcid_for(channel: Channel) -> u64 {
    match channel {
        Channel::Ccch => 0,
        Channel::Dcch => 1,
    }
}

pub fn mac_fields() -> [Field; 2] {
    [
        Field {
            name: "mac.lcid".into(),
            index: 0,
            offset: 0,
            length: 1,
            mask: 0x1F,
        },
        Field {
            name: "mac.length".into(),
            index: 0,
            offset: 1,
            length: 1,
            mask: 0xFF,
        },
    ]
}

/// Wraps an RRC payload in the MAC framing header.
pub fn mac_frame(payload: &[u8], channel: Channel) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + MAC_HEADER_LEN);
    out.push(lcid_for(channel) as u8);
    out.push(payload.len().min(255) as u8);
    out.extend_from_slice(payload);
    out
}

/// Dissects raw bytes into a [`Packet`]. Never fails: bytes that match no
/// schema become an `UNKNOWN` packet with a single `raw` field.
pub fn dissect(bytes: &[u8], channel: Channel, direction: Direction, layer: Layer) -> Packet {
    let header = match layer {
        Layer::Rrc => 0,
        Layer::Mac => MAC_HEADER_LEN,
    };
    let schema = bytes
        .get(header..)
        .filter(|p| !p.is_empty())
        .and_then(|payload| identify(payload, channel));
    let (packet_type, fields) = match schema {
        Some(schema) => {
            let mut fields = Vec::with_capacity(schema.field_specs.len() + header);
            if layer == Layer::Mac {
                fields.extend(mac_fields());
            }
            fields.extend(schema.field_specs.iter().map(|s| s.to_field(header)));
            (schema.packet_type.to_string(), fields)
        }
        None => (UNKNOWN_TYPE.to_string(), raw_fields(bytes.len())),
    };
    Packet {
        bytes: bytes.to_vec(),
        layer,
        direction,
        channel,
        packet_type,
        fields,
    }
}

fn raw_fields(len: usize) -> Vec<Field> {
    let span = len.min(8);
    if span == 0 {
        return Vec::new();
    }
    let mask = if span == 8 {
        u64::MAX
    } else {
        (1u64 << (span * 8)) - 1
    };
    vec![Field {
        name: RAW_FIELD.to_string(),
        index: 0,
        offset: 0,
        length: span,
        mask,
    }]
}

/// Text table of the registry: `schema name | channel | field | offset | len | mask`.
pub fn registry_table() -> String {
    let mut out = String::from("schema name | channel | field | offset | len | mask\n");
    for schema in schema_registry() {
        for spec in &schema.field_specs {
            let _ = writeln!(
                out,
                "{} | {} | {}#{} | {} | {} | 0x{:0width$X}",
                schema.packet_type,
                schema.channel,
                spec.name,
                spec.index,
                spec.offset,
                spec.length,
                spec.mask,
                width = spec.length * 2
            );
        }
    }
    out
}

/// Checks the structural invariants of the registry.
pub fn validate_registry(registry: &[MessageSchema]) -> Result<()> {
    for (i, a) in registry.iter().enumerate() {
        for spec in &a.field_specs {
            let field = spec.to_field(0);
            Field::new(field.name.clone(), field.index, field.offset, field.length, field.mask)?;
            if !field.fits(a.length) {
                return Err(Error::Domain(format!(
                    "{}: field {} exceeds payload",
                    a.packet_type, spec.name
                )));
            }
        }
        let covers_discriminator = a.field_specs.iter().any(|s| {
            s.offset <= a.discriminator.offset
                && a.discriminator.offset < s.offset + s.length
                && s.mask != 0
        });
        if !covers_discriminator {
            return Err(Error::Domain(format!(
                "{}: no field covers the discriminator",
                a.packet_type
            )));
        }
        for b in &registry[i + 1..] {
            if a.channel == b.channel
                && a.discriminator.offset == b.discriminator.offset
                && a.discriminator.mask == b.discriminator.mask
                && a.discriminator.value == b.discriminator.value
            {
                return Err(Error::Domain(format!(
                    "{} and {} share a discriminator",
                    a.packet_type, b.packet_type
                )));
            }
        }
    }
    Ok(())
}
