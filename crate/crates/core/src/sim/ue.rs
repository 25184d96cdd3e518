//! The UE-side machine: starts the attach, answers the network and
//! tolerates a few malformed elements per message before giving up.

use super::protocol::*;
use super::trace::{arm, site, Tracer};
use crate::coverage::EdgeHits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    WaitSetup,
    WaitAuth,
    WaitSmc,
    WaitAccept,
    Attached,
    Rejected,
}

#[derive(Debug, Clone)]
pub struct Ue {
    state: State,
    tracer: Tracer,
    attempts: u32,
    ksi: u64,
}

impl Default for Ue {
    fn default() -> Self {
        Ue {
            state: State::Idle,
            tracer: Tracer::default(),
            attempts: 0,
            ksi: 0,
        }
    }
}

impl Ue {
    pub fn reset(&mut self) {
        *self = Ue::default();
    }

    pub fn hits(&self) -> &EdgeHits {
        self.tracer.hits()
    }

    pub fn take_hits(&mut self) -> EdgeHits {
        self.tracer.take()
    }

    /// Starts the attach procedure.
    pub fn trigger(&mut self) -> Outgoing {
        self.tracer.hit(site!("ue.trigger"));
        self.conn_request()
    }

    fn conn_request(&mut self) -> Outgoing {
        self.tracer.split(site!("ue.tx.request"), self.attempts as u64, &[1, 2]);
        let attempt = self.attempts;
        self.attempts += 1;
        self.state = State::WaitSetup;
        Outgoing::encode(
            "ConnRequest",
            &[
                ("est_cause", 3),
                ("ue_id_type", 0),
                ("mmec", MME_CODE),
                ("m_tmsi", UE_TMSI),
                ("ue_category", 4),
                ("access_class", 9),
                ("ra_attempt", attempt as u64),
                ("ra_preamble_id", 17),
            ],
        )
    }

    pub fn receive(&mut self, frame: &[u8]) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("ue.rx"));
        let Some((channel, payload)) = receive_frame(t, site!("ue.mac"), frame, false) else {
            return Reaction::Ignore;
        };
        let Some(msg) = parse(t, site!("ue.parse"), channel, payload) else {
            return Reaction::Ignore;
        };
        let reaction = match (self.state, msg.schema.packet_type) {
            (State::WaitSetup, "ConnSetup") => self.on_setup(&msg),
            (State::WaitAuth, "AuthRequest") => self.on_auth(&msg),
            (State::WaitSmc, "SecModeCommand") => self.on_smc(&msg),
            (State::WaitAccept, "AttachAccept") => self.on_accept(&msg),
            (state, _) => {
                let pair = (state as u64) << 4 | msg.type_code();
                self.tracer.hit(arm(site!("ue.unexpected"), pair));
                Reaction::Ignore
            }
        };
        if reaction == Reaction::Reject {
            self.state = State::Rejected;
        }
        reaction
    }

    fn give_up(&mut self, bad: u32, base: u64) -> bool {
        self.tracer.split(arm(base, 0xBAD), bad as u64, &[1, UE_REJECT_THRESHOLD as u64]) == 2
    }

    fn on_setup(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("ue.setup"));
        let mut bad = 0;
        let tid = m.get("transaction_id");
        t.split(site!("ue.setup.tid"), tid, &[1, 2, 3]);
        if t.check(site!("ue.setup.crit"), m.get("crit_ext") != 0) {
            bad += 1;
        }
        if !t.check(site!("ue.setup.contention"), m.get("contention_id") == UE_TMSI & 0xFFFF) {
            if t.check(site!("ue.setup.retry"), self.attempts < MAX_CONN_ATTEMPTS) {
                return Reaction::Send(self.conn_request());
            }
            return Reaction::Reject;
        }

        let bundling = t.check(site!("ue.setup.tti"), m.get("tti_bundling") == 1);
        let harq = m.get("max_harq_tx");
        let harq_r = t.split(site!("ue.setup.harq"), harq, &[1, 2, 3, 4, 5, 6, 7]);
        if harq == 0 {
            bad += 1;
        }
        if bundling && t.check(site!("ue.setup.tti_harq"), harq > 4) {
            bad += 1;
        }
        let bsr = m.get("periodic_bsr_timer");
        let bsr_r = t.split(site!("ue.setup.bsr"), bsr, &[4, 8, 12, 15]);
        if bsr_r == 4 {
            bad += 1;
        }
        let dsr = m.get("dsr_trans_max");
        let dsr_r = t.split(site!("ue.setup.dsr"), dsr, &[1, 4, 8, 16]);
        if dsr_r == 0 {
            bad += 1;
        }
        let sr = m.get("sr_pucch_resource_index");
        let sr_bin = t.bin(site!("ue.setup.sr"), sr, 11, 32);
        if sr >= 2040 {
            return Reaction::Crash("ue.sr_pucch_overflow");
        }
        let cqi = m.get("cqi_report_config");
        let cqi_mode = t.lookup(site!("ue.setup.cqi"), cqi >> 4, &(0..15).collect::<Vec<_>>());
        let Some(cqi_mode) = cqi_mode else {
            t.repeat(site!("ue.setup.cqi_spin"), HANG_SPIN);
            return Reaction::Hang("ue.cqi_mode_hang");
        };
        t.flags(site!("ue.setup.cqi_sub"), cqi & 0xF, 4);
        let p_max = m.get("p_max");
        let pmax_bin = t.bin(site!("ue.setup.pmax"), p_max, 8, 16);
        if t.check(site!("ue.setup.pmax_limit"), p_max >= 34) {
            bad += 1;
        }
        let drb = m.get("drb_to_add_count");
        t.repeat(site!("ue.setup.drb"), drb);
        if t.check(site!("ue.setup.drb_limit"), drb > 8) {
            bad += 1;
        }
        let p0_r = t.split(site!("ue.setup.p0"), m.get("p0_nominal_pusch"), &[8, 16, 24]);
        let alpha = m.get("alpha");
        t.hit(arm(site!("ue.setup.alpha"), p0_r as u64 * 8 + alpha));
        let tat = m.get("time_alignment_timer");
        t.lookup(site!("ue.setup.tat"), tat, &[0, 1, 2, 3, 4, 5, 6]);
        let srb = m.get("srb_identity");
        if !t.check(site!("ue.setup.srb"), srb == 1 || srb == 2) {
            bad += 1;
        }
        if t.lookup(site!("ue.setup.ant"), m.get("antenna_ports"), &[0, 1, 2]).is_none() {
            bad += 1;
        }
        let ul = m.get("ul_specific_params");
        t.flags(site!("ue.setup.ul"), ul, 8);

        if self.give_up(bad, site!("ue.setup")) {
            return Reaction::Reject;
        }
        self.tracer.hit(site!("ue.tx.setup_complete"));
        self.state = State::WaitAuth;
        Reaction::Send(Outgoing::encode(
            "ConnSetupComplete",
            &[
                ("transaction_id", tid),
                ("selected_plmn_index", 1),
                ("nas_ksi", 7),
                ("registered_mme", REGISTERED_MME),
                ("attach_type", 1),
                ("pdn_type", 1),
                ("ue_net_cap", UE_SECURITY_CAPS),
                ("cfg_report#0", harq_r as u64 | (bsr_r as u64) << 3 | (bundling as u64) << 6),
                ("cfg_report#1", sr_bin | (pmax_bin >> 1) << 5),
                ("cfg_report#2", p0_r as u64 | alpha << 2 | (dsr_r as u64) << 5),
                ("cfg_report#3", cqi_mode as u64 | tat << 4),
                ("drb_ack", drb),
                ("ue_radio_cap", 0x100 | ul),
                ("ue_cap_flags", cqi & 0xF),
            ],
        ))
    }

    fn on_auth(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("ue.auth"));
        let mut bad = 0;
        let dit = t.check(site!("ue.auth.dit"), m.get("dedicated_info_type") == 1);
        let ksi = m.get("ksi_asme");
        let ksi_r = if t.check(site!("ue.auth.ksi_reserved"), ksi == 7) {
            bad += 1;
            3
        } else {
            t.split(site!("ue.auth.ksi"), ksi, &[1, 2, 4]) as u64
        };
        let rand = m.get("rand");
        let rand_r = t.split(site!("ue.auth.rand"), rand, &[0x4000_0000, 0x8000_0000, 0xC000_0000]);
        let rand_bin = t.bin(site!("ue.auth.rand_bin"), rand, 32, 16);
        let sqn = m.get("sqn");
        let mut status = 0;
        let sqn_r = if t.check(site!("ue.auth.sqn_window"), (SQN_WINDOW.0..SQN_WINDOW.1).contains(&sqn)) {
            t.split(site!("ue.auth.sqn_offset"), sqn - SQN_WINDOW.0, &[1, 4, 16])
        } else {
            status = 2;
            4 + t.split(site!("ue.auth.sqn_resync"), sqn, &[SQN_WINDOW.0, 0x8000, 0xFF00])
        };
        let amf = m.get("amf");
        if !t.check(site!("ue.auth.amf_separation"), amf & 0x8000 != 0) {
            bad += 1;
        }
        let amf_bin = t.bin(site!("ue.auth.amf_high"), amf >> 8 & 0x7F, 7, 8);
        t.flags(site!("ue.auth.amf"), amf, 8);
        if status == 0 && !t.check(site!("ue.auth.autn"), m.get("autn_mac") == autn_mac(rand, sqn)) {
            status = 1;
        }
        let param_len = m.get("auth_param_len");
        t.repeat(site!("ue.auth.param"), param_len);
        let param_bin = t.bin(site!("ue.auth.param_kind"), param_len, 8, 16);
        if t.check(site!("ue.auth.param_long"), param_len > 64) {
            bad += 1;
        }
        if self.give_up(bad, site!("ue.auth")) {
            return Reaction::Reject;
        }
        self.ksi = ksi;
        let t = &mut self.tracer;
        t.lookup(site!("ue.tx.auth_response"), status, &[0, 1, 2]);
        if status == 0 {
            self.state = State::WaitSmc;
        }
        let param_band = [1, 4, 16, 17, 65, 128]
            .iter()
            .filter(|&&b| param_len >= b)
            .count() as u64;
        Reaction::Send(Outgoing::encode(
            "AuthResponse",
            &[
                ("res_status", status),
                ("ksi_echo", ksi & 3),
                ("res", if status == 0 { expected_res(rand) } else { 0 }),
                ("auts", if status == 2 { resync_token(sqn) } else { 0 }),
                ("res_len", 4),
                ("auth_report", rand_r as u64 | (sqn_r as u64) << 2 | param_band << 5),
                ("sec_cap_echo", UE_SECURITY_CAPS),
                ("diag_report", rand_bin | amf_bin << 4 | param_bin << 7 | ksi_r << 11 | (dit as u64) << 13),
                ("diag_flags", amf & 0xFF),
            ],
        ))
    }

    fn on_smc(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("ue.smc"));
        let mut bad = 0;
        let mut status = 0;
        let tid = m.get("transaction_id");
        t.split(site!("ue.smc.tid"), tid, &[1, 2, 3]);
        if t.check(site!("ue.smc.crit"), m.get("crit_ext") != 0) {
            bad += 1;
        }
        let cipher = m.get("ciphering_algorithm");
        let integrity = m.get("integrity_prot_algorithm");
        t.lookup(site!("ue.smc.cipher"), cipher, &[0, 1, 2, 3]);
        t.hit(arm(site!("ue.smc.algorithms"), cipher << 3 | integrity));
        if cipher >= 6 && integrity >= 6 {
            return Reaction::Crash("ue.smc_algorithm_oob");
        }
        if t.check(site!("ue.smc.cipher_unsupported"), cipher > 3) {
            bad += 1;
        }
        if t.check(site!("ue.smc.integrity_unsupported"), integrity == 0 || integrity > 3) {
            bad += 1;
        }
        let ext = m.get("security_ext");
        t.hit(arm(site!("ue.smc.ext"), ext << 4 | tid));
        let replayed = m.get("replayed_ue_cap");
        let replayed_bin = t.bin(site!("ue.smc.replayed_bin"), replayed, 16, 16);
        if !t.check(site!("ue.smc.bidding_down"), replayed == UE_SECURITY_CAPS) {
            status = 1;
        }
        let imeisv_request = m.get("imeisv_request");
        if t.lookup(site!("ue.smc.imeisv_request"), imeisv_request, &[0, 1]).is_none() {
            bad += 1;
        }
        let toi = m.get("emm_toi");
        if toi == 15 {
            return Reaction::Crash("ue.emm_toi_overflow");
        }
        let toi_r = t.split(site!("ue.smc.toi"), toi, &[1, 2, 4, 8, 12]);
        let count = m.get("nas_count");
        t.split(site!("ue.smc.count"), count, &[1, 16, 128]);
        let count_bin = t.bin(site!("ue.smc.count_bin"), count, 8, 8);
        if !t.check(site!("ue.smc.ksi"), m.get("nas_ksi") == self.ksi) {
            bad += 1;
        }
        let flags = m.get("smc_flags");
        t.flags(site!("ue.smc.flags"), flags, 5);
        if !t.check(site!("ue.smc.mac"), m.get("mac_i") == nas_mac(6, count)) {
            status = 1;
        }
        if self.give_up(bad, site!("ue.smc")) {
            return Reaction::Reject;
        }
        self.tracer.lookup(site!("ue.tx.smc_complete"), status, &[0, 1]);
        if status == 0 {
            self.state = State::WaitAccept;
        }
        Reaction::Send(Outgoing::encode(
            "SecModeComplete",
            &[
                ("transaction_id", tid),
                ("smc_status", status),
                ("imeisv", if imeisv_request == 1 { UE_IMEISV } else { 0 }),
                ("sec_report#0", cipher << 3 | integrity | ext << 6),
                ("sec_report#1", flags | (toi_r as u64) << 5),
                ("mac_i", nas_mac(7, 0)),
                ("diag_report", replayed_bin | count_bin << 4 | tid << 7 | imeisv_request << 9),
                ("diag_flags", flags | ext << 5),
            ],
        ))
    }

    fn on_accept(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("ue.accept"));
        let mut bad = 0;
        let sms_only = t.check(site!("ue.accept.sms_only"), m.get("sms_only") == 1);
        t.hit(arm(site!("ue.accept.mode"), (sms_only as u64) << 3 | m.get("eps_attach_result")));
        let result = m.get("eps_attach_result");
        if t.lookup(site!("ue.accept.result"), result, &[1, 2]).is_none() {
            bad += 1;
        }
        let unit = m.get("t3412_unit");
        let value_r = t.split(site!("ue.accept.t3412_value"), m.get("t3412_value"), &[1, 8, 16, 31]);
        t.hit(arm(site!("ue.accept.t3412"), unit << 3 | value_r as u64));
        let tai = m.get("tai_list_len");
        t.repeat(site!("ue.accept.tai"), tai);
        let guti = m.get("guti_m_tmsi");
        if t.check(site!("ue.accept.tai_long"), tai >= 16) {
            if guti >> 24 == 0xFF {
                return Reaction::Crash("ue.guti_tai_overflow");
            }
            bad += 1;
        }
        if t.check(site!("ue.accept.tai_empty"), tai == 0) {
            bad += 1;
        }
        if !t.check(site!("ue.accept.mmec"), m.get("guti_mmec") == MME_CODE) {
            bad += 1;
        }
        let esm = m.get("esm_container_len");
        let esm_r = t.split(site!("ue.accept.esm"), esm, &[1, 18, 19, 65, 256, 4096]);
        let esm_bin = t.bin(site!("ue.accept.esm_bin"), esm, 16, 32);
        let emm_cause = m.get("emm_cause");
        let cause_bin = t.bin(site!("ue.accept.cause_bin"), emm_cause, 8, 16);
        let cause = t.lookup(
            site!("ue.accept.cause"),
            emm_cause,
            &[0, 2, 16, 17, 18, 22, 25, 35, 40, 42],
        );
        let features = m.get("eps_network_feature");
        t.flags(site!("ue.accept.features"), features, 8);
        if !t.check(site!("ue.accept.mac"), m.get("mac_i") == nas_mac(8, 0)) {
            return Reaction::Ignore;
        }
        if self.give_up(bad, site!("ue.accept")) {
            return Reaction::Reject;
        }
        self.tracer.hit(site!("ue.tx.attach_complete"));
        self.state = State::Attached;
        let cause_code = cause.map_or(0xF, |c| c as u64);
        Reaction::Send(Outgoing::encode(
            "AttachComplete",
            &[
                ("eps_bearer_id", 5),
                ("pti", features),
                ("accept_report", value_r as u64 | (esm_r as u64) << 3 | (result & 1) << 6 | ((cause_code == 0) as u64) << 7),
                ("guti_ack", guti),
                ("mac_i", nas_mac(9, 0)),
                ("diag_report", cause_bin | esm_bin << 4 | unit << 9 | (sms_only as u64) << 12 | result << 13),
                ("diag_flags", tai),
            ],
        ))
    }
}
