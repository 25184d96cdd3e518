//! The network-side machine (base station plus core network). It checks
//! every element strictly and rejects the attach on the first violation.

use super::protocol::*;
use super::trace::{arm, site, Tracer};
use crate::coverage::EdgeHits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    WaitSetupComplete,
    WaitAuthResponse,
    WaitSmcComplete,
    WaitAttachComplete,
    Done,
}

#[derive(Debug, Clone)]
pub struct Enb {
    state: State,
    tracer: Tracer,
    requests: u32,
    auth_rounds: u32,
    smc_rounds: u32,
    contention: u64,
    assigned_guti: u64,
    /// GUTI the core network hands out. Part of the network's
    /// configuration, so it survives resets.
    guti_base: u64,
}

impl Default for Enb {
    fn default() -> Self {
        Enb {
            state: State::Idle,
            tracer: Tracer::default(),
            requests: 0,
            auth_rounds: 0,
            smc_rounds: 0,
            contention: 0,
            assigned_guti: 0,
            guti_base: DEFAULT_GUTI,
        }
    }
}

impl Enb {
    pub fn reset(&mut self) {
        let guti_base = self.guti_base;
        *self = Enb {
            guti_base,
            ..Enb::default()
        };
    }

    pub fn guti_base(&self) -> u64 {
        self.guti_base
    }

    pub fn set_guti_base(&mut self, guti: u64) {
        self.guti_base = guti & 0xFFFF_FFFF;
    }

    pub fn hits(&self) -> &EdgeHits {
        self.tracer.hits()
    }

    pub fn take_hits(&mut self) -> EdgeHits {
        self.tracer.take()
    }

    pub fn receive(&mut self, frame: &[u8]) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.rx"));
        let Some((channel, payload)) = receive_frame(t, site!("enb.mac"), frame, true) else {
            return Reaction::Reject;
        };
        let Some(msg) = parse(t, site!("enb.parse"), channel, payload) else {
            return Reaction::Reject;
        };
        let reaction = match (self.state, msg.schema.packet_type) {
            (State::Idle | State::WaitSetupComplete, "ConnRequest") => self.on_request(&msg),
            (State::WaitSetupComplete, "ConnSetupComplete") => self.on_setup_complete(&msg),
            (State::WaitAuthResponse, "AuthResponse") => self.on_auth_response(&msg),
            (State::WaitAuthResponse, "AttachComplete") => {
                self.tracer.hit(site!("enb.attach_without_context"));
                Reaction::Crash("enb.early_attach_complete")
            }
            (State::WaitSmcComplete, "SecModeComplete") => self.on_smc_complete(&msg),
            (State::WaitAttachComplete, "AttachComplete") => self.on_attach_complete(&msg),
            (state, _) => {
                let pair = (state as u64) << 4 | msg.type_code();
                self.tracer.hit(arm(site!("enb.unexpected"), pair));
                Reaction::Reject
            }
        };
        if reaction == Reaction::Reject {
            self.tracer.hit(site!("enb.release"));
            self.state = State::Done;
        }
        reaction
    }

    fn on_request(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.request"));
        self.requests += 1;
        if t.check(site!("enb.request.repeat"), self.requests > 1)
            && t.check(site!("enb.request.flood"), self.requests > MAX_CONN_ATTEMPTS)
        {
            return Reaction::Reject;
        }
        if t.lookup(site!("enb.request.cause"), m.get("est_cause"), &[0, 1, 2, 3, 4]).is_none() {
            return Reaction::Reject;
        }
        let tmsi = m.get("m_tmsi");
        let quarters = [0x4000_0000, 0x8000_0000, 0xC000_0000];
        if t.check(site!("enb.request.s_tmsi"), m.get("ue_id_type") == 1) {
            if tmsi == 0xFFFF_FFFF {
                return Reaction::Crash("enb.s_tmsi_reserved");
            }
            if !t.check(site!("enb.request.mmec"), m.get("mmec") == MME_CODE) {
                return Reaction::Reject;
            }
            t.split(site!("enb.request.tmsi"), tmsi, &quarters);
        } else {
            t.split(site!("enb.request.random_id"), tmsi, &quarters);
            t.flags(site!("enb.request.mmec_bits"), m.get("mmec"), 8);
        }
        if t.lookup(site!("enb.request.category"), m.get("ue_category"), &[1, 2, 3, 4, 5, 6, 7, 8]).is_none() {
            return Reaction::Reject;
        }
        let access_class = m.get("access_class");
        if t.lookup(site!("enb.request.ac"), access_class, &(0..10).collect::<Vec<_>>()).is_none() {
            return Reaction::Reject;
        }
        if t.lookup(site!("enb.request.attempt"), m.get("ra_attempt"), &[0, 1, 2]).is_none() {
            return Reaction::Reject;
        }
        t.split(site!("enb.request.preamble"), m.get("ra_preamble_id"), &[16, 32, 48]);

        self.contention = tmsi & 0xFFFF;
        self.state = State::WaitSetupComplete;
        self.tracer.hit(site!("enb.tx.setup"));
        Reaction::Send(Outgoing::encode(
            "ConnSetup",
            &[
                ("transaction_id", 1),
                ("contention_id", self.contention),
                ("max_harq_tx", 4),
                ("periodic_bsr_timer", 5),
                ("dsr_trans_max", 4),
                ("sr_pucch_resource_index", 36),
                ("cqi_report_config", 0x2A),
                ("p_max", 23),
                ("drb_to_add_count", 1),
                ("p0_nominal_pusch", 11),
                ("alpha", 7),
                ("time_alignment_timer", 7),
                ("srb_identity", 1),
                ("antenna_ports", 1),
                ("ul_specific_params", 0x31),
            ],
        ))
    }

    fn on_setup_complete(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.setup_complete"));
        if !t.check(site!("enb.sc.tid"), m.get("transaction_id") == 1) {
            return Reaction::Reject;
        }
        if t.check(site!("enb.sc.crit"), m.get("crit_ext") != 0) {
            return Reaction::Reject;
        }
        if t.lookup(site!("enb.sc.plmn"), m.get("selected_plmn_index"), &[1, 2, 3, 4, 5, 6]).is_none() {
            return Reaction::Reject;
        }
        t.lookup(site!("enb.sc.ksi"), m.get("nas_ksi"), &[0, 1, 2, 3, 4, 5, 6, 7]);
        t.split(site!("enb.sc.mme"), m.get("registered_mme"), &[0x1A00, 0x1A02, 0x8000]);
        if t.lookup(site!("enb.sc.attach_type"), m.get("attach_type"), &[1, 2, 3]).is_none() {
            return Reaction::Reject;
        }
        t.check(site!("enb.sc.tsc"), m.get("tsc") == 1);
        if t.lookup(site!("enb.sc.pdn"), m.get("pdn_type"), &[1, 2, 3]).is_none() {
            return Reaction::Reject;
        }
        let caps = m.get("ue_net_cap");
        t.flags(site!("enb.sc.eea"), caps >> 8, 8);
        t.flags(site!("enb.sc.eia"), caps, 8);
        if !t.check(site!("enb.sc.eia_present"), caps & 0xFF != 0) {
            return Reaction::Reject;
        }

        let r0 = m.get("cfg_report#0");
        t.lookup(site!("enb.sc.harq"), r0 & 7, &[0, 1, 2, 3, 4, 5, 6, 7]);
        let bsr = t.lookup(site!("enb.sc.bsr"), r0 >> 3 & 7, &[0, 1, 2, 3, 4]);
        t.check(site!("enb.sc.bundling"), r0 >> 6 & 1 == 1);
        let r1 = m.get("cfg_report#1");
        t.bin(site!("enb.sc.sr"), r1 & 0x1F, 5, 32);
        t.bin(site!("enb.sc.pmax"), r1 >> 5, 3, 8);
        let r2 = m.get("cfg_report#2");
        t.hit(arm(site!("enb.sc.pusch"), r2 & 0x1F));
        let dsr = t.lookup(site!("enb.sc.dsr"), r2 >> 5, &[0, 1, 2, 3, 4]);
        let r3 = m.get("cfg_report#3");
        let cqi = t.lookup(site!("enb.sc.cqi"), r3 & 0xF, &(0..15).collect::<Vec<_>>());
        t.lookup(site!("enb.sc.tat"), r3 >> 4 & 7, &[0, 1, 2, 3, 4, 5, 6]);
        let reports_valid = [bsr, dsr, cqi].iter().all(Option::is_some) && r0 >> 7 == 0 && r3 >> 7 == 0;
        if !t.check(site!("enb.sc.reports"), reports_valid) {
            return Reaction::Reject;
        }
        let drb = m.get("drb_ack");
        t.repeat(site!("enb.sc.drb"), drb);
        if t.check(site!("enb.sc.drb_limit"), drb > 8) {
            return Reaction::Reject;
        }
        let radio_cap = m.get("ue_radio_cap");
        if radio_cap >= 0xFF0 {
            return Reaction::Crash("enb.radio_cap_overflow");
        }
        t.split(site!("enb.sc.radio_cap"), radio_cap, &[0x100, 0x200, 0x400, 0x800]);
        t.flags(site!("enb.sc.radio_cap_bits"), radio_cap, 8);
        t.flags(site!("enb.sc.cap_flags"), m.get("ue_cap_flags"), 4);

        self.state = State::WaitAuthResponse;
        Reaction::Send(self.auth_request())
    }

    fn auth_request(&mut self) -> Outgoing {
        self.auth_rounds += 1;
        self.tracer.split(site!("enb.tx.auth"), self.auth_rounds as u64, &[2, 3]);
        Outgoing::encode(
            "AuthRequest",
            &[
                ("ksi_asme", 1),
                ("rand", AUTH_RAND),
                ("sqn", SQN_WINDOW.0),
                ("amf", 0x8000),
                ("autn_mac", autn_mac(AUTH_RAND, SQN_WINDOW.0)),
                ("auth_param_len", 16),
            ],
        )
    }

    fn on_auth_response(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.auth_response"));
        let report = m.get("auth_report");
        let rand_r = t.lookup(site!("enb.ar.rand"), report & 3, &[0, 1, 2, 3]);
        let sqn_r = t.lookup(site!("enb.ar.sqn"), report >> 2 & 7, &[0, 1, 2, 3, 4, 5, 6, 7]);
        let param = t.lookup(site!("enb.ar.param"), report >> 5, &[0, 1, 2, 3, 4, 5, 6]);
        let status = m.get("res_status");
        if t.lookup(site!("enb.ar.status"), status, &[0, 1, 2]).is_none() {
            return Reaction::Reject;
        }
        let res_len = m.get("res_len");
        if res_len > 16 {
            return Reaction::Crash("enb.res_length_overread");
        }
        if !t.check(site!("enb.ar.res_len"), res_len == 4) {
            return Reaction::Reject;
        }
        if rand_r.is_none() || sqn_r.is_none() || param.is_none() {
            return Reaction::Reject;
        }
        match status {
            1 => {
                t.hit(site!("enb.ar.mac_failure"));
                return Reaction::Reject;
            }
            2 => {
                let auts = m.get("auts");
                t.split(site!("enb.ar.auts"), auts, &[1, 0x100, 0x8000]);
                if !t.check(site!("enb.ar.resync"), self.auth_rounds < MAX_AUTH_ROUNDS) {
                    return Reaction::Reject;
                }
                return Reaction::Send(self.auth_request());
            }
            _ => {}
        }
        if !t.check(site!("enb.ar.res"), m.get("res") == expected_res(AUTH_RAND)) {
            return Reaction::Reject;
        }
        if !t.check(site!("enb.ar.ksi"), m.get("ksi_echo") == 1) {
            return Reaction::Reject;
        }
        if !t.check(site!("enb.ar.caps"), m.get("sec_cap_echo") == UE_SECURITY_CAPS) {
            return Reaction::Reject;
        }
        let diag = m.get("diag_report");
        t.hit(arm(site!("enb.ar.diag_rand"), diag & 0xF));
        t.hit(arm(site!("enb.ar.diag_amf"), diag >> 4 & 7));
        t.hit(arm(site!("enb.ar.diag_param"), diag >> 7 & 0xF));
        t.hit(arm(site!("enb.ar.diag_ksi"), diag >> 11));
        t.flags(site!("enb.ar.diag_flags"), m.get("diag_flags"), 8);
        self.state = State::WaitSmcComplete;
        Reaction::Send(self.smc())
    }

    fn smc(&mut self) -> Outgoing {
        self.smc_rounds += 1;
        self.tracer.split(site!("enb.tx.smc"), self.smc_rounds as u64, &[2]);
        Outgoing::encode(
            "SecModeCommand",
            &[
                ("transaction_id", 2),
                ("ciphering_algorithm", 2),
                ("integrity_prot_algorithm", 2),
                ("replayed_ue_cap", UE_SECURITY_CAPS),
                ("imeisv_request", 1),
                ("emm_toi", 2),
                ("nas_count", 0),
                ("nas_ksi", 1),
                ("smc_flags", 0x05),
                ("mac_i", nas_mac(6, 0)),
            ],
        )
    }

    fn on_smc_complete(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.smc_complete"));
        if !t.check(site!("enb.smcc.tid"), m.get("transaction_id") == 2) {
            return Reaction::Reject;
        }
        let status = m.get("smc_status");
        match t.lookup(site!("enb.smcc.status"), status, &[0, 1]) {
            None => return Reaction::Reject,
            Some(1) => {
                if t.check(site!("enb.smcc.retry"), self.smc_rounds < MAX_SMC_ROUNDS) {
                    return Reaction::Send(self.smc());
                }
                return Reaction::Reject;
            }
            Some(_) => {}
        }
        let imeisv = m.get("imeisv");
        if imeisv == 0 {
            t.repeat(site!("enb.smcc.imeisv_spin"), HANG_SPIN);
            return Reaction::Hang("enb.imeisv_lookup_hang");
        }
        t.split(site!("enb.smcc.imeisv"), imeisv, &[1 << 24, 1 << 28, 1 << 30, 1 << 31]);
        if !t.check(site!("enb.smcc.count"), m.get("nas_count_ul") == 0) {
            return Reaction::Reject;
        }
        let algorithms = m.get("sec_report#0");
        t.hit(arm(site!("enb.smcc.algorithms"), algorithms & 0x3F));
        t.lookup(site!("enb.smcc.ext"), algorithms >> 6, &[0, 1, 2, 3]);
        let cipher = algorithms >> 3 & 7;
        let integrity = algorithms & 7;
        if !t.check(site!("enb.smcc.alg_policy"), cipher <= 3 && (1..=3).contains(&integrity)) {
            return Reaction::Reject;
        }
        let r1 = m.get("sec_report#1");
        t.flags(site!("enb.smcc.flags"), r1 & 0x1F, 5);
        t.lookup(site!("enb.smcc.toi"), r1 >> 5, &[0, 1, 2, 3, 4, 5]);
        let diag = m.get("diag_report");
        t.hit(arm(site!("enb.smcc.diag_cap"), diag & 0xF));
        t.hit(arm(site!("enb.smcc.diag_count"), diag >> 4 & 7));
        t.hit(arm(site!("enb.smcc.diag_request"), diag >> 7));
        t.flags(site!("enb.smcc.diag_flags"), m.get("diag_flags"), 8);
        if !t.check(site!("enb.smcc.mac"), m.get("mac_i") == nas_mac(7, 0)) {
            return Reaction::Reject;
        }
        self.state = State::WaitAttachComplete;
        self.assigned_guti = self.guti_base;
        self.tracer.hit(site!("enb.tx.accept"));
        Reaction::Send(Outgoing::encode(
            "AttachAccept",
            &[
                ("eps_attach_result", 1),
                ("t3412_unit", 1),
                ("t3412_value", 9),
                ("tai_list_len", 1),
                ("guti_mmec", MME_CODE),
                ("guti_m_tmsi", self.assigned_guti),
                ("esm_container_len", 18),
                ("emm_cause", 0),
                ("eps_network_feature", 0x03),
                ("mac_i", nas_mac(8, 0)),
            ],
        ))
    }

    fn on_attach_complete(&mut self, m: &Message) -> Reaction {
        let t = &mut self.tracer;
        t.hit(site!("enb.attach_complete"));
        t.split(site!("enb.ac.bearer"), m.get("eps_bearer_id"), &[5, 8, 12]);
        if m.get("eps_bearer_id") < 5 {
            return Reaction::Reject;
        }
        t.flags(site!("enb.ac.pti"), m.get("pti"), 8);
        let report = m.get("accept_report");
        let value = t.lookup(site!("enb.ac.t3412"), report & 7, &[0, 1, 2, 3, 4]);
        t.lookup(site!("enb.ac.esm"), report >> 3 & 7, &[0, 1, 2, 3, 4, 5, 6]);
        t.check(site!("enb.ac.combined"), report >> 6 & 1 == 0);
        t.check(site!("enb.ac.cause"), report >> 7 == 1);
        if value.is_none() {
            return Reaction::Reject;
        }
        let diag = m.get("diag_report");
        t.hit(arm(site!("enb.ac.diag_cause"), diag & 0xF));
        t.hit(arm(site!("enb.ac.diag_esm"), diag >> 4 & 0x1F));
        t.hit(arm(site!("enb.ac.diag_t3412"), (diag >> 9 & 7) << 3 | report & 7));
        t.hit(arm(site!("enb.ac.diag_mode"), diag >> 12));
        t.repeat(site!("enb.ac.diag_tai"), m.get("diag_flags"));
        if !t.check(site!("enb.ac.guti"), m.get("guti_ack") == self.assigned_guti) {
            return Reaction::Reject;
        }
        if !t.check(site!("enb.ac.mac"), m.get("mac_i") == nas_mac(9, 0)) {
            return Reaction::Reject;
        }
        self.state = State::Done;
        Reaction::Complete
    }
}
