//! PHY/MAC parameters, scenario description and channel-slot durations.
//!
//! Durations are carried as integer nanoseconds so that the simulators can
//! order events exactly; the `*_secs` accessors are the API surface used by
//! the analytical code.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const NS_PER_SEC: f64 = 1e9;

fn secs_to_ns(secs: f64) -> u64 {
    (secs * NS_PER_SEC).round() as u64
}

fn ns_to_secs(ns: u64) -> f64 {
    ns as f64 / NS_PER_SEC
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyParams {
    /// Backoff slot duration (s).
    pub sigma: f64,
    pub sifs: f64,
    pub difs: f64,
    /// Preamble plus PLCP header airtime, paid once per frame (s).
    pub plcp_overhead: f64,
    pub mac_header_bits: u32,
    pub ack_bits: u32,
    pub rts_bits: u32,
    pub cts_bits: u32,
    /// Control-frame rate (bit/s).
    pub basic_rate: f64,
    /// DATA frame rate (bit/s).
    pub data_rate: f64,
}

impl PhyParams {
    /// 802.11b DSSS with long preamble, 2 Mbps basic rate and 11 Mbps data rate.
    pub fn ieee80211b() -> Self {
        Self {
            sigma: 20e-6,
            sifs: 10e-6,
            difs: 50e-6,
            plcp_overhead: 192e-6,
            mac_header_bits: 28 * 8,
            ack_bits: 14 * 8,
            rts_bits: 20 * 8,
            cts_bits: 14 * 8,
            basic_rate: 2e6,
            data_rate: 11e6,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let durations = [
            ("sigma", self.sigma),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("plcp_overhead", self.plcp_overhead),
        ];
        for (name, value) in durations {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamError::NonPositiveDuration(name));
            }
        }
        if self.difs <= self.sifs {
            return Err(ParamError::DifsNotAboveSifs);
        }
        if !(self.basic_rate > 0.0 && self.data_rate > 0.0) {
            return Err(ParamError::NonPositiveRate);
        }
        Ok(())
    }

    fn control_airtime(&self, bits: u32) -> f64 {
        self.plcp_overhead + f64::from(bits) / self.basic_rate
    }

    fn data_airtime(&self, payload_bits: u32, mac_header_bits: u32) -> f64 {
        self.plcp_overhead + f64::from(payload_bits + mac_header_bits) / self.data_rate
    }
}

impl Default for PhyParams {
    fn default() -> Self {
        Self::ieee80211b()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    pub cw_min: u32,
    pub cw_max: u32,
    /// Maximum number of retransmissions of one packet.
    pub retry_limit: u32,
    pub backoff_multiplier: u32,
}

impl MacParams {
    pub fn ieee80211b() -> Self {
        Self {
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 6,
            backoff_multiplier: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.cw_min < 1 || self.cw_max < self.cw_min {
            return Err(ParamError::ContentionWindow);
        }
        if self.backoff_multiplier < 1 {
            return Err(ParamError::BackoffMultiplier);
        }
        Ok(())
    }

    /// Contention window after `stage` consecutive collisions.
    pub fn window(&self, stage: u32) -> u32 {
        let mut w = u64::from(self.cw_min) + 1;
        let cap = u64::from(self.cw_max) + 1;
        for _ in 0..stage {
            w = (w * u64::from(self.backoff_multiplier)).min(cap);
            if w == cap {
                break;
            }
        }
        (w - 1) as u32
    }

    /// Number of window increases before `cw_max` is reached.
    pub fn doubling_stages(&self) -> u32 {
        let mut stage = 0;
        while self.window(stage) < self.cw_max && stage < 64 {
            stage += 1;
        }
        stage
    }
}

impl Default for MacParams {
    fn default() -> Self {
        Self::ieee80211b()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    Basic,
    RtsCts,
}

/// Per-node buffer capacity in packets, including the one in service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Buffer {
    Finite(usize),
    Infinite,
}

impl Buffer {
    pub fn capacity(self) -> Option<usize> {
        match self {
            Buffer::Finite(k) => Some(k),
            Buffer::Infinite => None,
        }
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Buffer::Finite(k) => write!(f, "{k}"),
            Buffer::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Buffer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Buffer::Finite(k) => serializer.serialize_u64(*k as u64),
            Buffer::Infinite => serializer.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Buffer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Size(u64),
            Word(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Size(k) => Ok(Buffer::Finite(k as usize)),
            Raw::Word(w) if w.eq_ignore_ascii_case("infinite") => Ok(Buffer::Infinite),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "buffer must be a packet count or \"infinite\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub m: usize,
    /// Per-node Poisson arrival rates (packets/s).
    pub lambdas: Vec<f64>,
    pub buffer: Buffer,
    pub payload_bits: u32,
    pub access_mode: AccessMode,
    #[serde(default)]
    pub phy: PhyParams,
    #[serde(default)]
    pub mac: MacParams,
}

impl Scenario {
    /// Homogeneous scenario with 802.11b defaults and 1000-byte payloads.
    pub fn homogeneous(m: usize, lambda: f64, buffer: Buffer) -> Self {
        Self {
            m,
            lambdas: vec![lambda; m],
            buffer,
            payload_bits: 8000,
            access_mode: AccessMode::Basic,
            phy: PhyParams::ieee80211b(),
            mac: MacParams::ieee80211b(),
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    /// The common arrival rate, if all nodes share one.
    pub fn common_rate(&self) -> Option<f64> {
        let first = *self.lambdas.first()?;
        self.lambdas
            .iter()
            .all(|&l| (l - first).abs() <= 1e-12 * first.abs().max(1.0))
            .then_some(first)
    }

    pub fn slot_durations(&self) -> SlotDurations {
        compute_slot_durations(&self.phy, self.payload_bits, self.phy.mac_header_bits, self.access_mode)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("node count must be at least 1")]
    NonPositiveNodes,
    #[error("arrival rate of node {node} is negative or not finite ({rate})")]
    NegativeRate { node: usize, rate: f64 },
    #[error("finite buffer size must be at least 1")]
    ZeroBuffer,
    #[error("expected {expected} arrival rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error("payload size must be positive")]
    ZeroPayload,
    #[error("{0} must be a positive duration")]
    NonPositiveDuration(&'static str),
    #[error("difs must exceed sifs")]
    DifsNotAboveSifs,
    #[error("transmission rates must be positive")]
    NonPositiveRate,
    #[error("contention windows must satisfy cw_max >= cw_min >= 1")]
    ContentionWindow,
    #[error("backoff multiplier must be at least 1")]
    BackoffMultiplier,
    #[error("unequal rates: simulation only")]
    AnalyticalRequiresEqualRates,
    #[error("the analytical solver requires a finite buffer")]
    AnalyticalRequiresFiniteBuffer,
}

/// Non-fatal findings attached to an accepted scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// Arrival rates differ; the queues are not exchangeable and only the
    /// simulators apply.
    UnequalRates,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnequalRates => f.write_str("unequal rates: simulation only"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedScenario {
    pub scenario: Scenario,
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckedScenario {
    pub fn analytical_ready(&self) -> bool {
        self.diagnostics.is_empty()
    }

    /// Common rate and finite buffer needed by the reduced-chain analysis.
    pub fn require_analytical(&self) -> Result<(f64, usize), ParamError> {
        let lambda = self
            .scenario
            .common_rate()
            .ok_or(ParamError::AnalyticalRequiresEqualRates)?;
        let k = self
            .scenario
            .buffer
            .capacity()
            .ok_or(ParamError::AnalyticalRequiresFiniteBuffer)?;
        Ok((lambda, k))
    }
}

pub fn validate_scenario(s: Scenario) -> Result<CheckedScenario, ParamError> {
    if s.m < 1 {
        return Err(ParamError::NonPositiveNodes);
    }
    if s.lambdas.len() != s.m {
        return Err(ParamError::RateCount {
            expected: s.m,
            got: s.lambdas.len(),
        });
    }
    if let Some((node, &rate)) = s
        .lambdas
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r >= 0.0 && r.is_finite()))
    {
        return Err(ParamError::NegativeRate { node, rate });
    }
    if s.buffer == Buffer::Finite(0) {
        return Err(ParamError::ZeroBuffer);
    }
    if s.payload_bits == 0 {
        return Err(ParamError::ZeroPayload);
    }
    s.phy.validate()?;
    s.mac.validate()?;

    let mut diagnostics = Vec::new();
    if s.common_rate().is_none() {
        diagnostics.push(Diagnostic::UnequalRates);
    }
    Ok(CheckedScenario {
        scenario: s,
        diagnostics,
    })
}

/// Channel-slot durations. `l_idle = sigma`, `l_succ = t_s + sigma`,
/// `l_coll = t_c + sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDurations {
    pub sigma_ns: u64,
    pub t_s_ns: u64,
    pub t_c_ns: u64,
}

impl SlotDurations {
    pub fn from_secs(sigma: f64, t_s: f64, t_c: f64) -> Self {
        Self {
            sigma_ns: secs_to_ns(sigma),
            t_s_ns: secs_to_ns(t_s),
            t_c_ns: secs_to_ns(t_c),
        }
    }

    pub fn sigma(&self) -> f64 {
        ns_to_secs(self.sigma_ns)
    }
    pub fn t_s(&self) -> f64 {
        ns_to_secs(self.t_s_ns)
    }
    pub fn t_c(&self) -> f64 {
        ns_to_secs(self.t_c_ns)
    }
    pub fn l_idle(&self) -> f64 {
        self.sigma()
    }
    pub fn l_succ(&self) -> f64 {
        ns_to_secs(self.t_s_ns + self.sigma_ns)
    }
    pub fn l_coll(&self) -> f64 {
        ns_to_secs(self.t_c_ns + self.sigma_ns)
    }
}

/// Success and collision airtimes from frame anatomy.
///
/// Basic access: `T_s = DATA + SIFS + ACK + DIFS`, `T_c = DATA + DIFS`.
/// RTS/CTS: `T_s = RTS + SIFS + CTS + SIFS + DATA + SIFS + ACK + DIFS`,
/// `T_c = RTS + DIFS`. Control frames go at the basic rate.
pub fn compute_slot_durations(
    phy: &PhyParams,
    payload_bits: u32,
    mac_header_bits: u32,
    mode: AccessMode,
) -> SlotDurations {
    let data = phy.data_airtime(payload_bits, mac_header_bits);
    let ack = phy.control_airtime(phy.ack_bits);
    let (t_s, t_c) = match mode {
        AccessMode::Basic => (data + phy.sifs + ack + phy.difs, data + phy.difs),
        AccessMode::RtsCts => {
            let rts = phy.control_airtime(phy.rts_bits);
            let cts = phy.control_airtime(phy.cts_bits);
            (
                rts + phy.sifs + cts + phy.sifs + data + phy.sifs + ack + phy.difs,
                rts + phy.difs,
            )
        }
    };
    SlotDurations::from_secs(phy.sigma, t_s, t_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_slot_is_sigma() {
        let phy = PhyParams::ieee80211b();
        for payload in [8, 800, 8000, 12000] {
            let d = compute_slot_durations(&phy, payload, phy.mac_header_bits, AccessMode::Basic);
            assert_eq!(d.sigma_ns, 20_000);
            assert_eq!(d.l_idle(), phy.sigma);
        }
    }

    #[test]
    fn basic_mode_matches_hand_sum() {
        // DATA: 192 us + (224 + 8000) bits / 11 Mbps = 939.636363.. us
        // ACK:  192 us + 112 bits / 2 Mbps           = 248 us
        let t_data_ns = 192_000.0 + 8224.0 / 11e6 * 1e9;
        let t_ack_ns = 192_000.0 + 56_000.0;
        let t_s_ns = t_data_ns + 10_000.0 + t_ack_ns + 50_000.0;
        let t_c_ns = t_data_ns + 50_000.0;

        let phy = PhyParams::ieee80211b();
        let d = compute_slot_durations(&phy, 8000, 224, AccessMode::Basic);
        assert!((d.t_s_ns as f64 - t_s_ns).abs() <= 1.0, "{} vs {t_s_ns}", d.t_s_ns);
        assert!((d.t_c_ns as f64 - t_c_ns).abs() <= 1.0, "{} vs {t_c_ns}", d.t_c_ns);
        assert!(d.l_succ() >= d.l_coll() && d.l_coll() >= d.l_idle());
    }

    #[test]
    fn rts_collision_shorter_than_basic() {
        let phy = PhyParams::ieee80211b();
        let basic = compute_slot_durations(&phy, 8000, 224, AccessMode::Basic);
        let rts = compute_slot_durations(&phy, 8000, 224, AccessMode::RtsCts);
        let t_rts_ns = 192_000.0 + 160.0 / 2e6 * 1e9;
        assert!((rts.t_c_ns as f64 - (t_rts_ns + 50_000.0)).abs() <= 1.0);
        assert!(rts.t_c_ns < basic.t_c_ns);
        assert!(rts.t_s_ns > basic.t_s_ns);
    }

    #[test]
    fn succ_minus_coll_is_sifs_plus_ack() {
        let phy = PhyParams::ieee80211b();
        let d = compute_slot_durations(&phy, 4000, 224, AccessMode::Basic);
        let diff = d.t_s_ns as i64 - d.t_c_ns as i64;
        assert!((diff - 258_000).abs() <= 1);
    }

    #[test]
    fn validation_errors() {
        let mut s = Scenario::homogeneous(1, 1.0, Buffer::Finite(1));
        s.m = 0;
        s.lambdas.clear();
        assert_eq!(validate_scenario(s).unwrap_err(), ParamError::NonPositiveNodes);

        let mut s = Scenario::homogeneous(2, 1.0, Buffer::Finite(1));
        s.lambdas[1] = -1.0;
        assert!(matches!(
            validate_scenario(s).unwrap_err(),
            ParamError::NegativeRate { node: 1, .. }
        ));

        let s = Scenario::homogeneous(2, 1.0, Buffer::Finite(0));
        assert_eq!(validate_scenario(s).unwrap_err(), ParamError::ZeroBuffer);
    }

    #[test]
    fn unequal_rates_are_flagged() {
        let mut s = Scenario::homogeneous(2, 5.0, Buffer::Infinite);
        s.lambdas = vec![5.0, 10.0];
        let checked = validate_scenario(s).unwrap();
        assert_eq!(checked.diagnostics, vec![Diagnostic::UnequalRates]);
        assert_eq!(checked.diagnostics[0].to_string(), "unequal rates: simulation only");
        assert_eq!(
            checked.require_analytical().unwrap_err(),
            ParamError::AnalyticalRequiresEqualRates
        );
    }

    #[test]
    fn equal_rates_finite_buffer_accepted() {
        let checked = validate_scenario(Scenario::homogeneous(10, 20.0, Buffer::Finite(5))).unwrap();
        assert!(checked.analytical_ready());
        assert_eq!(checked.require_analytical().unwrap(), (20.0, 5));
    }

    #[test]
    fn window_growth_is_capped() {
        let mac = MacParams::ieee80211b();
        assert_eq!(mac.window(0), 31);
        assert_eq!(mac.window(1), 63);
        assert_eq!(mac.window(5), 1023);
        assert_eq!(mac.window(9), 1023);
        assert_eq!(mac.doubling_stages(), 5);
    }

    #[test]
    fn buffer_serde() {
        let b: Buffer = serde_json_like("5");
        assert_eq!(b, Buffer::Finite(5));
        let b: Buffer = serde_json_like("\"infinite\"");
        assert_eq!(b, Buffer::Infinite);
    }

    fn serde_json_like(text: &str) -> Buffer {
        // minimal deserializer via serde's value-free path
        use serde::de::value::{Error, StrDeserializer, U64Deserializer};
        use serde::de::IntoDeserializer;
        if let Ok(n) = text.parse::<u64>() {
            let d: U64Deserializer<Error> = n.into_deserializer();
            Buffer::deserialize(d).unwrap()
        } else {
            let d: StrDeserializer<Error> = text.trim_matches('"').into_deserializer();
            Buffer::deserialize(d).unwrap()
        }
    }
}
