//! Seeded slotted-time Monte Carlo of the full system and its dominant
//! variants.
//!
//! All randomness comes from a counter-based generator keyed by
//! (seed, purpose, source, destination, slot). Coupled runs that share a
//! seed therefore see identical arrival, transmit and channel coins slot by
//! slot, which makes the dominant-system queue ordering testable exactly.

use crate::channel::{ArrivalRates, Channel, TransmitPolicy};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One independent substream of the counter-based generator; `uniform(slot)`
/// is a pure function of (stream, slot).
#[derive(Debug, Clone, Copy)]
pub struct StreamRng {
    base: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Arrival,
    Transmit,
    Channel,
}

impl StreamRng {
    pub fn new(seed: u64, purpose: Purpose, source: usize, dest: usize) -> Self {
        let tag = ((purpose as u64) << 48) | ((source as u64) << 24) | dest as u64;
        StreamRng {
            base: mix(seed ^ mix(tag.wrapping_add(GOLDEN))),
        }
    }

    #[inline]
    pub fn uniform(&self, slot: u64) -> f64 {
        let z = mix(self.base.wrapping_add(slot.wrapping_mul(GOLDEN)));
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Simulation configuration, read from a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub channel: Channel,
    pub lambda: ArrivalRates,
    pub p: TransmitPolicy,
    /// 0 runs the original system; k >= 1 runs the dominant system where
    /// sources k..N (1-based) transmit dummy packets when empty.
    #[serde(default)]
    pub dominant_k: usize,
    pub horizon: u64,
    pub seed: u64,
    /// Slots discarded from statistics; defaults to 10% of the horizon.
    #[serde(default)]
    pub warmup: Option<u64>,
    /// Downsampling stride for the optional queue trace in the result.
    #[serde(default)]
    pub trace_stride: Option<u64>,
}

impl SimConfig {
    pub fn warmup_slots(&self) -> u64 {
        self.warmup.unwrap_or(self.horizon / 10)
    }

    pub fn validated(self) -> Result<Self> {
        let ch = self.channel.clone().validated()?;
        let n = ch.n_sources();
        if ch.m_destinations() > 64 {
            return Err(Error::InvalidConfig(
                "simulator supports at most 64 destinations".into(),
            ));
        }
        let lambda = self.lambda.clone().validated(n)?;
        let p = self.p.clone().validated(n)?;
        if self.dominant_k > n {
            return Err(Error::InvalidConfig(format!(
                "dominant_k {} exceeds source count {n}",
                self.dominant_k
            )));
        }
        if self.horizon <= self.warmup_slots() {
            return Err(Error::InvalidConfig(
                "horizon must exceed warmup".into(),
            ));
        }
        Ok(SimConfig {
            channel: ch,
            lambda,
            p,
            ..self
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validated()
    }
}

/// Per-source stability verdict from a finite trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StableEvidence,
    UnstableEvidence,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::StableEvidence => "stable-evidence",
            Verdict::UnstableEvidence => "unstable-evidence",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Finite-horizon verdict constants (engineering choices, not model claims).
pub const DRIFT_STABLE: f64 = 1e-3;
pub const DRIFT_UNSTABLE: f64 = 1e-2;
pub const QUEUE_CAP_FACTOR: f64 = 10.0;
/// Minimum post-warmup slots for a verdict.
pub const MIN_VERDICT_SLOTS: u64 = 100_000;

/// Downsampled queue-length trace of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueTrace {
    pub stride: u64,
    pub samples: Vec<u64>,
}

/// Least-squares slope of queue length per slot.
pub fn drift_slope(trace: &QueueTrace) -> f64 {
    let n = trace.samples.len();
    if n < 2 {
        return 0.0;
    }
    let xs_mean = (n - 1) as f64 / 2.0;
    let ys_mean = trace.samples.iter().map(|&q| q as f64).sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &q) in trace.samples.iter().enumerate() {
        let dx = i as f64 - xs_mean;
        num += dx * (q as f64 - ys_mean);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den / trace.stride as f64
    }
}

/// Deterministic stability verdict for one queue trace.
pub fn stability_verdict(trace: &QueueTrace, horizon: u64, max_queue: u64) -> Result<Verdict> {
    let covered = trace.samples.len() as u64 * trace.stride;
    if covered < MIN_VERDICT_SLOTS {
        return Err(Error::TraceTooShort {
            got: covered as usize,
            need: MIN_VERDICT_SLOTS as usize,
        });
    }
    let slope = drift_slope(trace);
    if slope > DRIFT_UNSTABLE {
        Ok(Verdict::UnstableEvidence)
    } else if slope < DRIFT_STABLE
        && (max_queue as f64) < QUEUE_CAP_FACTOR * (horizon as f64).sqrt()
    {
        Ok(Verdict::StableEvidence)
    } else {
        Ok(Verdict::Inconclusive)
    }
}

/// Simulation outputs; byte-identical for identical (seed, config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Completions (real or dummy) per slot in which the source held a
    /// head-of-line packet.
    pub empirical_mu: Vec<f64>,
    pub mean_queue: Vec<f64>,
    pub max_queue: Vec<u64>,
    pub drift_slope: Vec<f64>,
    pub verdict: Vec<Verdict>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub completions: Vec<u64>,
    pub measured_slots: u64,
    /// Present when the config requested a trace.
    pub queue_trace: Option<Vec<QueueTrace>>,
}

enum ChannelKind {
    Mpr2x2 {
        q_solo: [[f64; 2]; 2],
        q_joint: [[f64; 2]; 2],
    },
    Collision {
        q: Vec<f64>,
    },
}

/// Steppable slotted simulation; exposed so coupled runs (shared seed,
/// different dominant_k) can be advanced in lockstep.
pub struct SlottedSim {
    kind: ChannelKind,
    n: usize,
    m: usize,
    full_mask: u64,
    p: Vec<f64>,
    lambda: Vec<f64>,
    /// 0-based index of the first dummy-mode source, or n for none.
    dummy_from: usize,
    slot: u64,
    queues: Vec<u64>,
    received: Vec<u64>,
    serving_dummy: Vec<bool>,
    arr_rng: Vec<StreamRng>,
    tx_rng: Vec<StreamRng>,
    ch_rng: Vec<StreamRng>, // n * m, row-major
    tx_buf: Vec<bool>,
}

/// What happened to each source in one slot.
pub struct SlotEvents {
    pub completed: Vec<bool>,
    pub departed: Vec<bool>,
    pub arrived: Vec<bool>,
    pub had_packet: Vec<bool>,
}

impl SlottedSim {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let cfg = cfg.clone().validated()?;
        let n = cfg.channel.n_sources();
        let m = cfg.channel.m_destinations();
        let kind = match &cfg.channel {
            Channel::Mpr2x2(c) => ChannelKind::Mpr2x2 {
                q_solo: c.q_solo,
                q_joint: c.q_joint,
            },
            Channel::Collision(c) => ChannelKind::Collision {
                q: c.q_solo.clone(),
            },
        };
        let seed = cfg.seed;
        Ok(SlottedSim {
            kind,
            n,
            m,
            full_mask: if m == 64 { u64::MAX } else { (1u64 << m) - 1 },
            p: cfg.p.0.clone(),
            lambda: cfg.lambda.0.clone(),
            dummy_from: if cfg.dominant_k == 0 { n } else { cfg.dominant_k - 1 },
            slot: 0,
            queues: vec![0; n],
            received: vec![0; n],
            serving_dummy: vec![false; n],
            arr_rng: (0..n)
                .map(|s| StreamRng::new(seed, Purpose::Arrival, s, 0))
                .collect(),
            tx_rng: (0..n)
                .map(|s| StreamRng::new(seed, Purpose::Transmit, s, 0))
                .collect(),
            ch_rng: (0..n)
                .flat_map(|s| (0..m).map(move |d| (s, d)))
                .map(|(s, d)| StreamRng::new(seed, Purpose::Channel, s, d))
                .collect(),
            tx_buf: vec![false; n],
        })
    }

    pub fn queues(&self) -> &[u64] {
        &self.queues
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Advances one slot: transmissions, channel outcome, departures, then
    /// arrivals (the queue recursion Q' = (Q - B)+ + A).
    pub fn step(&mut self) -> SlotEvents {
        let slot = self.slot;
        let n = self.n;
        let mut events = SlotEvents {
            completed: vec![false; n],
            departed: vec![false; n],
            arrived: vec![false; n],
            had_packet: vec![false; n],
        };

        for src in 0..n {
            let real = self.queues[src] > 0;
            // a real arrival preempts a partially delivered dummy packet
            if real && self.serving_dummy[src] {
                self.received[src] = 0;
                self.serving_dummy[src] = false;
            }
            let dummy = !real && src >= self.dummy_from;
            if dummy && !self.serving_dummy[src] {
                self.serving_dummy[src] = true;
                self.received[src] = 0;
            }
            if !dummy && !real {
                self.serving_dummy[src] = false;
                self.received[src] = 0;
            }
            events.had_packet[src] = real || dummy;
            self.tx_buf[src] =
                (real || dummy) && self.tx_rng[src].uniform(slot) < self.p[src];
        }

        match &self.kind {
            ChannelKind::Mpr2x2 { q_solo, q_joint } => {
                let tx = [self.tx_buf[0], self.tx_buf[1]];
                for src in 0..2 {
                    if !tx[src] {
                        continue;
                    }
                    let q = if tx[1 - src] { &q_joint[src] } else { &q_solo[src] };
                    for dest in 0..2 {
                        if self.received[src] & (1 << dest) == 0
                            && self.ch_rng[src * self.m + dest].uniform(slot) < q[dest]
                        {
                            self.received[src] |= 1 << dest;
                        }
                    }
                }
            }
            ChannelKind::Collision { q } => {
                let transmitters = self.tx_buf.iter().filter(|&&t| t).count();
                if transmitters == 1 {
                    let src = self.tx_buf.iter().position(|&t| t).unwrap();
                    for dest in 0..self.m {
                        if self.received[src] & (1 << dest) == 0
                            && self.ch_rng[src * self.m + dest].uniform(slot) < q[src]
                        {
                            self.received[src] |= 1 << dest;
                        }
                    }
                }
            }
        }

        for src in 0..n {
            if self.tx_buf[src] && self.received[src] == self.full_mask {
                events.completed[src] = true;
                self.received[src] = 0;
                if self.serving_dummy[src] {
                    self.serving_dummy[src] = false;
                } else {
                    events.departed[src] = true;
                    self.queues[src] -= 1;
                }
            }
        }

        for src in 0..n {
            if self.arr_rng[src].uniform(slot) < self.lambda[src] {
                self.queues[src] += 1;
                events.arrived[src] = true;
            }
        }

        self.slot += 1;
        events
    }
}

/// Runs a full simulation and collects post-warmup statistics.
pub fn run(cfg: &SimConfig) -> Result<SimResult> {
    let cfg = cfg.clone().validated()?;
    let mut sim = SlottedSim::new(&cfg)?;
    let n = cfg.channel.n_sources();
    let warmup = cfg.warmup_slots();
    let window = cfg.horizon - warmup;

    let internal_stride = (window / 65_536).max(1);
    let mut internal: Vec<Vec<u64>> = vec![Vec::new(); n];
    let out_stride = cfg.trace_stride;
    let mut out_trace: Vec<Vec<u64>> = vec![Vec::new(); n];

    let mut completions = vec![0u64; n];
    let mut busy_slots = vec![0u64; n];
    let mut arrivals = vec![0u64; n];
    let mut departures = vec![0u64; n];
    let mut q_sum = vec![0f64; n];
    let mut q_max = vec![0u64; n];

    for slot in 0..cfg.horizon {
        let measured = slot >= warmup;
        if measured {
            let k = slot - warmup;
            for src in 0..n {
                let q = sim.queues[src];
                q_sum[src] += q as f64;
                q_max[src] = q_max[src].max(q);
                if k % internal_stride == 0 {
                    internal[src].push(q);
                }
                if let Some(s) = out_stride {
                    if k % s == 0 {
                        out_trace[src].push(q);
                    }
                }
            }
        }
        let ev = sim.step();
        if measured {
            for src in 0..n {
                completions[src] += ev.completed[src] as u64;
                busy_slots[src] += ev.had_packet[src] as u64;
                arrivals[src] += ev.arrived[src] as u64;
                departures[src] += ev.departed[src] as u64;
            }
        }
    }

    let mut empirical_mu = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    let mut verdicts = Vec::with_capacity(n);
    for src in 0..n {
        empirical_mu.push(if busy_slots[src] > 0 {
            completions[src] as f64 / busy_slots[src] as f64
        } else {
            0.0
        });
        let trace = QueueTrace {
            stride: internal_stride,
            samples: internal[src].clone(),
        };
        slopes.push(drift_slope(&trace));
        verdicts.push(
            stability_verdict(&trace, cfg.horizon, q_max[src])
                .unwrap_or(Verdict::Inconclusive),
        );
    }

    Ok(SimResult {
        empirical_mu,
        mean_queue: q_sum.iter().map(|s| s / window as f64).collect(),
        max_queue: q_max,
        drift_slope: slopes,
        verdict: verdicts,
        arrivals,
        departures,
        completions,
        measured_slots: window,
        queue_trace: out_stride.map(|s| {
            out_trace
                .into_iter()
                .map(|samples| QueueTrace { stride: s, samples })
                .collect()
        }),
    })
}

/// Per-source service rate with a batch-means standard error, in a dominant
/// system where every source always contends.
pub fn estimate_service_rate(cfg: &SimConfig) -> Result<Vec<(f64, f64)>> {
    let cfg = cfg.clone().validated()?;
    if cfg.dominant_k != 1 {
        return Err(Error::InvalidConfig(
            "service-rate estimation requires dominant_k = 1".into(),
        ));
    }
    const BATCHES: u64 = 32;
    let mut sim = SlottedSim::new(&cfg)?;
    let n = cfg.channel.n_sources();
    let warmup = cfg.warmup_slots();
    let window = cfg.horizon - warmup;
    let batch_len = (window / BATCHES).max(1);

    let mut batch_counts = vec![[0u64; 32]; n];
    for slot in 0..cfg.horizon {
        let ev = sim.step();
        if slot >= warmup {
            let b = (((slot - warmup) / batch_len) as usize).min(31);
            for src in 0..n {
                batch_counts[src][b] += ev.completed[src] as u64;
            }
        }
    }

    let mut out = Vec::with_capacity(n);
    for counts in &batch_counts {
        let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / batch_len as f64).collect();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (rates.len() - 1) as f64;
        out.push((mean, (var / rates.len() as f64).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelModel2x2, CollisionChannelNxM};

    fn collision_cfg(
        n: usize,
        m: usize,
        q: f64,
        lambda: Vec<f64>,
        p: Vec<f64>,
        dominant_k: usize,
        horizon: u64,
        seed: u64,
    ) -> SimConfig {
        SimConfig {
            channel: Channel::Collision(CollisionChannelNxM::new(n, m, vec![q; n]).unwrap()),
            lambda: ArrivalRates(lambda),
            p: TransmitPolicy(p),
            dominant_k,
            horizon,
            seed,
            warmup: None,
            trace_stride: None,
        }
    }

    #[test]
    fn zero_arrivals_stay_empty() {
        let cfg = collision_cfg(2, 1, 1.0, vec![0.0, 0.0], vec![0.5, 0.5], 0, 10_000, 7);
        let r = run(&cfg).unwrap();
        assert_eq!(r.max_queue, vec![0, 0]);
        assert_eq!(r.verdict, vec![Verdict::Inconclusive; 2]); // trace too short
        let cfg = collision_cfg(2, 1, 1.0, vec![0.0, 0.0], vec![0.5, 0.5], 0, 200_000, 7);
        let r = run(&cfg).unwrap();
        assert_eq!(r.verdict, vec![Verdict::StableEvidence; 2]);
    }

    #[test]
    fn deterministic_for_identical_seed_and_config() {
        let cfg = collision_cfg(3, 2, 0.8, vec![0.05, 0.05, 0.05], vec![0.3; 3], 0, 50_000, 42);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(run(&other).unwrap(), a);
    }

    #[test]
    fn conservation_of_packets() {
        let cfg = collision_cfg(2, 2, 0.8, vec![0.1, 0.12], vec![0.4, 0.4], 0, 100_000, 9);
        let mut sim = SlottedSim::new(&cfg).unwrap();
        let mut arrived = vec![0u64; 2];
        let mut departed = vec![0u64; 2];
        for _ in 0..cfg.horizon {
            let ev = sim.step();
            for s in 0..2 {
                arrived[s] += ev.arrived[s] as u64;
                departed[s] += ev.departed[s] as u64;
            }
        }
        for s in 0..2 {
            assert_eq!(arrived[s] - departed[s], sim.queues()[s]);
        }
    }

    #[test]
    fn dummy_mode_matches_aloha_rate() {
        // N=2, M=1, q=1, p=(0.5,0.5): mu = p(1-p) = 0.25
        let cfg = collision_cfg(2, 1, 1.0, vec![0.0, 0.0], vec![0.5, 0.5], 1, 1_000_000, 11);
        let rates = estimate_service_rate(&cfg).unwrap();
        for (rate, se) in rates {
            assert!(
                (rate - 0.25).abs() < 3.0 * se.max(4e-4),
                "rate {rate} se {se}"
            );
        }
    }

    #[test]
    fn empty_competitor_mpr_rate() {
        // perfect channel, p = (0.7, 0): service rate of source 1 is 0.7
        let cfg = SimConfig {
            channel: Channel::Mpr2x2(
                ChannelModel2x2::new([[1.0; 2]; 2], [[1.0; 2]; 2]).unwrap(),
            ),
            lambda: ArrivalRates(vec![0.0, 0.0]),
            p: TransmitPolicy(vec![0.7, 0.0]),
            dominant_k: 1,
            horizon: 400_000,
            seed: 3,
            warmup: None,
            trace_stride: None,
        };
        let rates = estimate_service_rate(&cfg).unwrap();
        assert!((rates[0].0 - 0.7).abs() < 3.0 * rates[0].1.max(1e-3));
    }

    #[test]
    fn channel_i_anchored_service_rate() {
        // p = (1, 0): analytic mu_1b = 0.546535
        let cfg = SimConfig {
            channel: Channel::Mpr2x2(
                ChannelModel2x2::new([[0.8, 0.6], [0.5, 0.7]], [[0.1, 0.05], [0.05, 0.25]])
                    .unwrap(),
            ),
            lambda: ArrivalRates(vec![0.0, 0.0]),
            p: TransmitPolicy(vec![1.0, 0.0]),
            dominant_k: 1,
            horizon: 1_000_000,
            seed: 5,
            warmup: None,
            trace_stride: None,
        };
        let rates = estimate_service_rate(&cfg).unwrap();
        assert!(
            (rates[0].0 - 0.546535).abs() < 3.0 * rates[0].1,
            "rate {} se {}",
            rates[0].0,
            rates[0].1
        );
    }

    #[test]
    fn collision_beta_alpha_rate() {
        // N=3, M=2, q=0.8, p=0.3 each: mu = 0.3 * 0.49 * alpha(2, 0.8)
        let cfg = collision_cfg(3, 2, 0.8, vec![0.0; 3], vec![0.3; 3], 1, 1_000_000, 17);
        let expect = 0.3 * 0.49 * 0.685714285714;
        let rates = estimate_service_rate(&cfg).unwrap();
        for (rate, se) in rates {
            assert!(
                (rate - expect).abs() < 3.0 * se.max(3e-4),
                "rate {rate} vs {expect}"
            );
        }
    }

    #[test]
    fn dominance_under_common_randomness() {
        let base = collision_cfg(3, 3, 0.7, vec![0.05, 0.08, 0.06], vec![0.35, 0.3, 0.4], 0, 0, 0);
        for seed in 0..3u64 {
            let mut cfg_s = base.clone();
            cfg_s.horizon = 30_000;
            cfg_s.seed = 1000 + seed;
            let mut cfg_d = cfg_s.clone();
            cfg_d.dominant_k = 1;
            let mut s = SlottedSim::new(&cfg_s).unwrap();
            let mut d = SlottedSim::new(&cfg_d).unwrap();
            for slot in 0..cfg_s.horizon {
                s.step();
                d.step();
                for src in 0..3 {
                    assert!(
                        d.queues()[src] >= s.queues()[src],
                        "dominance violated at slot {slot} source {src}"
                    );
                }
            }
        }
    }

    #[test]
    fn unstable_load_detected() {
        // lambda beyond even the empty-competitor rate
        let cfg = collision_cfg(2, 1, 1.0, vec![0.6, 0.0], vec![0.5, 0.5], 0, 300_000, 23);
        let r = run(&cfg).unwrap();
        assert_eq!(r.verdict[0], Verdict::UnstableEvidence);
    }

    #[test]
    fn verdict_requires_long_trace() {
        let trace = QueueTrace {
            stride: 1,
            samples: vec![0; 100],
        };
        assert!(matches!(
            stability_verdict(&trace, 10_000, 0),
            Err(Error::TraceTooShort { .. })
        ));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = collision_cfg(2, 2, 0.8, vec![0.1, 0.1], vec![0.5, 0.5], 1, 1000, 99);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = SimConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
