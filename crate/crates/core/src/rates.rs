//! Closed-form service rates for both channel models.
//!
//! For the 2x2 MPR channel the backlogged rate follows from the 3-state
//! receiver chain; for the N x M collision channel the rate factors as
//! mu_n = beta_n * alpha_n, where beta_n is the collision-free access
//! probability and alpha_n the completion constant of the receiver chain.

use crate::channel::{ChannelModel2x2, CollisionChannelNxM, TransmitPolicy};
use crate::error::{Error, Result};
use crate::reception::{self, stationary_2x2};
use std::collections::HashMap;
use std::sync::RwLock;

/// Per-attempt success probabilities for one source of the 2x2 model, with
/// the competing source transmitting with probability `p_other`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessProbs2x2 {
    /// Received at both destinations.
    pub tau: f64,
    /// Received at destination 1.
    pub phi: f64,
    /// Received at destination 2.
    pub sigma: f64,
}

/// Backlogged and empty-competitor service rates per source.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRates {
    pub mu_b: Vec<f64>,
    pub mu_e: Vec<f64>,
}

/// Per-attempt success probabilities for source `n` (zero-based) when the
/// other source transmits with probability `p_other`.
pub fn success_probs_2x2(c: &ChannelModel2x2, p_other: f64, n: usize) -> SuccessProbs2x2 {
    let pb = 1.0 - p_other;
    let solo = c.q_solo[n];
    let joint = c.q_joint[n];
    SuccessProbs2x2 {
        tau: pb * solo[0] * solo[1] + p_other * joint[0] * joint[1],
        phi: pb * solo[0] + p_other * joint[0],
        sigma: pb * solo[1] + p_other * joint[1],
    }
}

fn mu_2x2_from_probs(p_n: f64, s: SuccessProbs2x2) -> Result<f64> {
    if p_n == 0.0 {
        return Ok(0.0);
    }
    if s.phi <= 0.0 || s.sigma <= 0.0 {
        return Err(Error::DegenerateChain(format!(
            "phi = {}, sigma = {}: queue is non-ergodic for any positive load",
            s.phi, s.sigma
        )));
    }
    let den = (s.phi + s.sigma) * (s.phi + s.sigma - s.tau) - s.phi * s.sigma;
    Ok(p_n * s.phi * s.sigma * (s.phi + s.sigma - s.tau) / den)
}

/// Backlogged service rate of source `n` in the 2x2 model: both sources
/// always contend.
pub fn mu_backlogged_2x2(c: &ChannelModel2x2, p: &TransmitPolicy, n: usize) -> Result<f64> {
    let s = success_probs_2x2(c, p.0[1 - n], n);
    mu_2x2_from_probs(p.0[n], s)
}

/// Service rate of source `n` when the competitor is empty: the backlogged
/// rate evaluated at p_other = 0.
pub fn mu_empty_2x2(c: &ChannelModel2x2, p: &TransmitPolicy, n: usize) -> Result<f64> {
    let s = success_probs_2x2(c, 0.0, n);
    mu_2x2_from_probs(p.0[n], s)
}

/// Test oracle path: the backlogged rate as the pi-weighted expectation
/// p_n (tau pi_00 + phi pi_01 + sigma pi_10). Kept independent of the
/// factored closed form above.
pub fn mu_backlogged_2x2_expectation(
    c: &ChannelModel2x2,
    p: &TransmitPolicy,
    n: usize,
) -> Result<f64> {
    let pn = p.0[n];
    if pn == 0.0 {
        return Ok(0.0);
    }
    let s = success_probs_2x2(c, p.0[1 - n], n);
    let pi = stationary_2x2(s.tau, s.phi, s.sigma)?;
    Ok(pn * (s.tau * pi.pi_00 + s.phi * pi.pi_01 + s.sigma * pi.pi_10))
}

/// Probability that source `n` accesses the channel without interference,
/// given the set of backlogged sources.
pub fn beta(p: &TransmitPolicy, n: usize, backlogged_set: &[usize]) -> f64 {
    debug_assert!(backlogged_set.contains(&n));
    let mut acc = p.0[n];
    for &l in backlogged_set {
        if l != n {
            acc *= 1.0 - p.0[l];
        }
    }
    acc
}

// Region sweeps re-evaluate alpha(M, q) millions of times; inserts are
// idempotent so a plain RwLock-ed map suffices.
static ALPHA_CACHE: RwLock<Option<HashMap<(usize, u64), f64>>> = RwLock::new(None);

/// Memoized completion constant alpha for M destinations and per-destination
/// success probability q.
pub fn alpha(m: usize, q: f64) -> Result<f64> {
    let key = (m, q.to_bits());
    if let Some(cache) = ALPHA_CACHE.read().unwrap().as_ref() {
        if let Some(&a) = cache.get(&key) {
            return Ok(a);
        }
    }
    let a = reception::alpha_for(m, q)?;
    ALPHA_CACHE
        .write()
        .unwrap()
        .get_or_insert_with(HashMap::new)
        .insert(key, a);
    Ok(a)
}

/// Service rate mu_n = beta_n * alpha_n in the collision model, for a given
/// backlogged set. With all sources backlogged this is mu_nb; with only `n`
/// backlogged it is mu_ne.
pub fn mu_collision(
    c: &CollisionChannelNxM,
    p: &TransmitPolicy,
    n: usize,
    backlogged_set: &[usize],
) -> Result<f64> {
    let a = alpha(c.m_destinations, c.q_solo[n])?;
    Ok(beta(p, n, backlogged_set) * a)
}

/// All backlogged and empty rates for the collision model.
pub fn service_rates_collision(c: &CollisionChannelNxM, p: &TransmitPolicy) -> Result<ServiceRates> {
    let all: Vec<usize> = (0..c.n_sources).collect();
    let mut mu_b = Vec::with_capacity(c.n_sources);
    let mut mu_e = Vec::with_capacity(c.n_sources);
    for n in 0..c.n_sources {
        mu_b.push(mu_collision(c, p, n, &all)?);
        mu_e.push(mu_collision(c, p, n, &[n])?);
    }
    Ok(ServiceRates { mu_b, mu_e })
}

/// All backlogged and empty rates for the 2x2 MPR model.
pub fn service_rates_2x2(c: &ChannelModel2x2, p: &TransmitPolicy) -> Result<ServiceRates> {
    let mut mu_b = Vec::with_capacity(2);
    let mut mu_e = Vec::with_capacity(2);
    for n in 0..2 {
        mu_b.push(mu_backlogged_2x2(c, p, n)?);
        mu_e.push(mu_empty_2x2(c, p, n)?);
    }
    Ok(ServiceRates { mu_b, mu_e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelModel2x2;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    fn channel_i() -> ChannelModel2x2 {
        ChannelModel2x2::new([[0.8, 0.6], [0.5, 0.7]], [[0.1, 0.05], [0.05, 0.25]]).unwrap()
    }

    fn channel_ii() -> ChannelModel2x2 {
        ChannelModel2x2::new([[0.8, 0.6], [0.6, 0.8]], [[0.5, 0.4], [0.4, 0.5]]).unwrap()
    }

    #[test]
    fn success_probs_at_extremes() {
        let s = success_probs_2x2(&channel_i(), 0.0, 0);
        assert_close(s.tau, 0.48, 1e-15);
        assert_close(s.phi, 0.8, 1e-15);
        assert_close(s.sigma, 0.6, 1e-15);

        let s = success_probs_2x2(&channel_i(), 1.0, 0);
        assert_close(s.tau, 0.005, 1e-15);
        assert_close(s.phi, 0.1, 1e-15);
        assert_close(s.sigma, 0.05, 1e-15);
    }

    #[test]
    fn success_probs_mixed() {
        let s = success_probs_2x2(&channel_ii(), 0.5, 0);
        assert_close(s.tau, 0.34, 1e-12);
        assert_close(s.phi, 0.65, 1e-12);
        assert_close(s.sigma, 0.5, 1e-12);
    }

    /// One-slot Monte Carlo cross-check of the mixed success probabilities.
    #[test]
    fn success_probs_match_one_slot_monte_carlo() {
        let c = channel_ii();
        let p_other = 0.5;
        let mut rng = 0xfeed_f00d_dead_beefu64;
        let mut uniform = || {
            rng = rng.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = rng;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let trials = 1_000_000;
        let (mut both, mut d1, mut d2) = (0u64, 0u64, 0u64);
        for _ in 0..trials {
            let interference = uniform() < p_other;
            let q = if interference { c.q_joint[0] } else { c.q_solo[0] };
            let s1 = uniform() < q[0];
            let s2 = uniform() < q[1];
            both += (s1 && s2) as u64;
            d1 += s1 as u64;
            d2 += s2 as u64;
        }
        let s = success_probs_2x2(&c, p_other, 0);
        let t = trials as f64;
        for (count, expected) in [(both, s.tau), (d1, s.phi), (d2, s.sigma)] {
            let freq = count as f64 / t;
            let se = (expected * (1.0 - expected) / t).sqrt();
            assert!((freq - expected).abs() < 4.0 * se, "{freq} vs {expected}");
        }
    }

    #[test]
    fn mu_backlogged_perfect_mpr() {
        let c = ChannelModel2x2::new([[1.0; 2]; 2], [[1.0; 2]; 2]).unwrap();
        let p = TransmitPolicy(vec![0.35, 0.8]);
        assert_close(mu_backlogged_2x2(&c, &p, 0).unwrap(), 0.35, 1e-12);
    }

    #[test]
    fn mu_backlogged_pure_collision_reduction() {
        let c = ChannelModel2x2::new([[1.0; 2]; 2], [[0.0; 2]; 2]).unwrap();
        let p = TransmitPolicy(vec![0.6, 0.3]);
        assert_close(mu_backlogged_2x2(&c, &p, 0).unwrap(), 0.6 * 0.7, 1e-12);
        assert_close(mu_backlogged_2x2(&c, &p, 1).unwrap(), 0.3 * 0.4, 1e-12);
    }

    #[test]
    fn mu_backlogged_channel_i_anchored() {
        let p = TransmitPolicy(vec![1.0, 0.0]);
        let mu = mu_backlogged_2x2(&channel_i(), &p, 0).unwrap();
        assert_close(mu, 0.48 * 0.92 / 0.808, 1e-12);
        assert_close(mu, 0.546535, 1e-6);
        // empty rate is the same thing here since p2 = 0
        assert_close(mu_empty_2x2(&channel_i(), &p, 0).unwrap(), mu, 1e-15);
    }

    #[test]
    fn mu_zero_without_transmission() {
        let p = TransmitPolicy(vec![0.0, 0.5]);
        assert_eq!(mu_backlogged_2x2(&channel_i(), &p, 0).unwrap(), 0.0);
        assert_eq!(mu_empty_2x2(&channel_i(), &p, 0).unwrap(), 0.0);
    }

    #[test]
    fn mu_empty_perfect_channel() {
        let c = ChannelModel2x2::new([[1.0; 2]; 2], [[0.0; 2]; 2]).unwrap();
        let p = TransmitPolicy(vec![0.3, 0.9]);
        assert_close(mu_empty_2x2(&c, &p, 0).unwrap(), 0.3, 1e-15);
    }

    #[test]
    fn beta_examples() {
        let p = TransmitPolicy(vec![0.5, 0.5, 0.5]);
        assert_close(beta(&p, 0, &[0]), 0.5, 1e-15);
        assert_close(beta(&p, 0, &[0, 1, 2]), 0.125, 1e-15);
        let p = TransmitPolicy(vec![0.2, 0.3, 0.4]);
        assert_close(beta(&p, 2, &[0, 2]), 0.4 * 0.8, 1e-15);
    }

    #[test]
    fn mu_collision_examples() {
        let c = CollisionChannelNxM::new(2, 1, vec![1.0, 1.0]).unwrap();
        let p = TransmitPolicy(vec![0.4, 0.6]);
        assert_close(mu_collision(&c, &p, 0, &[0, 1]).unwrap(), 0.16, 1e-12);

        let c = CollisionChannelNxM::new(2, 2, vec![0.7, 0.7]).unwrap();
        let p = TransmitPolicy(vec![0.5, 0.5]);
        let expect = 0.25 * (0.7 * 1.3 / 1.6);
        assert_close(mu_collision(&c, &p, 0, &[0, 1]).unwrap(), expect, 1e-9);

        let c = CollisionChannelNxM::new(3, 2, vec![0.8, 0.8, 0.8]).unwrap();
        let p = TransmitPolicy(vec![0.5, 1.0, 0.5]);
        assert_eq!(mu_collision(&c, &p, 0, &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn collision_unicast_reduction_exact() {
        let c = CollisionChannelNxM::new(3, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let p = TransmitPolicy(vec![0.3, 0.2, 0.6]);
        let mu = mu_collision(&c, &p, 0, &[0, 1, 2]).unwrap();
        assert_eq!(mu, 0.3 * 0.8 * 0.4);
    }

    proptest! {
        /// Two independent code paths for the 2x2 backlogged rate agree.
        #[test]
        fn factored_form_matches_expectation(
            qs in proptest::array::uniform4(0.01f64..=1.0),
            frac in proptest::array::uniform4(0.0f64..=1.0),
            p1 in 0.0f64..=1.0,
            p2 in 0.0f64..=1.0,
        ) {
            let q_solo = [[qs[0], qs[1]], [qs[2], qs[3]]];
            let q_joint = [
                [qs[0] * frac[0], qs[1] * frac[1]],
                [qs[2] * frac[2], qs[3] * frac[3]],
            ];
            let c = ChannelModel2x2::new(q_solo, q_joint).unwrap();
            let p = TransmitPolicy(vec![p1, p2]);
            for n in 0..2 {
                let a = mu_backlogged_2x2(&c, &p, n);
                let b = mu_backlogged_2x2_expectation(&c, &p, n);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "paths disagree: {other:?}"),
                }
            }
        }

        /// mu_nb <= mu_n <= mu_ne across random backlogged sets.
        #[test]
        fn collision_rate_ordering(
            n in 2usize..6,
            m in 1usize..10,
            seed in any::<u64>(),
        ) {
            let mut s = seed | 1;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64).clamp(0.01, 0.99)
            };
            let q: Vec<f64> = (0..n).map(|_| next()).collect();
            let p = TransmitPolicy((0..n).map(|_| next()).collect());
            let c = CollisionChannelNxM::new(n, m, q).unwrap();
            let all: Vec<usize> = (0..n).collect();
            for src in 0..n {
                let mu_b = mu_collision(&c, &p, src, &all).unwrap();
                let mu_e = mu_collision(&c, &p, src, &[src]).unwrap();
                // a random intermediate backlogged set containing src
                let set: Vec<usize> = (0..n).filter(|&l| l == src || next() > 0.5).collect();
                let mu = mu_collision(&c, &p, src, &set).unwrap();
                prop_assert!(mu_b <= mu + 1e-15);
                prop_assert!(mu <= mu_e + 1e-15);
            }
        }

        /// 2x2 rate ordering under channel validation.
        #[test]
        fn mpr_backlogged_no_more_than_empty(
            qs in proptest::array::uniform4(0.01f64..=1.0),
            frac in proptest::array::uniform4(0.0f64..=1.0),
            p1 in 0.01f64..=1.0,
            p2 in 0.0f64..=1.0,
        ) {
            let q_solo = [[qs[0], qs[1]], [qs[2], qs[3]]];
            let q_joint = [
                [qs[0] * frac[0], qs[1] * frac[1]],
                [qs[2] * frac[2], qs[3] * frac[3]],
            ];
            let c = ChannelModel2x2::new(q_solo, q_joint).unwrap();
            let p = TransmitPolicy(vec![p1, p2]);
            if let (Ok(b), Ok(e)) = (mu_backlogged_2x2(&c, &p, 0), mu_empty_2x2(&c, &p, 0)) {
                prop_assert!(b <= e + 1e-12, "mu_b {b} > mu_e {e}");
                prop_assert!((0.0..=1.0).contains(&b) && e <= 1.0);
            }
        }
    }
}
