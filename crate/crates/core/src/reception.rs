//! Receiver-state Markov chains.
//!
//! A source keeps retransmitting its head-of-line packet until every
//! destination has acknowledged it, so the per-packet service process is
//! governed by a Markov chain over "which destinations already hold the
//! packet". Two chain shapes exist: a 3-state chain for the 2x2 MPR channel
//! and an M-state chain (counting destinations reached) for indistinguishable
//! destinations.

use crate::error::{Error, Result};

/// Stationary distribution of the 3-state receiver chain for the 2x2 model.
///
/// State (1,1) is unrepresentable: delivery to both destinations completes
/// the packet and the chain re-enters (0,0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDistribution2x2 {
    pub pi_00: f64,
    pub pi_01: f64,
    pub pi_10: f64,
}

/// Closed-form stationary distribution over receiver states {(0,0),(0,1),(1,0)}
/// given per-attempt success probabilities: `tau` at both destinations,
/// `phi` at destination 1, `sigma` at destination 2.
pub fn stationary_2x2(tau: f64, phi: f64, sigma: f64) -> Result<StationaryDistribution2x2> {
    if phi <= 0.0 || sigma <= 0.0 {
        return Err(Error::DegenerateChain(format!(
            "phi = {phi}, sigma = {sigma}: some destination is unreachable"
        )));
    }
    if tau > phi.min(sigma) + 1e-12 {
        return Err(Error::HypothesisViolation(format!(
            "tau = {tau} exceeds min(phi, sigma) = {}",
            phi.min(sigma)
        )));
    }
    let tau = tau.min(phi.min(sigma));
    let den = (phi + sigma) * (phi + sigma - tau) - phi * sigma;
    if den <= 0.0 {
        return Err(Error::DegenerateChain(format!(
            "non-positive normalizer {den}"
        )));
    }
    Ok(StationaryDistribution2x2 {
        pi_00: phi * sigma / den,
        pi_01: sigma * (sigma - tau) / den,
        pi_10: phi * (phi - tau) / den,
    })
}

/// The M-state receiver chain for indistinguishable destinations,
/// conditioned on collision-free access. States count destinations that
/// already hold the head-of-line packet, 0..M-1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverChainM {
    pub m: usize,
    pub q: f64,
    /// Row-stochastic M x M matrix, row-major.
    pub p_star: Vec<f64>,
}

impl ReceiverChainM {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.p_star[i * self.m + j]
    }
}

/// Solved chain: stationary probabilities plus the completion constant
/// alpha = sum_i pi_i q^(M-i), the probability that a collision-free attempt
/// delivers the packet to all remaining destinations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverChainSolution {
    pub pi: Vec<f64>,
    pub alpha: f64,
}

/// Binomial coefficient in floating point, multiplicative form.
fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Builds the collision-free transition matrix for M destinations with
/// per-destination success probability q.
pub fn build_p_star(m: usize, q: f64) -> Result<ReceiverChainM> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidConfig(format!("q = {q} out of (0,1]")));
    }
    let qb = 1.0 - q;
    let mut p_star = vec![0.0; m * m];
    for i in 0..m {
        // downward transitions go only to state 0: a success at every
        // remaining destination completes the packet
        p_star[i * m] = if i == 0 {
            qb.powi(m as i32) + q.powi(m as i32)
        } else {
            q.powi((m - i) as i32)
        };
        for j in i.max(1)..m {
            p_star[i * m + j] = if i == j {
                qb.powi((m - i) as i32)
            } else {
                binom(m - i, j - i) * q.powi((j - i) as i32) * qb.powi((m - j) as i32)
            };
        }
    }
    Ok(ReceiverChainM { m, q, p_star })
}

/// Solves pi = pi P* by the forward recursion
/// pi_i = (sum_{k=1..i} pi_{i-k} p*_{i-k,i}) / (1 - p*_{i,i}), then
/// normalizes and evaluates alpha.
pub fn solve_chain(chain: &ReceiverChainM) -> Result<ReceiverChainSolution> {
    let m = chain.m;
    let mut pi = vec![0.0; m];
    pi[0] = 1.0;
    for i in 1..m {
        let self_loop = chain.entry(i, i);
        if 1.0 - self_loop <= 0.0 {
            return Err(Error::DegenerateChain(format!(
                "absorbing intermediate state {i}"
            )));
        }
        let mut num = 0.0;
        for k in 1..=i {
            num += pi[i - k] * chain.entry(i - k, i);
        }
        pi[i] = num / (1.0 - self_loop);
    }
    let total: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= total;
    }
    let alpha = pi
        .iter()
        .enumerate()
        .map(|(i, &p)| p * chain.q.powi((m - i) as i32))
        .sum();
    Ok(ReceiverChainSolution { pi, alpha })
}

/// Convenience: alpha for M destinations and success probability q.
pub fn alpha_for(m: usize, q: f64) -> Result<f64> {
    Ok(solve_chain(&build_p_star(m, q)?)?.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    #[test]
    fn stationary_perfect_channel_stays_home() {
        let pi = stationary_2x2(1.0, 1.0, 1.0).unwrap();
        assert_eq!((pi.pi_00, pi.pi_01, pi.pi_10), (1.0, 0.0, 0.0));
    }

    #[test]
    fn stationary_closed_form_values() {
        // phi = 0.8, sigma = 0.6, tau = 0.48; normalizer 1.4*0.92 - 0.48 = 0.808
        let pi = stationary_2x2(0.48, 0.8, 0.6).unwrap();
        assert_close(pi.pi_00, 0.48 / 0.808, 1e-12);
        assert_close(pi.pi_01, 0.6 * 0.12 / 0.808, 1e-12);
        assert_close(pi.pi_10, 0.8 * 0.32 / 0.808, 1e-12);
    }

    #[test]
    fn stationary_symmetric_inputs_give_symmetric_chain() {
        let a = 0.37;
        let pi = stationary_2x2(a * a, a, a).unwrap();
        assert_close(pi.pi_01, pi.pi_10, 1e-15);
    }

    #[test]
    fn stationary_rejects_unreachable_destination() {
        assert!(matches!(
            stationary_2x2(0.0, 0.0, 0.5),
            Err(Error::DegenerateChain(_))
        ));
    }

    /// Empirical state frequencies of the 3-state chain over 1e6 steps.
    #[test]
    fn stationary_matches_chain_simulation() {
        let (tau, phi, sigma) = (0.48, 0.8, 0.6);
        let pi = stationary_2x2(tau, phi, sigma).unwrap();
        let mut state = 0u8; // 0 = (0,0), 1 = (0,1), 2 = (1,0)
        let mut counts = [0u64; 3];
        let mut rng = 0x1234_5678_9abc_def0u64;
        let mut uniform = || {
            // splitmix64
            rng = rng.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = rng;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let steps = 1_000_000;
        for _ in 0..steps {
            counts[state as usize] += 1;
            // one 4-outcome draw per step: both / d1 only / d2 only / neither
            let u = uniform();
            let p_both = tau;
            let p_d1 = phi - tau;
            let p_d2 = sigma - tau;
            state = match state {
                0 => {
                    if u < p_both {
                        0
                    } else if u < p_both + p_d1 {
                        2
                    } else if u < p_both + p_d1 + p_d2 {
                        1
                    } else {
                        0
                    }
                }
                1 => {
                    if u < phi {
                        0
                    } else {
                        1
                    }
                }
                _ => {
                    if u < sigma {
                        0
                    } else {
                        2
                    }
                }
            };
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
        // 3-sigma bands around the analytic values
        for (f, p) in freq.iter().zip([pi.pi_00, pi.pi_01, pi.pi_10]) {
            let se = (p * (1.0 - p) / steps as f64).sqrt();
            assert!((f - p).abs() < 5.0 * se + 1e-3, "freq {f} vs pi {p}");
        }
    }

    #[test]
    fn p_star_single_destination() {
        let chain = build_p_star(1, 0.3).unwrap();
        assert_eq!(chain.p_star, vec![1.0]);
    }

    #[test]
    fn p_star_two_destinations() {
        let chain = build_p_star(2, 0.8).unwrap();
        assert_close(chain.entry(0, 0), 0.68, 1e-12);
        assert_close(chain.entry(0, 1), 0.32, 1e-12);
        assert_close(chain.entry(1, 0), 0.8, 1e-12);
        assert_close(chain.entry(1, 1), 0.2, 1e-12);
    }

    #[test]
    fn p_star_perfect_channel_never_leaves_zero() {
        let chain = build_p_star(3, 1.0).unwrap();
        assert_eq!(chain.entry(0, 0), 1.0);
        assert_eq!(chain.entry(0, 1), 0.0);
        assert_eq!(chain.entry(0, 2), 0.0);
    }

    #[test]
    fn solve_single_destination() {
        let sol = solve_chain(&build_p_star(1, 0.7).unwrap()).unwrap();
        assert_eq!(sol.pi, vec![1.0]);
        assert_eq!(sol.alpha, 0.7);
    }

    #[test]
    fn solve_perfect_channel_unicast_reduction() {
        for m in [1, 2, 7, 30] {
            let sol = solve_chain(&build_p_star(m, 1.0).unwrap()).unwrap();
            assert_eq!(sol.pi[0], 1.0);
            assert_eq!(sol.alpha, 1.0);
        }
    }

    #[test]
    fn solve_two_destinations_anchored() {
        // direct linear solve of pi = pi P* for P* = [[0.68,0.32],[0.8,0.2]]:
        // 0.32 pi0 = 0.8 pi1 => pi = (1, 0.4)/1.4
        let sol = solve_chain(&build_p_star(2, 0.8).unwrap()).unwrap();
        assert_close(sol.pi[0], 1.0 / 1.4, 1e-12);
        assert_close(sol.pi[1], 0.4 / 1.4, 1e-12);
        assert_close(sol.alpha, 0.685714285714, 1e-9);
        // closed form q(2-q)/(3-2q)
        let q: f64 = 0.8;
        assert_close(sol.alpha, q * (2.0 - q) / (3.0 - 2.0 * q), 1e-12);
    }

    #[test]
    fn alpha_monotone_in_q_and_m() {
        let qs: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
        for m in [2usize, 5, 15] {
            let mut prev = 0.0;
            for &q in &qs {
                let a = alpha_for(m, q).unwrap();
                assert!(a > prev, "alpha not increasing in q at m={m}, q={q}");
                prev = a;
            }
        }
        for &q in &qs {
            let mut prev = 2.0;
            for m in [1usize, 2, 5, 15, 40] {
                let a = alpha_for(m, q).unwrap();
                assert!(a < prev || (q == 1.0), "alpha not decreasing in m at q={q}");
                prev = a;
            }
        }
    }

    /// Independent oracle: power iteration on P*.
    pub fn power_iteration_pi(chain: &ReceiverChainM) -> Vec<f64> {
        let m = chain.m;
        let mut pi = vec![1.0 / m as f64; m];
        let mut next = vec![0.0; m];
        for _ in 0..2_000_000 {
            for v in next.iter_mut() {
                *v = 0.0;
            }
            for i in 0..m {
                let pv = pi[i];
                if pv == 0.0 {
                    continue;
                }
                for j in 0..m {
                    next[j] += pv * chain.entry(i, j);
                }
            }
            let resid: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if resid < 1e-14 {
                break;
            }
        }
        pi
    }

    proptest! {
        #[test]
        fn rows_stochastic_and_recursion_matches_power_iteration(
            m in 1usize..30,
            qi in 1usize..=100,
        ) {
            let q = qi as f64 / 100.0;
            let chain = build_p_star(m, q).unwrap();
            for i in 0..m {
                let row: f64 = (0..m).map(|j| chain.entry(i, j)).sum();
                prop_assert!((row - 1.0).abs() < 1e-10);
                for j in 1..i {
                    prop_assert_eq!(chain.entry(i, j), 0.0);
                }
            }
            let sol = solve_chain(&chain).unwrap();
            let total: f64 = sol.pi.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            // stationarity residual
            for j in 0..m {
                let back: f64 = (0..m).map(|i| sol.pi[i] * chain.entry(i, j)).sum();
                prop_assert!((back - sol.pi[j]).abs() < 1e-10);
            }
            let oracle = power_iteration_pi(&chain);
            for (a, b) in sol.pi.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!(sol.alpha > 0.0 && sol.alpha <= 1.0);
        }
    }
}
