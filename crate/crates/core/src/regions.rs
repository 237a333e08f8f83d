//! Stability and throughput region computations.
//!
//! For two sources the stability condition is exact (union of two
//! half-plane pairs per fixed policy); for N sources the region is bracketed
//! by a sufficient bound and a necessary bound built on the stability rank
//! ordering lambda_n (1-p_n) / (alpha_n p_n). Boundary points are found by
//! fixing all arrival rates but one and maximizing the free rate over the
//! transmit-probability box.

use crate::channel::{Channel, CollisionChannelNxM, TransmitPolicy};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::optim::{golden_max, nelder_mead_max};
use crate::rates::{self, ServiceRates};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

pub const P_MAX: f64 = 1.0 - 1e-9;
pub const P_MIN: f64 = 1e-9;

/// Which region a point or boundary belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    StabilityExact,
    StabilityLower,
    StabilityUpper,
    Throughput,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::StabilityExact => "stability-exact",
            RegionKind::StabilityLower => "stability-lower",
            RegionKind::StabilityUpper => "stability-upper",
            RegionKind::Throughput => "throughput",
        }
    }
}

/// Objective for the N-source lambda_N optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundObjective {
    StabilityLower,
    StabilityUpper,
    Throughput,
}

impl BoundObjective {
    pub fn kind(&self) -> RegionKind {
        match self {
            BoundObjective::StabilityLower => RegionKind::StabilityLower,
            BoundObjective::StabilityUpper => RegionKind::StabilityUpper,
            BoundObjective::Throughput => RegionKind::Throughput,
        }
    }
}

/// Two-source boundary flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary2Kind {
    StabilityExact,
    Throughput,
}

/// Solver knobs for the boundary sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Grid points per axis; `None` picks 64 for two sources, 24 for up to
    /// five, coordinate descent beyond that.
    pub grid_points: Option<usize>,
    /// Nelder-Mead termination: simplex diameter.
    pub nm_tol: f64,
    pub nm_max_iter: usize,
    /// Bisection tolerance for locating the largest feasible lambda_N.
    pub bisect_tol: f64,
    /// How many grid candidates seed local refinement.
    pub multistart: usize,
    /// Use min over l <= k (instead of l <= k-1) in the C_k term of the
    /// sufficient bound.
    pub ck_min_includes_k: bool,
    pub mode: Mode,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grid_points: None,
            nm_tol: 1e-6,
            nm_max_iter: 600,
            bisect_tol: 1e-7,
            multistart: 3,
            ck_min_includes_k: false,
            mode: Mode::Parallel,
        }
    }
}

/// One boundary point: the arrival-rate vector and the policy achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub lambda: Vec<f64>,
    pub p_opt: Vec<f64>,
    pub kind: RegionKind,
    /// False when no policy supports the fixed rates even at zero free rate.
    pub feasible: bool,
}

/// A sampled region boundary, sorted by the swept coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBoundary {
    pub kind: RegionKind,
    pub points: Vec<RegionPoint>,
    pub grid_points_per_axis: usize,
    /// Policies skipped in the stability-exact sweep because the
    /// mu_b <= mu_e hypothesis failed there.
    pub excluded_hypothesis: usize,
}

/// Sources sorted ascending by the stability-rank ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSources {
    pub order: Vec<usize>,
    pub ratios: Vec<f64>,
}

/// Exact two-source stability condition for a fixed policy: the arrival
/// rates must lie in the union of two convex-combination regions.
pub fn stability_condition_2src(mu: &ServiceRates, lambda: &[f64; 2]) -> Result<bool> {
    for n in 0..2 {
        if mu.mu_b[n] > mu.mu_e[n] + 1e-12 {
            return Err(Error::HypothesisViolation(format!(
                "mu_b[{n}] = {} exceeds mu_e[{n}] = {}",
                mu.mu_b[n], mu.mu_e[n]
            )));
        }
        if mu.mu_b[n] <= 0.0 {
            return Err(Error::HypothesisViolation(format!(
                "mu_b[{n}] must be positive"
            )));
        }
    }
    let (l1, l2) = (lambda[0], lambda[1]);
    let region_a = l2 < mu.mu_b[1]
        && l1 < (l2 / mu.mu_b[1]) * mu.mu_b[0] + (1.0 - l2 / mu.mu_b[1]) * mu.mu_e[0];
    let region_b = l1 < mu.mu_b[0]
        && l2 < (l1 / mu.mu_b[0]) * mu.mu_b[1] + (1.0 - l1 / mu.mu_b[0]) * mu.mu_e[1];
    Ok(region_a || region_b)
}

/// Fully-backlogged condition: every arrival rate strictly below its
/// backlogged service rate.
pub fn throughput_condition(mu_b: &[f64], lambda: &[f64]) -> bool {
    lambda.iter().zip(mu_b).all(|(&l, &m)| l < m)
}

/// Orders sources ascending by lambda_n (1-p_n) / (alpha_n p_n), stable
/// tie-break by original index.
pub fn rank_sources(lambda: &[f64], p: &[f64], alpha: &[f64]) -> Result<RankedSources> {
    let n = lambda.len();
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let ratio = if lambda[i] == 0.0 {
            0.0
        } else if p[i] == 0.0 {
            return Err(Error::UndefinedRatio { index: i });
        } else {
            lambda[i] * (1.0 - p[i]) / (alpha[i] * p[i])
        };
        keyed.push((ratio, i));
    }
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(RankedSources {
        order: keyed.iter().map(|&(_, i)| i).collect(),
        ratios: keyed.iter().map(|&(r, _)| r).collect(),
    })
}

/// Sufficient-condition kernel over rank-ordered inputs. Returns the bound
/// chain B and whether lambda_k < B_k held for all k.
///
/// `min_incl_k` selects the alternate alpha-minimum range in the C_k term.
fn sufficient_ranked(
    lambda: &[f64],
    p: &[f64],
    alpha: &[f64],
    bounds: &mut Vec<f64>,
    min_incl_k: bool,
) -> bool {
    let n = lambda.len();
    bounds.clear();
    // suffix products of (1 - p_j)
    let mut sfx = vec![1.0; n + 1];
    for j in (0..n).rev() {
        sfx[j] = sfx[j + 1] * (1.0 - p[j]);
    }
    let b1 = alpha[0] * p[0] * sfx[1];
    bounds.push(b1);
    if lambda[0] >= b1 {
        return false;
    }
    let mut min_alpha = alpha[0];
    let mut sum_lambda = lambda[0];
    // running sums for the correction terms
    let mut s_lp_over_b = lambda[0] * p[0] / b1;
    let mut s_l_over_a = lambda[0] / alpha[0];
    let mut d_sum = 1.0 + (1.0 - lambda[0] / b1) * p[0] / (1.0 - p[0]);
    for k in 1..n {
        let min_a = if min_incl_k {
            min_alpha.min(alpha[k])
        } else {
            min_alpha
        };
        let lead = alpha[k] * p[k] / (1.0 - p[k]);
        let corr = s_lp_over_b * sfx[k] - s_l_over_a;
        let c_k = lead * (sfx[k] - sum_lambda / min_a - 0.5 * corr);
        let d_k = lead * sfx[0] * d_sum;
        let b_k = c_k.max(d_k);
        bounds.push(b_k);
        if lambda[k] >= b_k {
            return false;
        }
        min_alpha = min_alpha.min(alpha[k]);
        sum_lambda += lambda[k];
        s_lp_over_b += lambda[k] * p[k] / b_k;
        s_l_over_a += lambda[k] / alpha[k];
        d_sum += (1.0 - lambda[k] / b_k) * p[k] / (1.0 - p[k]);
    }
    true
}

/// Necessary-condition kernel over rank-ordered inputs.
fn necessary_ranked(lambda: &[f64], p: &[f64], alpha: &[f64]) -> bool {
    let n = lambda.len();
    let mut sfx = vec![1.0; n + 1];
    for j in (0..n).rev() {
        sfx[j] = sfx[j + 1] * (1.0 - p[j]);
    }
    let mut max_alpha = 0.0f64;
    let mut sum_lambda = 0.0;
    for k in 0..n {
        let sub = if k == 0 { 0.0 } else { sum_lambda / max_alpha };
        let rhs = alpha[k] * p[k] / (1.0 - p[k]) * (sfx[k] - sub);
        if lambda[k] > rhs {
            return false;
        }
        max_alpha = max_alpha.max(alpha[k]);
        sum_lambda += lambda[k];
    }
    true
}

/// Outcome of the sufficient test, with the bound chain in ranked order.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyOutcome {
    pub stable: bool,
    /// B_k in rank order, up to the first failing index.
    pub bounds: Vec<f64>,
    pub order: Vec<usize>,
}

fn ranked_views(
    c: &CollisionChannelNxM,
    lambda: &[f64],
    p: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>)> {
    let n = c.n_sources;
    if lambda.len() != n || p.len() != n {
        return Err(Error::InvalidConfig(format!(
            "expected {n} rates and probabilities"
        )));
    }
    let alphas: Vec<f64> = c
        .q_solo
        .iter()
        .map(|&q| rates::alpha(c.m_destinations, q))
        .collect::<Result<_>>()?;
    let rank = rank_sources(lambda, p, &alphas)?;
    let lr: Vec<f64> = rank.order.iter().map(|&i| lambda[i]).collect();
    let pr: Vec<f64> = rank.order.iter().map(|&i| p[i]).collect();
    let ar: Vec<f64> = rank.order.iter().map(|&i| alphas[i]).collect();
    Ok((lr, pr, ar, rank.order))
}

/// Sufficient stability test (rank ordering applied internally).
/// Requires every p_n in (0,1).
pub fn sufficient_bound(
    c: &CollisionChannelNxM,
    lambda: &[f64],
    p: &[f64],
) -> Result<SufficiencyOutcome> {
    let (lr, pr, ar, order) = ranked_views(c, lambda, p)?;
    if pr.iter().any(|&v| !(0.0 < v && v < 1.0)) {
        return Err(Error::InvalidConfig(
            "sufficient bound requires p_n in (0,1)".into(),
        ));
    }
    let mut bounds = Vec::new();
    let stable = sufficient_ranked(&lr, &pr, &ar, &mut bounds, false);
    Ok(SufficiencyOutcome {
        stable,
        bounds,
        order,
    })
}

/// Necessary stability test (rank ordering applied internally): false means
/// provably unstable at this policy.
pub fn necessary_bound(c: &CollisionChannelNxM, lambda: &[f64], p: &[f64]) -> Result<bool> {
    let (lr, pr, ar, _) = ranked_views(c, lambda, p)?;
    if pr.iter().any(|&v| !(0.0 < v && v < 1.0)) {
        return Err(Error::InvalidConfig(
            "necessary bound requires p_n in (0,1)".into(),
        ));
    }
    Ok(necessary_ranked(&lr, &pr, &ar))
}

// ---------------------------------------------------------------------------
// lambda_N optimization for the N x M collision model
// ---------------------------------------------------------------------------

struct Scratch {
    lambda: Vec<f64>,
    keyed: Vec<(f64, usize)>,
    lr: Vec<f64>,
    pr: Vec<f64>,
    ar: Vec<f64>,
    bounds: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            lambda: vec![0.0; d],
            keyed: Vec::with_capacity(d),
            lr: vec![0.0; d],
            pr: vec![0.0; d],
            ar: vec![0.0; d],
            bounds: Vec::with_capacity(d),
        }
    }
}

/// Optimization problem over the active (nonzero-lambda) sources; the free
/// source is last.
struct LambdaNProblem {
    fixed: Vec<f64>,
    alphas: Vec<f64>,
    objective: BoundObjective,
    bisect_tol: f64,
    variant: bool,
}

impl LambdaNProblem {
    fn d(&self) -> usize {
        self.fixed.len() + 1
    }

    fn feasible(&self, p: &[f64], lambda_n: f64, s: &mut Scratch) -> bool {
        let d = self.d();
        s.lambda[..d - 1].copy_from_slice(&self.fixed);
        s.lambda[d - 1] = lambda_n;
        match self.objective {
            BoundObjective::Throughput => {
                let mut prod_all = 1.0;
                for &v in p {
                    prod_all *= 1.0 - v;
                }
                for i in 0..d {
                    let mu = self.alphas[i] * p[i] * prod_all / (1.0 - p[i]);
                    if s.lambda[i] >= mu {
                        return false;
                    }
                }
                true
            }
            BoundObjective::StabilityLower => {
                // rank re-ordering depends on the candidate lambda_N
                s.keyed.clear();
                for i in 0..d {
                    let ratio = s.lambda[i] * (1.0 - p[i]) / (self.alphas[i] * p[i]);
                    s.keyed.push((ratio, i));
                }
                s.keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                for (slot, &(_, i)) in s.keyed.iter().enumerate() {
                    s.lr[slot] = s.lambda[i];
                    s.pr[slot] = p[i];
                    s.ar[slot] = self.alphas[i];
                }
                sufficient_ranked(
                    &s.lr[..d],
                    &s.pr[..d],
                    &s.ar[..d],
                    &mut s.bounds,
                    self.variant,
                )
            }
            BoundObjective::StabilityUpper => {
                // The free source is assigned the top stability rank: we are
                // locating the load at which it is the binding queue, so only
                // the fixed sources are re-ordered among themselves. This
                // makes feasibility monotone in lambda_N and yields a closed
                // form for the largest feasible value.
                s.keyed.clear();
                for i in 0..d - 1 {
                    let ratio = s.lambda[i] * (1.0 - p[i]) / (self.alphas[i] * p[i]);
                    s.keyed.push((ratio, i));
                }
                s.keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                for (slot, &(_, i)) in s.keyed.iter().enumerate() {
                    s.lr[slot] = s.lambda[i];
                    s.pr[slot] = p[i];
                    s.ar[slot] = self.alphas[i];
                }
                s.lr[d - 1] = lambda_n;
                s.pr[d - 1] = p[d - 1];
                s.ar[d - 1] = self.alphas[d - 1];
                necessary_ranked(&s.lr[..d], &s.pr[..d], &s.ar[..d])
            }
        }
    }

    /// Largest feasible lambda_N at this policy, or None if the point cannot
    /// even support `at_least` (used for pruned grid scans; pass 0 to test
    /// raw feasibility).
    fn max_lambda(&self, p: &[f64], at_least: f64, s: &mut Scratch) -> Option<f64> {
        if let BoundObjective::Throughput = self.objective {
            let d = self.d();
            if !self.feasible(p, 0.0, s) {
                return None;
            }
            let mut prod = 1.0;
            for (i, &v) in p.iter().enumerate() {
                if i != d - 1 {
                    prod *= 1.0 - v;
                }
            }
            let mu_nb = self.alphas[d - 1] * p[d - 1] * prod;
            return if mu_nb > at_least { Some(mu_nb) } else { None };
        }
        if let BoundObjective::StabilityUpper = self.objective {
            // lambda_N appears only in its own (last-rank) inequality
            let d = self.d();
            if !self.feasible(p, 0.0, s) {
                return None;
            }
            let sub = if d == 1 {
                0.0
            } else {
                let max_a = self.alphas[..d - 1].iter().cloned().fold(0.0, f64::max);
                self.fixed.iter().sum::<f64>() / max_a
            };
            let pn = p[d - 1];
            let rhs = self.alphas[d - 1] * pn / (1.0 - pn) * ((1.0 - pn) - sub);
            return if rhs > at_least { Some(rhs) } else { None };
        }
        if !self.feasible(p, at_least, s) {
            return None;
        }
        let (mut lo, mut hi) = (at_least, 1.0);
        while hi - lo > self.bisect_tol {
            let mid = 0.5 * (lo + hi);
            if self.feasible(p, mid, s) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    /// Best achievable min-slack of the fixed sources' inequalities when the
    /// remaining idle factor contributed by the free source is `c = 1 - p_N`,
    /// together with the achieving fixed policy. Positive slack means the
    /// fixed rates are supportable at this c.
    fn fixed_slack_optimum(
        &self,
        c: f64,
        warm: Option<&[f64]>,
        nm_tol: f64,
        nm_max_iter: usize,
    ) -> (f64, Vec<f64>) {
        let k = self.d() - 1;
        let slack_at = |pf: &[f64]| -> f64 {
            let mut keyed: Vec<(f64, usize)> = (0..k)
                .map(|i| {
                    (
                        self.fixed[i] * (1.0 - pf[i]) / (self.alphas[i] * pf[i]),
                        i,
                    )
                })
                .collect();
            keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut sfx = vec![1.0; k + 1];
            for j in (0..k).rev() {
                sfx[j] = sfx[j + 1] * (1.0 - pf[keyed[j].1]);
            }
            let mut min_slack = f64::INFINITY;
            let mut max_alpha = 0.0f64;
            let mut sum_lambda = 0.0;
            for (slot, &(_, i)) in keyed.iter().enumerate() {
                let sub = if slot == 0 { 0.0 } else { sum_lambda / max_alpha };
                let rhs =
                    self.alphas[i] * pf[i] / (1.0 - pf[i]) * (c * sfx[slot] - sub);
                min_slack = min_slack.min(rhs - self.fixed[i]);
                max_alpha = max_alpha.max(self.alphas[i]);
                sum_lambda += self.fixed[i];
            }
            min_slack
        };

        let mut starts: Vec<Vec<f64>> = [0.02, 0.05, 0.1, 0.2, 0.35, 0.5]
            .iter()
            .map(|&s| vec![s; k])
            .collect();
        if let Some(w) = warm {
            starts.push(w.to_vec());
        }
        let mut best = (f64::NEG_INFINITY, vec![0.5; k]);
        for start in starts {
            let (px, v) = nelder_mead_max(&slack_at, &start, 0.05, P_MIN, P_MAX, nm_tol, nm_max_iter);
            if v > best.0 {
                best = (v, px);
            }
        }
        best
    }

    /// Exact stability-upper optimum. The free source's inequality
    /// lambda_N <= alpha_N p_N (1 - sub/(1 - p_N)) involves p_N only, so the
    /// unconstrained peak is closed-form; if the fixed rates are not
    /// supportable at that p_N, the optimum sits on the satisfiability
    /// boundary, located by bisection (supportability is monotone in p_N).
    fn upper_optimum(
        &self,
        nm_tol: f64,
        nm_max_iter: usize,
        bisect_tol: f64,
    ) -> (f64, Vec<f64>, bool) {
        let d = self.d();
        let an = self.alphas[d - 1];
        let max_a = self.alphas[..d - 1].iter().cloned().fold(0.0, f64::max);
        let sub = self.fixed.iter().sum::<f64>() / max_a;
        let lam = |pn: f64| an * pn * (1.0 - sub / (1.0 - pn));

        let assemble = |value: f64, pf: Vec<f64>, pn: f64, feasible: bool| {
            let mut p = pf;
            p.push(pn);
            (value.max(0.0), p, feasible)
        };

        let (s_low, p_low) = self.fixed_slack_optimum(1.0 - P_MIN, None, nm_tol, nm_max_iter);
        if s_low <= 0.0 {
            // the fixed rates alone already fail the necessary test
            return assemble(0.0, p_low, P_MIN, false);
        }
        if sub >= 1.0 {
            // the free source's own inequality caps it at zero for any p_N
            return assemble(0.0, p_low, P_MIN, true);
        }
        let pn_star = (1.0 - sub.sqrt()).clamp(P_MIN, P_MAX);
        let (s_star, p_star) =
            self.fixed_slack_optimum(1.0 - pn_star, Some(&p_low), nm_tol, nm_max_iter);
        if s_star > 0.0 {
            return assemble(lam(pn_star), p_star, pn_star, true);
        }
        let (mut lo, mut hi) = (P_MIN, pn_star);
        let mut p_best = p_low;
        while hi - lo > bisect_tol {
            let mid = 0.5 * (lo + hi);
            let (s_mid, p_mid) =
                self.fixed_slack_optimum(1.0 - mid, Some(&p_best), nm_tol, nm_max_iter);
            if s_mid > 0.0 {
                lo = mid;
                p_best = p_mid;
            } else {
                hi = mid;
            }
        }
        assemble(lam(lo), p_best, lo, true)
    }

    /// Exact throughput optimum. For a given free-source probability the
    /// fixed constraints lambda_i < mu_ib are tight at the optimum, which
    /// pins the idle-probability product G = prod_j (1 - p_j) as the largest
    /// fixed point of G = (1 - p_N) prod_i alpha_i G / (alpha_i G + lambda_i).
    /// The remaining search is one-dimensional in p_N.
    fn throughput_optimum(&self) -> (f64, Vec<f64>, bool) {
        let d = self.d();
        let fixed_point = |pn: f64| -> Option<f64> {
            let mut g = 1.0 - pn;
            for _ in 0..50_000 {
                let mut next = 1.0 - pn;
                for (&l, &a) in self.fixed.iter().zip(&self.alphas) {
                    next *= a * g / (a * g + l);
                }
                let done = (next - g).abs() < 1e-15;
                g = next;
                if done {
                    break;
                }
            }
            if g > 1e-12 {
                Some(g)
            } else {
                None
            }
        };
        let value_at = |pn: f64| -> f64 {
            match fixed_point(pn) {
                Some(g) => self.alphas[d - 1] * pn * g / (1.0 - pn),
                None => f64::NEG_INFINITY,
            }
        };

        const COARSE: usize = 512;
        let mut best_j = 0;
        let mut best_v = f64::NEG_INFINITY;
        for j in 1..COARSE {
            let v = value_at(j as f64 / COARSE as f64);
            if v > best_v {
                best_v = v;
                best_j = j;
            }
        }
        if !best_v.is_finite() {
            // no policy supports even the fixed rates
            return (0.0, vec![0.5; d], false);
        }
        let lo = ((best_j as f64 - 1.0) / COARSE as f64).max(P_MIN);
        let hi = ((best_j as f64 + 1.0) / COARSE as f64).min(P_MAX);
        let (pn, value) = golden_max(&value_at, lo, hi, 1e-12);
        let g = fixed_point(pn).expect("refined point must stay feasible");
        let mut p: Vec<f64> = self
            .fixed
            .iter()
            .zip(&self.alphas)
            .map(|(&l, &a)| {
                let x = l / (a * g);
                x / (1.0 + x)
            })
            .collect();
        p.push(pn);
        (value.max(0.0), p, true)
    }
}

fn decode_grid(mut flat: usize, vals: &[f64], p: &mut [f64]) {
    let g = vals.len();
    for v in p.iter_mut() {
        *v = vals[flat % g];
        flat /= g;
    }
}

/// Maximizes lambda_N over the policy box with the first N-1 arrival rates
/// fixed, under the chosen region condition. Sources with a fixed rate of
/// exactly zero never need to transmit and are assigned p = 0.
pub fn optimize_lambda_n(
    c: &CollisionChannelNxM,
    fixed_lambdas: &[f64],
    objective: BoundObjective,
    settings: &SolverSettings,
) -> Result<RegionPoint> {
    let n = c.n_sources;
    if fixed_lambdas.len() != n - 1 {
        return Err(Error::InvalidConfig(format!(
            "expected {} fixed rates for {n} sources",
            n - 1
        )));
    }
    for (i, &l) in fixed_lambdas.iter().enumerate() {
        if !(0.0..1.0).contains(&l) {
            return Err(Error::InvalidConfig(format!("lambda[{i}] = {l} out of [0,1)")));
        }
    }
    let alphas_all: Vec<f64> = c
        .q_solo
        .iter()
        .map(|&q| rates::alpha(c.m_destinations, q))
        .collect::<Result<_>>()?;

    // sources with zero fixed rate are dropped: silent and trivially stable
    let active: Vec<usize> = (0..n - 1).filter(|&i| fixed_lambdas[i] > 0.0).collect();
    let problem = LambdaNProblem {
        fixed: active.iter().map(|&i| fixed_lambdas[i]).collect(),
        alphas: active
            .iter()
            .map(|&i| alphas_all[i])
            .chain([alphas_all[n - 1]])
            .collect(),
        objective,
        bisect_tol: settings.bisect_tol,
        variant: settings.ck_min_includes_k,
    };
    let d = problem.d();

    let assemble = |p_active: &[f64], value: f64, feasible: bool| {
        let mut p_full = vec![0.0; n];
        for (slot, &i) in active.iter().enumerate() {
            p_full[i] = p_active[slot];
        }
        p_full[n - 1] = p_active[d - 1];
        let mut lambda = fixed_lambdas.to_vec();
        lambda.push(value.max(0.0));
        RegionPoint {
            lambda,
            p_opt: p_full,
            kind: objective.kind(),
            feasible,
        }
    };

    if d == 1 {
        // sole contender: sup of alpha * p over p is alpha at p -> 1
        return Ok(assemble(&[1.0], problem.alphas[0], true));
    }

    if objective == BoundObjective::Throughput {
        let (value, p_active, feasible) = problem.throughput_optimum();
        return Ok(assemble(&p_active, value, feasible));
    }
    if objective == BoundObjective::StabilityUpper {
        let (value, p_active, feasible) =
            problem.upper_optimum(settings.nm_tol, settings.nm_max_iter, settings.bisect_tol);
        return Ok(assemble(&p_active, value, feasible));
    }

    let grid = settings
        .grid_points
        .unwrap_or(if d == 2 { 64 } else { 24 });

    // candidate starting points for local refinement
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();

    if d <= 5 {
        let vals: Vec<f64> = (1..=grid)
            .map(|j| (j as f64 / grid as f64).min(P_MAX))
            .collect();
        let total = grid.pow(d as u32);
        let strip_len = 1 << 16;
        let strips = total.div_ceil(strip_len);
        let bests = exec::map_indexed(settings.mode, strips, |strip| {
            let mut scratch = Scratch::new(d);
            let mut p = vec![0.0; d];
            let mut best = -1.0f64;
            let mut best_p: Option<Vec<f64>> = None;
            let lo = strip * strip_len;
            let hi = (lo + strip_len).min(total);
            for flat in lo..hi {
                decode_grid(flat, &vals, &mut p);
                // pruned scan: only bisect points that beat the strip best
                if let Some(v) = problem.max_lambda(&p, best.max(0.0), &mut scratch) {
                    if v > best {
                        best = v;
                        best_p = Some(p.clone());
                    }
                }
            }
            best_p.map(|bp| (best, bp))
        });
        let mut found: Vec<(f64, Vec<f64>)> = bests.into_iter().flatten().collect();
        found.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        found.truncate(settings.multistart.max(1));
        seeds = found;
    } else {
        // coordinate descent from structured starts
        let mut scratch = Scratch::new(d);
        let f = |p: &[f64], s: &mut Scratch| problem.max_lambda(p, 0.0, s).unwrap_or(-1.0);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for &a in &[0.01, 0.02, 0.05, 0.1, 0.2] {
            for &b in &[0.3, 0.5, 0.7, 0.9, 0.99] {
                let mut p = vec![a; d];
                p[d - 1] = b;
                starts.push(p);
            }
        }
        for mut p in starts {
            let mut cur = f(&p, &mut scratch);
            for _ in 0..60 {
                let before = cur;
                for coord in 0..d {
                    let (x, v) = golden_max(
                        &|x| {
                            let mut trial = p.clone();
                            trial[coord] = x;
                            let mut s = Scratch::new(d);
                            problem.max_lambda(&trial, 0.0, &mut s).unwrap_or(-1.0)
                        },
                        P_MIN,
                        P_MAX,
                        1e-5,
                    );
                    if v > cur {
                        cur = v;
                        p[coord] = x;
                    }
                }
                if cur - before < 1e-9 {
                    break;
                }
            }
            seeds.push((cur, p));
        }
        seeds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        seeds.truncate(settings.multistart.max(1));
    }

    // the sufficient-bound optimum sits near the throughput optimum (the two
    // values coincide to ~1e-6), so seed refinement from there as well
    let (tv, tp, tf) = problem.throughput_optimum();
    if tf {
        let mut scratch = Scratch::new(d);
        let tp_clamped: Vec<f64> = tp.iter().map(|&v| v.clamp(P_MIN, P_MAX)).collect();
        let v = problem
            .max_lambda(&tp_clamped, 0.0, &mut scratch)
            .unwrap_or(-1.0);
        let _ = tv;
        seeds.push((v, tp_clamped));
        seeds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    }

    if seeds.is_empty() || seeds[0].0 < 0.0 {
        return Ok(assemble(&vec![P_MIN; d], 0.0, false));
    }

    let cell = RefCell::new(Scratch::new(d));
    let objective_fn = |p: &[f64]| {
        let mut s = cell.borrow_mut();
        problem.max_lambda(p, 0.0, &mut s).unwrap_or(-1.0)
    };
    let step = 0.5 / grid as f64;
    let mut best_val = -1.0;
    let mut best_p = vec![P_MIN; d];
    for (_, seed) in &seeds {
        let (px, v) = nelder_mead_max(
            &objective_fn,
            seed,
            step,
            P_MIN,
            P_MAX,
            settings.nm_tol,
            settings.nm_max_iter,
        );
        if v > best_val {
            best_val = v;
            best_p = px;
        }
    }
    Ok(assemble(&best_p, best_val, best_val >= 0.0))
}

// ---------------------------------------------------------------------------
// two-source boundaries
// ---------------------------------------------------------------------------

enum Sup2 {
    Feasible(f64),
    Infeasible,
    HypothesisExcluded,
}

fn rates_at_2src(ch: &Channel, p: &[f64; 2]) -> Result<ServiceRates> {
    let policy = TransmitPolicy(p.to_vec());
    match ch {
        Channel::Mpr2x2(c) => rates::service_rates_2x2(c, &policy),
        Channel::Collision(c) => rates::service_rates_collision(c, &policy),
    }
}

/// One optimization branch of the two-source sweep. The stability boundary
/// is the intersection of the two branch envelopes, each maximized over the
/// policy square on its own (the per-policy region is a union, but the
/// region over all policies is bounded by both envelope curves).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch2 {
    /// lambda_1 < mu_1b and lambda_2 < mu_2b.
    Rectangle,
    /// lambda_2 < mu_2b with lambda_1 below the convex combination of
    /// mu_1b and mu_1e; binds through source 1's constraint.
    ConvexFirst,
    /// lambda_1 < mu_1b with lambda_2 below the convex combination of
    /// mu_2b and mu_2e.
    ConvexSecond,
}

fn hypothesis_ok(mu: &ServiceRates) -> bool {
    (0..2).all(|n| mu.mu_b[n] <= mu.mu_e[n] + 1e-12)
}

/// Largest lambda_2 on one branch at a fixed policy.
fn sup_lambda2(branch: Branch2, mu: &ServiceRates, lambda1: f64) -> Sup2 {
    // a source with zero arrivals is trivially stable and never contends
    if lambda1 == 0.0 {
        return Sup2::Feasible(mu.mu_b[1]);
    }
    match branch {
        Branch2::Rectangle => {
            if lambda1 < mu.mu_b[0] {
                Sup2::Feasible(mu.mu_b[1])
            } else {
                Sup2::Infeasible
            }
        }
        Branch2::ConvexFirst => {
            if !hypothesis_ok(mu) {
                return Sup2::HypothesisExcluded;
            }
            if lambda1 < mu.mu_e[0] && mu.mu_b[1] > 0.0 {
                let slack = mu.mu_e[0] - mu.mu_b[0];
                let t = if slack > 1e-15 {
                    ((mu.mu_e[0] - lambda1) / slack).min(1.0)
                } else {
                    1.0
                };
                Sup2::Feasible(mu.mu_b[1] * t)
            } else {
                Sup2::Infeasible
            }
        }
        Branch2::ConvexSecond => {
            if !hypothesis_ok(mu) {
                return Sup2::HypothesisExcluded;
            }
            if lambda1 < mu.mu_b[0] {
                let frac = lambda1 / mu.mu_b[0];
                Sup2::Feasible(frac * mu.mu_b[1] + (1.0 - frac) * mu.mu_e[1])
            } else {
                Sup2::Infeasible
            }
        }
    }
}

/// Sweeps the two-source boundary: for each fixed lambda_1 in the grid,
/// maximizes lambda_2 over the policy square.
pub fn boundary_2src(
    ch: &Channel,
    kind: Boundary2Kind,
    lambda1_grid: &[f64],
    settings: &SolverSettings,
) -> Result<RegionBoundary> {
    let ch = ch.clone().validated()?;
    if ch.n_sources() != 2 {
        return Err(Error::InvalidConfig(
            "two-source boundary needs a two-source channel".into(),
        ));
    }
    let g = settings.grid_points.unwrap_or(64);
    let kind_out = match kind {
        Boundary2Kind::StabilityExact => RegionKind::StabilityExact,
        Boundary2Kind::Throughput => RegionKind::Throughput,
    };

    // The stability region over all policies is the intersection of the two
    // branch envelope curves: each branch is maximized over the policy square
    // on its own and the boundary is the pointwise min of the two envelopes.
    // (Taking the per-policy union first and then maximizing would admit
    // points that no single branch envelope covers.)
    let branches: &[Branch2] = match kind {
        Boundary2Kind::Throughput => &[Branch2::Rectangle],
        Boundary2Kind::StabilityExact => &[Branch2::ConvexFirst, Branch2::ConvexSecond],
    };

    let results = exec::map_indexed(settings.mode, lambda1_grid.len(), |gi| {
        let lambda1 = lambda1_grid[gi];
        let mut excluded = 0usize;
        let mut best_val = f64::INFINITY;
        let mut best_p = vec![0.0, 0.0];
        let mut feasible = true;
        for (bi, &branch) in branches.iter().enumerate() {
            let eval = |p: &[f64]| -> f64 {
                let p2 = [p[0], p[1]];
                match rates_at_2src(&ch, &p2) {
                    Ok(mu) => match sup_lambda2(branch, &mu, lambda1) {
                        Sup2::Feasible(v) => v,
                        _ => -1.0,
                    },
                    Err(_) => -1.0,
                }
            };
            // coarse scan over the closed policy square, tracking the best few
            let mut tops: Vec<(f64, [f64; 2])> = Vec::new();
            for i in 0..g {
                for j in 0..g {
                    let p = [i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64];
                    if branch != Branch2::Rectangle {
                        if let Ok(mu) = rates_at_2src(&ch, &p) {
                            if !hypothesis_ok(&mu) {
                                // count each excluded policy point once
                                if bi == 0 {
                                    excluded += 1;
                                }
                                continue;
                            }
                        }
                    }
                    let v = eval(&p);
                    if v >= 0.0 {
                        tops.push((v, p));
                        tops.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                        tops.truncate(settings.multistart.max(1));
                    }
                }
            }
            // 1-D reduction seeds: mu_2b rises with p_2 while mu_1b falls, so
            // at each p_1 the binding p_2 solves mu_1b = lambda_1; these sit
            // on the sharp feasibility edge the square scan tends to miss
            if lambda1 > 0.0 && branch != Branch2::ConvexFirst {
                let mut edge: Vec<(f64, [f64; 2])> = Vec::new();
                for i in 0..=256 {
                    let p1 = (i as f64 / 256.0).clamp(P_MIN, P_MAX);
                    let mu1_at = |p2: f64| {
                        rates_at_2src(&ch, &[p1, p2])
                            .map(|m| m.mu_b[0])
                            .unwrap_or(-1.0)
                    };
                    let p2cap = if mu1_at(1.0) >= lambda1 {
                        1.0
                    } else if mu1_at(0.0) <= lambda1 {
                        continue;
                    } else {
                        let (mut lo, mut hi) = (0.0, 1.0);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if mu1_at(mid) > lambda1 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        lo
                    };
                    let p = [p1, p2cap];
                    let v = eval(&p);
                    if v >= 0.0 {
                        edge.push((v, p));
                    }
                }
                tops.extend(edge);
                tops.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                tops.truncate(settings.multistart.max(1));
            }
            if tops.is_empty() {
                feasible = false;
                break;
            }
            let mut branch_val = -1.0;
            let mut branch_p = vec![0.0, 0.0];
            for (_, seed) in &tops {
                let (px, v) = nelder_mead_max(
                    &eval,
                    seed,
                    0.5 / g as f64,
                    0.0,
                    1.0,
                    settings.nm_tol,
                    settings.nm_max_iter,
                );
                if v > branch_val {
                    branch_val = v;
                    branch_p = px;
                }
            }
            if branch_val < best_val {
                best_val = branch_val;
                best_p = branch_p;
            }
        }
        if !feasible || !best_val.is_finite() {
            return (
                RegionPoint {
                    lambda: vec![lambda1, 0.0],
                    p_opt: vec![0.0, 0.0],
                    kind: kind_out,
                    feasible: false,
                },
                excluded,
            );
        }
        (
            RegionPoint {
                lambda: vec![lambda1, best_val.max(0.0)],
                p_opt: best_p,
                kind: kind_out,
                feasible: true,
            },
            excluded,
        )
    });

    let mut points = Vec::with_capacity(results.len());
    let mut excluded_hypothesis = 0;
    for (pt, ex) in results {
        excluded_hypothesis += ex;
        points.push(pt);
    }
    points.sort_by(|a, b| a.lambda[0].partial_cmp(&b.lambda[0]).unwrap());
    Ok(RegionBoundary {
        kind: kind_out,
        points,
        grid_points_per_axis: g,
        excluded_hypothesis,
    })
}

/// Largest supportable lambda_1 for a two-source channel (the boundary's
/// horizontal extent): max over the policy square of mu_1b.
pub fn max_lambda1_2src(ch: &Channel, settings: &SolverSettings) -> Result<f64> {
    let ch = ch.clone().validated()?;
    if ch.n_sources() != 2 {
        return Err(Error::InvalidConfig(
            "two-source channel required".into(),
        ));
    }
    let eval = |p: &[f64]| match rates_at_2src(&ch, &[p[0], p[1]]) {
        Ok(mu) => mu.mu_b[0],
        Err(_) => -1.0,
    };
    let g = settings.grid_points.unwrap_or(64);
    let mut best = (-1.0, [0.0, 0.0]);
    for i in 0..g {
        for j in 0..g {
            let p = [i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64];
            let v = eval(&p);
            if v > best.0 {
                best = (v, p);
            }
        }
    }
    let (_, v) = nelder_mead_max(
        &eval,
        &best.1,
        0.5 / g as f64,
        0.0,
        1.0,
        settings.nm_tol,
        settings.nm_max_iter,
    );
    Ok(v.max(best.0))
}

/// Shape of a sampled region, judged from second differences of the
/// boundary curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionShape {
    /// Boundary curve is concave (region convex, straight-line-like edges).
    Convex,
    /// Boundary curve is convex (region bulges inward, ALOHA-like).
    Concave,
    Indeterminate,
}

/// Classifies a boundary from its sampled points (feasible ones only).
pub fn classify_region_shape(boundary: &RegionBoundary, tol: f64) -> RegionShape {
    let ys: Vec<f64> = boundary
        .points
        .iter()
        .filter(|p| p.feasible)
        .map(|p| *p.lambda.last().unwrap())
        .collect();
    if ys.len() < 4 {
        return RegionShape::Indeterminate;
    }
    let mut max_d2 = f64::NEG_INFINITY;
    let mut min_d2 = f64::INFINITY;
    for w in ys.windows(3) {
        let d2 = w[2] - 2.0 * w[1] + w[0];
        max_d2 = max_d2.max(d2);
        min_d2 = min_d2.min(d2);
    }
    if max_d2 <= tol && min_d2 < -tol {
        RegionShape::Convex
    } else if min_d2 >= -tol && max_d2 > tol {
        RegionShape::Concave
    } else {
        RegionShape::Indeterminate
    }
}
