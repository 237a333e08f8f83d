//! Derivative-free maximizers used by the region sweeps.
//!
//! The feasibility sets are non-convex and piecewise-defined, so boundary
//! points are located by coarse grid search followed by local refinement:
//! Nelder-Mead over the transmit-probability box, golden-section for
//! single-coordinate line searches.

/// Nelder-Mead maximization of `f` over the box [lo, hi]^d, starting from
/// `x0` with initial simplex step `step`. Terminates when the simplex
/// diameter drops below `tol` or after `max_iter` iterations.
pub(crate) fn nelder_mead_max(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for v in x.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        clamp(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    for _ in 0..max_iter {
        // sort descending by value (maximization)
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
        let reorder: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let revals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = reorder;
        values = revals;

        let diameter = simplex[1..]
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; d];
        for x in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let worst_val = values[d];

        let mk = |coef: f64| {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            for v in x.iter_mut() {
                *v = v.clamp(lo, hi);
            }
            x
        };

        let reflected = mk(1.0);
        let fr = f(&reflected);
        if fr > values[0] {
            let expanded = mk(2.0);
            let fe = f(&expanded);
            if fe > fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr > values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        let contracted = if fr > worst_val { mk(0.5) } else { mk(-0.5) };
        let fc = f(&contracted);
        if fc > worst_val.max(fr) {
            simplex[d] = contracted;
            values[d] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=d {
            for (v, b) in simplex[i].iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            values[i] = f(&simplex[i]);
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if values[i] > values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

/// Golden-section search maximizing a 1-D function on [lo, hi].
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
