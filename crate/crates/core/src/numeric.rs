//! Numerical building blocks shared by the exact routines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::game::Coalition;

/// Correctly rounded floating-point summation (Shewchuk's partials).
///
/// The result depends only on the multiset of terms, never on their order,
/// which keeps exact-mode results reproducible across thread counts and
/// bit-identical for symmetric players.
#[derive(Clone, Debug, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum {
            partials: Vec::new(),
        }
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.partials.push(x);
            return;
        }
        let mut kept = 0;
        for k in 0..self.partials.len() {
            let mut y = self.partials[k];
            if !y.is_finite() {
                self.partials[kept] = y;
                kept += 1;
                continue;
            }
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        if self.partials.iter().any(|p| !p.is_finite()) {
            return self.partials.iter().sum();
        }
        let p = &self.partials;
        let Some(mut k) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[k];
        let mut lo = 0.0;
        while k > 0 {
            k -= 1;
            let x = hi;
            let y = p[k];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction across the remaining partials.
        if k > 0 && ((lo < 0.0 && p[k - 1] < 0.0) || (lo > 0.0 && p[k - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}

/// Correctly rounded sum of `terms`.
pub fn exact_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<ExactSum>().value()
}

/// 17 significant digits in scientific notation; parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `-x log x - (1-x) log(1-x)` with `0 log 0 = 0`.
pub fn bernoulli_entropy(x: f64) -> f64 {
    let plogp = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    -plogp(x) - plogp(1.0 - x)
}

/// Visits every subset `S` of `players` together with its product weight
/// `Π_{j∈S} x_j Π_{j∉S} (1 - x_j)`.
///
/// Players with bit-identical marginals are grouped, groups are visited in
/// ascending marginal order and, inside a group, the `x` factors are applied
/// before the `1 - x` factors. Each weight is therefore a fixed function of
/// how many members of each group are present: permuting players that share
/// a marginal permutes the visited subsets without changing a single bit of
/// any weight. Zero-weight branches are pruned.
pub fn for_each_product_weight<F>(players: &[usize], x: &[f64], mut visit: F)
where
    F: FnMut(Coalition, f64),
{
    let mut order: Vec<usize> = players.to_vec();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for j in order {
        match groups.last_mut() {
            Some((v, members)) if v.to_bits() == x[j].to_bits() => members.push(j),
            _ => groups.push((x[j], vec![j])),
        }
    }
    descend(&groups, 0, Coalition::EMPTY, 1.0, &mut visit);
}

fn descend<F>(groups: &[(f64, Vec<usize>)], g: usize, mask: Coalition, weight: f64, visit: &mut F)
where
    F: FnMut(Coalition, f64),
{
    if g == groups.len() {
        visit(mask, weight);
        return;
    }
    let (v, members) = &groups[g];
    let size = members.len();
    let by_count: Vec<f64> = (0..=size)
        .map(|inside| {
            let mut w = weight;
            for _ in 0..inside {
                w *= *v;
            }
            for _ in inside..size {
                w *= 1.0 - *v;
            }
            w
        })
        .collect();
    for local in 0u64..(1u64 << size) {
        let w = by_count[local.count_ones() as usize];
        if w == 0.0 {
            continue;
        }
        let mut sub = mask;
        for (bit, &j) in members.iter().enumerate() {
            if local >> bit & 1 == 1 {
                sub = sub.with(j);
            }
        }
        descend(groups, g + 1, sub, w, visit);
    }
}

/// Independent random stream for `(coordinate, iteration)` under a master seed.
///
/// Streams do not depend on evaluation order, so parallel and serial runs draw
/// identical samples.
pub fn stream_rng(master: u64, coordinate: usize, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((iteration as u64) << 32) | coordinate as u64);
    rng
}

/// `(0..n).map(f)`, spread over the rayon pool only when `n · cost` game
/// evaluations are enough to repay the scheduling.
pub(crate) fn per_player<T, F>(n: usize, cost: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    const PARALLEL_WORK: usize = 1 << 14;
    if n.saturating_mul(cost) < PARALLEL_WORK {
        (0..n).map(f).collect()
    } else {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(q: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(q);
    for k in 0..q {
        // Initial guess for the k-th root of P_q on [-1, 1].
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre(q, t);
            deriv = dp;
            let step = p / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(q, t);
        if dp != 0.0 {
            deriv = dp;
        }
        let w = 2.0 / ((1.0 - t * t) * deriv * deriv);
        out.push((0.5 * (1.0 - t), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `(P_q(t), P_q'(t))` by the three-term recurrence.
fn legendre(q: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = q as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}
