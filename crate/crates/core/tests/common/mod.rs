//! Random instance generators and independent oracles shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use kantlab::measures::{DiscreteMeasure, Point};
use kantlab::transport::CostMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random composition of `total` into `parts` positive integers.
pub fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    assert!(parts >= 1 && parts <= total);
    let mut cuts: Vec<usize> = (1..total).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain([total]) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Up to `max_atoms` distinct atoms `k/8` in `[−2, 2]` with weights `k/16`.
pub fn grid_measure_1d(rng: &mut ChaCha8Rng, max_atoms: usize) -> DiscreteMeasure {
    let n = rng.gen_range(1..=max_atoms);
    let mut slots: Vec<i32> = (-16..=16).collect();
    slots.shuffle(rng);
    let xs: Vec<f64> = slots[..n].iter().map(|&k| k as f64 / 8.0).collect();
    let ws: Vec<f64> = composition(rng, 16, n).into_iter().map(|k| k as f64 / 16.0).collect();
    DiscreteMeasure::from_scalars(&xs, &ws).unwrap()
}

/// `μ` made of barycenters of a random partition of `ν`'s atoms, so `μ ⪯_c ν`.
pub fn contraction(rng: &mut ChaCha8Rng, nu: &DiscreteMeasure) -> DiscreteMeasure {
    let groups = rng.gen_range(1..=nu.len());
    let mut label: Vec<usize> = (0..nu.len()).map(|i| i % groups).collect();
    label.shuffle(rng);
    let d = nu.dim();
    let mut mass = vec![0.0; groups];
    let mut sum = vec![vec![0.0; d]; groups];
    for (i, (a, w)) in nu.iter().enumerate() {
        mass[label[i]] += w;
        for (s, c) in sum[label[i]].iter_mut().zip(a.coords()) {
            *s += w * c;
        }
    }
    let atoms: Vec<Point> = sum
        .iter()
        .zip(&mass)
        .map(|(s, m)| Point::from_slice(&s.iter().map(|v| v / m).collect::<Vec<_>>()))
        .collect();
    DiscreteMeasure::new(atoms, mass).unwrap()
}

/// Probability vector with entries bounded away from zero.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// `n` atoms uniform in `[−1, 1]^d` with random weights.
pub fn measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let atoms = (0..n)
        .map(|_| Point::from_slice(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect();
    DiscreteMeasure::new(atoms, simplex(rng, n)).unwrap()
}

pub fn cost_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostMatrix {
    CostMatrix::from_fn(n, m, |_, _| rng.gen_range(0.0..10.0)).unwrap()
}

/// Uniform measure on `n` atoms `0, 1, …, n−1`.
pub fn index_measure(n: usize) -> DiscreteMeasure {
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    DiscreteMeasure::from_scalars(&xs, &vec![1.0 / n as f64; n]).unwrap()
}

/// Minimum of `Σ_i c[i][σ(i)]` over all permutations, with the minimizer.
pub fn brute_force_assignment(c: &CostMatrix) -> (f64, Vec<usize>) {
    let n = c.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    heap_permute(n, &mut perm, &mut |p| {
        let v: f64 = p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
        if v < best.0 {
            best = (v, p.to_vec());
        }
    });
    best
}

fn heap_permute(k: usize, a: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(a);
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, a, f);
        if k.is_multiple_of(2) {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, a, f);
}

/// `Σ w |x − k|` evaluated directly.
pub fn potential(m: &DiscreteMeasure, k: f64) -> f64 {
    m.iter().map(|(a, w)| w * (a.coords()[0] - k).abs()).sum()
}

/// Convex-order verdict from potentials evaluated directly at every atom.
pub fn potential_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> bool {
    if (mu.total_mass() - nu.total_mass()).abs() > tol {
        return false;
    }
    let mean = |m: &DiscreteMeasure| m.iter().map(|(a, w)| w * a.coords()[0]).sum::<f64>();
    if (mean(mu) - mean(nu)).abs() > tol {
        return false;
    }
    mu.atoms()
        .iter()
        .chain(nu.atoms())
        .all(|k| potential(mu, k.coords()[0]) <= potential(nu, k.coords()[0]) + tol)
}

/// Golden-section minimum of a unimodal `f` on `[0, 1]`.
pub fn golden_min(f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.0).min(f(1.0)).min(fc).min(fd)
}

/// KR norm as a primal transport problem: the positive and negative parts of
/// `p − q` are matched at cost `min(d, 2)`, and unmatched mass is sent to a
/// dummy atom at cost 1 per unit.
pub fn kr_primal_oracle(p: &DiscreteMeasure, q: &DiscreteMeasure) -> f64 {
    use kantlab::transport::solve_transport;
    let mut atoms: Vec<Point> = p.atoms().to_vec();
    for a in q.atoms() {
        if !atoms.iter().any(|b| b.sup_dist(a) <= 1e-12) {
            atoms.push(a.clone());
        }
    }
    let mass = |m: &DiscreteMeasure, a: &Point| -> f64 {
        m.iter().filter(|(b, _)| b.sup_dist(a) <= 1e-12).map(|(_, w)| w).sum()
    };
    let diff: Vec<f64> = atoms.iter().map(|a| mass(p, a) - mass(q, a)).collect();
    let pos: f64 = diff.iter().filter(|v| **v > 0.0).sum();
    let neg: f64 = -diff.iter().filter(|v| **v < 0.0).sum::<f64>();
    if pos + neg <= 1e-15 {
        return 0.0;
    }
    let k = atoms.len();
    let pad = |v: Vec<f64>, extra: f64| {
        let mut v = v;
        v.push(extra);
        v
    };
    let rows = pad(diff.iter().map(|v| v.max(0.0)).collect(), neg);
    let cols = pad(diff.iter().map(|v| (-v).max(0.0)).collect(), pos);
    let idx = |n: usize| (0..n).map(|i| Point::scalar(i as f64)).collect::<Vec<_>>();
    let mu = DiscreteMeasure::new(idx(k + 1), rows).unwrap();
    let nu = DiscreteMeasure::new(idx(k + 1), cols).unwrap();
    let c = CostMatrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
        (true, true) => atoms[i].dist(&atoms[j]).min(2.0),
        (false, false) => 0.0,
        _ => 1.0,
    })
    .unwrap();
    solve_transport(&c, &mu, &nu).unwrap().cost(&c)
}
