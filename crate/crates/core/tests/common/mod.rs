//! Statistics shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::factorial::binomial;
use statrs::statistics::Statistics;
use svgrad::Vector;

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().mean();
    let se = xs.iter().std_dev() / (xs.len() as f64).sqrt();
    (mean, se)
}

/// Mann-Whitney `U` of `x` against `y`: pairs with `x_i > y_j`, ties count half.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .flat_map(|a| y.iter().map(move |b| (a, b)))
        .map(|(a, b)| if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 })
        .sum()
}

/// Exact one-sided p-value of the Mann-Whitney test for "x tends to be
/// larger than y", by enumerating every split of the pooled sample.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> f64 {
    let observed = mann_whitney_u(x, y);
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (n, total) = (x.len(), pooled.len());
    assert!(total <= 24, "exact enumeration only for small samples");
    let mut count = 0u64;
    let mut splits = 0u64;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(total - n));
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a.push(*v);
            } else {
                b.push(*v);
            }
        }
        splits += 1;
        if mann_whitney_u(&a, &b) >= observed - 1e-12 {
            count += 1;
        }
    }
    assert_eq!(splits as f64, binomial(total as u64, n as u64));
    count as f64 / splits as f64
}

fn energy_statistic(pooled: &[Vector], n: usize) -> f64 {
    let mean_dist = |a: &[Vector], b: &[Vector]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += (u - v).norm();
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let (x, y) = pooled.split_at(n);
    2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y)
}

/// Two-sample energy-distance permutation test; returns the p-value.
pub fn energy_test<R: Rng>(x: &[Vector], y: &[Vector], permutations: usize, rng: &mut R) -> f64 {
    let mut pooled: Vec<Vector> = x.iter().chain(y).cloned().collect();
    let observed = energy_statistic(&pooled, x.len());
    let mut exceed = 0;
    for _ in 0..permutations {
        pooled.shuffle(rng);
        if energy_statistic(&pooled, x.len()) >= observed {
            exceed += 1;
        }
    }
    (exceed + 1) as f64 / (permutations + 1) as f64
}

/// Running per-coordinate mean and variance of gradient samples.
pub struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
    n: usize,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments {
            sum: vec![0.0; dim],
            sq: vec![0.0; dim],
            n: 0,
        }
    }

    pub fn push(&mut self, g: &[f64]) {
        for (i, v) in g.iter().enumerate() {
            self.sum[i] += v;
            self.sq[i] += v * v;
        }
        self.n += 1;
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    pub fn se(&self, i: usize) -> f64 {
        let m = self.mean(i);
        ((self.sq[i] / self.n as f64 - m * m).max(0.0) / self.n as f64).sqrt()
    }
}

/// Largest `|a_i - b_i| / sqrt(se_a^2 + se_b^2)` over coordinates, with a
/// floor on the combined error for coordinates that are exactly constant.
pub fn max_z(a: &Moments, b: &Moments) -> f64 {
    (0..a.dim())
        .map(|i| {
            let se = (a.se(i).powi(2) + b.se(i).powi(2)).sqrt().max(1e-12);
            (a.mean(i) - b.mean(i)).abs() / se
        })
        .fold(0.0, f64::max)
}

/// Largest `|a_i - exact_i| / se_a` over coordinates.
pub fn max_z_exact(a: &Moments, exact: &[f64]) -> f64 {
    (0..a.dim())
        .map(|i| (a.mean(i) - exact[i]).abs() / a.se(i).max(1e-12))
        .fold(0.0, f64::max)
}

