#![allow(dead_code)]

use flownet::NetworkSpec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXAMPLE_R: [[f64; 3]; 3] = [[0.0, 0.75, 0.25], [0.0, 0.0, 1.0], [0.3, 0.7, 0.0]];
pub const EXAMPLE_W: [f64; 3] = [5.0, 4.0, 6.0];
pub const EXAMPLE_C: [f64; 3] = [0.0, -1.0, 1.0];
pub const X_LOW: [f64; 3] = [12.0 / 37.0, 0.0, 40.0 / 37.0];
pub const X_HIGH: [f64; 3] = [60.0 / 37.0, 4.0, 200.0 / 37.0];
pub const PI: [f64; 3] = [12.0 / 89.0, 37.0 / 89.0, 40.0 / 89.0];
pub const CONDITION: f64 = 356.0 / 37.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn example_with(c: &[f64]) -> NetworkSpec {
    NetworkSpec::new(
        EXAMPLE_R.iter().map(|r| r.to_vec()).collect(),
        EXAMPLE_W.to_vec(),
        c.to_vec(),
    )
    .unwrap()
}

pub fn example() -> NetworkSpec {
    example_with(&EXAMPLE_C)
}

/// Random zero-diagonal weights with roughly `density` of the
/// off-diagonal entries present, each row normalised to `row_sums[i]`.
fn weighted_rows(rng: &mut impl Rng, n: usize, density: f64, row_sums: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    if j != i && rng.gen_bool(density) {
                        rng.gen_range(0.05..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            if row.iter().all(|v| *v == 0.0) && n > 1 {
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                row[j] = 1.0;
            }
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v *= row_sums[i] / s);
            }
            row
        })
        .collect()
}

/// Every row leaks: row sums drawn from `[0.2, max_row_sum]`.
pub fn leaky_routing(rng: &mut impl Rng, n: usize, max_row_sum: f64) -> Vec<Vec<f64>> {
    let sums: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..=max_row_sum)).collect();
    weighted_rows(rng, n, 0.6, &sums)
}

/// Stochastic routing made irreducible by threading a random Hamiltonian
/// cycle through the support.
pub fn stochastic_irreducible_routing(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let mut rows = weighted_rows(rng, n, 0.5, &vec![1.0; n]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for k in 0..n {
        let (i, j) = (order[k], order[(k + 1) % n]);
        rows[i][j] += 0.3;
        let s: f64 = rows[i].iter().sum();
        rows[i].iter_mut().for_each(|v| *v /= s);
    }
    rows
}

pub fn random_capacity(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..5.0)).collect()
}

pub fn random_demand(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Out-connected spec with every row leaking at least 10%.
pub fn random_out_connected(rng: &mut impl Rng) -> NetworkSpec {
    let n = rng.gen_range(1..=6);
    let r = leaky_routing(rng, n, 0.9);
    let w = random_capacity(rng, n);
    let c = random_demand(rng, n);
    NetworkSpec::new(r, w, c).unwrap()
}

/// Stochastic irreducible spec whose demand is kept away from the
/// zero-sum hyperplane.
pub fn random_irreducible_off_plane(rng: &mut impl Rng) -> NetworkSpec {
    let n = rng.gen_range(2..=6);
    let r = stochastic_irreducible_routing(rng, n);
    let w = random_capacity(rng, n);
    let mut c = random_demand(rng, n);
    let s: f64 = c.iter().sum();
    if s.abs() < 0.5 {
        let shift = if s >= 0.0 { 0.5 } else { -0.5 };
        c[0] += shift;
    }
    NetworkSpec::new(r, w, c).unwrap()
}

/// Stochastic irreducible spec with zero-sum demand.
pub fn random_irreducible_zero_sum(rng: &mut impl Rng) -> NetworkSpec {
    let n = rng.gen_range(2..=6);
    let r = stochastic_irreducible_routing(rng, n);
    let w = random_capacity(rng, n);
    let c = random_zero_sum(rng, n, 1.0);
    NetworkSpec::new(r, w, c).unwrap()
}

pub fn random_zero_sum(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    let mut c: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    let mean = c.iter().sum::<f64>() / n as f64;
    c.iter_mut().for_each(|v| *v -= mean);
    // make the sum as exact as floating point allows
    let residue: f64 = c.iter().sum();
    c[n - 1] -= residue;
    c
}

/// Mix of out-connected and stochastic irreducible instances.
pub fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    match rng.gen_range(0..3) {
        0 | 1 => random_out_connected(rng),
        _ => random_irreducible_off_plane(rng),
    }
}

pub fn random_state(rng: &mut impl Rng, w: &[f64]) -> Vec<f64> {
    w.iter().map(|&wi| rng.gen_range(0.0..=wi)).collect()
}

/// Random ordered pair `x <= y` in the box.
pub fn random_ordered_pair(rng: &mut impl Rng, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = random_state(rng, w);
    let b = random_state(rng, w);
    let lo = a.iter().zip(&b).map(|(p, q)| p.min(*q)).collect();
    let hi = a.iter().zip(&b).map(|(p, q)| p.max(*q)).collect();
    (lo, hi)
}

/// Truncated `H v = 1/2 sum_k ((I + R')/2)^k v`.
pub fn h_series(r: &[Vec<f64>], v: &[f64], terms: usize) -> Vec<f64> {
    let n = v.len();
    let mut term = v.to_vec();
    let mut acc = vec![0.0; n];
    for _ in 0..terms {
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += 0.5 * t;
        }
        let next: Vec<f64> = (0..n)
            .map(|i| 0.5 * (term[i] + (0..n).map(|j| r[j][i] * term[j]).sum::<f64>()))
            .collect();
        term = next;
    }
    acc
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
