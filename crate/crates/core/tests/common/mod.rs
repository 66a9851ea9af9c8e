//! Independent scalar reference implementations used as test oracles.
//!
//! Each reconstructed value is computed from first principles for one
//! element at a time: find the element's group by index arithmetic, scan the
//! group for its statistics, then apply the grid formula. Nothing here calls
//! into the library's quantizers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn group_bounds(j: usize, dim: usize, g: usize) -> (usize, usize) {
    let start = (j / g) * g;
    (start, (start + g).min(dim))
}

fn round_half_away(x: f64) -> f64 {
    let t = x.abs().floor();
    let r = if x.abs() - t >= 0.5 { t + 1.0 } else { t };
    r.copysign(x)
}

fn round_half_even(x: f64) -> f64 {
    let t = x.abs().floor();
    let frac = x.abs() - t;
    let r = if frac > 0.5 || (frac == 0.5 && t % 2.0 == 1.0) { t + 1.0 } else { t };
    r.copysign(x)
}

pub fn round(x: f64, half_to_even: bool) -> f64 {
    if half_to_even {
        round_half_even(x)
    } else {
        round_half_away(x)
    }
}

/// Asymmetric min/max grid, top level pinned to the group maximum.
pub fn asym_scalar(row: &[f64], j: usize, g: usize, bits: u32, half_to_even: bool) -> f64 {
    let (a, b) = group_bounds(j, row.len(), g);
    let mut lo = row[a];
    let mut hi = row[a];
    for &v in &row[a..b] {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let levels = (2u64.pow(bits) - 1) as f64;
    let s = (hi - lo) / levels;
    if s == 0.0 {
        return lo;
    }
    let mut q = round((row[j] - lo) / s, half_to_even);
    if q < 0.0 {
        q = 0.0;
    }
    if q > levels {
        q = levels;
    }
    if q == levels {
        hi
    } else {
        q * s + lo
    }
}

/// Symmetric absmax grid with levels `±(2^(b-1) - 1)`, extremes pinned.
pub fn sym_scalar(row: &[f64], j: usize, g: usize, bits: u32, eps: f64, half_to_even: bool) -> f64 {
    let (a, b) = group_bounds(j, row.len(), g);
    let mut m = 0.0f64;
    for &v in &row[a..b] {
        if v.abs() > m {
            m = v.abs();
        }
    }
    let levels = (2u64.pow(bits - 1) - 1) as f64;
    let s = m / levels;
    if s == 0.0 {
        return 0.0;
    }
    let mut k = round(row[j] / (s + eps), half_to_even);
    if k > levels {
        k = levels;
    }
    if k < -levels {
        k = -levels;
    }
    if k == levels {
        m
    } else if k == -levels {
        -m
    } else {
        k * s
    }
}

pub fn sym_error(row: &[f64], g: usize, bits: u32, eps: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..row.len() {
        let d = row[j] - sym_scalar(row, j, g, bits, eps, false);
        acc += d * d;
    }
    acc.sqrt()
}

pub fn spread(row: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in row {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

pub fn minmax(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![0.5; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Random rows with a mix of magnitudes, repeated values, zeros and spikes.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let scale = 10f64.powi(rng.gen_range(-3..3));
            (0..d)
                .map(|_| match rng.gen_range(0..10) {
                    0 => 0.0,
                    1 => scale * 40.0 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    2 => scale * 0.5,
                    _ => scale * (rng.gen::<f64>() * 2.0 - 1.0),
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Floating-point allowance for checking the real-arithmetic half-step bound:
/// the scale, the quotient and `q * s + Z` each round once, so an element on
/// an exact grid midpoint can land an ulp or two past `s / 2`.
pub fn half_step_slack(group: &[f64]) -> f64 {
    let m = group.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    4.0 * f64::EPSILON * m
}
