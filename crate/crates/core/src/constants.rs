//! Zeta values and the Euler constant to 50+ digits, computed once with
//! exact rational Euler–Maclaurin sums.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::exact::{rat, ratio, to_f64, Rat};

/// Largest zeta argument kept in the cache.
pub const MAX_ZETA: u32 = 40;

/// Cutoff N and number of Bernoulli correction terms; the remainder is far
/// below 10^-55 for every argument up to `MAX_ZETA`.
const EM_CUTOFF: i64 = 30;
const EM_TERMS: usize = 30;

/// B_0, B_1, ..., B_n (with B_1 = -1/2).
pub fn bernoulli(n: usize) -> Vec<Rat> {
    let mut b = vec![Rat::one()];
    for m in 1..=n {
        // sum_{k=0}^{m} C(m+1, k) B_k = 0
        let mut acc = Rat::zero();
        let mut binom = BigInt::one();
        for (k, bk) in b.iter().enumerate() {
            acc += bk * Rat::from_integer(binom.clone());
            binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
        }
        b.push(-acc / Rat::from_integer(BigInt::from(m + 1)));
    }
    b
}

fn bernoulli_cached() -> &'static [Rat] {
    static B: OnceLock<Vec<Rat>> = OnceLock::new();
    B.get_or_init(|| bernoulli(2 * EM_TERMS + 2))
}

fn pow_rat(base: &Rat, e: u32) -> Rat {
    num_traits::pow(base.clone(), e as usize)
}

/// Rational approximation of zeta(s), error below 10^-55.
fn zeta_em(s: u32) -> Rat {
    let b = bernoulli_cached();
    let n = EM_CUTOFF;
    let mut acc = Rat::zero();
    for k in 1..n {
        acc += pow_rat(&ratio(1, k), s);
    }
    let n_r = rat(n);
    let n_inv = ratio(1, n);
    // N^{1-s}/(s-1) + N^{-s}/2
    acc += pow_rat(&n_inv, s - 1) / rat(s as i64 - 1);
    acc += pow_rat(&n_inv, s) / rat(2);
    // sum_j B_{2j}/(2j)! * s(s+1)...(s+2j-2) * N^{-s-2j+1}
    let mut rising = Rat::from_integer(BigInt::from(s)); // s (s+1) ... (s+2j-2)
    let mut fact = Rat::from_integer(BigInt::from(2)); // (2j)!
    let mut npow = pow_rat(&n_inv, s + 1); // N^{-s-2j+1}
    for j in 1..=EM_TERMS {
        acc += &b[2 * j] / &fact * &rising * &npow;
        let jj = j as i64;
        rising *= rat(s as i64 + 2 * jj - 1) * rat(s as i64 + 2 * jj);
        fact *= rat(2 * jj + 1) * rat(2 * jj + 2);
        npow = npow / (&n_r * &n_r);
    }
    acc
}

/// ln 2 = 2 atanh(1/3), to well past 60 digits.
fn ln2() -> Rat {
    let x = ratio(1, 3);
    let x2 = &x * &x;
    let mut term = x.clone();
    let mut acc = Rat::zero();
    for k in 0..70 {
        acc += &term / rat(2 * k + 1);
        term *= &x2;
    }
    acc * rat(2)
}

/// Euler's constant: H_{N-1} - ln N + 1/(2N) + sum_j B_{2j}/(2j N^{2j}), N = 32.
fn euler_gamma_em() -> Rat {
    let b = bernoulli_cached();
    let n: i64 = 32;
    let mut acc = Rat::zero();
    for k in 1..n {
        acc += ratio(1, k);
    }
    acc -= ln2() * rat(5);
    acc += ratio(1, 2 * n);
    let n2_inv = ratio(1, n * n);
    let mut npow = n2_inv.clone();
    for j in 1..=EM_TERMS {
        acc += &b[2 * j] / rat(2 * j as i64) * &npow;
        npow *= &n2_inv;
    }
    acc
}

struct Table {
    zeta: Vec<Rat>,
    zeta_f64: Vec<f64>,
    gamma: Rat,
    gamma_f64: f64,
}

fn table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    T.get_or_init(|| {
        let mut zeta = vec![Rat::zero(), Rat::zero()];
        for s in 2..=MAX_ZETA {
            zeta.push(zeta_em(s));
        }
        let zeta_f64 = zeta.iter().map(to_f64).collect();
        let gamma = euler_gamma_em();
        let gamma_f64 = to_f64(&gamma);
        Table { zeta, zeta_f64, gamma, gamma_f64 }
    })
}

/// zeta(k) for 2 <= k; beyond the cache the Dirichlet series is summed directly.
pub fn zeta(k: u32) -> f64 {
    assert!(k >= 2, "zeta({k}) is not defined here");
    if k <= MAX_ZETA {
        table().zeta_f64[k as usize]
    } else {
        1.0 + (2..40).map(|n| (n as f64).powi(-(k as i32))).sum::<f64>()
    }
}

/// High-precision rational approximation of zeta(k), 2 <= k <= MAX_ZETA.
pub fn zeta_exact(k: u32) -> &'static Rat {
    assert!((2..=MAX_ZETA).contains(&k), "zeta({k}) outside cached range");
    &table().zeta[k as usize]
}

pub fn euler_gamma() -> f64 {
    table().gamma_f64
}

pub fn euler_gamma_exact() -> &'static Rat {
    &table().gamma
}

/// Decimal expansion of a rational, truncated to `digits` places after the point.
pub fn to_decimal(r: &Rat, digits: usize) -> String {
    let neg = r.is_negative();
    let a = r.abs();
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = (a.numer() * &scale) / a.denom();
    let s = scaled.to_string();
    let s = if s.len() <= digits {
        format!("{}{}", "0".repeat(digits + 1 - s.len()), s)
    } else {
        s
    };
    let (int, frac) = s.split_at(s.len() - digits);
    format!("{}{}.{}", if neg { "-" } else { "" }, int, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_small() {
        let b = bernoulli(8);
        assert_eq!(b[1], ratio(-1, 2));
        assert_eq!(b[2], ratio(1, 6));
        assert_eq!(b[4], ratio(-1, 30));
        assert_eq!(b[6], ratio(1, 42));
        assert!(b[3].is_zero() && b[5].is_zero());
    }

    #[test]
    fn fifty_digits() {
        assert_eq!(
            to_decimal(zeta_exact(2), 50),
            "1.64493406684822643647241516664602518921894990120679"
        );
        assert_eq!(
            to_decimal(zeta_exact(3), 50),
            "1.20205690315959428539973816151144999076498629234049"
        );
        assert_eq!(
            to_decimal(euler_gamma_exact(), 50),
            "0.57721566490153286060651209008240243104215933593992"
        );
    }

    #[test]
    fn even_zeta_identities() {
        // zeta(4) = 2/5 zeta(2)^2 and zeta(6) = 8/35 zeta(2)^3, checked to 1e-52.
        let z2 = zeta_exact(2);
        let tol = Rat::new(BigInt::one(), num_traits::pow(BigInt::from(10), 52));
        let d4 = zeta_exact(4) - ratio(2, 5) * z2 * z2;
        let d6 = zeta_exact(6) - ratio(8, 35) * z2 * z2 * z2;
        assert!(d4.abs() < tol && d6.abs() < tol);
    }

    #[test]
    fn f64_values() {
        assert!((zeta(2) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-16);
        assert!((zeta(6) - 1.0173430619844491).abs() < 1e-15);
        assert!((zeta(45) - 1.0).abs() < 1e-13);
    }
}
