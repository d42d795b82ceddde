//! Exact rational and integer linear algebra used by the polytope code.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rat) -> f64 {
    // Direct conversion loses nothing for the magnitudes we meet; fall back
    // to a scaled division if either part overflows f64.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Parses "p/q", "p" or a decimal literal with a finite expansion.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let neg = int.starts_with('-');
        let int_part: BigInt = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            int.parse().ok()?
        };
        let frac_part: BigInt = frac.parse().ok()?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let mag = int_part.abs() * &scale + frac_part;
        let v = Rat::new(mag, scale);
        return Some(if neg { -v } else { v });
    }
    s.parse::<BigInt>().ok().map(Rat::from_integer)
}

pub fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn dot_int(q: &[i64], p: &[Rat]) -> Rat {
    q.iter()
        .zip(p)
        .fold(Rat::zero(), |acc, (a, b)| acc + b * BigInt::from(*a))
}

pub fn int_row(q: &[i64]) -> Vec<Rat> {
    q.iter().map(|&x| rat(x)).collect()
}

/// Row-reduces a copy of `rows` and returns the rank.
pub fn rank(rows: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    if m.is_empty() {
        return 0;
    }
    let cols = m[0].len();
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let inv = m[r][c].recip();
        for j in c..cols {
            m[r][j] = &m[r][j] * &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let v = &m[r][j] * &f;
                    m[i][j] -= v;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

pub fn det(a: &[Vec<Rat>]) -> Rat {
    let n = a.len();
    let mut m = a.to_vec();
    let mut d = Rat::one();
    for c in 0..n {
        let Some(piv) = (c..n).find(|&i| !m[i][c].is_zero()) else {
            return Rat::zero();
        };
        if piv != c {
            m.swap(c, piv);
            d = -d;
        }
        d *= &m[c][c];
        let inv = m[c][c].recip();
        for i in c + 1..n {
            if m[i][c].is_zero() {
                continue;
            }
            let f = &m[i][c] * &inv;
            for j in c..n {
                let v = &m[c][j] * &f;
                m[i][j] -= v;
            }
        }
    }
    d
}

/// Solves the square system `a x = b`; `None` when singular.
pub fn solve(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).find(|&i| !m[i][c].is_zero())?;
        m.swap(c, piv);
        let inv = m[c][c].recip();
        for j in c..=n {
            m[c][j] = &m[c][j] * &inv;
        }
        for i in 0..n {
            if i != c && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..=n {
                    let v = &m[c][j] * &f;
                    m[i][j] -= v;
                }
            }
        }
    }
    Some(m.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

pub fn inverse(a: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<Rat> = (0..n).map(|i| if i == j { Rat::one() } else { Rat::zero() }).collect();
        cols.push(solve(a, &e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

/// A nonzero kernel vector of a (d-1) x d matrix of rank d-1, via signed minors.
pub fn kernel_vector(rows: &[Vec<Rat>]) -> Option<Vec<Rat>> {
    let d = rows.first()?.len();
    if rows.len() + 1 != d {
        return None;
    }
    let v: Vec<Rat> = (0..d)
        .map(|j| {
            let minor: Vec<Vec<Rat>> = rows
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| x.clone()).collect())
                .collect();
            let m = det(&minor);
            if j % 2 == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    if v.iter().all(Zero::is_zero) {
        None
    } else {
        Some(v)
    }
}

/// Given integer row vectors spanning a rank-s sublattice of Z^d, returns
/// d - s integer rows completing them to a basis of Q^d such that the
/// complement spans a complement of the saturation. Column-style Hermite
/// reduction: `rows * U = [B | 0]` with U unimodular, and the rows of U^{-1}
/// past s are the complement.
pub fn complete_basis(rows: &[Vec<i64>], d: usize) -> Option<Vec<Vec<i64>>> {
    let s = rows.len();
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    // uinv tracks U^{-1}: column operations on A become inverse row operations on U^{-1}.
    let mut uinv: Vec<Vec<i128>> = (0..d).map(|i| (0..d).map(|j| (i == j) as i128).collect()).collect();
    let mut col = 0;
    for r in 0..s {
        if col >= d {
            return None;
        }
        // Clear entries right of `col` in row r with gcd steps.
        loop {
            let nz: Vec<usize> = (col..d).filter(|&j| a[r][j] != 0).collect();
            if nz.is_empty() {
                return None; // dependent rows
            }
            let pivot = *nz.iter().min_by_key(|&&j| a[r][j].abs()).unwrap();
            swap_cols(&mut a, &mut uinv, col, pivot);
            let mut done = true;
            for j in col + 1..d {
                if a[r][j] != 0 {
                    let f = Integer::div_floor(&a[r][j], &a[r][col]);
                    // col_j -= f * col_col
                    for row in a.iter_mut() {
                        row[j] -= f * row[col];
                    }
                    // inverse op on rows of U^{-1}: row_col += f * row_j
                    for k in 0..d {
                        let v = uinv[j][k];
                        uinv[col][k] += f * v;
                    }
                    if a[r][j] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        col += 1;
    }
    Some(
        uinv[s..]
            .iter()
            .map(|r| r.iter().map(|&x| x as i64).collect())
            .collect(),
    )
}

fn swap_cols(a: &mut [Vec<i128>], uinv: &mut [Vec<i128>], i: usize, j: usize) {
    if i == j {
        return;
    }
    for row in a.iter_mut() {
        row.swap(i, j);
    }
    uinv.swap(i, j);
}
