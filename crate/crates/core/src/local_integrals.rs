//! Local integrals I_{l;m}, the zeta boundary formula, two-dimensional
//! tropicalization defects and the one-dimensional collision models.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::zeta;
use crate::exact::ratio;
use crate::quadrature::{self, Estimate, GaussLegendre, QuadError, Tolerance};
use crate::zeta_series::{Coeff, ISymbol, MixedPoly, ZetaPoly};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    QuadratureNotConverged { value: f64, error: f64 },
    #[error("region boundary is not transverse to the tropical line near vertex ({0}, {1})")]
    NonTransverseBoundary(f64, f64),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

impl From<QuadError> for LocalError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::NotConverged { value, error, .. } => LocalError::QuadratureNotConverged { value, error },
        }
    }
}

pub type Result<T> = std::result::Result<T, LocalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Composite Gauss–Legendre on panels, pruned to the corner simplex.
    TensorGauss,
    /// Adaptive Gauss–Kronrod in one dimension, Genz–Malik beyond.
    Adaptive,
    /// Shifted Kronecker lattice in u = exp(-s).
    QuasiMonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper limit replacing infinity.
    pub cutoff: f64,
    pub max_evals: usize,
    pub panel_width: f64,
    pub nodes: usize,
    pub qmc_points: u64,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            scheme: Scheme::TensorGauss,
            rel_tol: 1e-11,
            abs_tol: 1e-11,
            cutoff: 40.0,
            max_evals: 20_000_000,
            panel_width: 2.0,
            nodes: 12,
            qmc_points: 1 << 18,
            seed: 0x7a9e_11,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(LocalError::InvalidSpec("tolerances must be positive".into()));
        }
        if !(self.cutoff >= 10.0) {
            return Err(LocalError::InvalidSpec(format!("cutoff {} is below 10", self.cutoff)));
        }
        if self.nodes < 6 || !(self.panel_width > 0.0) {
            return Err(LocalError::InvalidSpec("need at least 6 nodes and a positive panel width".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol, self.max_evals)
    }

    fn accept(&self, est: Estimate<f64>) -> Result<Estimate<f64>> {
        if est.error <= self.abs_tol.max(self.rel_tol * est.value.abs()) {
            Ok(est)
        } else {
            Err(LocalError::QuadratureNotConverged { value: est.value, error: est.error })
        }
    }
}

/// Neumaier compensated sum.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Evaluator for g_l on k arguments with the power-series coefficients of
/// log(1+x)^l cached.
#[derive(Debug, Clone)]
pub struct GFunction {
    ell: u32,
    k: usize,
    /// log(1+x)^l = sum_n coeff[n] x^n
    coeff: Vec<f64>,
}

const SERIES_RADIUS: f64 = 0.25;
const SERIES_TERMS: usize = 64;

impl GFunction {
    pub fn new(ell: u32, k: usize) -> Self {
        let n = SERIES_TERMS + 1;
        let log1p: Vec<f64> = (0..n)
            .map(|j| if j == 0 { 0.0 } else if j % 2 == 1 { 1.0 / j as f64 } else { -1.0 / j as f64 })
            .collect();
        let mut pow = vec![0.0; n];
        pow[0] = 1.0;
        for _ in 0..ell {
            let mut next = vec![0.0; n];
            for (i, a) in pow.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (j, b) in log1p.iter().enumerate().take(n - i) {
                    next[i + j] += a * b;
                }
            }
            pow = next;
        }
        GFunction { ell, k, coeff: pow }
    }

    /// sum_{K} (-1)^{|K|} log(1 + sum_{j in K} x_j)^l
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.k);
        if self.ell == 0 {
            return 0.0;
        }
        let total: f64 = x.iter().sum();
        if self.k >= 2 && total <= SERIES_RADIUS {
            if total == 0.0 {
                return 0.0;
            }
            return self.eval_series(x, total);
        }
        let mut acc = KahanSum::default();
        for mask in 1u32..(1 << self.k) {
            let s: f64 = (0..self.k).filter(|j| mask & (1 << j) != 0).map(|j| x[j]).sum();
            let v = s.ln_1p().powi(self.ell as i32);
            if mask.count_ones() % 2 == 1 {
                acc.add(-v);
            } else {
                acc.add(v);
            }
        }
        acc.value()
    }

    /// sum_K (-1)^{|K|} S_K^n = (-1)^k n! [z^n] prod_j (e^{x_j z} - 1); every
    /// term is nonnegative, so nothing cancels.
    fn eval_series(&self, x: &[f64], total: f64) -> f64 {
        let start = self.k.max(self.ell as usize);
        let extra = if total > 0.0 { (-39.0 / total.ln()).ceil() as usize + 2 } else { 2 };
        let top = (start + extra).min(SERIES_TERMS);
        // exponential-generating coefficients: q[n] = n! [z^n] prod
        let mut q = vec![0.0; top + 1];
        q[0] = 1.0;
        let mut deg = 0;
        for &xj in x {
            // multiply by sum_{m>=1} x^m z^m / m!  (binomial convolution in EGF form)
            let mut next = vec![0.0; top + 1];
            let mut xp = vec![1.0; top + 1];
            for m in 1..=top {
                xp[m] = xp[m - 1] * xj;
            }
            for n in (deg + 1)..=top {
                let mut s = 0.0;
                let mut binom = 1.0; // C(n, m)
                for m in 1..=n - deg {
                    binom *= (n - m + 1) as f64 / m as f64;
                    s += binom * xp[m] * q[n - m];
                }
                next[n] = s;
            }
            q = next;
            deg += 1;
        }
        let mut acc = 0.0;
        for n in start..=top {
            acc += self.coeff[n] * q[n];
        }
        if self.k % 2 == 1 {
            -acc
        } else {
            acc
        }
    }
}

/// g_l(X) as a free function; builds the series table on each call.
pub fn eval_g(ell: u32, x: &[f64]) -> f64 {
    assert!(!x.is_empty(), "g needs at least one argument");
    GFunction::new(ell, x.len()).eval(x)
}

/// Closed forms known for particular local integrals.
pub fn i_known(sym: &ISymbol) -> Option<ZetaPoly> {
    let z = |k: u32, p: i64, q: i64| ZetaPoly::zeta(k).scale(&ratio(p, q));
    let zz = |a: u32, b: u32, p: i64, q: i64| ZetaPoly::zeta(a).mul(&ZetaPoly::zeta(b)).scale(&ratio(p, q));
    match (sym.ell, sym.m.as_slice()) {
        (1, [m]) => {
            let m = *m;
            let fact: i64 = (1..=m as i64).product();
            let pow2 = 1i64 << (m + 1);
            Some(z(m + 2, -fact * (pow2 - 1), pow2))
        }
        (2, [0]) => Some(z(3, -1, 4)),
        (1, [0, 0]) => Some(z(3, -5, 12)),
        (2, [2]) => Some(z(5, 29, 8).add(&zz(2, 3, -2, 1))),
        (2, [4]) => Some(z(7, 753, 8).add(&zz(3, 4, -42, 1)).add(&zz(2, 5, -24, 1))),
        _ => None,
    }
}

/// Panel grid of `[0, cutoff]` with Gauss nodes, as (s, weight, panel index, panel start).
fn axis_nodes(spec: &QuadratureSpec, nodes: usize) -> Vec<(f64, f64, f64)> {
    let rule = GaussLegendre::new(nodes);
    let panels = (spec.cutoff / spec.panel_width).ceil() as usize;
    let mut out = Vec::with_capacity(panels * nodes);
    for p in 0..panels {
        let a = p as f64 * spec.panel_width;
        let b = (a + spec.panel_width).min(spec.cutoff);
        for (x, w) in rule.mapped(a, b) {
            out.push((x, w, a));
        }
    }
    out
}

fn tensor_sum(ell: u32, m: &[u32], spec: &QuadratureSpec, nodes: usize) -> f64 {
    let k = m.len();
    let g = GFunction::new(ell, k);
    let axis = axis_nodes(spec, nodes);
    let weight = |s: f64, j: usize| s.powi(m[j] as i32);
    match k {
        1 => {
            let mut acc = KahanSum::default();
            for &(s, w, _) in &axis {
                acc.add(w * weight(s, 0) * g.eval(&[(-s).exp()]));
            }
            acc.value()
        }
        2 => {
            let parts: Vec<f64> = axis
                .par_iter()
                .map(|&(s1, w1, a1)| {
                    let mut acc = KahanSum::default();
                    let f1 = w1 * weight(s1, 0);
                    let x1 = (-s1).exp();
                    for &(s2, w2, a2) in &axis {
                        if a1 + a2 > spec.cutoff {
                            break;
                        }
                        acc.add(f1 * w2 * weight(s2, 1) * g.eval(&[x1, (-s2).exp()]));
                    }
                    acc.value()
                })
                .collect();
            parts.iter().sum()
        }
        3 => {
            let parts: Vec<f64> = axis
                .par_iter()
                .map(|&(s1, w1, a1)| {
                    let mut acc = KahanSum::default();
                    let f1 = w1 * weight(s1, 0);
                    let x1 = (-s1).exp();
                    for &(s2, w2, a2) in &axis {
                        if a1 + a2 > spec.cutoff {
                            break;
                        }
                        let f2 = f1 * w2 * weight(s2, 1);
                        let x2 = (-s2).exp();
                        for &(s3, w3, a3) in &axis {
                            if a1 + a2 + a3 > spec.cutoff {
                                break;
                            }
                            acc.add(f2 * w3 * weight(s3, 2) * g.eval(&[x1, x2, (-s3).exp()]));
                        }
                    }
                    acc.value()
                })
                .collect();
            parts.iter().sum()
        }
        _ => unreachable!("tensor rule handles dimensions 1..=3"),
    }
}

/// Numerical I_{l;m} over [0, cutoff]^k.
pub fn i_numeric(sym: &ISymbol, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    i_numeric_exponents(sym.ell, &sym.m, spec)
}

/// Same integral with the exponents in the given coordinate order.
pub fn i_numeric_exponents(ell: u32, m: &[u32], spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    spec.validate()?;
    let k = m.len();
    if ell == 0 || k == 0 || k > 5 {
        return Err(LocalError::InvalidArgument(format!("need l >= 1 and 1..=5 exponents, got l={ell}, {k}")));
    }
    let scheme = if k > 3 { Scheme::QuasiMonteCarlo } else { spec.scheme };
    match scheme {
        Scheme::TensorGauss => {
            let fine = tensor_sum(ell, m, spec, spec.nodes);
            let coarse = tensor_sum(ell, m, spec, spec.nodes - 4);
            let evals = (spec.cutoff / spec.panel_width).ceil().powi(k as i32) as usize * spec.nodes.pow(k as u32);
            spec.accept(Estimate { value: fine, error: (fine - coarse).abs(), evals })
        }
        Scheme::Adaptive => {
            let g = GFunction::new(ell, k);
            let m = m.to_vec();
            let integrand = |s: &[f64]| {
                let x: Vec<f64> = s.iter().map(|v| (-v).exp()).collect();
                s.iter().zip(&m).map(|(v, e)| v.powi(*e as i32)).product::<f64>() * g.eval(&x)
            };
            let est = if k == 1 {
                quadrature::adaptive(|s| integrand(&[s]), 0.0, spec.cutoff, &[1.0, 4.0, 10.0], &spec.tolerance())?
            } else {
                quadrature::genz_malik(integrand, &vec![0.0; k], &vec![spec.cutoff; k], &spec.tolerance())?
            };
            Ok(est)
        }
        Scheme::QuasiMonteCarlo => {
            let g = GFunction::new(ell, k);
            let m = m.to_vec();
            let floor = (-spec.cutoff).exp();
            let est = quadrature::qmc(
                |u: &[f64]| {
                    // s = -ln u; ds = du/u and g/prod(u) stays bounded
                    if u.iter().any(|&v| v <= floor) {
                        return 0.0;
                    }
                    let w: f64 = u.iter().zip(&m).map(|(v, e)| (-v.ln()).powi(*e as i32) / v).product();
                    w * g.eval(u)
                },
                k,
                spec.qmc_points,
                8,
                spec.seed,
            );
            Ok(est)
        }
    }
}

fn memo() -> &'static Mutex<HashMap<(ISymbol, String), Estimate<f64>>> {
    static MEMO: OnceLock<Mutex<HashMap<(ISymbol, String), Estimate<f64>>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

/// `i_numeric` memoized for the lifetime of the process.
pub fn i_numeric_cached(sym: &ISymbol, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    let key = (sym.clone(), format!("{spec:?}"));
    if let Some(e) = memo().lock().expect("memo poisoned").get(&key) {
        return Ok(*e);
    }
    let e = i_numeric(sym, spec)?;
    memo().lock().expect("memo poisoned").insert(key, e);
    Ok(e)
}

/// zeta(n) from (1/(n-1)!) int (log(1+e^s))^{n-1} - max(0,s)^{n-1} ds.
pub fn zeta_via_boundary(n: u32, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    spec.validate()?;
    if n < 2 {
        return Err(LocalError::InvalidArgument(format!("zeta({n}) needs n >= 2")));
    }
    let p = (n - 1) as i32;
    let integrand = |s: f64| {
        if s <= 0.0 {
            s.exp().ln_1p().powi(p)
        } else {
            // (s + l)^p - s^p expanded to avoid cancellation
            let l = (-s).exp().ln_1p();
            let mut acc = 0.0;
            let mut binom = 1.0;
            for j in 1..=p {
                binom *= (p - j + 1) as f64 / j as f64;
                acc += binom * s.powi(p - j) * l.powi(j);
            }
            acc
        }
    };
    let est = quadrature::adaptive(integrand, -spec.cutoff, spec.cutoff, &[0.0], &spec.tolerance())?;
    let fact: f64 = (1..n).map(|x| x as f64).product();
    Ok(Estimate { value: est.value / fact, error: est.error / fact, evals: est.evals })
}

/// A simple polygon in the (b1, b2)-plane, vertices in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRegion {
    vertices: Vec<[f64; 2]>,
}

impl PolygonRegion {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(LocalError::InvalidRegion("need at least three vertices".into()));
        }
        let r = PolygonRegion { vertices };
        if r.signed_area().abs() < 1e-14 {
            return Err(LocalError::InvalidRegion("degenerate polygon".into()));
        }
        if r.self_intersects() {
            return Err(LocalError::InvalidRegion("polygon is self-intersecting".into()));
        }
        Ok(r)
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
            / 2.0
    }

    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Total affine length of the region's intersection with the standard
    /// tropical line, each leg measured in units of its primitive direction.
    pub fn tropical_length(&self) -> f64 {
        LEGS.iter().map(|d| self.ray_length(*d)).sum()
    }

    fn ray_length(&self, d: [f64; 2]) -> f64 {
        let n = self.vertices.len();
        let mut taus = vec![0.0];
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            // a + u (b - a) = tau d
            let e = [b[0] - a[0], b[1] - a[1]];
            let den = e[0] * d[1] - e[1] * d[0];
            if den.abs() < 1e-300 {
                continue;
            }
            let u = (a[1] * d[0] - a[0] * d[1]) / den;
            if (0.0..=1.0).contains(&u) {
                let p = [a[0] + u * e[0], a[1] + u * e[1]];
                let tau = if d[0].abs() > d[1].abs() { p[0] / d[0] } else { p[1] / d[1] };
                if tau > 0.0 {
                    taus.push(tau);
                }
            }
        }
        taus.sort_by(f64::total_cmp);
        taus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        // probe on both sides so a leg running along an edge counts half
        let scale = self.vertices.iter().fold(1.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        let delta = 1e-9 * scale;
        let normal = [-d[1], d[0]];
        let mut len = 0.0;
        for w in taus.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let p = [mid * d[0], mid * d[1]];
            let hits = [1.0, -1.0]
                .iter()
                .filter(|&&sgn| self.contains([p[0] + sgn * delta * normal[0], p[1] + sgn * delta * normal[1]]))
                .count();
            len += 0.5 * hits as f64 * (w[1] - w[0]);
        }
        len
    }

    /// Error if a vertex lies within `margin` of the tropical line.
    pub fn check_transverse(&self, margin: f64) -> Result<()> {
        for v in &self.vertices {
            for d in LEGS {
                let tau = (v[0] * d[0] + v[1] * d[1]) / (d[0] * d[0] + d[1] * d[1]);
                let tau = tau.max(0.0);
                let dist = ((v[0] - tau * d[0]).powi(2) + (v[1] - tau * d[1]).powi(2)).sqrt();
                if dist < margin {
                    return Err(LocalError::NonTransverseBoundary(v[0], v[1]));
                }
            }
        }
        Ok(())
    }
}

const LEGS: [[f64; 2]; 3] = [[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]];

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// log(1 + e^{s1} + e^{s2}) - max(0, s1, s2), without overflow.
pub fn defect_density(s: [f64; 2]) -> f64 {
    let m = 0f64.max(s[0]).max(s[1]);
    ((-m).exp() + (s[0] - m).exp() + (s[1] - m).exp() - 1.0).ln_1p()
}

/// Half-planes (a, b, c) meaning a x + b y <= c cutting out the three
/// linearity domains of max(0, s1, s2).
const SECTORS: [[[f64; 3]; 2]; 3] = [
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    [[-1.0, 0.0, 0.0], [-1.0, 1.0, 0.0]],
    [[0.0, -1.0, 0.0], [1.0, -1.0, 0.0]],
];

fn clip(poly: &[[f64; 2]], h: [f64; 3]) -> Vec<[f64; 2]> {
    let inside = |p: [f64; 2]| h[0] * p[0] + h[1] * p[1] <= h[2];
    let val = |p: [f64; 2]| h[0] * p[0] + h[1] * p[1] - h[2];
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ia, ib) = (inside(a), inside(b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let (va, vb) = (val(a), val(b));
            let u = va / (va - vb);
            out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Tri {
    p: [[f64; 2]; 3],
}

impl Tri {
    fn area(&self) -> f64 {
        0.5 * cross(self.p[0], self.p[1], self.p[2])
    }

    fn children(&self) -> [Tri; 4] {
        let m = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let [a, b, c] = self.p;
        let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
        [Tri { p: [a, ab, ca] }, Tri { p: [ab, b, bc] }, Tri { p: [ca, bc, c] }, Tri { p: [ab, bc, ca] }]
    }
}

/// Collapsed-coordinate product Gauss rule on a triangle (signed by orientation).
struct TriRule {
    pts: Vec<(f64, f64, f64)>,
}

impl TriRule {
    fn new(n: usize) -> Self {
        let gl = GaussLegendre::new(n);
        let mut pts = Vec::new();
        for (u, wu) in gl.mapped(0.0, 1.0) {
            for (v, wv) in gl.mapped(0.0, 1.0) {
                pts.push((u, u * v, wu * wv * u));
            }
        }
        TriRule { pts }
    }

    fn apply(&self, t: &Tri, f: &impl Fn([f64; 2]) -> f64) -> f64 {
        let [a, b, c] = t.p;
        let area2 = 2.0 * t.area();
        let mut acc = 0.0;
        for &(u, uv, w) in &self.pts {
            // a + u (b - a) + uv (c - b)
            let x = [a[0] + u * (b[0] - a[0]) + uv * (c[0] - b[0]), a[1] + u * (b[1] - a[1]) + uv * (c[1] - b[1])];
            acc += w * f(x);
        }
        acc * area2
    }
}

struct TriPiece {
    tri: Tri,
    value: f64,
    kids: [f64; 4],
    error: f64,
}

impl PartialEq for TriPiece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for TriPiece {}
impl PartialOrd for TriPiece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for TriPiece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn tri_piece(rule: &TriRule, tri: Tri, f: &impl Fn([f64; 2]) -> f64) -> TriPiece {
    let value = rule.apply(&tri, f);
    let ch = tri.children();
    let kids = [rule.apply(&ch[0], f), rule.apply(&ch[1], f), rule.apply(&ch[2], f), rule.apply(&ch[3], f)];
    let refined: f64 = kids.iter().sum();
    TriPiece { tri, value, kids, error: (refined - value).abs() }
}

/// Adaptively integrates a function that is smooth on each triangle.
fn integrate_triangles(tris: Vec<Tri>, f: impl Fn([f64; 2]) -> f64, tol: &Tolerance) -> Result<Estimate<f64>> {
    let rule = TriRule::new(7);
    let per = rule.pts.len() * 5;
    let mut heap: BinaryHeap<TriPiece> = tris.into_iter().map(|t| tri_piece(&rule, t, &f)).collect();
    let mut evals = heap.len() * per;
    loop {
        let value: f64 = heap.iter().map(|p| p.kids.iter().sum::<f64>()).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Estimate { value, error, evals });
        }
        if evals > tol.max_evals {
            return Err(LocalError::QuadratureNotConverged { value, error });
        }
        // refine a batch of the worst pieces before re-summing
        for _ in 0..16.min(heap.len()) {
            let worst = heap.pop().expect("nonempty");
            for c in worst.tri.children() {
                heap.push(tri_piece(&rule, c, &f));
            }
            evals += 4 * per;
            let _ = worst.value;
        }
    }
}

/// Splits the region (scaled by `scale`) into triangles on which the
/// defect density is analytic.
fn sector_triangles(region: &PolygonRegion, scale: f64) -> Vec<Tri> {
    let v: Vec<[f64; 2]> = region.vertices.iter().map(|p| [p[0] * scale, p[1] * scale]).collect();
    let n = v.len();
    // Signed fan from the origin; orientation signs take care of non-convexity.
    let mut out = Vec::new();
    for i in 0..n {
        let tri = [[0.0, 0.0], v[i], v[(i + 1) % n]];
        if cross(tri[0], tri[1], tri[2]).abs() < 1e-300 {
            continue;
        }
        let positive = cross(tri[0], tri[1], tri[2]) > 0.0;
        for sector in SECTORS {
            let mut piece = tri.to_vec();
            for h in sector {
                piece = clip(&piece, h);
                if piece.len() < 3 {
                    break;
                }
            }
            if piece.len() < 3 {
                continue;
            }
            for j in 1..piece.len() - 1 {
                let mut t = Tri { p: [piece[0], piece[j], piece[j + 1]] };
                // clipping keeps orientation; keep the fan sign
                if (t.area() > 0.0) != positive {
                    t.p.swap(1, 2);
                }
                if t.area().abs() > 1e-300 {
                    out.push(t);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
    /// Minimal distance of polygon vertices from the tropical line; `None` skips the check.
    pub transverse_margin: Option<f64>,
    /// Ratio between the two t values used for the affine decomposition.
    pub t_ratio: f64,
}

impl Default for DefectSpec {
    fn default() -> Self {
        DefectSpec { abs_tol: 1e-8, rel_tol: 1e-11, max_evals: 200_000_000, transverse_margin: Some(0.05), t_ratio: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectDecomposition {
    pub value: f64,
    pub error: f64,
    /// coefficient of (-log t), fitted from two t values
    pub length_coeff: f64,
    /// constant term, fitted from two t values
    pub constant: f64,
    /// geometric affine length L of the region's tropical-line intersection
    pub affine_length: f64,
    /// value - zeta(2) (-log t) L
    pub constant_given_length: f64,
}

/// (-log t)^3 times the integral over `region` of
/// -log_t(1 + t^{-b1} + t^{-b2}) - max(0, b1, b2), evaluated in s = (-log t) b.
pub fn defect_value(region: &PolygonRegion, t: f64, spec: &DefectSpec) -> Result<Estimate<f64>> {
    if !(t > 0.0 && t <= 0.1) {
        return Err(LocalError::InvalidArgument(format!("t = {t} outside (0, 0.1]")));
    }
    if let Some(m) = spec.transverse_margin {
        region.check_transverse(m)?;
    }
    let scale = -t.ln();
    let tris = sector_triangles(region, scale);
    integrate_triangles(tris, defect_density, &Tolerance::new(spec.abs_tol, spec.rel_tol, spec.max_evals))
}

pub fn trop_defect_2d(region: &PolygonRegion, t: f64, spec: &DefectSpec) -> Result<DefectDecomposition> {
    let v1 = defect_value(region, t, spec)?;
    let t2 = t * spec.t_ratio;
    let v2 = defect_value(region, t2, spec)?;
    let (l1, l2) = (-t.ln(), -t2.ln());
    let length_coeff = (v2.value - v1.value) / (l2 - l1);
    let constant = v1.value - length_coeff * l1;
    let affine_length = region.tropical_length();
    Ok(DefectDecomposition {
        value: v1.value,
        error: v1.error,
        length_coeff,
        constant,
        affine_length,
        constant_given_length: v1.value - zeta(2) * l1 * affine_length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CollisionKind {
    /// f_a(b) = max(-b, a, b) against log_t(t^b + t^{-a} + t^{-b}) on |b| <= B.
    TwoSided { a: f64, half_width: f64 },
    /// max(0, k b) against log_t(1 + t^{-k b}) on |b| <= B.
    Slope { k: u32, half_width: f64 },
    /// a = 0 with coefficient c on the middle monomial, over the whole line.
    Conifold { c: f64 },
}

/// (-log t)^2 times the error-in-tropicalization integral of the model, in s = (-log t) b.
pub fn collision_model(kind: CollisionKind, t: f64, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    spec.validate()?;
    if !(t > 0.0 && t <= 0.1) {
        return Err(LocalError::InvalidArgument(format!("t = {t} outside (0, 0.1]")));
    }
    let l = -t.ln();
    let tol = spec.tolerance();
    let est = match kind {
        CollisionKind::TwoSided { a, half_width } => {
            let la = l * a;
            let f = move |s: f64| {
                let m = (-s).max(la).max(s);
                -((-s - m).exp() + (la - m).exp() + (s - m).exp() - 1.0).ln_1p()
            };
            let w = l * half_width;
            quadrature::adaptive(f, -w, w, &[-la.abs(), 0.0, la.abs()], &tol)?
        }
        CollisionKind::Slope { k, half_width } => {
            let k = k as f64;
            let f = move |s: f64| -(-(k * s).abs()).exp().ln_1p();
            let w = l * half_width;
            quadrature::adaptive(f, -w, w, &[0.0], &tol)?
        }
        CollisionKind::Conifold { c } => {
            if c.abs() > 2.0 {
                return Err(LocalError::InvalidArgument(format!("conifold coefficient {c} outside [-2, 2]")));
            }
            // |s| - log(e^s + c + e^{-s}) = -log(1 + c e^{-|s|} + e^{-2|s|})
            let f = move |s: f64| {
                let e = (-s.abs()).exp();
                -(c * e + e * e).ln_1p()
            };
            let w = spec.cutoff.max(40.0);
            quadrature::adaptive(f, -w, w, &[0.0], &tol)?
        }
    };
    Ok(est)
}

pub fn conifold_closed_form(c: f64) -> f64 {
    let a = (c / 2.0).asin();
    a * a - std::f64::consts::PI * a - std::f64::consts::PI.powi(2) / 12.0
}

/// I-symbol provider for the series code: closed form when known, otherwise quadrature.
pub fn provider(spec: QuadratureSpec) -> impl FnMut(&ISymbol) -> std::result::Result<f64, String> {
    move |s: &ISymbol| {
        if let Some(z) = i_known(s) {
            return Ok(z.eval());
        }
        i_numeric_cached(s, &spec).map(|e| e.value).map_err(|e| e.to_string())
    }
}

/// Purely numerical provider (no closed forms).
pub fn numeric_provider(spec: QuadratureSpec) -> impl FnMut(&ISymbol) -> std::result::Result<f64, String> {
    move |s: &ISymbol| i_numeric_cached(s, &spec).map(|e| e.value).map_err(|e| e.to_string())
}

/// Closed form as a mixed polynomial, for symbolic substitution.
pub fn i_known_mixed(sym: &ISymbol) -> Option<MixedPoly> {
    i_known(sym).map(ZetaPoly::into_mixed)
}
