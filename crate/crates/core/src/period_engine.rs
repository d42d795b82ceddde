//! Numerical periods of the positive real cycle and its phase-shifted
//! transports, integrated chart by chart over the (q, K) decomposition.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exact::{complete_basis, det, int_row, inverse, to_f64, Rat};
use crate::lattice_polytope::{build_delta_lambda, intersection_table, DeltaLambda, IntersectionTable, MirrorDatum, PolytopeError};
use crate::local_integrals::QuadratureSpec;
use crate::quadrature::{self, Estimate, Tolerance};
use crate::zeta_series::{evaluate_on_x, gamma_class, SeriesError};

#[derive(Debug, thiserror::Error)]
pub enum PeriodError {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("Newton iteration diverged (residual {residual:e} after {iterations} steps)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("phase homotopy stuck at s = {s}")]
    HomotopyStuck { s: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    Quadrature { value: f64, error: f64 },
    #[error("chart {chart}: {source}")]
    Piece { chart: String, source: Box<PeriodError> },
}

pub type Result<T> = std::result::Result<T, PeriodError>;

impl From<quadrature::QuadError> for PeriodError {
    fn from(e: quadrature::QuadError) -> Self {
        let quadrature::QuadError::NotConverged { value, error, .. } = e;
        PeriodError::Quadrature { value, error }
    }
}

/// Newton and homotopy controls for the fibre equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSolve {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub steps: usize,
    pub max_halvings: u32,
}

impl Default for FiberSolve {
    fn default() -> Self {
        FiberSolve { tol: 1e-13, max_iter: 50, damping: 0.5, steps: 32, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodSpec {
    /// Band width; `None` picks the default from the polytope's vertex gaps.
    pub epsilon: Option<f64>,
    pub quad: QuadratureSpec,
    pub solve: FiberSolve,
}

impl Default for PeriodSpec {
    fn default() -> Self {
        PeriodSpec {
            epsilon: None,
            quad: QuadratureSpec { rel_tol: 1e-12, abs_tol: 1e-12, qmc_points: 1 << 13, ..QuadratureSpec::default() },
            solve: FiberSolve::default(),
        }
    }
}

/// beta_m in chart coordinates y = (a, b_K, c): sum coef_i y_i + constant.
#[derive(Debug, Clone, PartialEq)]
struct AffineForm {
    coef: Vec<f64>,
    constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceChart {
    pub q: usize,
    pub k: Vec<usize>,
    /// Rows a = q, b_k = k - q, then the completing c-covectors.
    pub covectors: Vec<Vec<i64>>,
    /// r * da db dc is the standard volume.
    pub r: Rat,
    pub epsilon: f64,
    forms: Vec<AffineForm>,
    lambda: Vec<f64>,
    others: Vec<usize>,
    /// Centroid of the face {q} + K in c-coordinates.
    center: Vec<f64>,
    radius: f64,
    label: String,
}

impl PieceChart {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn c_dim(&self) -> usize {
        self.covectors.len() - 1 - self.k.len()
    }

    pub fn dim(&self) -> usize {
        self.covectors.len() - 1
    }

    fn beta(&self, m: usize, y: &[f64]) -> f64 {
        let f = &self.forms[m];
        f.coef.iter().zip(y).map(|(c, v)| c * v).sum::<f64>() + f.constant
    }
}

pub fn default_epsilon(delta: &DeltaLambda) -> f64 {
    (0.1 * to_f64(&delta.min_gap())).clamp(0.02, 0.3)
}

fn subsets_of(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &x in items {
        let extra: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(x);
                t
            })
            .collect();
        out.extend(extra);
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// One chart per (q, K) whose facets meet.
pub fn build_charts(datum: &MirrorDatum, epsilon: f64) -> Result<Vec<PieceChart>> {
    if !(epsilon > 0.0) {
        return Err(PeriodError::InvalidArgument(format!("band width {epsilon} must be positive")));
    }
    let delta = build_delta_lambda(datum)?;
    let d = datum.dim();
    let vectors: Vec<&Vec<i64>> = datum.vectors().iter().map(|v| &v.0).collect();
    let lambda: Vec<f64> = datum.weights().iter().map(to_f64).collect();
    let mut charts = Vec::new();
    for q in 0..datum.len() {
        let rest: Vec<usize> = (0..datum.len()).filter(|&j| j != q).collect();
        for k in subsets_of(&rest, d - 1) {
            let mut face: BTreeSet<usize> = k.iter().copied().collect();
            face.insert(q);
            if !delta.facets_meet(&face) {
                continue;
            }
            let mut rows: Vec<Vec<i64>> = vec![vectors[q].clone()];
            for &j in &k {
                rows.push(vectors[j].iter().zip(vectors[q]).map(|(a, b)| a - b).collect());
            }
            let comp = complete_basis(&rows, d).ok_or_else(|| {
                PeriodError::InvalidArgument(format!("covectors of chart q={q}, K={k:?} are dependent"))
            })?;
            rows.extend(comp);
            let m: Vec<Vec<Rat>> = rows.iter().map(|r| int_row(r)).collect();
            let dm = det(&m);
            if dm.is_zero() {
                return Err(PeriodError::InvalidArgument(format!("chart q={q}, K={k:?} is degenerate")));
            }
            let minv = inverse(&m).expect("nonsingular");
            // shift: y - shift = M p
            let w = datum.weights();
            let mut shift: Vec<Rat> = vec![w[q].clone()];
            for &j in &k {
                shift.push(&w[j] - &w[q]);
            }
            shift.resize(d, Rat::zero());
            let forms = (0..datum.len())
                .map(|mi| {
                    let coef: Vec<Rat> = (0..d)
                        .map(|i| (0..d).fold(Rat::zero(), |acc, l| acc + &minv[l][i] * Rat::from_integer(vectors[mi][l].into())))
                        .collect();
                    let constant = coef.iter().zip(&shift).fold(w[mi].clone(), |acc, (c, s)| acc - c * s);
                    AffineForm { coef: coef.iter().map(to_f64).collect(), constant: to_f64(&constant) }
                })
                .collect();
            let cstart = 1 + k.len();
            let verts: Vec<Vec<f64>> = delta
                .v
                .face_vertices(&face)
                .into_iter()
                .map(|vi| {
                    let p: Vec<f64> = delta.v.vertices[vi].iter().map(to_f64).collect();
                    rows[cstart..].iter().map(|r| r.iter().zip(&p).map(|(a, b)| *a as f64 * b).sum()).collect()
                })
                .collect();
            let cd = d - cstart;
            let mut center = vec![0.0; cd];
            for v in &verts {
                for (c, x) in center.iter_mut().zip(v) {
                    *c += x / verts.len() as f64;
                }
            }
            let far = verts
                .iter()
                .map(|v| v.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let label = format!(
                "q={}, K={{{}}}",
                datum.vectors()[q],
                k.iter().map(|j| datum.vectors()[*j].to_string()).collect::<Vec<_>>().join(", ")
            );
            let mut others: Vec<usize> = (0..datum.len()).filter(|j| *j != q && !k.contains(j)).collect();
            others.sort_unstable();
            charts.push(PieceChart {
                q,
                k: k.clone(),
                covectors: rows,
                r: dm.abs().recip(),
                epsilon,
                forms,
                lambda: lambda.clone(),
                others,
                center,
                radius: 1.5 * far + 1.0,
                label,
            });
        }
    }
    Ok(charts)
}

#[derive(Debug, Default)]
struct Stats {
    solves: AtomicU64,
    iterations: AtomicU64,
    halvings: AtomicU64,
    empty_rays: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: u64,
    pub newton_iterations: u64,
    pub homotopy_halvings: u64,
    pub empty_rays: u64,
    pub failures: u64,
}

impl Stats {
    fn snapshot(&self) -> SolverStats {
        SolverStats {
            solves: self.solves.load(Ordering::Relaxed),
            newton_iterations: self.iterations.load(Ordering::Relaxed),
            homotopy_halvings: self.halvings.load(Ordering::Relaxed),
            empty_rays: self.empty_rays.load(Ordering::Relaxed),
            failures: 0,
        }
    }
}

/// Newton on log(sum_m exp(lt (alpha_m a + rest_m))) = 0, damped whenever the
/// residual grows.
fn newton_log_residual(alpha: &[f64], rest: &[f64], lt: f64, a0: f64, solve: &FiberSolve) -> Result<(f64, usize)> {
    let eval = |a: f64| {
        let mut mx = f64::NEG_INFINITY;
        for (al, r) in alpha.iter().zip(rest) {
            mx = mx.max(lt * (al * a + r));
        }
        let (mut s, mut ds) = (0.0, 0.0);
        for (al, r) in alpha.iter().zip(rest) {
            let e = (lt * (al * a + r) - mx).exp();
            s += e;
            ds += al * e;
        }
        (mx + s.ln(), lt * ds / s)
    };
    let mut a = a0;
    let (mut g, mut dg) = eval(a);
    for it in 0..solve.max_iter {
        if g.abs() <= solve.tol {
            return Ok((a, it));
        }
        if dg == 0.0 || !dg.is_finite() {
            break;
        }
        let mut step = -g / dg;
        let mut accepted = false;
        for _ in 0..40 {
            let (g1, dg1) = eval(a + step);
            if g1.is_finite() && g1.abs() < g.abs() {
                a += step;
                g = g1;
                dg = dg1;
                accepted = true;
                break;
            }
            step *= solve.damping;
        }
        if !accepted {
            // residual at rounding level cannot decrease further
            if g.abs() <= 1e3 * solve.tol {
                return Ok((a, it));
            }
            break;
        }
    }
    if g.abs() <= solve.tol {
        return Ok((a, solve.max_iter));
    }
    Err(PeriodError::NewtonDiverged { residual: g.abs(), iterations: solve.max_iter })
}

/// Real fibre point: the chart coordinate a and every beta_m there.
#[derive(Debug, Clone)]
pub struct FiberPoint {
    pub a: f64,
    pub beta: Vec<f64>,
    /// w df/dw = sum alpha_m t^{beta_m}
    pub w_dfdw: f64,
}

fn solve_real(chart: &PieceChart, b: &[f64], c: &[f64], lt: f64, solve: &FiberSolve, stats: &Stats) -> Result<FiberPoint> {
    let mut y = Vec::with_capacity(1 + b.len() + c.len());
    y.push(0.0);
    y.extend_from_slice(b);
    y.extend_from_slice(c);
    let alpha: Vec<f64> = chart.forms.iter().map(|f| f.coef[0]).collect();
    let rest: Vec<f64> = (0..chart.forms.len()).map(|m| chart.beta(m, &y)).collect();
    let guess = -(1.0 + b.iter().map(|bk| (lt * bk).exp()).sum::<f64>()).ln() / lt;
    let (a, iters) = newton_log_residual(&alpha, &rest, lt, guess, solve)?;
    stats.solves.fetch_add(1, Ordering::Relaxed);
    stats.iterations.fetch_add(iters as u64, Ordering::Relaxed);
    let beta: Vec<f64> = alpha.iter().zip(&rest).map(|(al, r)| al * a + r).collect();
    let w_dfdw = alpha.iter().zip(&beta).map(|(al, be)| al * (lt * be).exp()).sum();
    Ok(FiberPoint { a, beta, w_dfdw })
}

/// Transports a real point p with the given beta values along P = (1+u) p
/// while the phases rotate from 0 to theta. Returns u and the density ratio
/// (1+u)^n dF_0(p)/dG(p) between the transported and the real form.
fn phase_transport(
    beta: &[f64],
    lambda: &[f64],
    theta: &[f64],
    lt: f64,
    n: usize,
    solve: &FiberSolve,
    stats: &Stats,
) -> Result<(Complex64, Complex64)> {
    let v: Vec<f64> = beta.iter().zip(lambda).map(|(b, l)| b - l).collect();
    let tb: Vec<f64> = beta.iter().map(|b| (lt * b).exp()).collect();
    let terms = |u: Complex64, s: f64| -> (Complex64, Complex64, Complex64) {
        let (mut r, mut ru, mut rs) = (Complex64::new(-1.0, 0.0), Complex64::zero(), Complex64::zero());
        for m in 0..v.len() {
            let e = Complex64::new(0.0, theta[m] * s).exp() * tb[m] * (u * lt * v[m]).exp();
            r += e;
            ru += e * (lt * v[m]);
            rs += e * Complex64::new(0.0, theta[m]);
        }
        (r, ru, rs)
    };
    let correct = |mut u: Complex64, s: f64| -> Option<(Complex64, usize)> {
        let (mut r, mut ru, _) = terms(u, s);
        for it in 0..solve.max_iter {
            if r.norm() <= solve.tol {
                return Some((u, it));
            }
            let mut step = -r / ru;
            let mut ok = false;
            for _ in 0..20 {
                let (r1, ru1, _) = terms(u + step, s);
                if r1.norm().is_finite() && r1.norm() < r.norm() {
                    u += step;
                    r = r1;
                    ru = ru1;
                    ok = true;
                    break;
                }
                step *= solve.damping;
            }
            if !ok {
                return (r.norm() <= 1e3 * solve.tol).then_some((u, it));
            }
        }
        (r.norm() <= solve.tol).then_some((u, solve.max_iter))
    };
    let base = 1.0 / solve.steps as f64;
    let mut s = 0.0;
    let mut u = Complex64::zero();
    let mut h = base;
    let mut halvings = 0u32;
    let mut attempts = 0usize;
    while s < 1.0 {
        attempts += 1;
        if attempts > 16 * solve.steps {
            return Err(PeriodError::HomotopyStuck { s });
        }
        let step = h.min(1.0 - s);
        let (_, ru, rs) = terms(u, s);
        let predicted = u - rs / ru * step;
        match correct(predicted, s + step) {
            Some((un, it)) if (un - predicted).norm() < 0.5 => {
                stats.iterations.fetch_add(it as u64, Ordering::Relaxed);
                u = un;
                s += step;
                h = (2.0 * h).min(base);
                halvings = 0;
            }
            _ => {
                halvings += 1;
                stats.halvings.fetch_add(1, Ordering::Relaxed);
                if halvings > solve.max_halvings {
                    return Err(PeriodError::HomotopyStuck { s });
                }
                h *= 0.5;
            }
        }
    }
    let one_u = Complex64::new(1.0, 0.0) + u;
    let df0: f64 = tb.iter().zip(&v).map(|(t, vm)| t * vm).sum();
    let dg: Complex64 = (0..v.len())
        .map(|m| Complex64::new(0.0, theta[m]).exp() * tb[m] * (u * lt * v[m]).exp() * v[m])
        .sum();
    Ok((u, one_u.powi(n as i32) * df0 / dg))
}

/// The chart coordinate a on the transported cycle at (b, c).
pub fn solve_fiber(chart: &PieceChart, b: &[f64], c: &[f64], t: f64, theta: &[f64], solve: &FiberSolve) -> Result<Complex64> {
    check_t(t)?;
    if b.len() != chart.k.len() || c.len() != chart.c_dim() || theta.len() != chart.lambda.len() {
        return Err(PeriodError::InvalidArgument("coordinate lengths do not match the chart".into()));
    }
    let stats = Stats::default();
    let lt = t.ln();
    let p = solve_real(chart, b, c, lt, solve, &stats)?;
    if theta.iter().all(|x| *x == 0.0) {
        return Ok(Complex64::new(p.a, 0.0));
    }
    let (u, _) = phase_transport(&p.beta, &chart.lambda, theta, lt, chart.dim(), solve, &stats)?;
    let lq = chart.lambda[chart.q];
    Ok(Complex64::new(lq, 0.0) + (Complex64::new(1.0, 0.0) + u) * (p.a - lq))
}

/// Removes the part of theta of the form <m, psi>: it only translates the
/// cycle by an imaginary torus element, which leaves the integral unchanged.
/// What remains is c * lambda plus the least-squares residual; phases
/// proportional to the weights rotate every active monomial at the same rate.
pub fn reduce_phases(datum: &MirrorDatum, theta: &[f64]) -> Vec<f64> {
    let d = datum.dim();
    let lambda: Vec<f64> = datum.weights().iter().map(to_f64).collect();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|i| datum.vectors().iter().map(|m| m.0[i] as f64).collect())
        .chain(std::iter::once(lambda.clone()))
        .collect();
    let k = cols.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| dot(&cols[i], &cols[j])).collect();
            row.push(dot(&cols[i], theta));
            row
        })
        .collect();
    for c in 0..k {
        let piv = (c..k).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).expect("nonempty");
        a.swap(c, piv);
        if a[c][c].abs() < 1e-12 {
            return theta.to_vec();
        }
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    (0..theta.len())
        .map(|m| {
            let torus: f64 = (0..d).map(|i| coef[i] * cols[i][m]).sum();
            theta[m] - torus
        })
        .collect()
}

/// Largest phase component the radial transport follows reliably beyond
/// multiples of the weights; larger ones can switch branch unnoticed.
pub const MAX_TRANSVERSE_PHASE: f64 = std::f64::consts::FRAC_PI_4;

/// Reduced phases, rejecting those too far from the weight direction.
fn checked_phases(datum: &MirrorDatum, theta: &[f64]) -> Result<Vec<f64>> {
    let reduced = reduce_phases(datum, theta);
    let lambda: Vec<f64> = datum.weights().iter().map(to_f64).collect();
    let c = reduced.iter().zip(&lambda).map(|(x, l)| x * l).sum::<f64>() / lambda.iter().map(|l| l * l).sum::<f64>();
    let off = reduced.iter().zip(&lambda).map(|(x, l)| (x - c * l).abs()).fold(0.0, f64::max);
    if off > MAX_TRANSVERSE_PHASE {
        return Err(PeriodError::InvalidArgument(format!(
            "phases leave the weight direction by {off:.3} rad (limit {MAX_TRANSVERSE_PHASE:.3}); \
             transport along several Kahler directions is not supported"
        )));
    }
    Ok(reduced)
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 0.2) {
        return Err(PeriodError::InvalidArgument(format!("t = {t} outside (0, 0.2]")));
    }
    Ok(())
}

struct PieceCtx<'a> {
    chart: &'a PieceChart,
    lt: f64,
    theta: &'a [f64],
    phased: bool,
    solve: FiberSolve,
    scale: f64,
    stats: &'a Stats,
    failure: &'a Mutex<Option<PeriodError>>,
    tol: Tolerance,
}

impl PieceCtx<'_> {
    fn fail(&self, e: PeriodError) {
        let mut f = self.failure.lock().expect("failure slot poisoned");
        if f.is_none() {
            *f = Some(e);
        }
    }

    fn failed(&self) -> bool {
        self.failure.lock().expect("failure slot poisoned").is_some()
    }

    /// min over m outside {q}+K of beta_m - a - epsilon at (b, c), with its argmin.
    fn margin(&self, b: &[f64], c: &[f64]) -> Result<(f64, usize)> {
        let p = solve_real(self.chart, b, c, self.lt, &self.solve, self.stats)?;
        let mut best = (f64::INFINITY, usize::MAX);
        for &m in &self.chart.others {
            let g = p.beta[m] - p.a - self.chart.epsilon;
            if g < best.0 {
                best = (g, m);
            }
        }
        Ok(best)
    }

    fn density(&self, b: &[f64], c: &[f64]) -> Complex64 {
        if self.failed() {
            return Complex64::zero();
        }
        let p = match solve_real(self.chart, b, c, self.lt, &self.solve, self.stats) {
            Ok(p) => p,
            Err(e) => {
                self.fail(e);
                return Complex64::zero();
            }
        };
        let base = self.scale / p.w_dfdw.abs();
        if !self.phased {
            return Complex64::new(base, 0.0);
        }
        match phase_transport(&p.beta, &self.chart.lambda, self.theta, self.lt, self.chart.dim(), &self.solve, self.stats) {
            Ok((_, ratio)) => ratio * base,
            Err(e) => {
                self.fail(e);
                Complex64::zero()
            }
        }
    }

    fn member(&self, b: &[f64], c: &[f64]) -> bool {
        match self.margin(b, c) {
            Ok((g, _)) => g >= 0.0,
            Err(e) => {
                self.fail(e);
                false
            }
        }
    }

    /// Distance from the face centre to the region boundary along `dir`.
    fn boundary(&self, b: &[f64], dir: &[f64]) -> (f64, usize) {
        let c0 = &self.chart.center;
        let at = |rho: f64| -> (f64, usize) {
            let c: Vec<f64> = c0.iter().zip(dir).map(|(x, d)| x + rho * d).collect();
            match self.margin(b, &c) {
                Ok(v) => v,
                // far outside the chart the fibre equation has no real root
                Err(PeriodError::NewtonDiverged { .. }) if rho > 0.0 => (-1.0, usize::MAX),
                Err(e) => {
                    self.fail(e);
                    (-1.0, usize::MAX)
                }
            }
        };
        let (g0, m0) = at(0.0);
        if g0 < 0.0 {
            self.stats.empty_rays.fetch_add(1, Ordering::Relaxed);
            return (0.0, m0);
        }
        let rmax = self.chart.radius;
        const SCAN: usize = 48;
        let mut lo = (0.0, g0);
        let mut hi = None;
        for i in 1..=SCAN {
            let r = rmax * i as f64 / SCAN as f64;
            let (g, _) = at(r);
            if g < 0.0 {
                hi = Some((r, g));
                break;
            }
            lo = (r, g);
        }
        let Some(mut hi) = hi else {
            return (rmax, m0);
        };
        // Illinois regula falsi
        let mut side = 0;
        for _ in 0..100 {
            if hi.0 - lo.0 <= 1e-13 * rmax {
                break;
            }
            let r = (lo.0 * hi.1 - hi.0 * lo.1) / (hi.1 - lo.1);
            let r = if r > lo.0 && r < hi.0 { r } else { 0.5 * (lo.0 + hi.0) };
            let (g, _) = at(r);
            if g == 0.0 {
                lo = (r, g);
                hi = (r, g);
                break;
            }
            if g > 0.0 {
                lo = (r, g);
                if side == 1 {
                    hi.1 *= 0.5;
                }
                side = 1;
            } else {
                hi = (r, g);
                if side == -1 {
                    lo.1 *= 0.5;
                }
                side = -1;
            }
        }
        let r = 0.5 * (lo.0 + hi.0);
        // active constraint just inside the boundary
        let (_, m) = at(r * (1.0 - 1e-9));
        (r, m)
    }

    fn inner_tol(&self) -> Tolerance {
        Tolerance::new(self.tol.abs * 0.1, self.tol.rel * 0.1, self.tol.max_evals)
    }

    fn radial(&self, b: &[f64], dir: &[f64], power: i32) -> Complex64 {
        let (rmax, _) = self.boundary(b, dir);
        if rmax <= 0.0 || self.failed() {
            return Complex64::zero();
        }
        let c0 = &self.chart.center;
        let f = |rho: f64| {
            let c: Vec<f64> = c0.iter().zip(dir).map(|(x, d)| x + rho * d).collect();
            self.density(b, &c) * rho.powi(power)
        };
        match quadrature::adaptive(f, 0.0, rmax, &[], &self.inner_tol()) {
            Ok(e) => e.value,
            Err(e) => {
                self.fail(e.into());
                Complex64::zero()
            }
        }
    }

    /// Integral over the c-fibre at fixed b.
    fn fibre(&self, b: &[f64]) -> Complex64 {
        match self.chart.c_dim() {
            0 => {
                if self.member(b, &[]) {
                    self.density(b, &[])
                } else {
                    Complex64::zero()
                }
            }
            1 => self.radial(b, &[1.0], 0) + self.radial(b, &[-1.0], 0),
            2 => self.polar(b),
            _ => unreachable!("three-dimensional fibres go through the direction sampler"),
        }
    }

    fn polar(&self, b: &[f64]) -> Complex64 {
        let dir = |phi: f64| [phi.cos(), phi.sin()];
        let active = |phi: f64| self.boundary(b, &dir(phi)).1;
        const GRID: usize = 96;
        let tau = std::f64::consts::TAU;
        let acts: Vec<usize> = (0..GRID).map(|i| active(tau * i as f64 / GRID as f64)).collect();
        let mut breaks = Vec::new();
        for i in 0..GRID {
            let j = (i + 1) % GRID;
            if acts[i] == acts[j] {
                continue;
            }
            let (mut lo, mut hi) = (tau * i as f64 / GRID as f64, tau * (i + 1) as f64 / GRID as f64);
            for _ in 0..44 {
                let mid = 0.5 * (lo + hi);
                if active(mid) == acts[i] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        if self.failed() {
            return Complex64::zero();
        }
        let f = |phi: f64| self.radial(b, &dir(phi), 1);
        match quadrature::adaptive(f, 0.0, tau, &breaks, &self.inner_tol()) {
            Ok(e) => e.value,
            Err(e) => {
                self.fail(e.into());
                Complex64::zero()
            }
        }
    }

    /// Nested adaptive integration over b in [0, eps]^K.
    fn over_b(&self, prefix: &mut Vec<f64>, tol: &Tolerance) -> Result<Estimate<Complex64>> {
        let depth = prefix.len();
        if depth == self.chart.k.len() {
            let v = self.fibre(prefix);
            return Ok(Estimate { value: v, error: 0.0, evals: 1 });
        }
        let eps = self.chart.epsilon;
        let inner = self.inner_tol();
        let mut local = prefix.clone();
        let f = |bk: f64| {
            local.truncate(depth);
            local.push(bk);
            match self.over_b(&mut local.clone(), &inner) {
                Ok(e) => e.value,
                Err(e) => {
                    self.fail(e);
                    Complex64::zero()
                }
            }
        };
        Ok(quadrature::adaptive(f, 0.0, eps, &[], tol)?)
    }
}

/// Integral of the exact pulled-back volume form over one chart.
pub fn integrate_piece(chart: &PieceChart, t: f64, theta: &[f64], spec: &PeriodSpec) -> Result<Estimate<Complex64>> {
    let stats = Stats::default();
    integrate_piece_with(chart, t, theta, spec, &stats)
}

fn integrate_piece_with(chart: &PieceChart, t: f64, theta: &[f64], spec: &PeriodSpec, stats: &Stats) -> Result<Estimate<Complex64>> {
    check_t(t)?;
    spec.quad.validate().map_err(|e| PeriodError::InvalidArgument(e.to_string()))?;
    let lt = t.ln();
    let n = chart.dim();
    let failure = Mutex::new(None);
    let ctx = PieceCtx {
        chart,
        lt,
        theta,
        phased: theta.iter().any(|x| x.abs() > 1e-15),
        solve: spec.solve,
        scale: to_f64(&chart.r) * (-lt).powi(n as i32),
        stats,
        failure: &failure,
        tol: spec.quad.tolerance(),
    };
    let est = if chart.c_dim() == 3 {
        if !chart.k.is_empty() {
            return Err(PeriodError::InvalidArgument("fibres of dimension 3 need K empty".into()));
        }
        let e = quadrature::qmc(
            |u: &[f64]| {
                let z = 1.0 - 2.0 * u[0];
                let s = (1.0 - z * z).max(0.0).sqrt();
                let phi = std::f64::consts::TAU * u[1];
                ctx.radial(&[], &[s * phi.cos(), s * phi.sin(), z], 2) * (4.0 * std::f64::consts::PI)
            },
            2,
            spec.quad.qmc_points,
            8,
            spec.quad.seed,
        );
        Ok(e)
    } else {
        ctx.over_b(&mut Vec::new(), &spec.quad.tolerance())
    };
    if let Some(e) = failure.into_inner().expect("failure slot poisoned") {
        return Err(e);
    }
    // Inner integrals only report convergence, so add what their tolerance
    // guarantees: each nested level contributes at most a tenth of the
    // requested tolerance, integrated over the outer measure.
    let c_levels = match chart.c_dim() {
        0 => 0,
        1 => 1,
        2 => 2,
        _ => 1,
    };
    let outer = usize::from(!chart.k.is_empty() || chart.c_dim() == 3);
    let inner_levels = (chart.k.len() + c_levels + outer).saturating_sub(outer) as f64;
    let tol = spec.quad.tolerance();
    est.map(|mut e| {
        let measure = std::f64::consts::TAU * chart.epsilon.powi(chart.k.len() as i32);
        e.error += inner_levels * 0.1 * (tol.rel * e.value.norm() + tol.abs * measure);
        e
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodResult {
    pub t: f64,
    pub theta: Vec<f64>,
    pub epsilon: f64,
    pub value: Complex64,
    pub per_piece: BTreeMap<String, Complex64>,
    pub quadrature_error: f64,
    pub solver_stats: SolverStats,
}

/// Sum of all chart integrals; phases default to the datum's.
pub fn period(datum: &MirrorDatum, t: f64, theta: Option<&[f64]>, spec: &PeriodSpec) -> Result<PeriodResult> {
    check_t(t)?;
    if t > 0.1 {
        return Err(PeriodError::InvalidArgument(format!("t = {t} outside (0, 0.1]")));
    }
    let theta: Vec<f64> = theta.map(<[f64]>::to_vec).unwrap_or_else(|| datum.phases().to_vec());
    if theta.len() != datum.len() {
        return Err(PeriodError::InvalidArgument("phase count does not match the datum".into()));
    }
    let delta = build_delta_lambda(datum)?;
    let epsilon = spec.epsilon.unwrap_or_else(|| default_epsilon(&delta));
    let charts = build_charts(datum, epsilon)?;
    let stats = Stats::default();
    let reduced = checked_phases(datum, &theta)?;
    let pieces: Vec<Result<Estimate<Complex64>>> =
        charts.par_iter().map(|c| integrate_piece_with(c, t, &reduced, spec, &stats)).collect();
    let mut per_piece = BTreeMap::new();
    let mut value = Complex64::zero();
    let mut error = 0.0;
    for (chart, piece) in charts.iter().zip(pieces) {
        let est = piece.map_err(|e| PeriodError::Piece { chart: chart.label.clone(), source: Box::new(e) })?;
        value += est.value;
        error += est.error;
        per_piece.insert(chart.label.clone(), est.value);
    }
    Ok(PeriodResult { t, theta, epsilon, value, per_piece, quadrature_error: error, solver_stats: stats.snapshot() })
}

/// Radius of the real cycle in direction w: the root of
/// log sum_m t^{lambda_m + rho <m, w>} = 0.
fn radial_root(datum: &MirrorDatum, w: &[f64], lt: f64, solve: &FiberSolve) -> Result<(f64, Vec<f64>)> {
    let lambda: Vec<f64> = datum.weights().iter().map(to_f64).collect();
    let mw: Vec<f64> = datum.vectors().iter().map(|m| m.0.iter().zip(w).map(|(a, b)| *a as f64 * b).sum()).collect();
    // start on the polytope boundary, where one term equals 1
    let start = mw
        .iter()
        .zip(&lambda)
        .filter(|(d, _)| **d < 0.0)
        .map(|(d, l)| l / -d)
        .fold(f64::INFINITY, f64::min);
    if !start.is_finite() {
        return Err(PeriodError::InvalidArgument("direction escapes the polytope".into()));
    }
    let alpha: Vec<f64> = mw.clone();
    let (rho, _) = newton_log_residual(&alpha, &lambda, lt, start, solve)?;
    Ok((rho, mw))
}

/// Undecomposed period: integrates over the sphere of directions, each
/// direction meeting the real cycle once. Supports dimensions 2 and 3.
pub fn radial_period(datum: &MirrorDatum, t: f64, theta: Option<&[f64]>, spec: &PeriodSpec) -> Result<Estimate<Complex64>> {
    check_t(t)?;
    let d = datum.dim();
    let n = d - 1;
    let theta: Vec<f64> = theta.map(<[f64]>::to_vec).unwrap_or_else(|| datum.phases().to_vec());
    if theta.len() != datum.len() {
        return Err(PeriodError::InvalidArgument("phase count does not match the datum".into()));
    }
    let theta = checked_phases(datum, &theta)?;
    let phased = theta.iter().any(|x| x.abs() > 1e-15);
    let lt = t.ln();
    let lambda: Vec<f64> = datum.weights().iter().map(to_f64).collect();
    let stats = Stats::default();
    let failure: Mutex<Option<PeriodError>> = Mutex::new(None);
    let density = |w: &[f64]| -> Complex64 {
        let run = || -> Result<Complex64> {
            let (rho, mw) = radial_root(datum, w, lt, &spec.solve)?;
            let beta: Vec<f64> = lambda.iter().zip(&mw).map(|(l, m)| l + rho * m).collect();
            let denom: f64 = beta.iter().zip(&mw).map(|(b, m)| (lt * b).exp() * m).sum();
            let base = (-lt).powi(n as i32) * rho.powi(n as i32) / denom.abs();
            if !phased {
                return Ok(Complex64::new(base, 0.0));
            }
            let (_, ratio) = phase_transport(&beta, &lambda, &theta, lt, n, &spec.solve, &stats)?;
            Ok(ratio * base)
        };
        run().unwrap_or_else(|e| {
            failure.lock().unwrap().get_or_insert(e);
            Complex64::zero()
        })
    };
    let tol = spec.quad.tolerance();
    let delta = build_delta_lambda(datum)?;
    let est = match d {
        2 => {
            let mut breaks: Vec<f64> = delta
                .v
                .vertices
                .iter()
                .map(|p| to_f64(&p[1]).atan2(to_f64(&p[0])).rem_euclid(std::f64::consts::TAU))
                .collect();
            breaks.sort_by(f64::total_cmp);
            quadrature::adaptive(|phi| density(&[phi.cos(), phi.sin()]), 0.0, std::f64::consts::TAU, &breaks, &tol)?
        }
        3 => {
            let inner = Tolerance::new(tol.abs * 0.1, tol.rel * 0.1, tol.max_evals);
            let outer = |z: f64| {
                let s = (1.0 - z * z).max(0.0).sqrt();
                quadrature::adaptive(
                    |phi| density(&[s * phi.cos(), s * phi.sin(), z]),
                    0.0,
                    std::f64::consts::TAU,
                    &[],
                    &inner,
                )
                .map(|e| e.value)
                .unwrap_or_else(|e| {
                    failure.lock().unwrap().get_or_insert(e.into());
                    Complex64::zero()
                })
            };
            quadrature::adaptive(outer, -1.0, 1.0, &[], &tol)?
        }
        _ => return Err(PeriodError::InvalidArgument(format!("radial integration supports dimension 2 or 3, not {d}"))),
    };
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(est)
}

/// Right-hand side: the Gamma class integrated against sigma with the
/// t- and theta-twist.
pub fn rhs(datum: &MirrorDatum, table: &IntersectionTable, t: f64, theta: &[f64]) -> Result<Complex64> {
    let nv = datum.len();
    let d = datum.dim() as u32;
    let series = gamma_class(nv, d).map(|c| Complex64::new(c.eval(), 0.0));
    Ok(evaluate_on_x(&series, table, datum, t.ln(), theta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub t: f64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub defect: f64,
    pub quadrature_error: f64,
    pub at_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub rows: Vec<AsymptoticRow>,
    /// Least-squares slope of log(defect) against log(t) over rows above the floor.
    pub exponent: Option<f64>,
    pub monotone: bool,
    pub floor: bool,
    pub success: bool,
}

/// Defects below this multiple of the quadrature error are treated as noise.
const FLOOR_FACTOR: f64 = 10.0;

pub fn fit_asymptotics(datum: &MirrorDatum, t_list: &[f64], theta: Option<&[f64]>, spec: &PeriodSpec) -> Result<AsymptoticReport> {
    if t_list.len() < 3 {
        return Err(PeriodError::InvalidArgument("need at least three t values".into()));
    }
    if t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PeriodError::InvalidArgument("t values must decrease".into()));
    }
    let table = intersection_table(datum)?;
    fit_asymptotics_with(datum, &table, t_list, theta, spec)
}

/// As [`fit_asymptotics`], with a precomputed intersection table.
pub fn fit_asymptotics_with(
    datum: &MirrorDatum,
    table: &IntersectionTable,
    t_list: &[f64],
    theta: Option<&[f64]>,
    spec: &PeriodSpec,
) -> Result<AsymptoticReport> {
    if t_list.len() < 3 {
        return Err(PeriodError::InvalidArgument("need at least three t values".into()));
    }
    if t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PeriodError::InvalidArgument("t values must decrease".into()));
    }
    let theta_v: Vec<f64> = theta.map(<[f64]>::to_vec).unwrap_or_else(|| datum.phases().to_vec());
    let mut rows = Vec::new();
    for &t in t_list {
        let lhs = period(datum, t, Some(&theta_v), spec)?;
        let rhs = rhs(datum, table, t, &theta_v)?;
        let defect = (lhs.value - rhs).norm();
        let floor = FLOOR_FACTOR * lhs.quadrature_error.max(1e-13 * lhs.value.norm());
        rows.push(AsymptoticRow { t, lhs: lhs.value, rhs, defect, quadrature_error: lhs.quadrature_error, at_floor: defect <= floor });
    }
    Ok(summarize(rows))
}

pub fn summarize(rows: Vec<AsymptoticRow>) -> AsymptoticReport {
    let live: Vec<&AsymptoticRow> = rows.iter().filter(|r| !r.at_floor && r.defect > 0.0).collect();
    let exponent = (live.len() >= 2).then(|| {
        let xs: Vec<f64> = live.iter().map(|r| r.t.ln()).collect();
        let ys: Vec<f64> = live.iter().map(|r| r.defect.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    });
    let monotone = rows.windows(2).all(|w| w[1].at_floor || w[1].defect < w[0].defect);
    let floor = rows.iter().any(|r| r.at_floor);
    let success = monotone && exponent.is_none_or(|e| e > 0.0) && (exponent.is_some() || floor);
    AsymptoticReport { rows, exponent, monotone, floor, success }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::lattice_polytope::LatticeVector;

    fn datum(vs: &[&[i64]]) -> MirrorDatum {
        MirrorDatum::new(vs.iter().map(|v| LatticeVector(v.to_vec())).collect(), vec![rat(1); vs.len()], None).unwrap()
    }

    fn p2() -> MirrorDatum {
        datum(&[&[1, 0], &[0, 1], &[-1, -1]])
    }

    #[test]
    fn chart_counts() {
        let charts = build_charts(&p2(), 0.2).unwrap();
        assert_eq!(charts.len(), 9);
        assert_eq!(charts.iter().filter(|c| c.k.is_empty()).count(), 3);
        let quartic = datum(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[-1, -1, -1]]);
        let charts = build_charts(&quartic, 0.2).unwrap();
        let sizes: Vec<usize> = (0..3).map(|s| charts.iter().filter(|c| c.k.len() == s).count()).collect();
        assert_eq!(sizes, vec![4, 12, 12]);
        assert!(build_charts(&p2(), 0.0).is_err());
    }

    #[test]
    fn chart_forms_reproduce_coordinates() {
        for c in build_charts(&p2(), 0.2).unwrap() {
            // beta_q = a, beta_k = a + b_k
            let y = [0.3, -0.7];
            assert!((c.beta(c.q, &y) - y[0]).abs() < 1e-15);
            for (i, &k) in c.k.iter().enumerate() {
                assert!((c.beta(k, &y) - y[0] - y[1 + i]).abs() < 1e-15);
            }
            if c.q == 0 && c.k == vec![1] {
                assert_eq!(c.r, rat(1));
            }
        }
    }

    #[test]
    fn fibre_examples() {
        let charts = build_charts(&p2(), 0.2).unwrap();
        let solve = FiberSolve::default();
        // with b = 0 and the third monomial negligible, a = log 2 / (-log t)
        let t = 1e-12;
        let chart = charts.iter().find(|c| c.k.len() == 1).unwrap();
        let a = solve_fiber(chart, &[0.0], &[], t, &[0.0; 3], &solve).unwrap();
        assert!((a.re - 2f64.ln() / -t.ln()).abs() < 1e-9, "{a}");
        // single active monomial, phase pi on it
        let chart = charts.iter().find(|c| c.k.is_empty()).unwrap();
        let c = chart.center.clone();
        let a0 = solve_fiber(chart, &[], &c, t, &[0.0; 3], &solve).unwrap();
        assert!(a0.norm() < 1e-9);
        let mut theta = [0.0; 3];
        theta[chart.q] = std::f64::consts::PI;
        let a = solve_fiber(chart, &[], &c, t, &theta, &solve).unwrap();
        assert!((a - Complex64::new(0.0, -std::f64::consts::PI / t.ln())).norm() < 1e-6, "{a}");
    }

    #[test]
    fn p2_period_matches_radial_oracle() {
        let spec = PeriodSpec::default();
        let t = 1e-4;
        let charts = period(&p2(), t, None, &spec).unwrap();
        let oracle = radial_period(&p2(), t, None, &spec).unwrap();
        assert!((charts.value - oracle.value).norm() < 1e-7 * oracle.value.norm(), "{} vs {}", charts.value, oracle.value);
        assert!((charts.value.re - 9.0 * -t.ln()).abs() < 1e-2);
        assert!(charts.value.im.abs() < 1e-12);
    }
}
