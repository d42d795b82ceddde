//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance`. The process exits
//! nonzero when a criterion fails, except for the entries in `KNOWN_FAILURES`,
//! whose literal target disagrees with the exact intersection table.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tropgamma::constants::zeta;
use tropgamma::exact::{rat, ratio, Rat};
use tropgamma::lattice_polytope::*;
use tropgamma::local_integrals::*;
use tropgamma::period_engine::*;
use tropgamma::zeta_series::*;

type Fallible<T> = std::result::Result<T, String>;

/// The literal quartic coefficient (1/2)·32 is half of ∫ω² = 64.
const KNOWN_FAILURES: &[&str] = &["8b"];

type Outcome = Fallible<(bool, String)>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn datum(vs: &[&[i64]], weights: Vec<Rat>) -> MirrorDatum {
    MirrorDatum::new(vs.iter().map(|v| LatticeVector(v.to_vec())).collect(), weights, None).unwrap()
}

fn p2() -> MirrorDatum {
    datum(&[&[1, 0], &[0, 1], &[-1, -1]], vec![rat(1); 3])
}

fn quartic() -> MirrorDatum {
    datum(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[-1, -1, -1]], vec![rat(1); 4])
}

fn quintic() -> MirrorDatum {
    datum(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1], &[-1, -1, -1, -1]], vec![rat(1); 5])
}

fn p1xp1() -> MirrorDatum {
    datum(&[&[1, 0], &[-1, 0], &[0, 1], &[0, -1]], vec![rat(1), rat(1), ratio(3, 2), ratio(3, 2)])
}

fn p112() -> MirrorDatum {
    datum(&[&[1, 0], &[0, 1], &[-1, -2]], vec![rat(1); 3])
}

fn local_integrals() -> Outcome {
    let spec = QuadratureSpec::default();
    let (z2, z3, z4, z5, z7) = (zeta(2), zeta(3), zeta(4), zeta(5), zeta(7));
    let cases: [(u32, Vec<u32>, f64, f64); 7] = [
        (1, vec![0], -z2 / 2.0, 1e-10),
        (1, vec![1], -0.75 * z3, 1e-8),
        (2, vec![0], -0.25 * z3, 1e-8),
        (1, vec![0, 0], -5.0 / 12.0 * z3, 1e-8),
        (1, vec![2], -1.75 * z4, 1e-6),
        (2, vec![2], 29.0 / 8.0 * z5 - 2.0 * z2 * z3, 1e-6),
        (2, vec![4], 753.0 / 8.0 * z7 - 42.0 * z3 * z4 - 24.0 * z2 * z5, 1e-5),
    ];
    let mut worst = String::new();
    let mut ok = true;
    for (ell, m, want, tol) in cases {
        let s = ISymbol::new(ell, m);
        let got = i_numeric(&s, &spec).map_err(err)?.value;
        let dev = (got - want).abs();
        ok &= dev <= tol;
        worst += &format!(" {s}:{dev:.1e}");
    }
    Ok((ok, format!("deviations{worst}")))
}

fn zeta_boundary() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut max: f64 = 0.0;
    for n in 2..=6 {
        let v = zeta_via_boundary(n, &spec).map_err(err)?;
        max = max.max((v.value - zeta(n)).abs());
    }
    Ok((max <= 1e-8, format!("n=2..6, max deviation {max:.1e}")))
}

fn isym(ell: u32, m: &[u32]) -> MixedPoly {
    MixedPoly::isym(ISymbol::new(ell, m.to_vec()))
}

fn combo(terms: &[(Rat, MixedPoly)]) -> MixedPoly {
    terms.iter().fold(MixedPoly::zeta(4), |acc, (c, p)| acc.add(&p.scale(c)))
}

fn relations() -> Outcome {
    let counts = weight_counts(10);
    let mut counts_ok = counts.len() == 9;
    for row in &counts {
        let symbols: usize = (1..row.weight).map(partition_count).sum();
        counts_ok &= row.symbols == symbols && row.relations == partition_count(row.weight) - 1;
    }
    let i10 = isym(1, &[0]);
    let expected = [
        combo(&[(ratio(1, 2), isym(1, &[2])), (ratio(1, 2), isym(2, &[1])), (ratio(1, 3), isym(3, &[0]))]),
        combo(&[(rat(4), i10.mul(&i10)), (rat(2), isym(1, &[2]))]),
        combo(&[
            (ratio(1, 2), isym(1, &[2])),
            (ratio(3, 2), isym(2, &[1])),
            (rat(-2), isym(1, &[1, 0])),
            (ratio(-3, 2), isym(2, &[0, 0])),
        ]),
        combo(&[(rat(2), isym(1, &[2])), (rat(-8), isym(1, &[1, 0])), (rat(4), isym(1, &[0, 0, 0]))]),
    ];
    let report = extract_relations(4);
    let w4: Vec<&Relation> = report.relations.iter().filter(|r| r.weight == 4).collect();
    let found = expected.iter().filter(|p| w4.iter().any(|r| &r.poly == *p)).count();
    let mut provider = numeric_provider(QuadratureSpec::default());
    let mut residual: f64 = 0.0;
    for r in &w4 {
        let v = r
            .eval_with(&mut |s: &ISymbol| {
                provider(s).map_err(|reason| SeriesError::IProviderFailure { symbol: s.to_string(), reason })
            })
            .map_err(err)?;
        residual = residual.max(v.abs());
    }
    let ok = counts_ok && w4.len() == 4 && found == 4 && residual <= 1e-7;
    Ok((ok, format!("counts k=2..10 {counts_ok}, weight-4 relations {found}/{} matched, max residual {residual:.1e}", w4.len())))
}

fn gamma_identity() -> Outcome {
    let mut provider = numeric_provider(QuadratureSpec::default());
    let g = g_hat_numeric(4, 6, &mut provider).map_err(err)?;
    let gamma = gamma_class(4, 6).map(|c| c.eval());
    let keys: BTreeSet<&Exponent> = g.coeffs().keys().chain(gamma.coeffs().keys()).collect();
    let series_dev = keys.iter().map(|e| (g.coeff(e) - gamma.coeff(e)).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fn_dev: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.95)).collect();
        let lhs = g_x_numeric(&d).map_err(err)?.value;
        let rhs = gamma_x_numeric(&d).map_err(err)?;
        fn_dev = fn_dev.max((lhs - rhs).abs());
    }
    let ok = series_dev <= 1e-5 && fn_dev <= 1e-6;
    Ok((ok, format!("{} coefficients, max deviation {series_dev:.1e}; G_X at 5 points, max deviation {fn_dev:.1e}", keys.len())))
}

fn defects_2d() -> Outcome {
    let rect = PolygonRegion::rectangle(-8.0, 16.0, -8.0, 8.0).map_err(err)?;
    let r = trop_defect_2d(&rect, 1e-4, &DefectSpec::default()).map_err(err)?;
    let b = 8.0;
    let hex = PolygonRegion::new(vec![[-b, -b], [0.0, -b], [b, 0.0], [b, b], [0.0, b], [-b, 0.0]]).map_err(err)?;
    let spec = DefectSpec { transverse_margin: None, ..Default::default() };
    let h = trop_defect_2d(&hex, 1e-4, &spec).map_err(err)?;
    let dr = (r.constant_given_length - zeta(3)).abs();
    let dh = (-h.constant - 1.25 * zeta(3)).abs();
    Ok((
        dr <= 1e-3 && dh <= 1e-3,
        format!("rectangle constant {:.6} (dev {dr:.1e}); kinked constant magnitude {:.6} (dev {dh:.1e})", r.constant_given_length, -h.constant),
    ))
}

fn collisions() -> Outcome {
    let spec = QuadratureSpec::default();
    let t = 1e-4;
    let two = |a| collision_model(CollisionKind::TwoSided { a, half_width: 10.0 }, t, &spec).map(|e| e.value);
    let d1 = (two(1.0).map_err(err)? + 2.0 * zeta(2)).abs();
    let d2 = (two(-1.0).map_err(err)? + zeta(2) / 2.0).abs();
    let mut coni: f64 = 0.0;
    for c in [0.0, 1.0, 2.0] {
        let v = collision_model(CollisionKind::Conifold { c }, t, &spec).map_err(err)?.value;
        coni = coni.max((v - conifold_closed_form(c)).abs());
    }
    let c2 = (conifold_closed_form(2.0) + 2.0 * zeta(2)).abs();
    let ok = d1 <= 1e-3 && d2 <= 1e-3 && coni <= 1e-6 && c2 <= 1e-12;
    Ok((ok, format!("a=+1 dev {d1:.1e}, a=-1 dev {d2:.1e}; conifold max dev {coni:.1e}, c=2 closed form dev {c2:.1e}")))
}

fn gamma_p2() -> Outcome {
    let spec = PeriodSpec::default();
    let report = fit_asymptotics(&p2(), &[1e-3, 1e-4, 1e-5], None, &spec).map_err(err)?;
    let rhs_dev = report.rows.iter().map(|r| (r.rhs - Complex64::new(-9.0 * r.t.ln(), 0.0)).norm()).fold(0.0, f64::max);
    let defects: Vec<String> = report.rows.iter().map(|r| format!("{:.2e}", r.defect)).collect();
    let charts = period(&p2(), 1e-3, None, &spec).map_err(err)?;
    let arc = radial_period(&p2(), 1e-3, None, &spec).map_err(err)?;
    let arc_dev = (charts.value - arc.value).norm();
    let tol = spec.quad.rel_tol * arc.value.norm();
    let exponent = report.exponent.unwrap_or(f64::NAN);
    let ok = rhs_dev <= 1e-9 && report.monotone && exponent > 0.5 && arc_dev <= 2.0 * tol;
    Ok((
        ok,
        format!(
            "defects [{}], monotone {}, exponent {exponent:.2}; arc oracle dev {arc_dev:.1e} (2x tol {:.1e})",
            defects.join(", "),
            report.monotone,
            2.0 * tol
        ),
    ))
}

struct Quartic {
    lhs: f64,
    logt: f64,
    table_rhs: f64,
    omega2: f64,
}

fn quartic_run() -> Fallible<Quartic> {
    let d = quartic();
    let table = intersection_table(&d).map_err(err)?;
    let t: f64 = 1e-3;
    let lhs = period(&d, t, None, &PeriodSpec::default()).map_err(err)?.value;
    let table_rhs = rhs(&d, &table, t, &[0.0; 4]).map_err(err)?;
    // ∫_X ω² with X = σ and ω = Σ λ_j D_j, paired exactly
    let w = SymSeries::linear(3, d.weights());
    let omega2 = SymSeries::<Rat>::sigma(4, 3).mul(&w.mul(&w));
    let omega2 = tropgamma::exact::to_f64(&table.pair(omega2.homogeneous(3).iter()));
    Ok(Quartic { lhs: lhs.re, logt: t.ln(), table_rhs: table_rhs.re, omega2 })
}

fn gamma_quartic_table(q: &Quartic) -> Outcome {
    let rel = ((q.lhs - q.table_rhs) / q.table_rhs).abs();
    let leading = 0.5 * q.omega2 * q.logt * q.logt;
    let constant = q.lhs - leading;
    let cdev = ((constant + 24.0 * zeta(2)) / (24.0 * zeta(2))).abs();
    Ok((
        rel <= 5e-3 && cdev <= 2e-2,
        format!(
            "LHS {:.6}, table RHS {:.6} (1/2·{}·L² − 24ζ(2)), rel {rel:.1e}; constant {constant:.5} (rel {cdev:.1e})",
            q.lhs, q.table_rhs, q.omega2
        ),
    ))
}

fn gamma_quartic_literal(q: &Quartic) -> Outcome {
    let literal = 0.5 * 32.0 * q.logt * q.logt - 24.0 * zeta(2);
    let rel = ((q.lhs - literal) / literal).abs();
    Ok((
        rel <= 5e-3,
        format!("literal RHS {literal:.6}, rel {rel:.2}; the leading coefficient needs ∫ω² = {} rather than 32", q.omega2),
    ))
}

fn gamma_quintic() -> Outcome {
    let d = quintic();
    let base = PeriodSpec::default();
    let spec = PeriodSpec { quad: QuadratureSpec { rel_tol: 1e-5, abs_tol: 1e-5, qmc_points: 4096, ..base.quad }, ..base };
    let t: f64 = 1e-3;
    let l = -t.ln();
    let lhs = period(&d, t, None, &spec).map_err(err)?.value;
    let want = 625.0 / 6.0 * l.powi(3) - 250.0 * zeta(2) * l + 200.0 * zeta(3);
    let rel = (lhs - want).norm() / want;
    Ok((rel <= 1e-2, format!("LHS {:.4}, RHS {want:.4}, rel {rel:.1e}", lhs.re)))
}

fn line_bundle() -> Outcome {
    let spec = PeriodSpec::default();
    let t: f64 = 1e-4;
    let theta = [TAU, 0.0, 0.0];
    let v = period(&p2(), t, Some(&theta), &spec).map_err(err)?.value;
    let want = Complex64::new(-9.0 * t.ln(), -6.0 * PI);
    let rel = (v - want).norm() / want.norm();
    let conj = period(&p2(), t, Some(&[-TAU, 0.0, 0.0]), &spec).map_err(err)?.value;
    let cdev = (conj - v.conj()).norm();
    let ctol = 2.0 * spec.quad.rel_tol * v.norm();
    Ok((rel <= 1e-2 && cdev <= ctol, format!("LHS {v:.6}, rel {rel:.1e}; conjugation dev {cdev:.1e} (tol {ctol:.1e})")))
}

/// Face volumes under rational shifts against the table pairing of
/// the face monomial with exp of the shifted Kähler class.
fn dh_exact(d: &MirrorDatum, rng: &mut ChaCha8Rng) -> Fallible<usize> {
    let delta = build_delta_lambda(d).map_err(err)?;
    let table = intersection_table(d).map_err(err)?;
    let n = d.len();
    let dim = d.dim();
    let step = delta.min_gap() / rat(40);
    let mut checked = 0;
    for e in exponents_of_degree(n, 1).into_iter().chain(exponents_of_degree(n, 2)) {
        let s: BTreeSet<usize> = e.iter().enumerate().filter(|(_, &x)| x > 0).map(|(i, _)| i).collect();
        if s.len() != e.iter().sum::<u32>() as usize || !delta.facets_meet(&s) {
            continue;
        }
        let mut shifts = Shifts { global: &step * rat(rng.random_range(0..4)), facet: BTreeMap::new() };
        for &j in &s {
            shifts.facet.insert(j, &step * rat(rng.random_range(0..4)));
        }
        let vol = face_volume(&delta, &s, &shifts).map_err(err)?;
        let c: Vec<Rat> = (0..n)
            .map(|j| &d.weights()[j] - &shifts.global - shifts.facet.get(&j).cloned().unwrap_or_else(|| rat(0)))
            .collect();
        let face = SymSeries::monomial(n, dim as u32, e.clone(), rat(1));
        let series = face.mul(&SymSeries::linear(dim as u32, &c).exp().map_err(err)?);
        let paired = table.pair(series.homogeneous(dim as u32).iter());
        if paired != vol {
            return Err(format!("face {s:?}: volume {vol} but table pairing {paired}"));
        }
        checked += 1;
    }
    Ok(checked)
}

fn structural() -> Outcome {
    let base = PeriodSpec::default();
    let vals: Vec<Complex64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&e| period(&p2(), 1e-3, None, &PeriodSpec { epsilon: Some(e), ..base }).map(|r| r.value).map_err(err))
        .collect::<Fallible<_>>()?;
    let tol = 2.0 * base.quad.rel_tol * vals[0].norm();
    let eps_dev = vals.iter().map(|v| (v - vals[0]).norm()).fold(0.0, f64::max);
    let q = period(&quartic(), 1e-2, None, &base).map_err(err)?;
    let positive = q.value.re > 0.0 && q.value.im == 0.0 && q.per_piece.values().all(|v| v.re > 0.0 && v.im == 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut faces = 0;
    for d in [p2(), p112(), p1xp1(), quartic(), quintic()] {
        faces += dh_exact(&d, &mut rng)?;
    }

    let mut exp_log = true;
    let g = gamma_class(3, 8);
    exp_log &= g.log().and_then(|s| s.exp()).map_err(err)? == g;
    for _ in 0..3 {
        let mut s = SymSeries::<Rat>::one(3, 8);
        for k in 1..=8 {
            for e in exponents_of_degree(3, k) {
                let c = ratio(rng.random_range(-9..10), rng.random_range(1..7));
                s = s.add(&SymSeries::monomial(3, 8, e, c));
            }
        }
        exp_log &= s.log().and_then(|l| l.exp()).map_err(err)? == s;
    }
    let ok = eps_dev <= tol && positive && exp_log;
    Ok((
        ok,
        format!(
            "epsilon dev {eps_dev:.1e} (tol {tol:.1e}); theta=0 real-positive {positive}; {faces} shifted faces exact; exp∘log exact through weight 8 {exp_log}"
        ),
    ))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1", local_integrals()),
        ("2", zeta_boundary()),
        ("3", relations()),
        ("4", gamma_identity()),
        ("5", defects_2d()),
        ("6", collisions()),
        ("7", gamma_p2()),
    ];
    match quartic_run() {
        Ok(q) => {
            results.push(("8a", gamma_quartic_table(&q)));
            results.push(("8b", gamma_quartic_literal(&q)));
        }
        Err(e) => {
            results.push(("8a", Err(e.clone())));
            results.push(("8b", Err(e)));
        }
    }
    results.push(("9", gamma_quintic()));
    results.push(("10", line_bundle()));
    results.push(("11", structural()));

    let mut unexpected = 0;
    for (id, outcome) in &results {
        let (pass, detail) = match outcome {
            Ok((p, d)) => (*p, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_FAILURES.contains(id);
        let note = if !pass && known { " [known: target disagrees with the exact table]" } else { "" };
        println!("criterion {id}: {} {detail}{note}", if pass { "PASS" } else { "FAIL" });
        if !pass && !known {
            unexpected += 1;
        }
    }
    println!("acceptance finished in {:.1?}; unexpected failures: {unexpected}", start.elapsed());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
