//! Report assembly. Every report embeds the fully resolved configuration and
//! contains no timings, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use tropgamma::exact::fmt_rat;
use tropgamma::lattice_polytope::build_delta_lambda;
use tropgamma::local_integrals::{
    collision_model, conifold_closed_form, i_known, i_numeric, provider, trop_defect_2d, CollisionKind, DefectSpec,
    PolygonRegion, QuadratureSpec,
};
use tropgamma::period_engine::{self, default_epsilon, fit_asymptotics_with, rhs, PeriodSpec};
use tropgamma::zeta_series::{chern_euler, extract_relations, ISymbol, SeriesError};

use crate::cache::{self, CacheStatus};
use crate::datum::{load_datum, LoadedDatum};
use crate::{CliError, Format, PeriodArgs};

#[derive(Serialize)]
struct Report<C: Serialize, R: Serialize> {
    command: &'static str,
    config: C,
    result: R,
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Numeric(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Numeric(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cplx(z: Complex64) -> String {
    format!("{:.12}{:+.12}i", z.re, z.im)
}

#[derive(Serialize)]
struct PeriodConfig {
    datum: String,
    name: String,
    description: Option<String>,
    t: Vec<f64>,
    theta: Vec<f64>,
    epsilon: f64,
    spec: PeriodSpec,
    cache_dir: Option<String>,
}

fn setup(args: &PeriodArgs, t: Vec<f64>) -> Result<(LoadedDatum, PeriodConfig, PeriodSpec), CliError> {
    let loaded = load_datum(&args.datum)?;
    let theta = args.theta(&loaded.datum);
    if theta.len() != loaded.datum.len() {
        return Err(CliError::Validation(format!(
            "{} phases given for {} vectors",
            theta.len(),
            loaded.datum.len()
        )));
    }
    if let Some(bad) = t.iter().find(|t| !(**t > 0.0 && **t <= 0.1)) {
        return Err(CliError::Validation(format!("t = {bad} outside (0, 0.1]")));
    }
    let delta = build_delta_lambda(&loaded.datum).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut spec = args.spec();
    spec.quad.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let epsilon = spec.epsilon.unwrap_or_else(|| default_epsilon(&delta));
    spec.epsilon = Some(epsilon);
    let config = PeriodConfig {
        datum: args.datum.display().to_string(),
        name: loaded.name.clone(),
        description: loaded.description.clone(),
        t,
        theta,
        epsilon,
        spec,
        cache_dir: args.cache_dir().map(|d| d.display().to_string()),
    };
    Ok((loaded, config, spec))
}

fn table_with_status(
    datum: &tropgamma::lattice_polytope::MirrorDatum,
    dir: Option<&Path>,
) -> Result<tropgamma::lattice_polytope::IntersectionTable, CliError> {
    let (table, status) = cache::table_for(datum, dir)?;
    if status != CacheStatus::Disabled {
        eprintln!("intersection cache: {}", if status == CacheStatus::Hit { "hit" } else { "miss" });
    }
    Ok(table)
}

pub fn compare(args: &PeriodArgs, t: &[f64], format: Format) -> Result<String, CliError> {
    let (loaded, config, spec) = setup(args, t.to_vec())?;
    let table = table_with_status(&loaded.datum, args.cache_dir().as_deref())?;
    let fit = fit_asymptotics_with(&loaded.datum, &table, t, Some(&config.theta), &spec)?;
    let text = match format {
        Format::Json => json(&Report { command: "compare", config: &config, result: &fit }),
        Format::Csv => csv_text(
            &["t", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "defect"],
            fit.rows.iter().map(|r| {
                [r.t, r.lhs.re, r.lhs.im, r.rhs.re, r.rhs.im, r.defect].iter().map(|x| format!("{x:e}")).collect()
            }),
        )?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{} (dimension {}, {} vectors), epsilon = {}", config.name, loaded.datum.dim(), loaded.datum.len(), config.epsilon);
            let _ = writeln!(s, "{:>10}  {:>34}  {:>34}  {:>12}  {:>12}", "t", "lhs", "rhs", "defect", "quad error");
            for r in &fit.rows {
                let mark = if r.at_floor { " (floor)" } else { "" };
                let _ = writeln!(s, "{:>10.3e}  {:>34}  {:>34}  {:>12.4e}  {:>12.4e}{mark}", r.t, cplx(r.lhs), cplx(r.rhs), r.defect, r.quadrature_error);
            }
            let eps = fit.exponent.map_or("n/a (defects at the quadrature floor)".to_string(), |e| format!("{e:.3}"));
            let _ = writeln!(s, "fitted exponent: {eps}");
            let _ = writeln!(s, "defect monotone: {}", if fit.monotone { "yes" } else { "no" });
            s
        }
    };
    if !fit.success {
        print!("{text}");
        return Err(CliError::Numeric("defects do not decay".into()));
    }
    Ok(text)
}

#[derive(Serialize)]
struct PeriodOut {
    t: f64,
    theta: Vec<f64>,
    value: Complex64,
    rhs: Complex64,
    per_piece: BTreeMap<String, Complex64>,
    quadrature_error: f64,
    solver_stats: period_engine::SolverStats,
}

pub fn period(args: &PeriodArgs, t: f64, format: Format) -> Result<String, CliError> {
    let (loaded, config, spec) = setup(args, vec![t])?;
    let table = table_with_status(&loaded.datum, args.cache_dir().as_deref())?;
    let r = period_engine::period(&loaded.datum, t, Some(&config.theta), &spec)?;
    let out = PeriodOut {
        t,
        theta: r.theta.clone(),
        value: r.value,
        rhs: rhs(&loaded.datum, &table, t, &config.theta)?,
        per_piece: r.per_piece,
        quadrature_error: r.quadrature_error,
        solver_stats: r.solver_stats,
    };
    Ok(match format {
        Format::Json => json(&Report { command: "period", config: &config, result: &out }),
        Format::Csv => csv_text(
            &["chart", "re", "im"],
            out.per_piece.iter().map(|(k, v)| vec![k.clone(), v.re.to_string(), v.im.to_string()]),
        )?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{} at t = {t:e}, epsilon = {}", config.name, config.epsilon);
            for (k, v) in &out.per_piece {
                let _ = writeln!(s, "  {k:<40} {}", cplx(*v));
            }
            let _ = writeln!(s, "period      {}", cplx(out.value));
            let _ = writeln!(s, "prediction  {}", cplx(out.rhs));
            let _ = writeln!(s, "defect      {:.4e}  (quadrature error {:.2e})", (out.value - out.rhs).norm(), out.quadrature_error);
            let st = out.solver_stats;
            let _ = writeln!(s, "fibre solves {}, Newton steps {}, homotopy halvings {}", st.solves, st.newton_iterations, st.homotopy_halvings);
            s
        }
    })
}

#[derive(Serialize)]
struct RelationOut {
    weight: u32,
    partition: Vec<u32>,
    relation: String,
    residual: Option<f64>,
}

#[derive(Serialize)]
struct CountOut {
    weight: u32,
    symbols_below: usize,
    relations: usize,
}

pub fn relations(weight: u32, evaluate: bool, format: Format) -> Result<String, CliError> {
    if !(2..=12).contains(&weight) {
        return Err(CliError::Validation(format!("weight {weight} outside 2..=12")));
    }
    let report = extract_relations(weight);
    let counts: Vec<CountOut> = report
        .counts
        .iter()
        .map(|c| CountOut { weight: c.weight, symbols_below: c.symbols, relations: c.relations })
        .collect();
    let mut prov = provider(QuadratureSpec::default());
    let mut eval = |s: &ISymbol| prov(s).map_err(|reason| SeriesError::IProviderFailure { symbol: s.to_string(), reason });
    let mut rels = Vec::new();
    for r in report.relations.iter().filter(|r| r.weight == weight) {
        let residual = if evaluate { Some(r.eval_with(&mut eval).map_err(|e| CliError::Numeric(e.to_string()))?) } else { None };
        rels.push(RelationOut { weight: r.weight, partition: r.partition.clone(), relation: format!("{} = 0", r.poly), residual });
    }
    #[derive(Serialize)]
    struct Config {
        weight: u32,
        evaluate: bool,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        counts: &'a [CountOut],
        relations: &'a [RelationOut],
    }
    Ok(match format {
        Format::Json => json(&Report { command: "relations", config: Config { weight, evaluate }, result: Out { counts: &counts, relations: &rels } }),
        Format::Csv => csv_text(
            &["weight", "partition", "relation", "residual"],
            rels.iter().map(|r| {
                vec![
                    r.weight.to_string(),
                    r.partition.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                    r.relation.clone(),
                    r.residual.map(|x| x.to_string()).unwrap_or_default(),
                ]
            }),
        )?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:>6}  {:>8}  {:>9}", "weight", "symbols", "relations");
            for c in &counts {
                let _ = writeln!(s, "{:>6}  {:>8}  {:>9}", c.weight, c.symbols_below, c.relations);
            }
            let _ = writeln!(s, "\nrelations of weight {weight}:");
            for r in &rels {
                match r.residual {
                    Some(x) => {
                        let _ = writeln!(s, "  {}    [residual {x:.2e}]", r.relation);
                    }
                    None => {
                        let _ = writeln!(s, "  {}", r.relation);
                    }
                }
            }
            s
        }
    })
}

#[derive(Serialize)]
struct IntegralOut {
    symbol: String,
    weight: u32,
    value: f64,
    error: f64,
    closed_form: Option<String>,
    closed_value: Option<f64>,
    deviation: Option<f64>,
}

pub fn local_integrals(max_weight: u32, cutoff: f64, format: Format) -> Result<String, CliError> {
    if !(1..=6).contains(&max_weight) {
        return Err(CliError::Validation(format!("weight {max_weight} outside 1..=6")));
    }
    let spec = QuadratureSpec { cutoff, ..QuadratureSpec::default() };
    spec.validate()?;
    let mut rows = Vec::new();
    for w in 1..=max_weight {
        for sym in ISymbol::all_of_weight(w) {
            let est = i_numeric(&sym, &spec)?;
            let known = i_known(&sym);
            let closed_value = known.as_ref().map(|k| k.eval());
            rows.push(IntegralOut {
                symbol: sym.to_string(),
                weight: w,
                value: est.value,
                error: est.error,
                closed_form: known.map(|k| k.to_string()),
                closed_value,
                deviation: closed_value.map(|c| (est.value - c).abs()),
            });
        }
    }
    Ok(match format {
        Format::Json => json(&Report { command: "local-integrals", config: &spec, result: &rows }),
        Format::Csv => csv_text(
            &["symbol", "weight", "value", "error", "closed_form", "deviation"],
            rows.iter().map(|r| {
                vec![
                    r.symbol.clone(),
                    r.weight.to_string(),
                    r.value.to_string(),
                    r.error.to_string(),
                    r.closed_form.clone().unwrap_or_default(),
                    r.deviation.map(|d| d.to_string()).unwrap_or_default(),
                ]
            }),
        )?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<14} {:>3}  {:>22}  {:>9}  {:<24} {:>9}", "symbol", "wt", "quadrature", "error", "closed form", "deviation");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<14} {:>3}  {:>22.15}  {:>9.1e}  {:<24} {:>9}",
                    r.symbol,
                    r.weight,
                    r.value,
                    r.error,
                    r.closed_form.as_deref().unwrap_or("-"),
                    r.deviation.map_or("-".to_string(), |d| format!("{d:.1e}"))
                );
            }
            s
        }
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Rect([f64; 4]),
    Polygon(Vec<[f64; 2]>),
}

pub fn amoeba(region: Option<Region>, collision: Option<CollisionKind>, t: f64, no_margin: bool, format: Format) -> Result<String, CliError> {
    let dspec = DefectSpec { transverse_margin: if no_margin { None } else { DefectSpec::default().transverse_margin }, ..DefectSpec::default() };
    let qspec = QuadratureSpec::default();
    let defect = region
        .clone()
        .map(|r| {
            let poly = match r {
                Region::Rect([x0, x1, y0, y1]) => PolygonRegion::rectangle(x0, x1, y0, y1)?,
                Region::Polygon(v) => PolygonRegion::new(v)?,
            };
            trop_defect_2d(&poly, t, &dspec)
        })
        .transpose()?;
    #[derive(Serialize)]
    struct CollisionOut {
        value: f64,
        error: f64,
        closed_form: Option<f64>,
    }
    let coll = collision
        .map(|k| -> Result<CollisionOut, CliError> {
            let e = collision_model(k, t, &qspec)?;
            let closed_form = match k {
                CollisionKind::Conifold { c } => Some(conifold_closed_form(c)),
                CollisionKind::Slope { k, .. } => Some(-tropgamma::constants::zeta(2) / k as f64),
                CollisionKind::TwoSided { .. } => None,
            };
            Ok(CollisionOut { value: e.value, error: e.error, closed_form })
        })
        .transpose()?;
    #[derive(Serialize)]
    struct Config {
        t: f64,
        region: Option<Region>,
        collision: Option<CollisionKind>,
        defect_spec: DefectSpec,
        quadrature: QuadratureSpec,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        defect: Option<&'a tropgamma::local_integrals::DefectDecomposition>,
        collision: Option<&'a CollisionOut>,
    }
    let config = Config { t, region, collision, defect_spec: dspec, quadrature: qspec };
    Ok(match format {
        Format::Json => json(&Report { command: "amoeba", config, result: Out { defect: defect.as_ref(), collision: coll.as_ref() } }),
        Format::Csv => {
            let mut rows = Vec::new();
            if let Some(d) = &defect {
                for (k, v) in [
                    ("value", d.value),
                    ("error", d.error),
                    ("length_coeff", d.length_coeff),
                    ("constant", d.constant),
                    ("affine_length", d.affine_length),
                    ("constant_given_length", d.constant_given_length),
                ] {
                    rows.push(vec![format!("defect.{k}"), v.to_string()]);
                }
            }
            if let Some(c) = &coll {
                rows.push(vec!["collision.value".into(), c.value.to_string()]);
                rows.push(vec!["collision.error".into(), c.error.to_string()]);
                if let Some(f) = c.closed_form {
                    rows.push(vec!["collision.closed_form".into(), f.to_string()]);
                }
            }
            csv_text(&["quantity", "value"], rows)?
        }
        Format::Table => {
            let mut s = String::new();
            if let Some(d) = &defect {
                let _ = writeln!(s, "defect at t = {t:e}: {:.10} (error {:.1e})", d.value, d.error);
                let _ = writeln!(s, "  affine length           {:.10}", d.affine_length);
                let _ = writeln!(s, "  coefficient of -log t   {:.10}", d.length_coeff);
                let _ = writeln!(s, "  fitted constant         {:.10}", d.constant);
                let _ = writeln!(s, "  constant given length   {:.10}", d.constant_given_length);
            }
            if let Some(c) = &coll {
                let _ = writeln!(s, "collision model: {:.10} (error {:.1e})", c.value, c.error);
                if let Some(f) = c.closed_form {
                    let _ = writeln!(s, "  closed form             {f:.10}");
                }
            }
            s
        }
    })
}

pub fn chern(path: &Path, dir: Option<&Path>, format: Format) -> Result<String, CliError> {
    let loaded = load_datum(path)?;
    let table = table_with_status(&loaded.datum, dir)?;
    let data = chern_euler(&table);
    let classes: Vec<BTreeMap<String, String>> = data
        .classes
        .iter()
        .map(|c| {
            c.iter()
                .filter(|(_, v)| !rat_is_zero(v))
                .map(|(e, v)| (e.iter().map(u32::to_string).collect::<Vec<_>>().join(","), fmt_rat(v)))
                .collect()
        })
        .collect();
    #[derive(Serialize)]
    struct Config {
        datum: String,
        name: String,
        cache_dir: Option<String>,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        euler: String,
        chern_classes: &'a [BTreeMap<String, String>],
        dimension: usize,
        variables: usize,
        table_entries: usize,
        fingerprint: &'a str,
    }
    let out = Out {
        euler: fmt_rat(&data.euler),
        chern_classes: &classes,
        dimension: table.dim,
        variables: table.nvars,
        table_entries: table.entries.len(),
        fingerprint: &table.fingerprint,
    };
    let config = Config { datum: path.display().to_string(), name: loaded.name.clone(), cache_dir: dir.map(|d| d.display().to_string()) };
    Ok(match format {
        Format::Json => json(&Report { command: "chern", config, result: out }),
        Format::Csv => csv_text(
            &["quantity", "value"],
            [
                vec!["euler".to_string(), out.euler.clone()],
                vec!["dimension".into(), out.dimension.to_string()],
                vec!["variables".into(), out.variables.to_string()],
                vec!["table_entries".into(), out.table_entries.to_string()],
            ],
        )?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{}: Euler characteristic {}", loaded.name, out.euler);
            for (k, c) in classes.iter().enumerate() {
                let terms: Vec<String> = c.iter().map(|(e, v)| format!("{v}*D^({e})")).collect();
                let _ = writeln!(s, "  c_{} = {}", k + 1, if terms.is_empty() { "0".into() } else { terms.join(" + ") });
            }
            let _ = writeln!(s, "intersection table: dimension {}, {} variables, {} entries", out.dimension, out.variables, out.table_entries);
            s
        }
    })
}

fn rat_is_zero(r: &tropgamma::exact::Rat) -> bool {
    *r.numer() == 0.into()
}
