//! Datum files: lattice vectors, exact weights and optional phases.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use tropgamma::exact::{parse_rat, Rat};
use tropgamma::lattice_polytope::{LatticeVector, MirrorDatum};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatum {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    vectors: Vec<Vec<i64>>,
    weights: Vec<Value>,
    #[serde(default)]
    phases: Option<Vec<f64>>,
    /// Integer twist; phases become 2 pi nu.
    #[serde(default)]
    nu: Option<Vec<i64>>,
}

#[derive(Debug, Clone)]
pub struct LoadedDatum {
    pub name: String,
    pub description: Option<String>,
    pub datum: MirrorDatum,
}

fn weight(i: usize, v: &Value) -> Result<Rat, CliError> {
    let bad = |why: &str| CliError::Validation(format!("weights[{i}]: {why}"));
    match v {
        Value::String(s) => parse_rat(s.trim()).ok_or_else(|| bad(&format!("cannot parse {s:?} as a rational"))),
        Value::Number(n) if n.is_i64() => Ok(Rat::from_integer(n.as_i64().expect("checked").into())),
        Value::Number(n) => Err(bad(&format!("{n} is not an integer; write rationals as \"p/q\" strings"))),
        other => Err(bad(&format!("expected a string or integer, found {other}"))),
    }
}

pub fn parse_datum(text: &str, fallback_name: &str) -> Result<LoadedDatum, CliError> {
    let raw: RawDatum = serde_json::from_str(text).map_err(|e| {
        CliError::Validation(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let weights = raw.weights.iter().enumerate().map(|(i, v)| weight(i, v)).collect::<Result<Vec<_>, _>>()?;
    let phases = match (raw.phases, raw.nu) {
        (Some(_), Some(_)) => return Err(CliError::Validation("give either phases or nu, not both".into())),
        (Some(p), None) => Some(p),
        (None, Some(nu)) => Some(nu.iter().map(|k| std::f64::consts::TAU * *k as f64).collect()),
        (None, None) => None,
    };
    let vectors = raw.vectors.into_iter().map(LatticeVector).collect();
    let datum = MirrorDatum::new(vectors, weights, phases).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(LoadedDatum { name: raw.name.unwrap_or_else(|| fallback_name.to_string()), description: raw.description, datum })
}

pub fn load_datum(path: &Path) -> Result<LoadedDatum, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_datum(&text, &stem).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}
