//! Rational polyhedral geometry of the moment polytope.
//!
//! A mirror datum is a finite set of lattice covectors with positive weights.
//! From it we build the polytope `{p : <q,p> + lambda_q >= 0}`, check that it
//! is simple (its normal fan is simplicial), compute face volumes in the
//! residual normalisation and extract toric intersection numbers by exact
//! finite differences of face volumes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exact::{self, det, dot_int, fmt_rat, int_row, kernel_vector, rank, rat, solve, Rat};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("polytope is unbounded (recession direction {0})")]
    Unbounded(String),
    #[error("polytope is empty")]
    Empty,
    #[error("normal fan is not simplicial at vertex {vertex}: {active} active constraints")]
    NotSimplicial { vertex: String, active: usize },
    #[error("covector {0} supports no facet for the given weights")]
    DegenerateWeight(String),
    #[error("origin is not an interior point")]
    OriginNotInterior,
    #[error("shift changes the combinatorial type of the polytope")]
    ChamberCrossed,
    #[error("facets {0:?} have empty intersection")]
    FacetsDisjoint(Vec<usize>),
    #[error("invalid datum: {0}")]
    InvalidDatum(String),
}

pub type Result<T> = std::result::Result<T, PolytopeError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeVector(pub Vec<i64>);

impl LatticeVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_primitive(&self) -> bool {
        self.0.iter().fold(0i64, |g, &x| g.gcd(&x)) == 1
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn fmt_point(p: &[Rat]) -> String {
    let parts: Vec<String> = p.iter().map(fmt_rat).collect();
    format!("({})", parts.join(","))
}

/// Lattice covectors with positive weights and optional phases.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorDatum {
    dim: usize,
    vectors: Vec<LatticeVector>,
    weights: Vec<Rat>,
    phases: Vec<f64>,
}

impl MirrorDatum {
    pub fn new(vectors: Vec<LatticeVector>, weights: Vec<Rat>, phases: Option<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(|v| v.dim()).unwrap_or(0);
        if dim < 2 {
            return Err(PolytopeError::InvalidDatum("dimension must be at least 2".into()));
        }
        if vectors.iter().any(|v| v.dim() != dim) {
            return Err(PolytopeError::InvalidDatum("vectors of mixed dimension".into()));
        }
        if vectors.len() < dim + 1 {
            return Err(PolytopeError::InvalidDatum(format!(
                "need at least {} vectors in dimension {dim}, got {}",
                dim + 1,
                vectors.len()
            )));
        }
        let distinct: BTreeSet<_> = vectors.iter().collect();
        if distinct.len() != vectors.len() {
            return Err(PolytopeError::InvalidDatum("repeated vector".into()));
        }
        if weights.len() != vectors.len() {
            return Err(PolytopeError::InvalidDatum("weight count does not match vector count".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_positive()) {
            return Err(PolytopeError::InvalidDatum(format!("weight of {} is not positive", vectors[i])));
        }
        let phases = phases.unwrap_or_else(|| vec![0.0; vectors.len()]);
        if phases.len() != vectors.len() || phases.iter().any(|x| !x.is_finite()) {
            return Err(PolytopeError::InvalidDatum("phase list malformed".into()));
        }
        let datum = MirrorDatum { dim, vectors, weights, phases };
        // 0 interior to conv(V) iff no p != 0 has <q,p> >= 0 for all q.
        let cone = HPolytope::new(
            dim,
            datum.vectors.iter().map(|q| (q.clone(), Rat::one())).collect(),
        );
        match enumerate_vertices(&cone) {
            Ok(_) => Ok(datum),
            Err(PolytopeError::Unbounded(_)) => Err(PolytopeError::OriginNotInterior),
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[LatticeVector] {
        &self.vectors
    }

    pub fn weights(&self) -> &[Rat] {
        &self.weights
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn with_phases(&self, phases: Vec<f64>) -> Result<Self> {
        MirrorDatum::new(self.vectors.clone(), self.weights.clone(), Some(phases))
    }

    pub fn hpolytope(&self) -> HPolytope {
        HPolytope::new(
            self.dim,
            self.vectors.iter().cloned().zip(self.weights.iter().cloned()).collect(),
        )
    }

    /// Canonical hash of (V, lambda) with lambda cleared of denominators.
    pub fn fingerprint(&self) -> String {
        let lcm = self
            .weights
            .iter()
            .fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
        let mut h = Sha256::new();
        h.update(format!("d={};", self.dim));
        for (q, w) in self.vectors.iter().zip(&self.weights) {
            let scaled = (w * Rat::from_integer(lcm.clone())).to_integer();
            h.update(format!("{q}:{scaled};"));
        }
        h.update(format!("den={lcm}"));
        hex::encode(h.finalize())
    }
}

/// `{p : <normal_i, p> + offset_i >= 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    pub dim: usize,
    pub constraints: Vec<(LatticeVector, Rat)>,
}

impl HPolytope {
    pub fn new(dim: usize, constraints: Vec<(LatticeVector, Rat)>) -> Self {
        HPolytope { dim, constraints }
    }

    pub fn slack(&self, i: usize, p: &[Rat]) -> Rat {
        let (q, c) = &self.constraints[i];
        dot_int(&q.0, p) + c
    }

    fn with_offsets(&self, offsets: &[Rat]) -> HPolytope {
        HPolytope {
            dim: self.dim,
            constraints: self
                .constraints
                .iter()
                .zip(offsets)
                .map(|((q, _), c)| (q.clone(), c.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    pub vertices: Vec<Vec<Rat>>,
    pub incidence: Vec<BTreeSet<usize>>,
}

impl VPolytope {
    fn pattern(&self) -> Vec<BTreeSet<usize>> {
        let mut p = self.incidence.clone();
        p.sort();
        p
    }

    /// Indices of vertices lying on every constraint of `s`.
    pub fn face_vertices(&self, s: &BTreeSet<usize>) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| s.is_subset(&self.incidence[v]))
            .collect()
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// All vertices by brute-force intersection of d-subsets of constraints.
pub fn enumerate_vertices(h: &HPolytope) -> Result<VPolytope> {
    let d = h.dim;
    let m = h.constraints.len();
    let normals: Vec<Vec<Rat>> = h.constraints.iter().map(|(q, _)| int_row(&q.0)).collect();
    if rank(&normals) < d {
        return Err(PolytopeError::Unbounded("normals do not span".into()));
    }
    let mut found: BTreeMap<Vec<Rat>, BTreeSet<usize>> = BTreeMap::new();
    for sub in combinations(m, d) {
        let a: Vec<Vec<Rat>> = sub.iter().map(|&i| normals[i].clone()).collect();
        let b: Vec<Rat> = sub.iter().map(|&i| -h.constraints[i].1.clone()).collect();
        let Some(p) = solve(&a, &b) else { continue };
        if found.contains_key(&p) {
            continue;
        }
        let slacks: Vec<Rat> = (0..m).map(|i| h.slack(i, &p)).collect();
        if slacks.iter().any(|s| s.is_negative()) {
            continue;
        }
        let active = (0..m).filter(|&i| slacks[i].is_zero()).collect();
        found.insert(p, active);
    }
    if found.is_empty() {
        return Err(PolytopeError::Empty);
    }
    // Rays of the recession cone are cut out by d-1 tight homogeneous constraints.
    for sub in combinations(m, d - 1) {
        let rows: Vec<Vec<Rat>> = sub.iter().map(|&i| normals[i].clone()).collect();
        let Some(v) = kernel_vector(&rows) else { continue };
        for sign in [1i64, -1] {
            let v: Vec<Rat> = v.iter().map(|x| x * rat(sign)).collect();
            if normals.iter().all(|n| !exact_dot(n, &v).is_negative()) {
                return Err(PolytopeError::Unbounded(fmt_point(&v)));
            }
        }
    }
    let (vertices, incidence) = found.into_iter().unzip();
    Ok(VPolytope { vertices, incidence })
}

fn exact_dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).fold(Rat::zero(), |acc, (x, y)| acc + x * y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    pub dual: VPolytope,
    pub reflexive: bool,
}

/// `{q : <q,p> >= -1 for all p in P}` for P containing 0 in its interior.
pub fn polar_dual(p: &VPolytope, dim: usize) -> Result<DualResult> {
    let constraints = p
        .vertices
        .iter()
        .map(|v| {
            let den = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            let normal: Vec<i64> = v
                .iter()
                .map(|x| {
                    let n = (x * Rat::from_integer(den.clone())).to_integer();
                    i64::try_from(n).expect("vertex coordinate overflow")
                })
                .collect();
            (LatticeVector(normal), Rat::from_integer(den))
        })
        .collect();
    let h = HPolytope::new(dim, constraints);
    let dual = match enumerate_vertices(&h) {
        Ok(v) => v,
        Err(PolytopeError::Unbounded(_)) | Err(PolytopeError::Empty) => {
            return Err(PolytopeError::OriginNotInterior)
        }
        Err(e) => return Err(e),
    };
    // 0 must be strictly inside P: every dual vertex gives a facet with offset 1 > 0,
    // so only boundedness of the dual needs checking, done above.
    let integral = |vp: &VPolytope| vp.vertices.iter().flatten().all(|x| x.is_integer());
    let reflexive = integral(p) && integral(&dual);
    Ok(DualResult { dual, reflexive })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexReport {
    pub vertex: Vec<Rat>,
    pub active: BTreeSet<usize>,
    pub determinant: Rat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialReport {
    pub is_simplicial: bool,
    pub vertices: Vec<VertexReport>,
    pub facets_supported: Vec<bool>,
}

fn affine_dim(points: &[&Vec<Rat>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let base = points[0];
    let diffs: Vec<Vec<Rat>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    rank(&diffs)
}

pub fn simplicial_report(h: &HPolytope, v: &VPolytope) -> SimplicialReport {
    let d = h.dim;
    let vertices: Vec<VertexReport> = v
        .vertices
        .iter()
        .zip(&v.incidence)
        .map(|(p, act)| {
            let determinant = if act.len() == d {
                det(&act.iter().map(|&i| int_row(&h.constraints[i].0 .0)).collect::<Vec<_>>())
            } else {
                Rat::zero()
            };
            VertexReport { vertex: p.clone(), active: act.clone(), determinant }
        })
        .collect();
    let is_simplicial = vertices.iter().all(|r| r.active.len() == d && !r.determinant.is_zero());
    let facets_supported = (0..h.constraints.len())
        .map(|i| {
            let pts: Vec<&Vec<Rat>> = v
                .vertices
                .iter()
                .zip(&v.incidence)
                .filter(|(_, a)| a.contains(&i))
                .map(|(p, _)| p)
                .collect();
            !pts.is_empty() && affine_dim(&pts) == d - 1
        })
        .collect();
    SimplicialReport { is_simplicial, vertices, facets_supported }
}

#[derive(Debug, Clone)]
pub struct DeltaLambda {
    pub h: HPolytope,
    pub v: VPolytope,
    pub report: SimplicialReport,
}

impl DeltaLambda {
    /// Smallest positive slack of a non-incident constraint at a vertex.
    pub fn min_gap(&self) -> Rat {
        let mut best: Option<Rat> = None;
        for (p, act) in self.v.vertices.iter().zip(&self.v.incidence) {
            for i in 0..self.h.constraints.len() {
                if act.contains(&i) {
                    continue;
                }
                let s = self.h.slack(i, p);
                if best.as_ref().is_none_or(|b| &s < b) {
                    best = Some(s);
                }
            }
        }
        best.unwrap_or_else(Rat::one)
    }

    /// Whether the facets in `s` meet in a common face.
    pub fn facets_meet(&self, s: &BTreeSet<usize>) -> bool {
        !self.v.face_vertices(s).is_empty()
    }
}

pub fn build_delta_lambda(datum: &MirrorDatum) -> Result<DeltaLambda> {
    let h = datum.hpolytope();
    let v = enumerate_vertices(&h)?;
    let report = simplicial_report(&h, &v);
    if let Some(i) = report.facets_supported.iter().position(|s| !s) {
        return Err(PolytopeError::DegenerateWeight(datum.vectors[i].to_string()));
    }
    if let Some(bad) = report
        .vertices
        .iter()
        .find(|r| r.active.len() != h.dim || r.determinant.is_zero())
    {
        return Err(PolytopeError::NotSimplicial {
            vertex: fmt_point(&bad.vertex),
            active: bad.active.len(),
        });
    }
    Ok(DeltaLambda { h, v, report })
}

/// Residual volume of the face cut out by the constraints `s` of a simple
/// polytope. The measure on a face is the quotient of the standard volume
/// by the covectors of `s`, so a vertex carries mass 1/|det|. Computed by
/// coning from an interior point: vol_S(F) = sum_i h_i vol_{S+i}(F_i) / dim F.
pub fn residual_volume(h: &HPolytope, v: &VPolytope, s: &BTreeSet<usize>) -> Result<Rat> {
    let mut memo = HashMap::new();
    residual_volume_memo(h, v, s, &mut memo)
}

fn residual_volume_memo(
    h: &HPolytope,
    v: &VPolytope,
    s: &BTreeSet<usize>,
    memo: &mut HashMap<BTreeSet<usize>, Rat>,
) -> Result<Rat> {
    if let Some(x) = memo.get(s) {
        return Ok(x.clone());
    }
    let d = h.dim;
    let verts = v.face_vertices(s);
    if verts.is_empty() {
        return Err(PolytopeError::FacetsDisjoint(s.iter().copied().collect()));
    }
    let normals: Vec<Vec<Rat>> = s.iter().map(|&i| int_row(&h.constraints[i].0 .0)).collect();
    if rank(&normals) != s.len() {
        return Err(PolytopeError::NotSimplicial {
            vertex: fmt_point(&v.vertices[verts[0]]),
            active: s.len(),
        });
    }
    let face_dim = d - s.len();
    let out = if face_dim == 0 {
        det(&normals).abs().recip()
    } else {
        let pts: Vec<&Vec<Rat>> = verts.iter().map(|&i| &v.vertices[i]).collect();
        if affine_dim(&pts) != face_dim {
            return Err(PolytopeError::NotSimplicial {
                vertex: fmt_point(pts[0]),
                active: s.len(),
            });
        }
        let n = Rat::from_integer(BigInt::from(pts.len()));
        let centre: Vec<Rat> = (0..d)
            .map(|j| pts.iter().fold(Rat::zero(), |acc, p| acc + &p[j]) / &n)
            .collect();
        let mut total = Rat::zero();
        for i in 0..h.constraints.len() {
            if s.contains(&i) {
                continue;
            }
            let mut si = s.clone();
            si.insert(i);
            let sub = v.face_vertices(&si);
            if sub.is_empty() {
                continue;
            }
            let sub_pts: Vec<&Vec<Rat>> = sub.iter().map(|&k| &v.vertices[k]).collect();
            if affine_dim(&sub_pts) + 1 != face_dim {
                continue;
            }
            let height = h.slack(i, &centre);
            total += height * residual_volume_memo(h, v, &si, memo)?;
        }
        total / Rat::from_integer(BigInt::from(face_dim))
    };
    memo.insert(s.clone(), out.clone());
    Ok(out)
}

/// Shifts applied to the weights before measuring a face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Shifts {
    /// Global shift `a`: every weight decreases by `a`.
    pub global: Rat,
    /// Per-facet shifts `b_j` for facets in the face set.
    pub facet: BTreeMap<usize, Rat>,
}

impl DeltaLambda {
    fn shifted_offsets(&self, shifts: &Shifts) -> Vec<Rat> {
        self.h
            .constraints
            .iter()
            .enumerate()
            .map(|(i, (_, c))| {
                let b = shifts.facet.get(&i).cloned().unwrap_or_else(Rat::zero);
                c - &shifts.global - b
            })
            .collect()
    }

    /// The shifted polytope, provided its combinatorial type is unchanged.
    fn shifted(&self, shifts: &Shifts) -> Result<(HPolytope, VPolytope)> {
        let h = self.h.with_offsets(&self.shifted_offsets(shifts));
        let v = match enumerate_vertices(&h) {
            Ok(v) => v,
            Err(PolytopeError::Empty) | Err(PolytopeError::Unbounded(_)) => {
                return Err(PolytopeError::ChamberCrossed)
            }
            Err(e) => return Err(e),
        };
        if v.pattern() != self.v.pattern() {
            return Err(PolytopeError::ChamberCrossed);
        }
        Ok((h, v))
    }
}

/// Residual volume of the face `s` of the polytope with shifted weights.
pub fn face_volume(delta: &DeltaLambda, s: &BTreeSet<usize>, shifts: &Shifts) -> Result<Rat> {
    if !delta.facets_meet(s) {
        return Err(PolytopeError::FacetsDisjoint(s.iter().copied().collect()));
    }
    if let Some(j) = shifts.facet.keys().find(|j| !s.contains(j)) {
        return Err(PolytopeError::InvalidDatum(format!("shift given for facet {j} outside the face set")));
    }
    let (h, v) = delta.shifted(shifts)?;
    residual_volume(&h, &v, s)
}

/// Exponent vector over V; entries sum to d.
pub type Exponent = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTable {
    pub dim: usize,
    pub nvars: usize,
    pub fingerprint: String,
    #[serde(with = "table_entries")]
    pub entries: BTreeMap<Exponent, Rat>,
}

mod table_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Exponent, Rat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let as_str: BTreeMap<String, String> = m
            .iter()
            .map(|(k, v)| {
                let key: Vec<String> = k.iter().map(|x| x.to_string()).collect();
                (key.join(","), fmt_rat(v))
            })
            .collect();
        as_str.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<Exponent, Rat>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let key = k
                    .split(',')
                    .map(|x| x.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(serde::de::Error::custom)?;
                let val = exact::parse_rat(&v).ok_or_else(|| serde::de::Error::custom(format!("bad rational {v}")))?;
                Ok((key, val))
            })
            .collect()
    }
}

impl IntersectionTable {
    pub fn get(&self, e: &[u32]) -> Rat {
        self.entries.get(e).cloned().unwrap_or_else(Rat::zero)
    }

    /// Pairs a homogeneous degree-d polynomial (exponent -> coefficient) with the table.
    pub fn pair<'a>(&self, terms: impl IntoIterator<Item = (&'a Exponent, &'a Rat)>) -> Rat {
        terms
            .into_iter()
            .fold(Rat::zero(), |acc, (e, c)| acc + c * self.get(e))
    }
}

/// All exponent vectors of length `n` with entries summing to `total`.
pub fn exponents_of_degree(n: usize, total: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Exponent>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for x in (0..=left).rev() {
            cur[i] = x;
            rec(i + 1, left - x, cur, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(0, total, &mut cur, &mut out);
    out
}

const MAX_HALVINGS: u32 = 8;

fn binomial(n: u32, k: u32) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// `int prod_{i in S} D_i * D^k` from the mixed forward difference of the
/// face volume in the per-facet shifts.
fn mixed_number(delta: &DeltaLambda, s: &BTreeSet<usize>, k: &BTreeMap<usize, u32>) -> Result<Rat> {
    let degree: u32 = k.values().sum();
    if degree == 0 {
        return face_volume(delta, s, &Shifts::default());
    }
    let mut h = delta.min_gap() / Rat::from_integer(BigInt::from(4 * degree));
    let keys: Vec<usize> = k.keys().copied().collect();
    for _ in 0..=MAX_HALVINGS {
        match forward_difference(delta, s, k, &keys, &h) {
            Ok(diff) => {
                let scale = num_traits::pow(h.clone(), degree as usize);
                let sign = if degree % 2 == 0 { Rat::one() } else { -Rat::one() };
                return Ok(sign * diff / scale);
            }
            Err(PolytopeError::ChamberCrossed) => h /= rat(2),
            Err(e) => return Err(e),
        }
    }
    Err(PolytopeError::ChamberCrossed)
}

fn forward_difference(
    delta: &DeltaLambda,
    s: &BTreeSet<usize>,
    k: &BTreeMap<usize, u32>,
    keys: &[usize],
    h: &Rat,
) -> Result<Rat> {
    // Iterate over the grid j <= k; weight (-1)^{|k|-|j|} prod C(k_i, j_i).
    let mut j = vec![0u32; keys.len()];
    let total: u32 = k.values().sum();
    let mut acc = Rat::zero();
    loop {
        let mut shifts = Shifts::default();
        let mut weight = BigInt::one();
        for (idx, &key) in keys.iter().enumerate() {
            shifts.facet.insert(key, h * rat(j[idx] as i64));
            weight *= binomial(k[&key], j[idx]);
        }
        let js: u32 = j.iter().sum();
        if (total - js) % 2 == 1 {
            weight = -weight;
        }
        acc += face_volume(delta, s, &shifts)? * Rat::from_integer(weight);
        // next grid point
        let mut pos = 0;
        loop {
            if pos == keys.len() {
                return Ok(acc);
            }
            j[pos] += 1;
            if j[pos] <= k[&keys[pos]] {
                break;
            }
            j[pos] = 0;
            pos += 1;
        }
    }
}

pub fn intersection_number(delta: &DeltaLambda, e: &[u32]) -> Result<Rat> {
    let s: BTreeSet<usize> = e.iter().enumerate().filter(|(_, &x)| x > 0).map(|(i, _)| i).collect();
    if !delta.facets_meet(&s) {
        return Ok(Rat::zero());
    }
    let k: BTreeMap<usize, u32> = e
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 1)
        .map(|(i, &x)| (i, x - 1))
        .collect();
    mixed_number(delta, &s, &k)
}

pub fn intersection_table(datum: &MirrorDatum) -> Result<IntersectionTable> {
    let delta = build_delta_lambda(datum)?;
    let d = datum.dim() as u32;
    let mut entries = BTreeMap::new();
    for e in exponents_of_degree(datum.len(), d) {
        let v = intersection_number(&delta, &e)?;
        entries.insert(e, v);
    }
    Ok(IntersectionTable {
        dim: datum.dim(),
        nvars: datum.len(),
        fingerprint: datum.fingerprint(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn datum(vs: &[&[i64]], lambda: &[i64]) -> MirrorDatum {
        MirrorDatum::new(
            vs.iter().map(|v| LatticeVector(v.to_vec())).collect(),
            lambda.iter().map(|&x| rat(x)).collect(),
            None,
        )
        .unwrap()
    }

    fn pt(xs: &[i64]) -> Vec<Rat> {
        xs.iter().map(|&x| rat(x)).collect()
    }

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn unit_square_vertices() {
        let h = HPolytope::new(
            2,
            vec![
                (LatticeVector(vec![1, 0]), rat(1)),
                (LatticeVector(vec![-1, 0]), rat(1)),
                (LatticeVector(vec![0, 1]), rat(1)),
                (LatticeVector(vec![0, -1]), rat(1)),
            ],
        );
        let v = enumerate_vertices(&h).unwrap();
        assert_eq!(v.vertices.len(), 4);
        for (p, a) in v.vertices.iter().zip(&v.incidence) {
            assert!(p.iter().all(|x| x.abs() == rat(1)));
            assert_eq!(a.len(), 2);
        }
    }

    #[test]
    fn p2_and_simplex_vertices() {
        let p2 = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 1, 1]);
        let v = enumerate_vertices(&p2.hpolytope()).unwrap();
        let got: BTreeSet<_> = v.vertices.iter().cloned().collect();
        let want: BTreeSet<_> = [pt(&[-1, -1]), pt(&[2, -1]), pt(&[-1, 2])].into_iter().collect();
        assert_eq!(got, want);

        let s = datum(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[-1, -1, -1]], &[1, 1, 1, 1]);
        let v = enumerate_vertices(&s.hpolytope()).unwrap();
        assert_eq!(v.vertices.len(), 4);
        assert!(v.vertices.contains(&pt(&[3, -1, -1])));
    }

    #[test]
    fn unbounded_and_empty() {
        let h = HPolytope::new(
            2,
            vec![(LatticeVector(vec![1, 0]), rat(1)), (LatticeVector(vec![0, 1]), rat(1)), (LatticeVector(vec![1, 1]), rat(1))],
        );
        assert!(matches!(enumerate_vertices(&h), Err(PolytopeError::Unbounded(_))));
        let h = HPolytope::new(
            1 + 1,
            vec![
                (LatticeVector(vec![1, 0]), rat(-2)),
                (LatticeVector(vec![-1, 0]), rat(1)),
                (LatticeVector(vec![0, 1]), rat(1)),
                (LatticeVector(vec![0, -1]), rat(1)),
            ],
        );
        assert_eq!(enumerate_vertices(&h), Err(PolytopeError::Empty));
    }

    #[test]
    fn duals() {
        let square = VPolytope {
            vertices: vec![pt(&[1, 1]), pt(&[1, -1]), pt(&[-1, 1]), pt(&[-1, -1])],
            incidence: vec![BTreeSet::new(); 4],
        };
        let r = polar_dual(&square, 2).unwrap();
        assert!(r.reflexive);
        let got: BTreeSet<_> = r.dual.vertices.iter().cloned().collect();
        let want: BTreeSet<_> = [pt(&[1, 0]), pt(&[-1, 0]), pt(&[0, 1]), pt(&[0, -1])].into_iter().collect();
        assert_eq!(got, want);

        let tri = VPolytope {
            vertices: vec![pt(&[2, -1]), pt(&[-1, 2]), pt(&[-1, -1])],
            incidence: vec![BTreeSet::new(); 3],
        };
        let r = polar_dual(&tri, 2).unwrap();
        assert!(r.reflexive);
        let got: BTreeSet<_> = r.dual.vertices.iter().cloned().collect();
        let want: BTreeSet<_> = [pt(&[1, 0]), pt(&[0, 1]), pt(&[-1, -1])].into_iter().collect();
        assert_eq!(got, want);

        let half = VPolytope {
            vertices: vec![vec![exact::ratio(1, 2), rat(0)], pt(&[-1, 1]), pt(&[-1, -1])],
            incidence: vec![BTreeSet::new(); 3],
        };
        assert!(!polar_dual(&half, 2).unwrap().reflexive);

        let off = VPolytope {
            vertices: vec![pt(&[1, 0]), pt(&[2, 0]), pt(&[1, 1])],
            incidence: vec![BTreeSet::new(); 3],
        };
        assert_eq!(polar_dual(&off, 2), Err(PolytopeError::OriginNotInterior));
    }

    #[test]
    fn degenerate_weight() {
        let d = datum(&[&[1, 0], &[0, 1], &[-1, -1], &[1, 1]], &[1, 1, 1, 10]);
        assert!(matches!(build_delta_lambda(&d), Err(PolytopeError::DegenerateWeight(_))));
    }

    #[test]
    fn not_simplicial() {
        // Octahedron: four facets through each vertex.
        let mut vs = Vec::new();
        for a in [-1i64, 1] {
            for b in [-1i64, 1] {
                for c in [-1i64, 1] {
                    vs.push(vec![a, b, c]);
                }
            }
        }
        let refs: Vec<&[i64]> = vs.iter().map(|v| v.as_slice()).collect();
        let d = datum(&refs, &[1; 8]);
        assert!(matches!(build_delta_lambda(&d), Err(PolytopeError::NotSimplicial { active: 4, .. })));
    }

    #[test]
    fn origin_must_be_interior() {
        let r = MirrorDatum::new(
            vec![LatticeVector(vec![1, 0]), LatticeVector(vec![0, 1]), LatticeVector(vec![1, 1])],
            vec![rat(1); 3],
            None,
        );
        assert_eq!(r, Err(PolytopeError::OriginNotInterior));
    }

    #[test]
    fn face_volumes() {
        let p2 = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 1, 1]);
        let delta = build_delta_lambda(&p2).unwrap();
        assert_eq!(face_volume(&delta, &set(&[0]), &Shifts::default()).unwrap(), rat(3));
        assert_eq!(face_volume(&delta, &set(&[]), &Shifts::default()).unwrap(), exact::ratio(9, 2));

        let cube = MirrorDatum::new(
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                .iter()
                .map(|v| LatticeVector(v.to_vec()))
                .collect(),
            vec![exact::ratio(1, 2); 6],
            None,
        )
        .unwrap();
        let delta = build_delta_lambda(&cube).unwrap();
        assert_eq!(face_volume(&delta, &set(&[2]), &Shifts::default()).unwrap(), rat(1));
        assert_eq!(face_volume(&delta, &set(&[]), &Shifts::default()).unwrap(), rat(1));
        assert!(matches!(
            face_volume(&delta, &set(&[0, 1]), &Shifts::default()),
            Err(PolytopeError::FacetsDisjoint(_))
        ));
    }

    #[test]
    fn chamber_crossing_detected() {
        let p2 = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 1, 1]);
        let delta = build_delta_lambda(&p2).unwrap();
        let mut sh = Shifts::default();
        sh.facet.insert(0, rat(3));
        assert_eq!(face_volume(&delta, &set(&[0]), &sh), Err(PolytopeError::ChamberCrossed));
    }

    #[test]
    fn orbifold_vertex_mass() {
        // Weighted projective plane P(1,1,2): the vertex where normals (0,1) and
        // (-1,-2) meet has |det| = 1, the one for (1,0),(-1,-2) has |det| = 2.
        let d = datum(&[&[1, 0], &[0, 1], &[-1, -2]], &[1, 1, 1]);
        let delta = build_delta_lambda(&d).unwrap();
        assert_eq!(face_volume(&delta, &set(&[0, 2]), &Shifts::default()).unwrap(), exact::ratio(1, 2));
        let t = intersection_table(&d).unwrap();
        // D_x^2 = 1/2 on P(1,1,2) for the weight-one divisors.
        assert_eq!(t.get(&[2, 0, 0]), exact::ratio(1, 2));
        assert_eq!(t.get(&[0, 2, 0]), rat(2));
        assert_eq!(t.get(&[1, 0, 1]), exact::ratio(1, 2));
    }

    #[test]
    fn p2_table() {
        let p2 = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 1, 1]);
        let t = intersection_table(&p2).unwrap();
        assert_eq!(t.entries.len(), 6);
        assert!(t.entries.values().all(|v| *v == rat(1)));
    }

    #[test]
    fn p1xp1_table() {
        let d = datum(&[&[1, 0], &[-1, 0], &[0, 1], &[0, -1]], &[1, 1, 1, 1]);
        let t = intersection_table(&d).unwrap();
        assert_eq!(t.get(&[1, 0, 1, 0]), rat(1));
        assert_eq!(t.get(&[0, 1, 0, 1]), rat(1));
        assert_eq!(t.get(&[1, 1, 0, 0]), rat(0));
        assert_eq!(t.get(&[2, 0, 0, 0]), rat(0));
    }

    #[test]
    fn quintic_table() {
        let d = datum(
            &[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1], &[-1, -1, -1, -1]],
            &[1; 5],
        );
        let t = intersection_table(&d).unwrap();
        assert_eq!(t.entries.len(), 70);
        assert!(t.entries.values().all(|v| *v == rat(1)));
    }

    #[test]
    fn fingerprint_clears_denominators() {
        let a = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 1, 1]);
        let b = MirrorDatum::new(a.vectors().to_vec(), vec![exact::ratio(2, 2); 3], None).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = MirrorDatum::new(a.vectors().to_vec(), vec![rat(2); 3], None).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn table_json_round_trip() {
        let p2 = datum(&[&[1, 0], &[0, 1], &[-1, -1]], &[1, 2, 1]);
        let t = intersection_table(&p2).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: IntersectionTable = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
