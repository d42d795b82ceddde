//! Graded coefficient ring of zeta values, the Euler constant and formal
//! local-integral symbols, together with truncated power series in divisor
//! variables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use statrs::function::gamma::ln_gamma;

use crate::constants;
use crate::exact::{fmt_rat, rat, to_f64, Rat};
use crate::quadrature::{Estimate, GaussLegendre};
use crate::lattice_polytope::{Exponent, IntersectionTable, MirrorDatum};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("constant term must be {0}")]
    ConstantTerm(&'static str),
    #[error("series have {0} and {1} variables")]
    NvarsMismatch(usize, usize),
    #[error("series has {got} variables but the table has {want}")]
    DegreeMismatch { got: usize, want: usize },
    #[error("local integral provider failed for {symbol}: {reason}")]
    IProviderFailure { symbol: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    QuadratureNotConverged { value: f64, error: f64 },
}

pub type Result<T> = std::result::Result<T, SeriesError>;

/// Formal local integral `I_{l; m}`; `m` is kept in descending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ISymbol {
    pub ell: u32,
    pub m: Vec<u32>,
}

impl ISymbol {
    pub fn new(ell: u32, mut m: Vec<u32>) -> Self {
        assert!(ell >= 1 && !m.is_empty(), "I-symbol needs l >= 1 and a nonempty m");
        m.sort_unstable_by(|a, b| b.cmp(a));
        ISymbol { ell, m }
    }

    pub fn weight(&self) -> u32 {
        self.ell + self.m.iter().sum::<u32>() + self.m.len() as u32
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Every symbol of weight `k`, in canonical order.
    pub fn all_of_weight(k: u32) -> Vec<ISymbol> {
        let mut out = Vec::new();
        for ell in 1..k {
            for parts in partitions(k - ell) {
                out.push(ISymbol::new(ell, parts.iter().map(|x| x - 1).collect()));
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for ISymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.m.iter().map(|x| x.to_string()).collect();
        write!(f, "I({};{})", self.ell, m.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Gamma,
    Zeta(u32),
    I(ISymbol),
}

impl Atom {
    pub fn weight(&self) -> u32 {
        match self {
            Atom::Gamma => 1,
            Atom::Zeta(k) => *k,
            Atom::I(s) => s.weight(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Gamma => write!(f, "gamma"),
            Atom::Zeta(k) => write!(f, "zeta({k})"),
            Atom::I(s) => write!(f, "{s}"),
        }
    }
}

/// Product of atoms with exponents, sorted by atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(Vec<(Atom, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom) -> Self {
        Monomial(vec![(a, 1)])
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().map(|(a, e)| a.weight() * e).sum()
    }

    pub fn factors(&self) -> &[(Atom, u32)] {
        &self.0
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut m: BTreeMap<Atom, u32> = self.0.iter().cloned().collect();
        for (a, e) in &other.0 {
            *m.entry(a.clone()).or_insert(0) += e;
        }
        Monomial(m.into_iter().collect())
    }

    pub fn has_isymbol(&self) -> bool {
        self.0.iter().any(|(a, _)| matches!(a, Atom::I(_)))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(a, e)| if *e == 1 { a.to_string() } else { format!("{a}^{e}") })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Polynomial over the rationals in zeta values, gamma and I-symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MixedPoly {
    terms: BTreeMap<Monomial, Rat>,
}

impl MixedPoly {
    pub fn constant(c: Rat) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn term(m: Monomial, c: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        MixedPoly { terms }
    }

    pub fn atom(a: Atom) -> Self {
        Self::term(Monomial::atom(a), Rat::one())
    }

    pub fn zeta(k: u32) -> Self {
        Self::atom(Atom::Zeta(k))
    }

    pub fn gamma() -> Self {
        Self::atom(Atom::Gamma)
    }

    pub fn isym(s: ISymbol) -> Self {
        Self::atom(Atom::I(s))
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, Rat> {
        &self.terms
    }

    pub fn coefficient(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Weights of the monomials present.
    pub fn weights(&self) -> BTreeSet<u32> {
        self.terms.keys().map(Monomial::weight).collect()
    }

    pub fn has_isymbols(&self) -> bool {
        self.terms.keys().any(Monomial::has_isymbol)
    }

    fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        let v = match self.terms.get(&m) {
            Some(old) => old + c,
            None => c,
        };
        if v.is_zero() {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn add(&self, o: &MixedPoly) -> MixedPoly {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(m.clone(), c.clone());
        }
        r
    }

    pub fn mul(&self, o: &MixedPoly) -> MixedPoly {
        let mut r = MixedPoly::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                r.add_term(m1.mul(m2), c1 * c2);
            }
        }
        r
    }

    pub fn scale(&self, r: &Rat) -> MixedPoly {
        if r.is_zero() {
            return MixedPoly::default();
        }
        MixedPoly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * r)).collect() }
    }

    /// Numeric value with zeta and gamma substituted and I-symbols supplied.
    pub fn eval_with(&self, isym: &mut dyn FnMut(&ISymbol) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut v = to_f64(c);
            for (a, e) in &m.0 {
                let x = match a {
                    Atom::Gamma => constants::euler_gamma(),
                    Atom::Zeta(k) => constants::zeta(*k),
                    Atom::I(s) => isym(s)?,
                };
                v *= x.powi(*e as i32);
            }
            acc += v;
        }
        Ok(acc)
    }

    /// Replaces each I-symbol by a polynomial where one is supplied.
    pub fn substitute(&self, known: &dyn Fn(&ISymbol) -> Option<MixedPoly>) -> MixedPoly {
        let mut out = MixedPoly::default();
        for (m, c) in &self.terms {
            let mut acc = MixedPoly::constant(c.clone());
            for (a, e) in &m.0 {
                let base = match a {
                    Atom::I(s) => known(s).unwrap_or_else(|| MixedPoly::atom(a.clone())),
                    _ => MixedPoly::atom(a.clone()),
                };
                for _ in 0..*e {
                    acc = acc.mul(&base);
                }
            }
            out = out.add(&acc);
        }
        out
    }
}

impl fmt::Display for MixedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            if m.0.is_empty() {
                write!(f, "{}", fmt_rat(&mag))?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rat(&mag))?;
            }
        }
        Ok(())
    }
}

/// A polynomial in zeta values and gamma only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZetaPoly(MixedPoly);

impl ZetaPoly {
    pub fn new(p: MixedPoly) -> Option<Self> {
        if p.has_isymbols() {
            None
        } else {
            Some(ZetaPoly(p))
        }
    }

    pub fn zeta(k: u32) -> Self {
        ZetaPoly(MixedPoly::zeta(k))
    }

    pub fn constant(c: Rat) -> Self {
        ZetaPoly(MixedPoly::constant(c))
    }

    pub fn as_mixed(&self) -> &MixedPoly {
        &self.0
    }

    pub fn into_mixed(self) -> MixedPoly {
        self.0
    }

    pub fn eval(&self) -> f64 {
        self.0
            .eval_with(&mut |s| unreachable!("no I-symbols in a zeta polynomial, found {s}"))
            .unwrap()
    }

    /// Rational approximation with error below about 10^-50.
    pub fn eval_exact(&self) -> Rat {
        let mut acc = Rat::zero();
        for (m, c) in &self.0.terms {
            let mut v = c.clone();
            for (a, e) in &m.0 {
                let x = match a {
                    Atom::Gamma => constants::euler_gamma_exact().clone(),
                    Atom::Zeta(k) => constants::zeta_exact(*k).clone(),
                    Atom::I(_) => unreachable!(),
                };
                v *= num_traits::pow(x, *e as usize);
            }
            acc += v;
        }
        acc
    }

    pub fn eval_decimal(&self, digits: usize) -> String {
        constants::to_decimal(&self.eval_exact(), digits)
    }
}

impl fmt::Display for ZetaPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Coefficient ring for truncated series.
pub trait Coeff: Clone + PartialEq + fmt::Debug + Send + Sync {
    fn nil() -> Self;
    fn unit() -> Self;
    fn is_nil(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, r: &Rat) -> Self;
    fn neg(&self) -> Self {
        self.scale(&-Rat::one())
    }
}

impl Coeff for Rat {
    fn nil() -> Self {
        Zero::zero()
    }
    fn unit() -> Self {
        One::one()
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, r: &Rat) -> Self {
        self * r
    }
}

impl Coeff for f64 {
    fn nil() -> Self {
        0.0
    }
    fn unit() -> Self {
        1.0
    }
    fn is_nil(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, r: &Rat) -> Self {
        self * to_f64(r)
    }
}

impl Coeff for Complex64 {
    fn nil() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn unit() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn is_nil(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, r: &Rat) -> Self {
        self * to_f64(r)
    }
}

impl Coeff for MixedPoly {
    fn nil() -> Self {
        MixedPoly::default()
    }
    fn unit() -> Self {
        MixedPoly::constant(Rat::one())
    }
    fn is_nil(&self) -> bool {
        self.terms.is_empty()
    }
    fn add(&self, o: &Self) -> Self {
        MixedPoly::add(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        MixedPoly::mul(self, o)
    }
    fn scale(&self, r: &Rat) -> Self {
        MixedPoly::scale(self, r)
    }
}

impl Coeff for ZetaPoly {
    fn nil() -> Self {
        ZetaPoly::default()
    }
    fn unit() -> Self {
        ZetaPoly::constant(Rat::one())
    }
    fn is_nil(&self) -> bool {
        self.0.is_zero()
    }
    fn add(&self, o: &Self) -> Self {
        ZetaPoly(self.0.add(&o.0))
    }
    fn mul(&self, o: &Self) -> Self {
        ZetaPoly(self.0.mul(&o.0))
    }
    fn scale(&self, r: &Rat) -> Self {
        ZetaPoly(self.0.scale(r))
    }
}

/// Power series in `nvars` variables truncated above total degree `trunc`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSeries<C> {
    nvars: usize,
    trunc: u32,
    coeffs: BTreeMap<Exponent, C>,
}

fn factorial(n: u32) -> Rat {
    (1..=n).fold(Rat::one(), |acc, k| acc * rat(k as i64))
}

impl<C: Coeff> SymSeries<C> {
    pub fn zero(nvars: usize, trunc: u32) -> Self {
        SymSeries { nvars, trunc, coeffs: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, trunc: u32, c: C) -> Self {
        let mut s = Self::zero(nvars, trunc);
        s.set(vec![0; nvars], c);
        s
    }

    pub fn one(nvars: usize, trunc: u32) -> Self {
        Self::constant(nvars, trunc, C::unit())
    }

    /// The monomial `c * x^e`, dropped if above the truncation.
    pub fn monomial(nvars: usize, trunc: u32, e: Exponent, c: C) -> Self {
        let mut s = Self::zero(nvars, trunc);
        s.set(e, c);
        s
    }

    pub fn var(nvars: usize, trunc: u32, j: usize) -> Self {
        let mut e = vec![0; nvars];
        e[j] = 1;
        Self::monomial(nvars, trunc, e, C::unit())
    }

    /// `sum_j w_j x_j`.
    pub fn linear(trunc: u32, weights: &[C]) -> Self {
        let n = weights.len();
        let mut s = Self::zero(n, trunc);
        for (j, w) in weights.iter().enumerate() {
            let mut e = vec![0; n];
            e[j] = 1;
            s.set(e, w.clone());
        }
        s
    }

    pub fn sigma(nvars: usize, trunc: u32) -> Self {
        Self::linear(trunc, &vec![C::unit(); nvars])
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn trunc(&self) -> u32 {
        self.trunc
    }

    pub fn coeffs(&self) -> &BTreeMap<Exponent, C> {
        &self.coeffs
    }

    pub fn coeff(&self, e: &[u32]) -> C {
        self.coeffs.get(e).cloned().unwrap_or_else(C::nil)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&vec![0; self.nvars])
    }

    fn set(&mut self, e: Exponent, c: C) {
        assert_eq!(e.len(), self.nvars);
        if e.iter().sum::<u32>() > self.trunc || c.is_nil() {
            self.coeffs.remove(&e);
        } else {
            self.coeffs.insert(e, c);
        }
    }

    fn accumulate(&mut self, e: Exponent, c: C) {
        if e.iter().sum::<u32>() > self.trunc {
            return;
        }
        let v = match self.coeffs.get(&e) {
            Some(old) => old.add(&c),
            None => c,
        };
        self.set(e, v);
    }

    pub fn with_trunc(&self, trunc: u32) -> Self {
        let mut s = Self::zero(self.nvars, trunc);
        for (e, c) in &self.coeffs {
            s.set(e.clone(), c.clone());
        }
        s
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.nvars, o.nvars, "series variable count mismatch");
        let mut s = self.with_trunc(self.trunc.min(o.trunc));
        for (e, c) in &o.coeffs {
            s.accumulate(e.clone(), c.clone());
        }
        s
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        self.map(|c| c.neg())
    }

    pub fn scale(&self, r: &Rat) -> Self {
        self.map(|c| c.scale(r))
    }

    pub fn mul_coeff(&self, k: &C) -> Self {
        self.map(|c| c.mul(k))
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.nvars, o.nvars, "series variable count mismatch");
        let trunc = self.trunc.min(o.trunc);
        let mut s = Self::zero(self.nvars, trunc);
        for (e1, c1) in &self.coeffs {
            let d1: u32 = e1.iter().sum();
            for (e2, c2) in &o.coeffs {
                let d2: u32 = e2.iter().sum();
                if d1 + d2 > trunc {
                    continue;
                }
                let e: Exponent = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                s.accumulate(e, c1.mul(c2));
            }
        }
        s
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut r = Self::one(self.nvars, self.trunc);
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    /// exp of a series without constant term.
    pub fn exp(&self) -> Result<Self> {
        if !self.constant_term().is_nil() {
            return Err(SeriesError::ConstantTerm("zero for exp"));
        }
        let mut acc = Self::one(self.nvars, self.trunc);
        let mut power = Self::one(self.nvars, self.trunc);
        for k in 1..=self.trunc {
            power = power.mul(self);
            if power.coeffs.is_empty() {
                break;
            }
            acc = acc.add(&power.scale(&factorial(k).recip()));
        }
        Ok(acc)
    }

    /// log of a series with constant term one.
    pub fn log(&self) -> Result<Self> {
        if self.constant_term() != C::unit() {
            return Err(SeriesError::ConstantTerm("one for log"));
        }
        let t = self.sub(&Self::one(self.nvars, self.trunc));
        let mut acc = Self::zero(self.nvars, self.trunc);
        let mut power = Self::one(self.nvars, self.trunc);
        for k in 1..=self.trunc {
            power = power.mul(&t);
            if power.coeffs.is_empty() {
                break;
            }
            let c = Rat::new(BigInt::from(if k % 2 == 1 { 1 } else { -1 }), BigInt::from(k));
            acc = acc.add(&power.scale(&c));
        }
        Ok(acc)
    }

    pub fn homogeneous(&self, k: u32) -> BTreeMap<Exponent, C> {
        self.coeffs
            .iter()
            .filter(|(e, _)| e.iter().sum::<u32>() == k)
            .map(|(e, c)| (e.clone(), c.clone()))
            .collect()
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> SymSeries<D> {
        let mut s = SymSeries::zero(self.nvars, self.trunc);
        for (e, c) in &self.coeffs {
            s.set(e.clone(), f(c));
        }
        s
    }

    pub fn try_map<D: Coeff>(&self, mut f: impl FnMut(&C) -> Result<D>) -> Result<SymSeries<D>> {
        let mut s = SymSeries::zero(self.nvars, self.trunc);
        for (e, c) in &self.coeffs {
            s.set(e.clone(), f(c)?);
        }
        Ok(s)
    }
}

impl<C: Coeff + fmt::Display> SymSeries<C> {
    /// Exponent string -> coefficient string.
    pub fn dump(&self) -> BTreeMap<String, String> {
        self.coeffs
            .iter()
            .map(|(e, c)| {
                let k: Vec<String> = e.iter().map(|x| x.to_string()).collect();
                (k.join(","), c.to_string())
            })
            .collect()
    }
}

fn power_sum<C: Coeff>(nvars: usize, trunc: u32, k: u32) -> SymSeries<C> {
    let mut s = SymSeries::zero(nvars, trunc);
    for j in 0..nvars {
        let mut e = vec![0; nvars];
        e[j] = k;
        s.set(e, C::unit());
    }
    s
}

fn zeta_coeff(k: u32) -> ZetaPoly {
    let sign = if k % 2 == 0 { 1 } else { -1 };
    ZetaPoly::zeta(k).scale(&Rat::new(BigInt::from(sign), BigInt::from(k)))
}

/// `exp(sum_{k>=2} (-1)^k zeta(k)/k (sum_j D_j^k - sigma^k))`.
pub fn gamma_class(nvars: usize, trunc: u32) -> SymSeries<ZetaPoly> {
    let sigma = SymSeries::<ZetaPoly>::sigma(nvars, trunc);
    let mut log = SymSeries::zero(nvars, trunc);
    let mut sig_pow = sigma.clone();
    for k in 2..=trunc {
        sig_pow = sig_pow.mul(&sigma);
        let term = power_sum::<ZetaPoly>(nvars, trunc, k).sub(&sig_pow);
        log = log.add(&term.mul_coeff(&zeta_coeff(k)));
    }
    let exp_form = log.exp().expect("log has no constant term");
    debug_assert_eq!(exp_form, gamma_class_product(nvars, trunc));
    exp_form
}

/// `prod_j Gamma(1+D_j) / Gamma(1+sigma)` expanded through
/// `log Gamma(1+z) = -gamma z + sum_{k>=2} (-1)^k zeta(k) z^k / k`.
pub fn gamma_class_product(nvars: usize, trunc: u32) -> SymSeries<ZetaPoly> {
    let log_gamma = |x: &SymSeries<ZetaPoly>| {
        let mut acc = x.mul_coeff(&ZetaPoly(MixedPoly::gamma().scale(&-Rat::one())));
        let mut p = x.clone();
        for k in 2..=trunc {
            p = p.mul(x);
            acc = acc.add(&p.mul_coeff(&zeta_coeff(k)));
        }
        acc
    };
    let mut sum_lg = SymSeries::zero(nvars, trunc);
    for j in 0..nvars {
        sum_lg = sum_lg.add(&log_gamma(&SymSeries::var(nvars, trunc, j)));
    }
    let sigma = SymSeries::sigma(nvars, trunc);
    let num = sum_lg.exp().expect("no constant term");
    let den_inv = log_gamma(&sigma).neg().exp().expect("no constant term");
    num.mul(&den_inv)
}

/// Assignments `m: J -> Z_{>=0}` with `sum (m_j + 1)` at most `budget`.
fn exponent_assignments(len: usize, budget: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; len];
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        // m_i + 1 <= left - (remaining slots each needing 1)
        let remaining = (cur.len() - i - 1) as u32;
        if left < 1 + remaining {
            return;
        }
        for m in 0..=(left - 1 - remaining) {
            cur[i] = m;
            rec(i + 1, left - m - 1, cur, out);
        }
    }
    rec(0, budget, &mut cur, &mut out);
    out
}

/// `1 + sum I_{l;m}/(l! prod m_j!) (-D_q)(-sigma)^{l-1} prod_{j in J} (-D_j)^{m_j+1}`.
pub fn g_hat(nvars: usize, trunc: u32) -> SymSeries<MixedPoly> {
    let mut out = SymSeries::one(nvars, trunc);
    let sigma = SymSeries::<MixedPoly>::sigma(nvars, trunc);
    let sigma_pows: Vec<SymSeries<MixedPoly>> = (0..=trunc).map(|k| sigma.pow(k)).collect();
    for q in 0..nvars {
        let others: Vec<usize> = (0..nvars).filter(|&j| j != q).collect();
        for mask in 1u32..(1 << others.len()) {
            let j_set: Vec<usize> = (0..others.len()).filter(|b| mask & (1 << b) != 0).map(|b| others[b]).collect();
            let p = j_set.len() as u32;
            if 1 + p > trunc {
                continue;
            }
            for ell in 1..trunc {
                if ell + p > trunc {
                    break;
                }
                for m in exponent_assignments(j_set.len(), trunc - ell) {
                    let sym = ISymbol::new(ell, m.clone());
                    let weight = sym.weight();
                    if weight > trunc {
                        continue;
                    }
                    let denom = factorial(ell) * m.iter().fold(Rat::one(), |acc, &x| acc * factorial(x));
                    let sign = if weight % 2 == 0 { Rat::one() } else { -Rat::one() };
                    let mut e = vec![0u32; nvars];
                    e[q] = 1;
                    for (j, mj) in j_set.iter().zip(&m) {
                        e[*j] = mj + 1;
                    }
                    let coeff = MixedPoly::isym(sym).scale(&(sign / denom));
                    let mono = SymSeries::monomial(nvars, trunc, e, coeff);
                    out = out.add(&mono.mul(&sigma_pows[(ell - 1) as usize]));
                }
            }
        }
    }
    out
}

/// Ĝ with I-symbols replaced by numbers from `provider`; each symbol is requested once.
pub fn g_hat_numeric(
    nvars: usize,
    trunc: u32,
    provider: &mut dyn FnMut(&ISymbol) -> std::result::Result<f64, String>,
) -> Result<SymSeries<f64>> {
    let symbolic = g_hat(nvars, trunc);
    let mut cache: HashMap<ISymbol, f64> = HashMap::new();
    symbolic.try_map(|c| {
        c.eval_with(&mut |s: &ISymbol| {
            if let Some(v) = cache.get(s) {
                return Ok(*v);
            }
            let v = provider(s).map_err(|reason| SeriesError::IProviderFailure { symbol: s.to_string(), reason })?;
            cache.insert(s.clone(), v);
            Ok(v)
        })
    })
}

/// `int_X t^{-omega} e^{-i sum theta_q D_q} series`, with X homologous to sigma.
pub fn evaluate_on_x(
    series: &SymSeries<Complex64>,
    table: &IntersectionTable,
    datum: &MirrorDatum,
    logt: f64,
    theta: &[f64],
) -> Result<Complex64> {
    let n = table.nvars;
    if series.nvars() != n {
        return Err(SeriesError::DegreeMismatch { got: series.nvars(), want: n });
    }
    if datum.len() != n || theta.len() != n {
        return Err(SeriesError::NvarsMismatch(datum.len(), n));
    }
    let d = table.dim as u32;
    let weights: Vec<Complex64> = datum
        .weights()
        .iter()
        .zip(theta)
        .map(|(l, th)| Complex64::new(-logt * to_f64(l), -th))
        .collect();
    let exponent = SymSeries::linear(d, &weights);
    let total = SymSeries::<Complex64>::sigma(n, d)
        .mul(&exponent.exp()?)
        .mul(&series.with_trunc(d));
    let mut acc = Complex64::new(0.0, 0.0);
    for (e, c) in total.homogeneous(d) {
        acc += c * to_f64(&table.get(&e));
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChernData {
    pub euler: Rat,
    /// Homogeneous parts c_1, ..., c_{d-1} of the total Chern class of X.
    pub classes: Vec<BTreeMap<Exponent, Rat>>,
}

/// `prod (1 + D_j) / (1 + sigma)` with the top class paired against sigma.
pub fn chern_euler(table: &IntersectionTable) -> ChernData {
    let n = table.nvars;
    let d = table.dim as u32;
    let top = d - 1;
    let mut prod = SymSeries::<Rat>::one(n, top);
    for j in 0..n {
        prod = prod.mul(&SymSeries::one(n, top).add(&SymSeries::var(n, top, j)));
    }
    let sigma = SymSeries::<Rat>::sigma(n, top);
    let mut inv = SymSeries::<Rat>::zero(n, top);
    let mut p = SymSeries::one(n, top);
    for k in 0..=top {
        let c = if k % 2 == 0 { rat(1) } else { rat(-1) };
        inv = inv.add(&p.scale(&c));
        p = p.mul(&sigma);
    }
    let c = prod.mul(&inv);
    let classes: Vec<_> = (1..=top).map(|k| c.homogeneous(k)).collect();
    let paired = SymSeries::<Rat>::sigma(n, d).mul(&c.with_trunc(d));
    let euler = table.pair(paired.homogeneous(d).iter());
    ChernData { euler, classes }
}

/// Integer partitions of `n` in descending order.
pub fn partitions(n: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(left: u32, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=left.min(max)).rev() {
            cur.push(p);
            rec(left - p, p, cur, out);
            cur.pop();
        }
    }
    rec(n, n, &mut cur, &mut out);
    out
}

pub fn partition_count(n: u32) -> usize {
    partitions(n).len()
}

/// Symmetric functions of bounded weight, stored in the power-sum basis:
/// key = partition nu (descending), meaning p_nu = prod p_{nu_i}.
#[derive(Debug, Clone, PartialEq, Default)]
struct PowerSumSeries {
    trunc: u32,
    terms: BTreeMap<Vec<u32>, MixedPoly>,
}

impl PowerSumSeries {
    fn new(trunc: u32) -> Self {
        PowerSumSeries { trunc, terms: BTreeMap::new() }
    }

    fn accumulate(&mut self, key: Vec<u32>, c: MixedPoly) {
        if key.iter().sum::<u32>() > self.trunc || c.is_zero() {
            return;
        }
        let e = self.terms.entry(key.clone()).or_default();
        *e = e.add(&c);
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (k, c) in &o.terms {
            r.accumulate(k.clone(), c.clone());
        }
        r
    }

    fn scale(&self, s: &Rat) -> Self {
        let mut r = Self::new(self.trunc);
        for (k, c) in &self.terms {
            r.accumulate(k.clone(), c.scale(s));
        }
        r
    }

    fn mul(&self, o: &Self) -> Self {
        let mut r = Self::new(self.trunc);
        for (k1, c1) in &self.terms {
            let w1: u32 = k1.iter().sum();
            for (k2, c2) in &o.terms {
                if w1 + k2.iter().sum::<u32>() > self.trunc {
                    continue;
                }
                let mut k: Vec<u32> = k1.iter().chain(k2).copied().collect();
                k.sort_unstable_by(|a, b| b.cmp(a));
                r.accumulate(k, c1.mul(c2));
            }
        }
        r
    }

    /// log(1 + self) for a series without constant term.
    fn log1p(&self) -> Self {
        let mut acc = Self::new(self.trunc);
        let mut power = self.clone();
        let mut k = 1i64;
        while !power.terms.is_empty() {
            let c = Rat::new(BigInt::from(if k % 2 == 1 { 1 } else { -1 }), BigInt::from(k));
            acc = acc.add(&power.scale(&c));
            power = power.mul(self);
            k += 1;
        }
        acc
    }
}

/// Number of ways of distributing the parts of `nu` into the slots of
/// `lambda` so that slot sums match: the coefficient of x^lambda in p_nu.
fn power_to_monomial(nu: &[u32], lambda: &[u32]) -> Rat {
    fn rec(nu: &[u32], rem: &mut Vec<u32>, memo: &mut HashMap<(usize, Vec<u32>), u64>) -> u64 {
        if nu.is_empty() {
            return rem.iter().all(|&r| r == 0) as u64;
        }
        let key = (nu.len(), rem.clone());
        if let Some(v) = memo.get(&key) {
            return *v;
        }
        let mut total = 0;
        for j in 0..rem.len() {
            if rem[j] >= nu[0] {
                rem[j] -= nu[0];
                total += rec(&nu[1..], rem, memo);
                rem[j] += nu[0];
            }
        }
        memo.insert(key, total);
        total
    }
    let mut rem = lambda.to_vec();
    rat(rec(nu, &mut rem, &mut HashMap::new()) as i64)
}

/// Coefficient of x^lambda in e_mu: ways to give each part of `mu` a set of
/// distinct slots so that every slot j is used lambda_j times.
fn elementary_to_monomial(mu: &[u32], lambda: &[u32]) -> Rat {
    fn subsets(rem: &mut Vec<u32>, start: usize, size: u32, mu: &[u32], memo: &mut HashMap<(usize, Vec<u32>), u64>) -> u64 {
        if size == 0 {
            return rec(mu, rem, memo);
        }
        let mut total = 0;
        for j in start..rem.len() {
            if rem[j] > 0 {
                rem[j] -= 1;
                total += subsets(rem, j + 1, size - 1, mu, memo);
                rem[j] += 1;
            }
        }
        total
    }
    fn rec(mu: &[u32], rem: &mut Vec<u32>, memo: &mut HashMap<(usize, Vec<u32>), u64>) -> u64 {
        if mu.is_empty() {
            return rem.iter().all(|&r| r == 0) as u64;
        }
        let key = (mu.len(), rem.clone());
        if let Some(v) = memo.get(&key) {
            return *v;
        }
        let total = subsets(rem, 0, mu[0], &mu[1..], memo);
        memo.insert(key, total);
        total
    }
    let mut rem = lambda.to_vec();
    rat(rec(mu, &mut rem, &mut HashMap::new()) as i64)
}

struct Transition {
    /// partitions of k, (k) first and 1^k last
    parts: Vec<Vec<u32>>,
    /// p_nu = sum_lambda a[nu][lambda] M_lambda
    a: Vec<Vec<Rat>>,
    /// M_lambda = sum_nu ainv[lambda][nu] p_nu
    ainv: Vec<Vec<Rat>>,
    /// M_lambda = sum_mu einv[lambda][mu] e_mu
    einv: Vec<Vec<Rat>>,
}

fn transition(k: u32) -> Transition {
    let parts = partitions(k);
    let table = |f: fn(&[u32], &[u32]) -> Rat| -> Vec<Vec<Rat>> {
        parts.iter().map(|x| parts.iter().map(|lam| f(x, lam)).collect()).collect()
    };
    let a = table(power_to_monomial);
    let e = table(elementary_to_monomial);
    // Both are triangular in dominance order up to reversal, hence invertible.
    let ainv = crate::exact::inverse(&a).expect("power-sum transition is invertible");
    let einv = crate::exact::inverse(&e).expect("elementary transition is invertible");
    Transition { parts, a, ainv, einv }
}

/// One relation `poly = 0`, read off the coefficient of e_partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub weight: u32,
    pub partition: Vec<u32>,
    pub poly: MixedPoly,
}

impl Relation {
    pub fn eval_with(&self, isym: &mut dyn FnMut(&ISymbol) -> Result<f64>) -> Result<f64> {
        self.poly.eval_with(isym)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub weight: u32,
    pub symbols: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub relations: Vec<Relation>,
    pub counts: Vec<WeightTable>,
}

/// Symbol and relation counts for weights 2..=w, without building relations.
pub fn weight_counts(w: u32) -> Vec<WeightTable> {
    (2..=w)
        .map(|k| WeightTable {
            weight: k,
            symbols: ISymbol::all_of_weight(k).len(),
            relations: partition_count(k) - 1,
        })
        .collect()
}

/// Coefficient-wise `log Ĝ = log Γ̂` in the elementary basis e_mu, mu != 1^k
/// (that coefficient vanishes on both sides), for each weight up to `w`.
/// Each relation is scaled so that its zeta(k) coefficient is 1.
pub fn extract_relations(w: u32) -> RelationReport {
    assert!(w >= 2, "relations start at weight 2");
    let transitions: Vec<Transition> = (0..=w).map(transition).collect();
    // Ĝ - 1 in the power-sum basis.
    let mut g = PowerSumSeries::new(w);
    for ell in 1..w {
        for weight in (ell + 1)..=w {
            for parts in partitions(weight - ell) {
                let mu: Vec<u32> = parts.iter().map(|x| x - 1).collect();
                let sym = ISymbol::new(ell, mu.clone());
                let mut lambda = parts.clone();
                lambda.push(1);
                lambda.sort_unstable_by(|a, b| b.cmp(a));
                let k: u32 = lambda.iter().sum();
                if k + ell - 1 > w {
                    continue;
                }
                let mult1 = lambda.iter().filter(|&&x| x == 1).count() as i64;
                let denom = factorial(ell) * mu.iter().fold(Rat::one(), |acc, &x| acc * factorial(x));
                let sign = if sym.weight() % 2 == 0 { 1 } else { -1 };
                let coeff = MixedPoly::isym(sym).scale(&(rat(sign * mult1) / denom));
                let tr = &transitions[k as usize];
                let li = tr.parts.iter().position(|p| *p == lambda).unwrap();
                for (ni, nu) in tr.parts.iter().enumerate() {
                    let b = &tr.ainv[li][ni];
                    if b.is_zero() {
                        continue;
                    }
                    // times sigma^{l-1} = p_1^{l-1}
                    let mut key = nu.clone();
                    key.extend(std::iter::repeat_n(1, (ell - 1) as usize));
                    key.sort_unstable_by(|a, b| b.cmp(a));
                    g.accumulate(key, coeff.scale(b));
                }
            }
        }
    }
    let mut diff = g.log1p();
    for k in 2..=w {
        let z = zeta_coeff(k).into_mixed().scale(&-Rat::one());
        diff.accumulate(vec![k], z.clone());
        diff.accumulate(vec![1; k as usize], z.scale(&-Rat::one()));
    }

    let mut relations = Vec::new();
    for k in 2..=w {
        let tr = &transitions[k as usize];
        let np = tr.parts.len();
        // monomial coefficients f_lambda, then elementary ones
        let f: Vec<MixedPoly> = (0..np)
            .map(|li| {
                tr.parts.iter().enumerate().fold(MixedPoly::default(), |acc, (ni, nu)| match diff.terms.get(nu) {
                    Some(c) if !tr.a[ni][li].is_zero() => acc.add(&c.scale(&tr.a[ni][li])),
                    _ => acc,
                })
            })
            .collect();
        for (mi, mu) in tr.parts.iter().enumerate() {
            let poly = (0..np).fold(MixedPoly::default(), |acc, li| {
                let c = &tr.einv[li][mi];
                if c.is_zero() {
                    acc
                } else {
                    acc.add(&f[li].scale(c))
                }
            });
            if mi == np - 1 {
                debug_assert!(poly.is_zero(), "e_1^k coefficient must vanish");
                continue;
            }
            let lead = poly.coefficient(&Monomial::atom(Atom::Zeta(k)));
            let poly = poly.scale(&lead.recip());
            relations.push(Relation { weight: k, partition: mu.clone(), poly });
        }
    }
    RelationReport { relations, counts: weight_counts(w) }
}

impl From<ZetaPoly> for MixedPoly {
    fn from(z: ZetaPoly) -> Self {
        z.0
    }
}


/// Product of Gamma(1 + D_j) over Gamma(1 + sum D), via log-Gamma.
pub fn gamma_x_numeric(d: &[f64]) -> Result<f64> {
    check_weights(d)?;
    let sigma: f64 = d.iter().sum();
    let log: f64 = d.iter().map(|x| ln_gamma(1.0 + x)).sum::<f64>() - ln_gamma(1.0 + sigma);
    Ok(log.exp())
}

fn check_weights(d: &[f64]) -> Result<()> {
    if d.len() < 2 || d.len() > 4 {
        return Err(SeriesError::InvalidArgument(format!("need 2 to 4 weights, got {}", d.len())));
    }
    if let Some(x) = d.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(SeriesError::InvalidArgument(format!("weight {x} is not positive")));
    }
    Ok(())
}

const GX_CUTOFF: f64 = 40.0;

/// Nodes (as x = e^{-s}) and weights for int_0^inf e^{-D s} h(s) ds: Gauss
/// panels on [0, cutoff] and one node at infinity carrying the exact tail mass.
fn gx_axis(dq: f64, nodes: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(nodes);
    let mut out = Vec::new();
    let mut a = 0.0;
    while a < GX_CUTOFF {
        for (s, w) in rule.mapped(a, a + 2.0) {
            out.push(((-s).exp(), w * (-dq * s).exp()));
        }
        a += 2.0;
    }
    out.push((0.0, (-dq * GX_CUTOFF).exp() / dq));
    out
}

fn gx_tensor(axes: &[Vec<(f64, f64)>], xs: f64, w: f64, sigma: f64) -> f64 {
    match axes.split_first() {
        None => w * (1.0 + xs).powf(-sigma),
        Some((head, rest)) => head.iter().map(|&(x, wx)| gx_tensor(rest, xs + x, w * wx, sigma)).sum(),
    }
}

fn gx_sum(d: &[f64], nodes: usize) -> f64 {
    let sigma: f64 = d.iter().sum();
    let total: f64 = (0..d.len())
        .map(|q| {
            let axes: Vec<Vec<(f64, f64)>> = (0..d.len()).filter(|&j| j != q).map(|j| gx_axis(d[j], nodes)).collect();
            gx_tensor(&axes, 0.0, 1.0, sigma)
        })
        .sum();
    d.iter().product::<f64>() / sigma * total
}

/// (prod D / sigma) times the sum over splittings K + {q} = V of
/// int_{[0,inf)^K} e^{-sum D_k s_k} (1 + sum e^{-s_k})^{-sigma} ds.
pub fn g_x_numeric(d: &[f64]) -> Result<Estimate<f64>> {
    check_weights(d)?;
    let fine = gx_sum(d, 16);
    let coarse = gx_sum(d, 8);
    let error = (fine - coarse).abs();
    let evals = d.len() * (20 * 16 + 1usize).pow(d.len() as u32 - 1);
    if error > 1e-9 * fine.abs().max(1.0) {
        return Err(SeriesError::QuadratureNotConverged { value: fine, error });
    }
    Ok(Estimate { value: fine, error, evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;
    use crate::lattice_polytope::{intersection_table, LatticeVector};

    fn collapse(s: &SymSeries<ZetaPoly>, k: u32) -> ZetaPoly {
        s.homogeneous(k).values().fold(ZetaPoly::default(), |acc, c| acc.add(c))
    }

    #[test]
    fn isymbol_weights_and_counts() {
        let s = ISymbol::new(1, vec![0, 2]);
        assert_eq!(s.m, vec![2, 0]);
        assert_eq!(s.weight(), 1 + 2 + 2);
        let counts: Vec<usize> = (2..=13).map(|k| ISymbol::all_of_weight(k).len()).collect();
        assert_eq!(counts, vec![1, 3, 6, 11, 18, 29, 44, 66, 96, 138, 194, 271]);
        let rels: Vec<usize> = (2..=13).map(|k| partition_count(k) - 1).collect();
        assert_eq!(rels, vec![1, 2, 4, 6, 10, 14, 21, 29, 41, 55, 76, 100]);
    }

    #[test]
    fn exp_log_round_trip_rational() {
        let mut s = SymSeries::<Rat>::one(3, 8);
        s = s.add(&SymSeries::var(3, 8, 0).scale(&ratio(2, 3)));
        s = s.add(&SymSeries::var(3, 8, 1).mul(&SymSeries::var(3, 8, 2)).scale(&ratio(-5, 7)));
        s = s.add(&SymSeries::var(3, 8, 2).pow(3));
        let back = s.log().unwrap().exp().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn gamma_class_collapsed_parts() {
        // Degree 3 on five equal variables: -zeta(3)/3 (5 - 125) = 40 zeta(3).
        let g = gamma_class(5, 3);
        assert_eq!(collapse(&g, 3), ZetaPoly::zeta(3).scale(&rat(40)));
        assert!(g.homogeneous(1).is_empty());
        let g4 = gamma_class(4, 2);
        assert_eq!(collapse(&g4, 2), ZetaPoly::zeta(2).scale(&rat(-6)));
    }

    #[test]
    fn gamma_forms_agree() {
        for (n, w) in [(2, 5), (3, 4), (4, 4)] {
            assert_eq!(gamma_class(n, w), gamma_class_product(n, w));
        }
    }

    #[test]
    fn g_hat_structure() {
        let g = g_hat(3, 4);
        assert_eq!(g.constant_term(), MixedPoly::constant(rat(1)));
        for j in 0..3 {
            for k in 1..=4 {
                let mut e = vec![0; 3];
                e[j] = k;
                assert!(g.coeff(&e).is_zero());
            }
        }
        let g2 = g_hat(2, 2);
        assert_eq!(g2.coeff(&[1, 1]), MixedPoly::isym(ISymbol::new(1, vec![0])).scale(&rat(2)));
    }

    fn known_weight3(s: &ISymbol) -> Option<MixedPoly> {
        let z3 = MixedPoly::zeta(3);
        match (s.ell, s.m.as_slice()) {
            (1, [1]) => Some(z3.scale(&ratio(-3, 4))),
            (2, [0]) => Some(z3.scale(&ratio(-1, 4))),
            (1, [0, 0]) => Some(z3.scale(&ratio(-5, 12))),
            (1, [0]) => Some(MixedPoly::zeta(2).scale(&ratio(-1, 2))),
            _ => None,
        }
    }

    #[test]
    fn g_hat_equals_gamma_symbolically_through_weight_three() {
        let g = g_hat(3, 3);
        let gam = gamma_class(3, 3);
        for (e, c) in g.coeffs() {
            let sub = c.substitute(&known_weight3);
            assert_eq!(sub, gam.coeff(e).into_mixed(), "coefficient {e:?}");
        }
    }

    #[test]
    fn relations_weight_four_match_printed_block() {
        let rep = extract_relations(4);
        let w4: Vec<&Relation> = rep.relations.iter().filter(|r| r.weight == 4).collect();
        assert_eq!(w4.len(), 4);
        let i = |l: u32, m: &[u32]| MixedPoly::isym(ISymbol::new(l, m.to_vec()));
        let z4 = MixedPoly::zeta(4);
        let printed = [
            i(1, &[2]).scale(&ratio(1, 2)).add(&i(2, &[1]).scale(&ratio(1, 2))).add(&i(3, &[0]).scale(&ratio(1, 3))).add(&z4),
            i(1, &[0]).mul(&i(1, &[0])).scale(&rat(4)).add(&i(1, &[2]).scale(&rat(2))).add(&z4),
            i(1, &[2])
                .scale(&ratio(1, 2))
                .add(&i(2, &[1]).scale(&ratio(3, 2)))
                .add(&i(1, &[1, 0]).scale(&rat(-2)))
                .add(&i(2, &[0, 0]).scale(&ratio(-3, 2)))
                .add(&z4),
            i(1, &[2]).scale(&rat(2)).add(&i(1, &[1, 0]).scale(&rat(-8))).add(&i(1, &[0, 0, 0]).scale(&rat(4))).add(&z4),
        ];
        for p in &printed {
            assert!(w4.iter().any(|r| &r.poly == p), "printed relation {p} not produced; got {:?}", w4.iter().map(|r| r.poly.to_string()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn relations_weight_three_values() {
        let rep = extract_relations(3);
        for r in rep.relations.iter().filter(|r| r.weight == 3) {
            let sub = r.poly.substitute(&known_weight3);
            assert!(sub.is_zero(), "relation {} leaves {}", r.poly, sub);
        }
        let r2: Vec<_> = rep.relations.iter().filter(|r| r.weight == 2).collect();
        assert_eq!(r2.len(), 1);
        assert!(r2[0].poly.substitute(&known_weight3).is_zero());
    }

    #[test]
    fn relation_counts_through_ten() {
        let rep = extract_relations(10);
        for k in 2..=10 {
            let n = rep.relations.iter().filter(|r| r.weight == k).count();
            assert_eq!(n, partition_count(k) - 1);
        }
    }

    #[test]
    fn chern_numbers() {
        let mk = |vs: &[&[i64]]| {
            MirrorDatum::new(vs.iter().map(|v| LatticeVector(v.to_vec())).collect(), vec![rat(1); vs.len()], None).unwrap()
        };
        let quintic = mk(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1], &[-1, -1, -1, -1]]);
        assert_eq!(chern_euler(&intersection_table(&quintic).unwrap()).euler, rat(-200));
        let k3 = mk(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[-1, -1, -1]]);
        assert_eq!(chern_euler(&intersection_table(&k3).unwrap()).euler, rat(24));
        let p2 = mk(&[&[1, 0], &[0, 1], &[-1, -1]]);
        assert_eq!(chern_euler(&intersection_table(&p2).unwrap()).euler, rat(0));
    }

    #[test]
    fn rhs_values() {
        let mk = |vs: &[&[i64]]| {
            MirrorDatum::new(vs.iter().map(|v| LatticeVector(v.to_vec())).collect(), vec![rat(1); vs.len()], None).unwrap()
        };
        let quintic = mk(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1], &[-1, -1, -1, -1]]);
        let table = intersection_table(&quintic).unwrap();
        let gam = gamma_class(5, 4).map(|c| Complex64::new(c.eval(), 0.0));
        let logt = (1e-3f64).ln();
        let l = -logt;
        let v = evaluate_on_x(&gam, &table, &quintic, logt, &[0.0; 5]).unwrap();
        let z2 = constants::zeta(2);
        let z3 = constants::zeta(3);
        let want = 625.0 / 6.0 * l.powi(3) - 250.0 * z2 * l + 200.0 * z3;
        assert!((v.re - want).abs() < 1e-9 * want.abs() && v.im.abs() < 1e-9);

        let p2 = mk(&[&[1, 0], &[0, 1], &[-1, -1]]);
        let table = intersection_table(&p2).unwrap();
        let gam = gamma_class(3, 2).map(|c| Complex64::new(c.eval(), 0.0));
        let logt = (1e-4f64).ln();
        let v = evaluate_on_x(&gam, &table, &p2, logt, &[0.0; 3]).unwrap();
        assert!((v.re + 9.0 * logt).abs() < 1e-10 && v.im.abs() < 1e-12);
        let tau = 2.0 * std::f64::consts::PI;
        let v = evaluate_on_x(&gam, &table, &p2, logt, &[tau, 0.0, 0.0]).unwrap();
        assert!((v.re + 9.0 * logt).abs() < 1e-10);
        assert!((v.im + 6.0 * std::f64::consts::PI).abs() < 1e-10);

        let one = SymSeries::<Complex64>::one(3, 2);
        let v = evaluate_on_x(&one, &table, &p2, logt, &[0.0; 3]).unwrap();
        assert!((v.re + 9.0 * logt).abs() < 1e-10);
        let bad = SymSeries::<Complex64>::one(2, 2);
        assert!(matches!(evaluate_on_x(&bad, &table, &p2, logt, &[0.0; 3]), Err(SeriesError::DegreeMismatch { .. })));
    }

    #[test]
    fn zeta_poly_high_precision() {
        let z = ZetaPoly::zeta(2).mul(&ZetaPoly::zeta(2)).scale(&ratio(2, 5));
        assert_eq!(z.eval_decimal(50), ZetaPoly::zeta(4).eval_decimal(50));
        assert!((z.eval() - constants::zeta(4)).abs() < 1e-15);
    }

    #[test]
    fn display_forms() {
        let p = MixedPoly::isym(ISymbol::new(1, vec![0, 0])).scale(&ratio(-5, 12)).add(&MixedPoly::zeta(3));
        assert_eq!(p.to_string(), "zeta(3) - 5/12*I(1;0,0)");
    }

    #[test]
    fn g_x_matches_gamma_x() {
        assert!((gamma_x_numeric(&[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-13);
        assert!((g_x_numeric(&[1.0, 1.0]).unwrap().value - 0.5).abs() < 1e-10);
        let d = [0.3, 0.7, 1.1];
        let g = g_x_numeric(&d).unwrap().value;
        assert!((g - gamma_x_numeric(&d).unwrap()).abs() < 1e-9, "{g}");
        assert!(g_x_numeric(&[1.0, -1.0]).is_err());
        assert!(gamma_x_numeric(&[2.0]).is_err());
    }
}
