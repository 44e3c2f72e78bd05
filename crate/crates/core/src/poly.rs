//! Exact multivariate polynomials over the rationals.
//!
//! Canonical form throughout: graded-lexicographic monomial order (total
//! degree first, then lex with earlier variables larger), zero coefficients
//! never stored. Phase-space polynomials use variables `q1..qn, p1..pn`;
//! polynomials on a Hilbert-map image use `y1..ym`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{rat, Rat, RatMat};

/// Exponent vector. Ordered graded-lex so that `BTreeMap` iteration is the
/// canonical ascending order; display iterates in reverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mono(pub Vec<u32>);

impl Mono {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Mono) -> Mono {
        Mono(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            // Within a degree: lexicographic, x1 > x2 > ...; a monomial
            // with a larger exponent on an earlier variable is larger.
            for (a, b) in self.0.iter().zip(&other.0) {
                match a.cmp(b) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// How variable indices map to display names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarSet {
    /// `q1..qn` then `p1..pn` on a 2n-dimensional phase space.
    Phase { pairs: usize },
    /// `y1..ym` on the image of a Hilbert map.
    Reduced { count: usize },
}

impl VarSet {
    pub fn len(&self) -> usize {
        match self {
            VarSet::Phase { pairs } => 2 * pairs,
            VarSet::Reduced { count } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self, idx: usize) -> String {
        match self {
            VarSet::Phase { pairs } => {
                if idx < *pairs {
                    format!("q{}", idx + 1)
                } else {
                    format!("p{}", idx + 1 - pairs)
                }
            }
            VarSet::Reduced { .. } => format!("y{}", idx + 1),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let (head, tail) = name.split_at(1);
        let k: usize = tail.parse().ok()?;
        if k == 0 {
            return None;
        }
        match (self, head) {
            (VarSet::Phase { pairs }, "q") if k <= *pairs => Some(k - 1),
            (VarSet::Phase { pairs }, "p") if k <= *pairs => Some(pairs + k - 1),
            (VarSet::Reduced { count }, "y") if k <= *count => Some(k - 1),
            _ => None,
        }
    }
}

/// Multivariate polynomial with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    pub nvars: usize,
    terms: BTreeMap<Mono, Rat>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Mono(vec![0; nvars]), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Rat::one())
    }

    pub fn var(nvars: usize, idx: usize) -> Self {
        assert!(idx < nvars);
        let mut e = vec![0; nvars];
        e[idx] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(Mono(e), Rat::one());
        p
    }

    pub fn monomial(nvars: usize, exps: &[u32], c: Rat) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = Self::zero(nvars);
        p.add_term(Mono(exps.to_vec()), c);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Mono::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Rat)> {
        self.terms.iter()
    }

    /// Leading term in graded-lex order.
    pub fn leading(&self) -> Option<(&Mono, &Rat)> {
        self.terms.iter().next_back()
    }

    pub fn coeff(&self, exps: &[u32]) -> Rat {
        self.terms
            .get(&Mono(exps.to_vec()))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn add_term(&mut self, m: Mono, c: Rat) {
        if c.is_zero() {
            return;
        }
        debug_assert_eq!(m.0.len(), self.nvars);
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn partial(&self, idx: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[idx];
            if e > 0 {
                let mut exps = m.0.clone();
                exps[idx] -= 1;
                out.add_term(Mono(exps), c * rat(e as i64));
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    /// Full composition: substitute `subs[i]` for variable `i`.
    pub fn substitute(&self, subs: &[Poly]) -> Poly {
        assert_eq!(subs.len(), self.nvars);
        let target_vars = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut out = Poly::zero(target_vars);
        for (m, c) in &self.terms {
            let mut term = Poly::constant(target_vars, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&subs[i].pow(e));
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Composition with a linear map: returns `v -> self(g v)`.
    pub fn compose_linear(&self, g: &RatMat) -> Poly {
        assert_eq!(g.nrows, self.nvars);
        let subs: Vec<Poly> = (0..self.nvars)
            .map(|i| {
                let mut row = Poly::zero(g.ncols);
                for j in 0..g.ncols {
                    if !g[(i, j)].is_zero() {
                        row = row.add(&Poly::var(g.ncols, j).scale(&g[(i, j)]));
                    }
                }
                row
            })
            .collect();
        self.substitute(&subs)
    }

    pub fn eval_rat(&self, point: &[Rat]) -> Rat {
        assert_eq!(point.len(), self.nvars);
        let mut acc = Rat::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    t *= &point[i];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut t = crate::exact::rat_to_f64(c);
                for (i, &e) in m.0.iter().enumerate() {
                    t *= point[i].powi(e as i32);
                }
                t
            })
            .sum()
    }

    pub fn is_homogeneous(&self, degree: u32) -> bool {
        self.terms.keys().all(|m| m.degree() == degree)
    }

    /// Component of the given total degree.
    pub fn homogeneous_component(&self, degree: u32) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == degree)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Canonical text form, terms in descending graded-lex order.
    pub fn display(&self, vars: &VarSet) -> String {
        assert_eq!(vars.len(), self.nvars);
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    out.push('-');
                }
            } else if neg {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let mono = mono_display(m, vars);
            if mono.is_empty() {
                let _ = write!(out, "{mag}");
            } else if mag.is_one() {
                out.push_str(&mono);
            } else {
                let _ = write!(out, "{mag}*{mono}");
            }
        }
        out
    }

    /// Parse the canonical text form.
    pub fn parse(input: &str, vars: &VarSet) -> Result<Poly> {
        parse_poly(input, vars)
    }

    /// JSON-friendly term list.
    pub fn to_terms(&self) -> Vec<PolyTerm> {
        self.terms
            .iter()
            .rev()
            .map(|(m, c)| PolyTerm {
                coeff: c.to_string(),
                exps: m.0.clone(),
            })
            .collect()
    }

    pub fn from_terms(nvars: usize, terms: &[PolyTerm]) -> Result<Poly> {
        let mut p = Poly::zero(nvars);
        for t in terms {
            if t.exps.len() != nvars {
                return Err(Error::Parse(format!(
                    "term has {} exponents, expected {nvars}",
                    t.exps.len()
                )));
            }
            let c: Rat = t
                .coeff
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient {:?}", t.coeff)))?;
            p.add_term(Mono(t.exps.clone()), c);
        }
        Ok(p)
    }

    /// Fast float-evaluation form for integrators.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (crate::exact::rat_to_f64(c), m.0.clone()))
                .collect(),
        }
    }
}

fn mono_display(m: &Mono, vars: &VarSet) -> String {
    let mut parts = Vec::new();
    for (i, &e) in m.0.iter().enumerate() {
        match e {
            0 => {}
            1 => parts.push(vars.name(i)),
            _ => parts.push(format!("{}^{}", vars.name(i), e)),
        }
    }
    parts.join("*")
}

/// One term of the JSON serialization: exact coefficient string plus
/// exponent vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coeff: String,
    pub exps: Vec<u32>,
}

/// Precompiled float view of a polynomial.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    pub nvars: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl CompiledPoly {
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, exps) in &self.terms {
            let mut t = *c;
            for (i, &e) in exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => t *= point[i],
                    2 => t *= point[i] * point[i],
                    _ => t *= point[i].powi(e as i32),
                }
            }
            acc += t;
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Parser for the canonical text form.

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Plus,
    Minus,
    Star,
    Caret,
    Slash,
    Int(String),
    Ident(String),
}

impl<'a> Lexer<'a> {
    fn tokenize(input: &'a str) -> Result<Vec<Tok>> {
        let mut lx = Lexer {
            chars: input.chars().peekable(),
        };
        let mut toks = Vec::new();
        while let Some(&c) = lx.chars.peek() {
            match c {
                ' ' | '\t' | '\n' => {
                    lx.chars.next();
                }
                '+' => {
                    lx.chars.next();
                    toks.push(Tok::Plus);
                }
                '-' => {
                    lx.chars.next();
                    toks.push(Tok::Minus);
                }
                '*' => {
                    lx.chars.next();
                    toks.push(Tok::Star);
                }
                '^' => {
                    lx.chars.next();
                    toks.push(Tok::Caret);
                }
                '/' => {
                    lx.chars.next();
                    toks.push(Tok::Slash);
                }
                '0'..='9' => {
                    let mut s = String::new();
                    while let Some(&d) = lx.chars.peek() {
                        if d.is_ascii_digit() {
                            s.push(d);
                            lx.chars.next();
                        } else {
                            break;
                        }
                    }
                    toks.push(Tok::Int(s));
                }
                'a'..='z' | 'A'..='Z' => {
                    let mut s = String::new();
                    while let Some(&d) = lx.chars.peek() {
                        if d.is_ascii_alphanumeric() {
                            s.push(d);
                            lx.chars.next();
                        } else {
                            break;
                        }
                    }
                    toks.push(Tok::Ident(s));
                }
                other => return Err(Error::Parse(format!("unexpected character {other:?}"))),
            }
        }
        Ok(toks)
    }
}

fn parse_poly(input: &str, vars: &VarSet) -> Result<Poly> {
    let toks = Lexer::tokenize(input)?;
    let nvars = vars.len();
    if toks.is_empty() {
        return Err(Error::Parse("empty polynomial".into()));
    }
    let mut out = Poly::zero(nvars);
    let mut pos = 0usize;
    let mut sign = Rat::one();
    // Leading sign.
    while pos < toks.len() {
        match toks[pos] {
            Tok::Minus => {
                sign = -sign;
                pos += 1;
            }
            Tok::Plus => {
                pos += 1;
            }
            _ => break,
        }
    }
    loop {
        let (term, next) = parse_term(&toks, pos, vars)?;
        out = out.add(&term.scale(&sign));
        pos = next;
        if pos == toks.len() {
            break;
        }
        sign = match toks[pos] {
            Tok::Plus => Rat::one(),
            Tok::Minus => -Rat::one(),
            ref t => return Err(Error::Parse(format!("expected + or -, found {t:?}"))),
        };
        pos += 1;
        if pos == toks.len() {
            return Err(Error::Parse("trailing operator".into()));
        }
    }
    Ok(out)
}

fn parse_term(toks: &[Tok], mut pos: usize, vars: &VarSet) -> Result<(Poly, usize)> {
    let nvars = vars.len();
    let mut term = Poly::one(nvars);
    loop {
        match toks.get(pos) {
            Some(Tok::Int(s)) => {
                let num: i64 = s
                    .parse()
                    .map_err(|_| Error::Parse(format!("integer overflow in {s}")))?;
                pos += 1;
                let mut c = rat(num);
                if toks.get(pos) == Some(&Tok::Slash) {
                    pos += 1;
                    let Some(Tok::Int(d)) = toks.get(pos) else {
                        return Err(Error::Parse("expected denominator".into()));
                    };
                    let den: i64 = d
                        .parse()
                        .map_err(|_| Error::Parse(format!("integer overflow in {d}")))?;
                    if den == 0 {
                        return Err(Error::Parse("zero denominator".into()));
                    }
                    c = crate::exact::ratq(num, den);
                    pos += 1;
                }
                term = term.scale(&c);
            }
            Some(Tok::Ident(name)) => {
                let idx = vars
                    .index_of(name)
                    .ok_or_else(|| Error::Parse(format!("unknown variable {name:?}")))?;
                pos += 1;
                let mut exp = 1u32;
                if toks.get(pos) == Some(&Tok::Caret) {
                    pos += 1;
                    let Some(Tok::Int(e)) = toks.get(pos) else {
                        return Err(Error::Parse("expected exponent".into()));
                    };
                    exp = e
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent {e}")))?;
                    pos += 1;
                }
                term = term.mul(&Poly::var(nvars, idx).pow(exp));
            }
            other => return Err(Error::Parse(format!("expected factor, found {other:?}"))),
        }
        if toks.get(pos) == Some(&Tok::Star) {
            pos += 1;
            continue;
        }
        return Ok((term, pos));
    }
}

/// Poisson bracket under the global Darboux convention: variables split as
/// `(q1..qn, p1..pn)` and
/// `{f, g} = sum_i df/dq_i dg/dp_i - df/dp_i dg/dq_i`, exact.
pub fn poisson_bracket(f: &Poly, g: &Poly) -> Poly {
    assert_eq!(f.nvars, g.nvars, "bracket operands share the variable set");
    assert!(
        f.nvars % 2 == 0,
        "phase polynomials have an even variable count"
    );
    let n = f.nvars / 2;
    let mut out = Poly::zero(f.nvars);
    for i in 0..n {
        out = out.add(&f.partial(i).mul(&g.partial(n + i)));
        out = out.sub(&f.partial(n + i).mul(&g.partial(i)));
    }
    out
}

/// All exponent vectors of the given total degree, descending graded-lex.
pub fn monomials_of_degree(nvars: usize, degree: u32) -> Vec<Mono> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; nvars];
    fill(&mut out, &mut cur, 0, degree, nvars);
    fn fill(out: &mut Vec<Mono>, cur: &mut Vec<u32>, idx: usize, rem: u32, nvars: usize) {
        if idx + 1 == nvars {
            cur[idx] = rem;
            out.push(Mono(cur.clone()));
            cur[idx] = 0;
            return;
        }
        for e in (0..=rem).rev() {
            cur[idx] = e;
            fill(out, cur, idx + 1, rem - e, nvars);
            cur[idx] = 0;
        }
    }
    out
}
