//! Invariant rings of the bundled group actions: Reynolds averaging, minimal
//! generator sweeps, Molien counts, expressibility in generators, relations,
//! and the reduced Poisson structure matrix.
//!
//! All polynomial arithmetic here is exact; generator sets are reproducible
//! byte for byte under the global graded-lex order.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{rat, ratq, Rat, RatMat};
use crate::groups::{close_group, momentum_map, GroupSpec, MomentumMap};
use crate::poly::{monomials_of_degree, Mono, Poly};

pub use crate::poly::poisson_bracket;

/// Group-average projection onto invariants (finite groups).
pub fn reynolds(f: &Poly, elements: &[RatMat]) -> Poly {
    let mut acc = Poly::zero(f.nvars);
    for g in elements {
        acc = acc.add(&f.compose_linear(g));
    }
    acc.scale(&ratq(1, elements.len() as i64))
}

/// Is `f` exactly invariant under the group data? Finite groups check the
/// generators directly; connected groups check the Noether brackets
/// `{f, F_a} = 0`.
pub fn is_invariant(spec: &GroupSpec, f: &Poly) -> Result<bool> {
    match spec {
        GroupSpec::Finite(g) => Ok(g.generators.iter().all(|m| f.compose_linear(m) == *f)),
        _ => {
            let fm = momentum_map(spec)?;
            Ok(fm
                .components
                .iter()
                .all(|fa| poisson_bracket(f, fa).is_zero()))
        }
    }
}

// ---------------------------------------------------------------------------
// Incremental echelon forms over a fixed monomial universe.

struct Echelon {
    mono_index: BTreeMap<std::cmp::Reverse<Mono>, usize>,
    monos: Vec<Mono>,
    rows: Vec<Vec<Rat>>,
    pivots: Vec<usize>,
}

impl Echelon {
    /// Columns ordered descending graded-lex over the given universe.
    fn new(universe: Vec<Mono>) -> Self {
        let mut monos = universe;
        monos.sort_by(|a, b| b.cmp(a));
        monos.dedup();
        let mono_index = monos
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (std::cmp::Reverse(m), i))
            .collect();
        Echelon {
            mono_index,
            monos,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    fn vector_of(&self, p: &Poly) -> Vec<Rat> {
        let mut v = vec![Rat::zero(); self.monos.len()];
        for (m, c) in p.terms() {
            let idx = self.mono_index[&std::cmp::Reverse(m.clone())];
            v[idx] = c.clone();
        }
        v
    }

    fn poly_of(&self, v: &[Rat], nvars: usize) -> Poly {
        let mut p = Poly::zero(nvars);
        for (i, c) in v.iter().enumerate() {
            if !c.is_zero() {
                p.add_term(self.monos[i].clone(), c.clone());
            }
        }
        p
    }

    fn reduce(&self, mut v: Vec<Rat>) -> Vec<Rat> {
        for (row, &piv) in self.rows.iter().zip(&self.pivots) {
            if !v[piv].is_zero() {
                let factor = v[piv].clone();
                for (x, r) in v.iter_mut().zip(row) {
                    *x -= &factor * r;
                }
            }
        }
        v
    }

    /// Insert a vector; returns the reduced row if it increased the rank.
    fn insert(&mut self, v: Vec<Rat>) -> Option<Vec<Rat>> {
        let mut v = self.reduce(v);
        let piv = v.iter().position(|x| !x.is_zero())?;
        let lead = v[piv].clone();
        for x in v.iter_mut() {
            *x /= &lead;
        }
        // Clear this pivot in existing rows to keep full reduced form.
        for row in self.rows.iter_mut() {
            if !row[piv].is_zero() {
                let factor = row[piv].clone();
                for (x, r) in row.iter_mut().zip(&v) {
                    *x -= &factor * r;
                }
            }
        }
        self.rows.push(v.clone());
        self.pivots.push(piv);
        Some(v)
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

// ---------------------------------------------------------------------------
// Hilbert maps.

/// How a generator set's completeness is certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completeness {
    /// Finite group swept to the Noether bound: complete.
    NoetherBound,
    /// Swept (torus) or declared (classical first fundamental theorems)
    /// up to the recorded degree only.
    UpToDegree,
}

/// A minimal set of invariant-polynomial generators for a group action,
/// with the data needed to embed the orbit space.
#[derive(Debug, Clone)]
pub struct HilbertMap {
    pub generators: Vec<Poly>,
    pub degrees: Vec<u32>,
    pub spec: GroupSpec,
    pub certified_degree: u32,
    pub completeness: Completeness,
}

impl HilbertMap {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn space_dim(&self) -> usize {
        2 * self.spec.n_pairs()
    }

    /// Evaluate the Hilbert map p: R^2n -> R^m.
    pub fn eval_f64(&self, v: &[f64]) -> Vec<f64> {
        self.generators.iter().map(|p| p.eval_f64(v)).collect()
    }

    pub fn eval_rat(&self, v: &[Rat]) -> Vec<Rat> {
        self.generators.iter().map(|p| p.eval_rat(v)).collect()
    }

    /// Declare a hand-specified generator set (used where the sweep's
    /// preconditions exclude the group, e.g. a connected nonabelian
    /// algebra with a classically known generating set). Each generator is
    /// verified invariant; minimality is verified degree by degree.
    pub fn declare(spec: GroupSpec, generators: Vec<Poly>, certified_degree: u32) -> Result<Self> {
        for g in &generators {
            if !is_invariant(&spec, g)? {
                return Err(Error::NotInvariant(format!(
                    "declared generator of degree {} is not invariant",
                    g.degree()
                )));
            }
        }
        let degrees = generators.iter().map(|g| g.degree()).collect();
        let map = HilbertMap {
            generators,
            degrees,
            spec,
            certified_degree,
            completeness: Completeness::UpToDegree,
        };
        map.verify_minimal()?;
        Ok(map)
    }

    /// No generator lies in the subalgebra generated by the others.
    pub fn verify_minimal(&self) -> Result<()> {
        for i in 0..self.generators.len() {
            let others: Vec<Poly> = self
                .generators
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            let degrees: Vec<u32> = others.iter().map(|p| p.degree()).collect();
            if express_in(&others, &degrees, &self.generators[i]).is_ok() {
                return Err(Error::IncompleteGenerators(format!(
                    "generator {i} is expressible in the others (set not minimal)"
                )));
            }
        }
        Ok(())
    }
}

/// Coefficient of `t^d` in `det(I - t g)^{-1}` averaged over the group:
/// the exact dimension of the degree-d invariant space.
pub fn molien_dimension(elements: &[RatMat], d: u32) -> Result<usize> {
    if elements.is_empty() {
        return Err(Error::Precondition("empty element list".into()));
    }
    let dim = elements[0].nrows;
    let order = elements.len();
    let mut total = vec![Rat::zero(); d as usize + 1];
    for g in elements {
        let q = det_i_minus_tg(g, dim);
        let s = series_inverse(&q, d as usize)?;
        for (t, v) in total.iter_mut().zip(&s) {
            *t += v;
        }
    }
    let coeff = &total[d as usize] / rat(order as i64);
    if !coeff.is_integer() || coeff.is_negative() {
        return Err(Error::Numerical(format!(
            "Molien coefficient {coeff} is not a natural number"
        )));
    }
    Ok(coeff
        .to_integer()
        .to_string()
        .parse()
        .expect("small integer"))
}

/// Coefficients of det(I - t g) by exact interpolation at t = 0..dim.
fn det_i_minus_tg(g: &RatMat, dim: usize) -> Vec<Rat> {
    let points: Vec<(Rat, Rat)> = (0..=dim as i64)
        .map(|t| {
            let m = RatMat::identity(dim).sub(&g.scale(&rat(t)));
            (rat(t), m.det())
        })
        .collect();
    interpolate(&points)
}

/// Newton forward interpolation through exact points.
fn interpolate(points: &[(Rat, Rat)]) -> Vec<Rat> {
    let n = points.len();
    // Divided differences.
    let mut table: Vec<Rat> = points.iter().map(|(_, y)| y.clone()).collect();
    let xs: Vec<Rat> = points.iter().map(|(x, _)| x.clone()).collect();
    let mut coeffs = vec![table[0].clone()];
    for level in 1..n {
        for i in 0..n - level {
            let num = &table[i + 1] - &table[i];
            let den = &xs[i + level] - &xs[i];
            table[i] = num / den;
        }
        table.truncate(n - level);
        coeffs.push(table[0].clone());
    }
    // Expand the Newton form into monomial coefficients.
    let mut out = vec![Rat::zero(); n];
    let mut basis = vec![Rat::one()]; // product (t - x_0)...(t - x_{k-1})
    for (k, c) in coeffs.iter().enumerate() {
        for (i, b) in basis.iter().enumerate() {
            out[i] += c * b;
        }
        if k + 1 < n {
            // basis *= (t - x_k)
            let mut next = vec![Rat::zero(); basis.len() + 1];
            for (i, b) in basis.iter().enumerate() {
                next[i + 1] += b;
                next[i] -= &xs[k] * b;
            }
            basis = next;
        }
    }
    out
}

/// Power series inverse of q (q[0] must be 1) to the given order.
fn series_inverse(q: &[Rat], order: usize) -> Result<Vec<Rat>> {
    if q.is_empty() || q[0] != Rat::one() {
        return Err(Error::Numerical(
            "series inversion needs constant term 1".into(),
        ));
    }
    let mut s = vec![Rat::zero(); order + 1];
    s[0] = Rat::one();
    for m in 1..=order {
        let mut acc = Rat::zero();
        for i in 1..=m.min(q.len() - 1) {
            acc += &q[i] * &s[m - i];
        }
        s[m] = -acc;
    }
    Ok(s)
}

/// Dimension of the degree-d invariant space for a torus action: the number
/// of (a, b) exponent pairs with zero weight sum. Independent of the
/// realified echelon rank used in the sweep, so the two can cross-check.
pub fn torus_invariant_dimension(weights: &[Vec<i64>], n: usize, d: u32) -> usize {
    let mut count = 0usize;
    for da in 0..=d {
        for a in monomials_of_degree(n, da) {
            for b in monomials_of_degree(n, d - da) {
                let balanced = weights.iter().all(|row| {
                    (0..n)
                        .map(|j| row[j] * (a.0[j] as i64 - b.0[j] as i64))
                        .sum::<i64>()
                        == 0
                });
                if balanced {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Minimal invariant generators by a degree-by-degree sweep.
///
/// Finite groups default to the Noether bound |K| and are certified
/// complete; torus actions default to `2 n max|weight|` and are certified
/// only up to that degree.
pub fn invariant_generators(spec: &GroupSpec, degree_bound: Option<u32>) -> Result<HilbertMap> {
    spec.validate()?;
    let nvars = spec.space_dim();
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let bound = degree_bound.unwrap_or(elements.len() as u32);
            let mut generators: Vec<Poly> = Vec::new();
            let mut degrees: Vec<u32> = Vec::new();
            for d in 1..=bound {
                // Invariant space at degree d: echelonized Reynolds images.
                let mut inv = Echelon::new(monomials_of_degree(nvars, d));
                let mut inv_basis: Vec<Poly> = Vec::new();
                for m in monomials_of_degree(nvars, d) {
                    let img = reynolds(&Poly::monomial(nvars, &m.0, Rat::one()), &elements);
                    if img.is_zero() {
                        continue;
                    }
                    let v = inv.vector_of(&img);
                    if let Some(row) = inv.insert(v) {
                        inv_basis.push(inv.poly_of(&row, nvars));
                    }
                }
                let expected = molien_dimension(&elements, d)?;
                if inv.rank() != expected {
                    return Err(Error::IncompleteGenerators(format!(
                        "degree {d}: Reynolds rank {} != Molien dimension {expected}",
                        inv.rank()
                    )));
                }
                // Products of earlier generators of total degree d.
                let mut span = Echelon::new(monomials_of_degree(nvars, d));
                for prod in products_of_degree(&generators, &degrees, d) {
                    let v = span.vector_of(&prod);
                    span.insert(v);
                }
                for b in inv_basis {
                    let v = span.vector_of(&b);
                    if let Some(row) = span.insert(v) {
                        generators.push(span.poly_of(&row, nvars));
                        degrees.push(d);
                    }
                }
            }
            let completeness = if bound >= elements.len() as u32 {
                Completeness::NoetherBound
            } else {
                Completeness::UpToDegree
            };
            Ok(HilbertMap {
                generators,
                degrees,
                spec: spec.clone(),
                certified_degree: bound,
                completeness,
            })
        }
        GroupSpec::Torus(t) => {
            let max_w = t
                .weights
                .iter()
                .flatten()
                .map(|w| w.unsigned_abs() as u32)
                .max()
                .unwrap_or(0);
            let bound = degree_bound.unwrap_or((2 * t.n_pairs as u32 * max_w).max(1));
            let mut generators: Vec<Poly> = Vec::new();
            let mut degrees: Vec<u32> = Vec::new();
            for d in 1..=bound {
                let basis = torus_invariant_basis(t, d);
                // Cross-check realified rank against the pair count.
                let mut inv = Echelon::new(monomials_of_degree(nvars, d));
                let mut inv_basis: Vec<Poly> = Vec::new();
                for p in &basis {
                    let v = inv.vector_of(p);
                    if let Some(row) = inv.insert(v) {
                        inv_basis.push(inv.poly_of(&row, nvars));
                    }
                }
                let expected = torus_invariant_dimension(&t.weights, t.n_pairs, d);
                if inv.rank() != expected {
                    return Err(Error::IncompleteGenerators(format!(
                        "degree {d}: realified rank {} != weight count {expected}",
                        inv.rank()
                    )));
                }
                let mut span = Echelon::new(monomials_of_degree(nvars, d));
                for prod in products_of_degree(&generators, &degrees, d) {
                    let v = span.vector_of(&prod);
                    span.insert(v);
                }
                for b in inv_basis {
                    let v = span.vector_of(&b);
                    if let Some(row) = span.insert(v) {
                        generators.push(span.poly_of(&row, nvars));
                        degrees.push(d);
                    }
                }
            }
            Ok(HilbertMap {
                generators,
                degrees,
                spec: spec.clone(),
                certified_degree: bound,
                completeness: Completeness::UpToDegree,
            })
        }
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition(
            "generator sweeps require a finite group or torus; declare a generating set instead"
                .into(),
        )),
    }
}

/// Degree-d invariants of a torus action: realifications of the monomials
/// `z^a zbar^b` with zero weight. Modulus monomials (a = b) come first,
/// then mixed pairs contribute a real and an imaginary part.
fn torus_invariant_basis(t: &crate::groups::TorusAction, d: u32) -> Vec<Poly> {
    let n = t.n_pairs;
    let nvars = 2 * n;
    let mut out = Vec::new();
    let balanced = |a: &Mono, b: &Mono| {
        t.weights.iter().all(|row| {
            (0..n)
                .map(|j| row[j] * (a.0[j] as i64 - b.0[j] as i64))
                .sum::<i64>()
                == 0
        })
    };
    // Modulus monomials: a = b, degree 2|a|.
    if d % 2 == 0 {
        for a in monomials_of_degree(n, d / 2) {
            if balanced(&a, &a) {
                let (re, _) = complex_monomial(&a, &a, nvars);
                out.push(re);
            }
        }
    }
    // Mixed pairs, each unordered pair once (a > b in graded-lex).
    for da in 0..=d {
        for a in monomials_of_degree(n, da) {
            for b in monomials_of_degree(n, d - da) {
                if a <= b || !balanced(&a, &b) {
                    continue;
                }
                let (re, im) = complex_monomial(&a, &b, nvars);
                if !re.is_zero() {
                    out.push(re);
                }
                if !im.is_zero() {
                    out.push(im);
                }
            }
        }
    }
    out
}

/// Real and imaginary parts of `prod_j (qj + i pj)^(a_j) (qj - i pj)^(b_j)`.
fn complex_monomial(a: &Mono, b: &Mono, nvars: usize) -> (Poly, Poly) {
    let n = nvars / 2;
    let mut re = Poly::one(nvars);
    let mut im = Poly::zero(nvars);
    let mul = |re_acc: &mut Poly, im_acc: &mut Poly, j: usize, conjugate: bool| {
        let q = Poly::var(nvars, j);
        let p = Poly::var(nvars, n + j);
        // (re + i im)(q ± i p)
        let sign = if conjugate { -Rat::one() } else { Rat::one() };
        let new_re = re_acc.mul(&q).sub(&im_acc.mul(&p).scale(&sign));
        let new_im = re_acc.mul(&p).scale(&sign).add(&im_acc.mul(&q));
        *re_acc = new_re;
        *im_acc = new_im;
    };
    for j in 0..n {
        for _ in 0..a.0[j] {
            mul(&mut re, &mut im, j, false);
        }
        for _ in 0..b.0[j] {
            mul(&mut re, &mut im, j, true);
        }
    }
    (re, im)
}

/// All products of the generators with total degree exactly `d`, in the
/// deterministic order induced by descending graded-lex on the exponent
/// vectors.
fn products_of_degree(generators: &[Poly], degrees: &[u32], d: u32) -> Vec<Poly> {
    weighted_exponents(degrees, d, true)
        .into_iter()
        .map(|beta| expand_product(generators, &beta))
        .collect()
}

/// Exponent vectors `beta` with `sum beta_i degrees_i == target` (or `<=`
/// when `exact` is false), sorted descending graded-lex.
fn weighted_exponents(degrees: &[u32], target: u32, exact: bool) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; degrees.len()];
    fn rec(
        degrees: &[u32],
        target: u32,
        exact: bool,
        idx: usize,
        used: u32,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if idx == degrees.len() {
            if (exact && used == target) || (!exact && used <= target) {
                out.push(cur.clone());
            }
            return;
        }
        let max_e = if degrees[idx] == 0 {
            0
        } else {
            (target - used) / degrees[idx]
        };
        for e in 0..=max_e {
            cur[idx] = e;
            rec(
                degrees,
                target,
                exact,
                idx + 1,
                used + e * degrees[idx],
                cur,
                out,
            );
        }
        cur[idx] = 0;
    }
    rec(degrees, target, exact, 0, 0, &mut cur, &mut out);
    out.sort_by(|a, b| Mono(b.clone()).cmp(&Mono(a.clone())));
    out
}

fn expand_product(generators: &[Poly], beta: &[u32]) -> Poly {
    let nvars = generators.first().map(|g| g.nvars).unwrap_or(0);
    let mut acc = Poly::one(nvars);
    for (g, &e) in generators.iter().zip(beta) {
        for _ in 0..e {
            acc = acc.mul(g);
        }
    }
    acc
}

/// Express an invariant polynomial exactly through the Hilbert map:
/// returns `F` in variables `y1..ym` with `F(p1, ..., pm) = f`.
pub fn express_in_generators(f: &Poly, h: &HilbertMap) -> Result<Poly> {
    if !is_invariant(&h.spec, f)? {
        return Err(Error::NotInvariant(
            "expressibility needs an exactly invariant input".into(),
        ));
    }
    express_in(&h.generators, &h.degrees, f)
}

fn express_in(generators: &[Poly], degrees: &[u32], f: &Poly) -> Result<Poly> {
    let m = generators.len();
    if f.is_zero() {
        return Ok(Poly::zero(m));
    }
    let deg = f.degree();
    let betas = weighted_exponents(degrees, deg, false);
    // Accumulate the column polys and the full monomial universe.
    let columns: Vec<Poly> = betas
        .iter()
        .map(|b| expand_product(generators, b))
        .collect();
    let mut universe: Vec<Mono> = Vec::new();
    for p in columns.iter().chain(std::iter::once(f)) {
        universe.extend(p.terms().map(|(mo, _)| mo.clone()));
    }
    universe.sort_by(|a, b| b.cmp(a));
    universe.dedup();
    let index: BTreeMap<std::cmp::Reverse<Mono>, usize> = universe
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, mo)| (std::cmp::Reverse(mo), i))
        .collect();
    let rows = universe.len();
    let mut a = RatMat::zeros(rows, betas.len());
    for (j, col) in columns.iter().enumerate() {
        for (mo, c) in col.terms() {
            a[(index[&std::cmp::Reverse(mo.clone())], j)] = c.clone();
        }
    }
    let mut b = vec![Rat::zero(); rows];
    for (mo, c) in f.terms() {
        b[index[&std::cmp::Reverse(mo.clone())]] = c.clone();
    }
    let sol = a.solve(&b).ok_or(Error::NotExpressible { degree: deg })?;
    let mut out = Poly::zero(m);
    for (c, beta) in sol.iter().zip(&betas) {
        if !c.is_zero() {
            out.add_term(Mono(beta.clone()), c.clone());
        }
    }
    Ok(out)
}

/// Algebraic relations among the generators up to the given total degree in
/// the ambient variables (default: twice the maximal generator degree).
/// Each relation is a polynomial in `y1..ym` whose pullback vanishes
/// identically; leading coefficients are normalized to +1.
pub fn generator_relations(h: &HilbertMap, degree_bound: Option<u32>) -> Result<Vec<Poly>> {
    let m = h.len();
    let max_deg = h.degrees.iter().copied().max().unwrap_or(1);
    let bound = degree_bound.unwrap_or(2 * max_deg);
    let betas = weighted_exponents(&h.degrees, bound, false);
    let columns: Vec<Poly> = betas
        .iter()
        .map(|b| expand_product(&h.generators, b))
        .collect();
    let mut universe: Vec<Mono> = Vec::new();
    for p in &columns {
        universe.extend(p.terms().map(|(mo, _)| mo.clone()));
    }
    universe.sort_by(|a, b| b.cmp(a));
    universe.dedup();
    let index: BTreeMap<std::cmp::Reverse<Mono>, usize> = universe
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, mo)| (std::cmp::Reverse(mo), i))
        .collect();
    let mut a = RatMat::zeros(universe.len(), betas.len());
    for (j, col) in columns.iter().enumerate() {
        for (mo, c) in col.terms() {
            a[(index[&std::cmp::Reverse(mo.clone())], j)] = c.clone();
        }
    }
    let null = a.nullspace();
    let mut out = Vec::new();
    for k in 0..null.ncols {
        let mut rel = Poly::zero(m);
        for (j, beta) in betas.iter().enumerate() {
            let c = null[(j, k)].clone();
            if !c.is_zero() {
                rel.add_term(Mono(beta.clone()), c);
            }
        }
        if let Some((_, lead)) = rel.leading() {
            let inv = lead.clone().recip();
            rel = rel.scale(&inv);
        }
        if !rel.is_zero() {
            out.push(rel);
        }
    }
    Ok(out)
}

/// Dimension of the degree-d piece of the subalgebra generated by the
/// Hilbert map; for a complete generator set this equals the invariant
/// dimension at d.
pub fn subalgebra_dimension(h: &HilbertMap, d: u32) -> usize {
    let nvars = h.space_dim();
    let mut span = Echelon::new(monomials_of_degree(nvars, d));
    for prod in products_of_degree(&h.generators, &h.degrees, d) {
        let v = span.vector_of(&prod);
        span.insert(v);
    }
    span.rank()
}

/// The reduced Poisson structure: an antisymmetric matrix of polynomials in
/// `y1..ym` with `{p_i, p_j} = Lambda_ij o p`.
#[derive(Debug, Clone)]
pub struct PoissonStructure {
    pub matrix: Vec<Vec<Poly>>,
}

impl PoissonStructure {
    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn is_antisymmetric(&self) -> bool {
        let m = self.matrix.len();
        (0..m).all(|i| (0..m).all(|j| self.matrix[i][j] == self.matrix[j][i].neg()))
    }

    /// `Lambda_ij o p - {p_i, p_j}`, all entries; must be zero polynomials.
    pub fn substitution_residuals(&self, h: &HilbertMap) -> Vec<Vec<Poly>> {
        let m = self.matrix.len();
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let lhs = self.matrix[i][j].substitute(&h.generators);
                        let rhs = poisson_bracket(&h.generators[i], &h.generators[j]);
                        lhs.sub(&rhs)
                    })
                    .collect()
            })
            .collect()
    }

    /// Jacobi identity of the induced bracket after substitution `y = p(v)`:
    /// for each triple (i, j, k), the cyclic sum
    /// `sum_l dLambda_ij/dy_l Lambda_lk + cyc` must pull back to zero.
    pub fn jacobi_residuals_substituted(&self, h: &HilbertMap) -> Vec<Poly> {
        let m = self.matrix.len();
        let mut out = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                for k in (j + 1)..m {
                    let mut acc = Poly::zero(m);
                    for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                        for l in 0..m {
                            acc = acc.add(&self.matrix[a][b].partial(l).mul(&self.matrix[l][c]));
                        }
                    }
                    out.push(acc.substitute(&h.generators));
                }
            }
        }
        out
    }
}

/// Compute the reduced structure matrix by expressing every bracket of
/// generators through the Hilbert map.
pub fn reduced_structure_matrix(h: &HilbertMap) -> Result<PoissonStructure> {
    let m = h.len();
    let mut matrix = vec![vec![Poly::zero(m); m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let br = poisson_bracket(&h.generators[i], &h.generators[j]);
            let expr = express_in(&h.generators, &h.degrees, &br)?;
            matrix[i][j] = expr.clone();
            matrix[j][i] = expr.neg();
        }
    }
    Ok(PoissonStructure { matrix })
}

/// Noether residual table `{p_i, F_a}`; every entry must be the zero
/// polynomial for invariant generators.
pub fn noether_residuals(h: &HilbertMap, f: &MomentumMap) -> Vec<Vec<Poly>> {
    h.generators
        .iter()
        .map(|p| {
            f.components
                .iter()
                .map(|fa| poisson_bracket(p, fa))
                .collect()
        })
        .collect()
}

/// Remainder of multivariate division by the momentum components in
/// graded-lex order. A zero remainder certifies ideal membership.
pub fn divide_by_momentum(f: &Poly, fm: &MomentumMap) -> Poly {
    let mut rem = Poly::zero(f.nvars);
    let mut work = f.clone();
    'outer: while !work.is_zero() {
        // Scan terms descending, divisors in order.
        let terms: Vec<(Mono, Rat)> = work.terms().map(|(m, c)| (m.clone(), c.clone())).collect();
        for (mono, coeff) in terms.iter().rev() {
            for d in &fm.components {
                let Some((lead_m, lead_c)) = d.leading() else {
                    continue;
                };
                if divides(lead_m, mono) {
                    let q_exps: Vec<u32> =
                        mono.0.iter().zip(&lead_m.0).map(|(a, b)| a - b).collect();
                    let q = Poly::monomial(work.nvars, &q_exps, coeff / lead_c);
                    work = work.sub(&q.mul(d));
                    continue 'outer;
                }
            }
        }
        // No term reducible: all of it is remainder.
        rem = rem.add(&work);
        break;
    }
    rem
}

fn divides(a: &Mono, b: &Mono) -> bool {
    a.0.iter().zip(&b.0).all(|(x, y)| x <= y)
}

/// Result of the Poisson-ideal diagnostic for one test function.
#[derive(Debug, Clone)]
pub struct IdealCheck {
    pub label: String,
    /// Zero remainder under division by the momentum components.
    pub membership_certified: bool,
    /// The bracket {f, h} as an exact polynomial is identically zero.
    pub bracket_vanishes_exactly: bool,
    /// Max |{f, h}(v)| over the samples.
    pub max_sample_residual: f64,
}

/// Check that brackets of an invariant `f` against functions vanishing on
/// the zero level stay in the vanishing ideal. The standard family is
/// `|F|^2`, `f |F|^2`, and all products `F_a F_b`; extra test functions may
/// be supplied but must vanish on the sampled level set.
pub fn poisson_ideal_diagnostic(
    f: &Poly,
    fm: &MomentumMap,
    samples: &[Vec<f64>],
    extra: &[Poly],
) -> Result<Vec<IdealCheck>> {
    let norm2 = fm.norm_squared_poly();
    let mut family: Vec<(String, Poly)> = vec![
        ("|F|^2".to_string(), norm2.clone()),
        ("f*|F|^2".to_string(), f.mul(&norm2)),
    ];
    for a in 0..fm.components.len() {
        for b in a..fm.components.len() {
            family.push((
                format!("F{}*F{}", a + 1, b + 1),
                fm.components[a].mul(&fm.components[b]),
            ));
        }
    }
    for (i, h) in extra.iter().enumerate() {
        family.push((format!("extra{}", i + 1), h.clone()));
    }
    let mut out = Vec::new();
    for (label, h) in family {
        // Every test function must vanish on the sampled level set.
        for v in samples {
            let hv = h.eval_f64(v);
            if hv.abs()
                > 1e-8 * (1.0 + v.iter().map(|x| x * x).sum::<f64>()).powi(h.degree() as i32 / 2)
            {
                return Err(Error::Precondition(format!(
                    "test function {label} does not vanish on the zero level (|h| = {hv:.3e})"
                )));
            }
        }
        let bracket = poisson_bracket(f, &h);
        let membership_certified = divide_by_momentum(&h, fm).is_zero();
        let bracket_vanishes_exactly = bracket.is_zero();
        let compiled = bracket.compile();
        let max_sample_residual = samples
            .iter()
            .map(|v| compiled.eval(v).abs())
            .fold(0.0f64, f64::max);
        out.push(IdealCheck {
            label,
            membership_certified,
            bracket_vanishes_exactly,
            max_sample_residual,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{FiniteGroup, TorusAction, DEFAULT_ORDER_BOUND};
    use crate::poly::VarSet;

    fn z2_spec() -> GroupSpec {
        GroupSpec::Finite(FiniteGroup {
            generators: vec![RatMat::identity(2).neg()],
            n_pairs: 1,
            order_bound: DEFAULT_ORDER_BOUND,
        })
    }

    fn circle_spec() -> GroupSpec {
        GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2))
    }

    fn trivial_spec() -> GroupSpec {
        GroupSpec::Finite(FiniteGroup {
            generators: vec![],
            n_pairs: 1,
            order_bound: DEFAULT_ORDER_BOUND,
        })
    }

    fn vars2() -> VarSet {
        VarSet::Phase { pairs: 1 }
    }

    #[test]
    fn bracket_canonical_pairs() {
        let vars = vars2();
        let q = Poly::parse("q1", &vars).unwrap();
        let p = Poly::parse("p1", &vars).unwrap();
        assert_eq!(poisson_bracket(&q, &p), Poly::one(2));
        assert_eq!(poisson_bracket(&q, &q), Poly::zero(2));
        let vars4 = VarSet::Phase { pairs: 2 };
        let q1 = Poly::parse("q1", &vars4).unwrap();
        let q2 = Poly::parse("q2", &vars4).unwrap();
        assert!(poisson_bracket(&q1, &q2).is_zero());
    }

    #[test]
    fn bracket_cone_quadratics() {
        // u = q1^2, v = q1 p1, w = p1^2: {u,v} = 2u, {u,w} = 4v, {v,w} = 2w.
        let vars = vars2();
        let u = Poly::parse("q1^2", &vars).unwrap();
        let v = Poly::parse("q1*p1", &vars).unwrap();
        let w = Poly::parse("p1^2", &vars).unwrap();
        assert_eq!(poisson_bracket(&u, &v), u.scale(&rat(2)));
        assert_eq!(poisson_bracket(&u, &w), v.scale(&rat(4)));
        assert_eq!(poisson_bracket(&v, &w), w.scale(&rat(2)));
    }

    #[test]
    fn reynolds_projects_and_fixes() {
        let GroupSpec::Finite(g) = z2_spec() else {
            panic!()
        };
        let elements = close_group(&g).unwrap();
        let vars = vars2();
        let x = Poly::parse("q1", &vars).unwrap();
        let x2 = Poly::parse("q1^2", &vars).unwrap();
        assert!(reynolds(&x, &elements).is_zero());
        assert_eq!(reynolds(&x2, &elements), x2);
    }

    #[test]
    fn reynolds_c4_quartic_average() {
        // Order-4 rotation in one (q, p) plane: averaging q1^4 over the four
        // images q1^4, p1^4, q1^4, p1^4 gives (q1^4 + p1^4)/2, with zero
        // cross term.
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 16,
        };
        let elements = close_group(&g).unwrap();
        let vars = vars2();
        let f = Poly::parse("q1^4", &vars).unwrap();
        let expect = Poly::parse("1/2*q1^4 + 1/2*p1^4", &vars).unwrap();
        assert_eq!(reynolds(&f, &elements), expect);
    }

    #[test]
    fn molien_z2_degree_2() {
        let GroupSpec::Finite(g) = z2_spec() else {
            panic!()
        };
        let elements = close_group(&g).unwrap();
        // Oracle: (1/2)[1/(1-t)^2 + 1/(1+t)^2] has coefficients d+1 at even
        // d, zero at odd d.
        assert_eq!(molien_dimension(&elements, 0).unwrap(), 1);
        assert_eq!(molien_dimension(&elements, 1).unwrap(), 0);
        assert_eq!(molien_dimension(&elements, 2).unwrap(), 3);
        assert_eq!(molien_dimension(&elements, 4).unwrap(), 5);
    }

    #[test]
    fn molien_trivial_group() {
        let GroupSpec::Finite(g) = trivial_spec() else {
            panic!()
        };
        let elements = close_group(&g).unwrap();
        assert_eq!(molien_dimension(&elements, 0).unwrap(), 1);
        assert_eq!(molien_dimension(&elements, 1).unwrap(), 2);
    }

    #[test]
    fn molien_c4() {
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 16,
        };
        let elements = close_group(&g).unwrap();
        assert_eq!(molien_dimension(&elements, 2).unwrap(), 1);
        assert_eq!(molien_dimension(&elements, 4).unwrap(), 3);
    }

    #[test]
    fn z2_generators_are_the_three_quadratics() {
        let h = invariant_generators(&z2_spec(), None).unwrap();
        let vars = vars2();
        let expect = vec![
            Poly::parse("q1^2", &vars).unwrap(),
            Poly::parse("q1*p1", &vars).unwrap(),
            Poly::parse("p1^2", &vars).unwrap(),
        ];
        assert_eq!(h.generators, expect);
        assert_eq!(h.degrees, vec![2, 2, 2]);
        assert_eq!(h.completeness, Completeness::NoetherBound);
        h.verify_minimal().unwrap();
    }

    #[test]
    fn trivial_group_generators_are_coordinates() {
        let h = invariant_generators(&trivial_spec(), None).unwrap();
        let vars = vars2();
        assert_eq!(
            h.generators,
            vec![
                Poly::parse("q1", &vars).unwrap(),
                Poly::parse("p1", &vars).unwrap(),
            ]
        );
    }

    #[test]
    fn circle_generators_four_quadratics() {
        let h = invariant_generators(&circle_spec(), None).unwrap();
        let vars = VarSet::Phase { pairs: 2 };
        let expect = vec![
            Poly::parse("q1^2 + p1^2", &vars).unwrap(),
            Poly::parse("q2^2 + p2^2", &vars).unwrap(),
            Poly::parse("q1*q2 - p1*p2", &vars).unwrap(),
            Poly::parse("q1*p2 + q2*p1", &vars).unwrap(),
        ];
        assert_eq!(h.generators, expect);
        h.verify_minimal().unwrap();
    }

    #[test]
    fn circle_relation_surfaced() {
        let h = invariant_generators(&circle_spec(), None).unwrap();
        let rels = generator_relations(&h, None).unwrap();
        let yvars = VarSet::Reduced { count: 4 };
        let expect = Poly::parse("y1*y2 - y3^2 - y4^2", &yvars).unwrap();
        assert_eq!(rels, vec![expect]);
    }

    #[test]
    fn express_single_generator() {
        let h = invariant_generators(&circle_spec(), None).unwrap();
        let expr = express_in_generators(&h.generators[0], &h).unwrap();
        let yvars = VarSet::Reduced { count: 4 };
        assert_eq!(expr, Poly::parse("y1", &yvars).unwrap());
    }

    #[test]
    fn express_momentum_norm_circle() {
        let spec = circle_spec();
        let h = invariant_generators(&spec, None).unwrap();
        let fm = momentum_map(&spec).unwrap();
        let expr = express_in_generators(&fm.norm_squared_poly(), &h).unwrap();
        let yvars = VarSet::Reduced { count: 4 };
        let expect = Poly::parse("1/4*y1^2 - 1/2*y1*y2 + 1/4*y2^2", &yvars).unwrap();
        assert_eq!(expr, expect);
        // Substitution identity, exactly.
        assert_eq!(expr.substitute(&h.generators), fm.norm_squared_poly());
    }

    #[test]
    fn express_z2_quartic() {
        let h = invariant_generators(&z2_spec(), None).unwrap();
        let vars = vars2();
        // (q^2 + p^2)^2 = (y1 + y3)^2 in generators (q^2, qp, p^2).
        let f = Poly::parse("q1^4 + 2*q1^2*p1^2 + p1^4", &vars).unwrap();
        let expr = express_in_generators(&f, &h).unwrap();
        let yvars = VarSet::Reduced { count: 3 };
        assert_eq!(expr, Poly::parse("y1^2 + 2*y1*y3 + y3^2", &yvars).unwrap());
    }

    #[test]
    fn express_rejects_non_invariant() {
        let h = invariant_generators(&z2_spec(), None).unwrap();
        let f = Poly::parse("q1", &vars2()).unwrap();
        assert!(matches!(
            express_in_generators(&f, &h),
            Err(Error::NotInvariant(_))
        ));
    }

    #[test]
    fn structure_matrix_z2_cone() {
        let h = invariant_generators(&z2_spec(), None).unwrap();
        let lambda = reduced_structure_matrix(&h).unwrap();
        let y = VarSet::Reduced { count: 3 };
        let expect = [
            ["0", "2*y1", "4*y2"],
            ["-2*y1", "0", "2*y3"],
            ["-4*y2", "-2*y3", "0"],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(lambda.matrix[i][j], Poly::parse(expect[i][j], &y).unwrap());
            }
        }
        assert!(lambda.is_antisymmetric());
        for row in lambda.substitution_residuals(&h) {
            for r in row {
                assert!(r.is_zero());
            }
        }
        for r in lambda.jacobi_residuals_substituted(&h) {
            assert!(r.is_zero());
        }
    }

    #[test]
    fn structure_matrix_trivial_group() {
        let h = invariant_generators(&trivial_spec(), None).unwrap();
        let lambda = reduced_structure_matrix(&h).unwrap();
        let y = VarSet::Reduced { count: 2 };
        assert_eq!(lambda.matrix[0][1], Poly::parse("1", &y).unwrap());
        assert_eq!(lambda.matrix[1][0], Poly::parse("-1", &y).unwrap());
    }

    #[test]
    fn structure_matrix_circle_antisymmetric_jacobi() {
        let spec = circle_spec();
        let h = invariant_generators(&spec, None).unwrap();
        let lambda = reduced_structure_matrix(&h).unwrap();
        assert!(lambda.is_antisymmetric());
        for row in lambda.substitution_residuals(&h) {
            for r in row {
                assert!(r.is_zero());
            }
        }
        for r in lambda.jacobi_residuals_substituted(&h) {
            assert!(r.is_zero());
        }
    }

    #[test]
    fn noether_polynomials_vanish() {
        let spec = circle_spec();
        let h = invariant_generators(&spec, None).unwrap();
        let fm = momentum_map(&spec).unwrap();
        for row in noether_residuals(&h, &fm) {
            for r in row {
                assert!(r.is_zero());
            }
        }
    }

    #[test]
    fn bracket_closure_on_generators() {
        // {p_i, p_j} is invariant for all generator pairs (Reynolds fixed
        // point / momentum bracket test).
        for spec in [z2_spec(), circle_spec()] {
            let h = invariant_generators(&spec, None).unwrap();
            for i in 0..h.len() {
                for j in 0..h.len() {
                    let br = poisson_bracket(&h.generators[i], &h.generators[j]);
                    assert!(is_invariant(&spec, &br).unwrap());
                }
            }
        }
    }

    #[test]
    fn subalgebra_dimensions_match_molien() {
        let GroupSpec::Finite(g) = z2_spec() else {
            panic!()
        };
        let elements = close_group(&g).unwrap();
        let h = invariant_generators(&z2_spec(), None).unwrap();
        for d in 1..=8 {
            assert_eq!(
                subalgebra_dimension(&h, d),
                molien_dimension(&elements, d).unwrap(),
                "degree {d}"
            );
        }
    }

    #[test]
    fn torus_dimension_cross_check() {
        // Circle (1,-1) on C^2: degree-2 invariant space is 4-dimensional.
        assert_eq!(torus_invariant_dimension(&[vec![1, -1]], 2, 2), 4);
        assert_eq!(torus_invariant_dimension(&[vec![1, -1]], 2, 1), 0);
        assert_eq!(torus_invariant_dimension(&[vec![1, -1]], 2, 3), 0);
        assert_eq!(torus_invariant_dimension(&[vec![1, -1]], 2, 4), 9);
    }

    #[test]
    fn division_certifies_momentum_norm() {
        let spec = circle_spec();
        let fm = momentum_map(&spec).unwrap();
        let rem = divide_by_momentum(&fm.norm_squared_poly(), &fm);
        assert!(rem.is_zero());
    }

    #[test]
    fn ideal_diagnostic_circle() {
        let spec = circle_spec();
        let h = invariant_generators(&spec, None).unwrap();
        let fm = momentum_map(&spec).unwrap();
        // Points on |z1| = |z2|: the zero level of the circle momentum.
        let samples: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.6, 0.0, 0.0, 0.6],
            vec![0.3, -0.4, 0.4, 0.3],
        ];
        let checks = poisson_ideal_diagnostic(&h.generators[2], &fm, &samples, &[]).unwrap();
        for c in &checks {
            assert!(c.membership_certified, "{} not certified", c.label);
            assert!(c.bracket_vanishes_exactly, "{} bracket nonzero", c.label);
            assert!(c.max_sample_residual <= 1e-10);
        }
        // Constant f: everything vanishes.
        let one = Poly::one(4);
        let checks = poisson_ideal_diagnostic(&one, &fm, &samples, &[]).unwrap();
        assert!(checks.iter().all(|c| c.bracket_vanishes_exactly));
    }

    #[test]
    fn ideal_diagnostic_guards_nonvanishing_test_function() {
        let spec = trivial_spec();
        let fm = momentum_map(&spec).unwrap();
        let f = Poly::one(2);
        let q1 = Poly::parse("q1", &vars2()).unwrap();
        let samples = vec![vec![0.5, 0.25]];
        let r = poisson_ideal_diagnostic(&f, &fm, &samples, &[q1]);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn declared_map_validates_invariance() {
        let spec = circle_spec();
        let vars = VarSet::Phase { pairs: 2 };
        let bad = Poly::parse("q1", &vars).unwrap();
        assert!(HilbertMap::declare(spec, vec![bad], 2).is_err());
    }
}
