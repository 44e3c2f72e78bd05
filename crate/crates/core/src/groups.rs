//! Compact symmetry data acting linearly and symplectically: finite matrix
//! groups, torus actions given by integer weights, and matrix Lie algebras
//! in sp(2n); momentum maps, isotropy and orbit types.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::exact::{is_symplectic_exact, rat, standard_omega_exact, Rat, RatMat};
use crate::lattice::{self, IntMat};
use crate::poly::{poisson_bracket, Mono, Poly};
use crate::symplectic::{kernel, Subspace};

pub const DEFAULT_ORDER_BOUND: usize = 1024;

/// A finite subgroup of Sp(2n, Q) given by exact generators.
#[derive(Debug, Clone)]
pub struct FiniteGroup {
    pub generators: Vec<RatMat>,
    pub n_pairs: usize,
    pub order_bound: usize,
}

/// A torus T^k acting on C^n = R^2n with integer weight matrix `A` (k x n):
/// the a-th circle factor rotates the j-th coordinate plane at rate
/// `A[a][j]`. Sign convention: the infinitesimal generator is
/// `X_a = [[0, D_a], [-D_a, 0]]`, which makes the momentum components
/// `F_a = 1/2 sum_j A[a][j] (qj^2 + pj^2)`.
#[derive(Debug, Clone)]
pub struct TorusAction {
    pub weights: Vec<Vec<i64>>,
    pub n_pairs: usize,
}

/// A matrix Lie algebra with basis in sp(2n) and structure constants
/// `[X_a, X_b] = sum_c structure[a][b][c] X_c`.
#[derive(Debug, Clone)]
pub struct MatrixLieAlgebra {
    pub basis: Vec<RatMat>,
    pub structure: Vec<Vec<Vec<Rat>>>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone)]
pub enum GroupSpec {
    Finite(FiniteGroup),
    Torus(TorusAction),
    LieAlgebra(MatrixLieAlgebra),
}

impl GroupSpec {
    pub fn n_pairs(&self) -> usize {
        match self {
            GroupSpec::Finite(g) => g.n_pairs,
            GroupSpec::Torus(t) => t.n_pairs,
            GroupSpec::LieAlgebra(a) => a.n_pairs,
        }
    }

    pub fn space_dim(&self) -> usize {
        2 * self.n_pairs()
    }

    /// Dimension of the acting Lie algebra (zero for finite groups).
    pub fn algebra_dim(&self) -> usize {
        match self {
            GroupSpec::Finite(_) => 0,
            GroupSpec::Torus(t) => t.weights.len(),
            GroupSpec::LieAlgebra(a) => a.basis.len(),
        }
    }

    /// Infinitesimal generators as exact matrices.
    pub fn generators_exact(&self) -> Vec<RatMat> {
        match self {
            GroupSpec::Finite(_) => Vec::new(),
            GroupSpec::Torus(t) => t.generator_matrices(),
            GroupSpec::LieAlgebra(a) => a.basis.clone(),
        }
    }

    /// Structure constants (all zero for a torus).
    pub fn structure_constants(&self) -> Vec<Vec<Vec<Rat>>> {
        match self {
            GroupSpec::Finite(_) => Vec::new(),
            GroupSpec::Torus(t) => {
                let k = t.weights.len();
                vec![vec![vec![Rat::zero(); k]; k]; k]
            }
            GroupSpec::LieAlgebra(a) => a.structure.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Finite(g) => {
                let omega = standard_omega_exact(g.n_pairs);
                for gen in &g.generators {
                    if gen.nrows != 2 * g.n_pairs || gen.ncols != 2 * g.n_pairs {
                        return Err(Error::Dimension("generator has wrong shape".into()));
                    }
                    if !is_symplectic_exact(gen, &omega) {
                        return Err(Error::NonSymplectic(
                            "finite generator does not preserve the form".into(),
                        ));
                    }
                }
                Ok(())
            }
            GroupSpec::Torus(t) => {
                if t.weights.iter().any(|row| row.len() != t.n_pairs) {
                    return Err(Error::Dimension("weight row length != n".into()));
                }
                Ok(())
            }
            GroupSpec::LieAlgebra(a) => a.validate(),
        }
    }
}

impl TorusAction {
    pub fn new(weights: Vec<Vec<i64>>, n_pairs: usize) -> Self {
        TorusAction { weights, n_pairs }
    }

    /// `X_a = [[0, D_a], [-D_a, 0]]` in (q, p) block order.
    pub fn generator_matrices(&self) -> Vec<RatMat> {
        let n = self.n_pairs;
        self.weights
            .iter()
            .map(|row| {
                let mut x = RatMat::zeros(2 * n, 2 * n);
                for (j, &w) in row.iter().enumerate() {
                    x[(j, n + j)] = rat(w);
                    x[(n + j, j)] = rat(-w);
                }
                x
            })
            .collect()
    }

    /// The group element with each circle factor at a quarter turn multiple,
    /// which is an exact rational matrix. `turns[a]` counts quarter turns of
    /// factor `a`.
    pub fn quarter_turn_element(&self, turns: &[i64]) -> RatMat {
        assert_eq!(turns.len(), self.weights.len());
        let n = self.n_pairs;
        let mut g = RatMat::zeros(2 * n, 2 * n);
        for j in 0..n {
            let m: i64 = self
                .weights
                .iter()
                .zip(turns)
                .map(|(row, &t)| row[j] * t)
                .sum();
            let (c, s) = match m.rem_euclid(4) {
                0 => (1i64, 0i64),
                1 => (0, 1),
                2 => (-1, 0),
                _ => (0, -1),
            };
            // exp(theta X) on the (qj, pj) plane with X = [[0,1],[-1,0]].
            g[(j, j)] = rat(c);
            g[(j, n + j)] = rat(s);
            g[(n + j, j)] = rat(-s);
            g[(n + j, n + j)] = rat(c);
        }
        g
    }

    /// Weight columns restricted to a support set, as a big-integer matrix
    /// (k x |support|).
    pub fn weight_submatrix(&self, support: &[usize]) -> IntMat {
        self.weights
            .iter()
            .map(|row| support.iter().map(|&j| BigInt::from(row[j])).collect())
            .collect()
    }
}

impl MatrixLieAlgebra {
    pub fn validate(&self) -> Result<()> {
        let dim = 2 * self.n_pairs;
        let omega = standard_omega_exact(self.n_pairs);
        let k = self.basis.len();
        for x in &self.basis {
            if x.nrows != dim || x.ncols != dim {
                return Err(Error::Dimension("algebra generator has wrong shape".into()));
            }
            // X^T Omega + Omega X = 0
            let lhs = x.transpose().mul(&omega).add(&omega.mul(x));
            if !lhs.is_zero() {
                return Err(Error::NonSymplectic(
                    "algebra generator is not in sp(2n)".into(),
                ));
            }
        }
        if self.structure.len() != k
            || self
                .structure
                .iter()
                .any(|m| m.len() != k || m.iter().any(|r| r.len() != k))
        {
            return Err(Error::Dimension(
                "structure constants have wrong shape".into(),
            ));
        }
        // Antisymmetry and agreement with the matrix bracket.
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    if self.structure[a][b][c] != -self.structure[b][a][c].clone() {
                        return Err(Error::Precondition(
                            "structure constants are not antisymmetric".into(),
                        ));
                    }
                }
                let bracket = self.basis[a]
                    .mul(&self.basis[b])
                    .sub(&self.basis[b].mul(&self.basis[a]));
                let mut combo = RatMat::zeros(dim, dim);
                for c in 0..k {
                    combo = combo.add(&self.basis[c].scale(&self.structure[a][b][c]));
                }
                if bracket != combo {
                    return Err(Error::Precondition(
                        "structure constants disagree with the matrix bracket".into(),
                    ));
                }
            }
        }
        // Jacobi identity.
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for e in 0..k {
                        let mut acc = Rat::zero();
                        for d in 0..k {
                            acc += &self.structure[a][b][d] * &self.structure[d][c][e];
                            acc += &self.structure[b][c][d] * &self.structure[d][a][e];
                            acc += &self.structure[c][a][d] * &self.structure[d][b][e];
                        }
                        if !acc.is_zero() {
                            return Err(Error::Precondition(
                                "structure constants violate the Jacobi identity".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Saturate a finite generating set into the full element list, sorted
/// lexicographically on the flattened entries.
pub fn close_group(group: &FiniteGroup) -> Result<Vec<RatMat>> {
    let dim = 2 * group.n_pairs;
    let omega = standard_omega_exact(group.n_pairs);
    for g in &group.generators {
        if g.nrows != dim || g.ncols != dim {
            return Err(Error::Dimension("generator has wrong shape".into()));
        }
        if !is_symplectic_exact(g, &omega) {
            return Err(Error::NonSymplectic(
                "generator does not preserve the form".into(),
            ));
        }
    }
    let mut elements: BTreeMap<Vec<Rat>, RatMat> = BTreeMap::new();
    let id = RatMat::identity(dim);
    elements.insert(id.lex_key(), id);
    let mut frontier: Vec<RatMat> = elements.values().cloned().collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for e in &frontier {
            for g in &group.generators {
                let prod = e.mul(g);
                let key = prod.lex_key();
                if let std::collections::btree_map::Entry::Vacant(entry) = elements.entry(key) {
                    entry.insert(prod.clone());
                    next.push(prod);
                    if elements.len() > group.order_bound {
                        return Err(Error::OrderBound { bound: group.order_bound });
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(elements.into_values().collect())
}

/// Momentum map of a linear symplectic action: one quadratic polynomial
/// `F_a(v) = 1/2 omega(X_a v, v)` per algebra basis element. Finite groups
/// get the empty map.
#[derive(Debug, Clone)]
pub struct MomentumMap {
    pub components: Vec<Poly>,
    pub n_pairs: usize,
}

impl MomentumMap {
    pub fn algebra_dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval_f64(&self, v: &[f64]) -> Vec<f64> {
        self.components.iter().map(|f| f.eval_f64(v)).collect()
    }

    pub fn eval_rat(&self, v: &[Rat]) -> Vec<Rat> {
        self.components.iter().map(|f| f.eval_rat(v)).collect()
    }

    /// Jacobian dF at a point, rows indexed by components.
    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let k = self.components.len();
        let dim = 2 * self.n_pairs;
        let mut j = DMatrix::zeros(k, dim);
        for (a, f) in self.components.iter().enumerate() {
            for (i, df) in f.gradient().iter().enumerate() {
                j[(a, i)] = df.eval_f64(v);
            }
        }
        j
    }

    pub fn norm_squared_poly(&self) -> Poly {
        let dim = 2 * self.n_pairs;
        self.components
            .iter()
            .fold(Poly::zero(dim), |acc, f| acc.add(&f.mul(f)))
    }
}

pub fn momentum_map(spec: &GroupSpec) -> Result<MomentumMap> {
    spec.validate()?;
    let n = spec.n_pairs();
    let dim = 2 * n;
    let omega = standard_omega_exact(n);
    let components = spec
        .generators_exact()
        .iter()
        .map(|x| {
            // F(v) = 1/2 v^T (X^T Omega) v with X^T Omega symmetric.
            let s = x.transpose().mul(&omega);
            let mut f = Poly::zero(dim);
            for i in 0..dim {
                for j in 0..dim {
                    if s[(i, j)].is_zero() {
                        continue;
                    }
                    let mut exps = vec![0u32; dim];
                    exps[i] += 1;
                    exps[j] += 1;
                    f.add_term(Mono(exps), &s[(i, j)] * &crate::exact::ratq(1, 2));
                }
            }
            f
        })
        .collect();
    Ok(MomentumMap {
        components,
        n_pairs: n,
    })
}

/// Residual table `{F_a, F_b} - F_[a,b]`, exact. All entries must be the
/// zero polynomial; a nonzero entry signals a sign-convention mismatch in
/// the supplied structure constants.
pub fn check_equivariance(f: &MomentumMap, spec: &GroupSpec) -> Vec<Vec<Poly>> {
    let k = f.algebra_dim();
    let dim = 2 * f.n_pairs;
    let c = spec.structure_constants();
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    let bracket = poisson_bracket(&f.components[a], &f.components[b]);
                    let mut expected = Poly::zero(dim);
                    for (ci, coeff) in c[a][b].iter().enumerate() {
                        expected = expected.add(&f.components[ci].scale(coeff));
                    }
                    bracket.sub(&expected)
                })
                .collect()
        })
        .collect()
}

/// Isotropy data at a point, per group variant.
#[derive(Debug, Clone)]
pub enum IsotropyData {
    /// The exact stabilizer subgroup, as indices into the closed element
    /// list plus the element matrices.
    Finite {
        element_indices: Vec<usize>,
        elements: Vec<RatMat>,
    },
    /// Subtorus dimension plus finite-part invariant factors, with the
    /// canonical kernel-lattice basis (rows, Hermite normal form).
    Torus {
        support: Vec<usize>,
        subtorus_dim: usize,
        invariant_factors: Vec<BigInt>,
        kernel_hnf: IntMat,
    },
    /// The isotropy subalgebra `{xi : X(xi) v = 0}` as a subspace of R^k.
    Subalgebra(Subspace),
}

impl IsotropyData {
    pub fn order_or_dim(&self) -> (usize, usize) {
        match self {
            IsotropyData::Finite {
                element_indices, ..
            } => (element_indices.len(), 0),
            IsotropyData::Torus {
                subtorus_dim,
                invariant_factors,
                ..
            } => {
                let torsion: usize = invariant_factors
                    .iter()
                    .map(|f| f.to_string().parse::<usize>().unwrap_or(usize::MAX))
                    .product();
                (torsion.max(1), *subtorus_dim)
            }
            IsotropyData::Subalgebra(s) => (1, s.dim()),
        }
    }
}

fn guard_band(value: f64, tol: f64) -> Result<bool> {
    if value > 0.1 * tol && value < 10.0 * tol {
        return Err(Error::ToleranceAmbiguity { value, cutoff: tol });
    }
    Ok(value <= 0.1 * tol)
}

/// Isotropy of a point. `tol` governs the zero tests in floating mode; a
/// magnitude inside `[0.1 tol, 10 tol]` raises an ambiguity error.
pub fn isotropy(spec: &GroupSpec, v: &[f64], tol: f64) -> Result<IsotropyData> {
    if v.len() != spec.space_dim() {
        return Err(Error::Dimension(format!(
            "point has dim {}, space has dim {}",
            v.len(),
            spec.space_dim()
        )));
    }
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let vv = DVector::from_column_slice(v);
            let scale = vv.norm().max(1.0);
            let mut indices = Vec::new();
            let mut mats = Vec::new();
            for (i, e) in elements.iter().enumerate() {
                let moved = (e.to_f64() * &vv - &vv).norm();
                if guard_band(moved / scale, tol)? {
                    indices.push(i);
                    mats.push(e.clone());
                }
            }
            Ok(IsotropyData::Finite {
                element_indices: indices,
                elements: mats,
            })
        }
        GroupSpec::Torus(t) => {
            let n = t.n_pairs;
            let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
            let mut support = Vec::new();
            for j in 0..n {
                let r = (v[j] * v[j] + v[n + j] * v[n + j]).sqrt();
                if !guard_band(r / scale, tol)? {
                    support.push(j);
                }
            }
            Ok(torus_isotropy_for_support(t, &support))
        }
        GroupSpec::LieAlgebra(a) => {
            let k = a.basis.len();
            let dim = 2 * a.n_pairs;
            let mut m = DMatrix::zeros(dim, k);
            let vv = DVector::from_column_slice(v);
            for (c, x) in a.basis.iter().enumerate() {
                m.set_column(c, &(x.to_f64() * &vv));
            }
            let ker = kernel(&m)?;
            // Bracket closure of the isotropy subalgebra.
            if !subalgebra_is_bracket_closed(&a.structure, &ker) {
                return Err(Error::Numerical(
                    "computed isotropy subalgebra is not bracket-closed".into(),
                ));
            }
            Ok(IsotropyData::Subalgebra(ker))
        }
    }
}

/// Exact isotropy of a rational point under a finite group.
pub fn isotropy_finite_exact(elements: &[RatMat], v: &[Rat]) -> Vec<usize> {
    elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.mul_vec(v) == v)
        .map(|(i, _)| i)
        .collect()
}

/// Torus isotropy from a support pattern: the subgroup
/// `{theta : A_j . theta in 2 pi Z for all j in support}`, classified by the
/// Smith normal form of the weight submatrix.
pub fn torus_isotropy_for_support(t: &TorusAction, support: &[usize]) -> IsotropyData {
    let k = t.weights.len();
    let sub = t.weight_submatrix(support); // k x |S|
    let subtorus_dim = k - lattice::int_rank(&sub);
    let invariant_factors = lattice::invariant_factors(&sub);
    // Integer kernel of A_S^T: directions of the isotropy subtorus.
    let sub_t: IntMat = if support.is_empty() {
        Vec::new()
    } else {
        (0..support.len())
            .map(|j| (0..k).map(|a| sub[a][j].clone()).collect())
            .collect()
    };
    let ker = if sub_t.is_empty() {
        lattice::int_identity(k)
    } else {
        lattice::integer_kernel(&sub_t)
    };
    let kernel_hnf = lattice::hermite_normal_form(&ker);
    IsotropyData::Torus {
        support: support.to_vec(),
        subtorus_dim,
        invariant_factors,
        kernel_hnf,
    }
}

/// Does the torus isotropy of the given support act trivially on
/// coordinate plane `j`? Exact lattice test: `A_j` must lie in the lattice
/// `{A_S c : c integer}` saturated by the SNF denominators.
pub fn torus_isotropy_fixes_coordinate(t: &TorusAction, support: &[usize], j: usize) -> bool {
    if support.contains(&j) {
        return true;
    }
    let k = t.weights.len();
    let sub = t.weight_submatrix(support);
    if support.is_empty() {
        // Isotropy is the whole torus; only zero-weight coordinates are fixed.
        return t.weights.iter().all(|row| row[j] == 0);
    }
    let (u, d, _) = lattice::smith_normal_form(&sub);
    let r = (0..k.min(support.len()))
        .filter(|&i| !d[i][i].is_zero())
        .count();
    let aj: IntMat = (0..k)
        .map(|a| vec![BigInt::from(t.weights[a][j])])
        .collect();
    let w = lattice::int_mul(&u, &aj);
    for i in 0..k {
        let wi = &w[i][0];
        if i < r {
            if !(wi % &d[i][i]).is_zero() {
                return false;
            }
        } else if !wi.is_zero() {
            return false;
        }
    }
    true
}

fn subalgebra_is_bracket_closed(structure: &[Vec<Vec<Rat>>], sub: &Subspace) -> bool {
    let k = structure.len();
    if sub.dim() == 0 {
        return true;
    }
    let b = sub.basis();
    let mut cols = DMatrix::zeros(k, sub.dim() * sub.dim());
    let mut at = 0;
    for i in 0..sub.dim() {
        for j in 0..sub.dim() {
            let mut out = DVector::zeros(k);
            for a in 0..k {
                for bb in 0..k {
                    let coef = b[(a, i)] * b[(bb, j)];
                    if coef == 0.0 {
                        continue;
                    }
                    for c in 0..k {
                        out[c] += coef * crate::exact::rat_to_f64(&structure[a][bb][c]);
                    }
                }
            }
            cols.set_column(at, &out);
            at += 1;
        }
    }
    (0..cols.ncols()).all(|c| {
        let col = DVector::from_column_slice(cols.column(c).as_slice());
        col.norm() < 1e-9 || sub.contains_vector(&col, 1e-8)
    })
}

/// Canonical orbit-type identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrbitTypeId(pub String);

impl std::fmt::Display for OrbitTypeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Orbit type of a point: conjugacy class of the stabilizer (finite case)
/// or the pair (kernel lattice HNF, invariant factors) for a torus.
pub fn orbit_type(spec: &GroupSpec, v: &[f64], tol: f64) -> Result<OrbitTypeId> {
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let iso = isotropy(spec, v, tol)?;
            let IsotropyData::Finite {
                element_indices, ..
            } = iso
            else {
                unreachable!()
            };
            Ok(finite_class_id(&elements, &element_indices))
        }
        GroupSpec::Torus(_) => {
            let iso = isotropy(spec, v, tol)?;
            let IsotropyData::Torus {
                invariant_factors,
                kernel_hnf,
                ..
            } = iso
            else {
                unreachable!()
            };
            Ok(torus_class_id(&kernel_hnf, &invariant_factors))
        }
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition(
            "orbit-type classification requires a finite group or torus".into(),
        )),
    }
}

/// Conjugacy-class identifier for a subgroup of a closed finite group: the
/// lexicographically least sorted element list over all conjugates.
pub fn finite_class_id(elements: &[RatMat], subgroup: &[usize]) -> OrbitTypeId {
    let lookup: BTreeMap<Vec<Rat>, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.lex_key(), i))
        .collect();
    let inverses: Vec<usize> = elements
        .iter()
        .map(|e| {
            let inv = e.inverse().expect("group element invertible");
            *lookup.get(&inv.lex_key()).expect("inverse in group")
        })
        .collect();
    let mut best: Option<Vec<usize>> = None;
    for (g, gm) in elements.iter().enumerate() {
        let ginv = &elements[inverses[g]];
        let mut conj: Vec<usize> = subgroup
            .iter()
            .map(|&h| {
                let m = gm.mul(&elements[h]).mul(ginv);
                *lookup.get(&m.lex_key()).expect("conjugate in group")
            })
            .collect();
        conj.sort_unstable();
        if best.as_ref().is_none_or(|b| conj < *b) {
            best = Some(conj);
        }
    }
    let ids: Vec<String> = best
        .unwrap_or_default()
        .iter()
        .map(|i| i.to_string())
        .collect();
    OrbitTypeId(format!("finite[{}]", ids.join(",")))
}

pub fn torus_class_id(kernel_hnf: &IntMat, invariant_factors: &[BigInt]) -> OrbitTypeId {
    let rows: Vec<String> = kernel_hnf
        .iter()
        .map(|r| {
            r.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let fac: Vec<String> = invariant_factors.iter().map(|x| x.to_string()).collect();
    OrbitTypeId(format!("torus[{};{}]", rows.join("|"), fac.join(",")))
}

/// All subgroups of a small closed group, as sorted index sets.
pub fn all_subgroups(elements: &[RatMat]) -> Result<Vec<Vec<usize>>> {
    let n = elements.len();
    if n > 64 {
        return Err(Error::Precondition(format!(
            "subgroup enumeration limited to order 64, group has {n}"
        )));
    }
    let lookup: BTreeMap<Vec<Rat>, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.lex_key(), i))
        .collect();
    let table: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    *lookup
                        .get(&elements[i].mul(&elements[j]).lex_key())
                        .expect("closed")
                })
                .collect()
        })
        .collect();
    let identity = (0..n)
        .find(|&i| elements[i] == RatMat::identity(elements[i].nrows))
        .ok_or_else(|| Error::Precondition("element list lacks the identity".into()))?;

    let close = |seed: &[usize]| -> Vec<usize> {
        let mut set: Vec<bool> = vec![false; n];
        set[identity] = true;
        for &s in seed {
            set[s] = true;
        }
        loop {
            let mut grew = false;
            let members: Vec<usize> = (0..n).filter(|&i| set[i]).collect();
            for &a in &members {
                for &b in &members {
                    let p = table[a][b];
                    if !set[p] {
                        set[p] = true;
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        (0..n).filter(|&i| set[i]).collect()
    };

    let mut found: Vec<Vec<usize>> = vec![close(&[])];
    let mut frontier = found.clone();
    while let Some(h) = frontier.pop() {
        for g in 0..n {
            if h.contains(&g) {
                continue;
            }
            let mut seed = h.clone();
            seed.push(g);
            let sub = close(&seed);
            if !found.contains(&sub) {
                found.push(sub.clone());
                frontier.push(sub);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// KKS pairing `<[xi, eta], alpha>` from structure constants.
pub fn kks_pairing(structure: &[Vec<Vec<Rat>>], alpha: &[f64], xi: &[f64], eta: &[f64]) -> f64 {
    let k = structure.len();
    assert!(
        alpha.len() == k && xi.len() == k && eta.len() == k,
        "algebra dimension mismatch"
    );
    let mut acc = 0.0;
    for a in 0..k {
        if xi[a] == 0.0 {
            continue;
        }
        for b in 0..k {
            if eta[b] == 0.0 {
                continue;
            }
            for c in 0..k {
                let s = crate::exact::rat_to_f64(&structure[a][b][c]);
                if s != 0.0 {
                    acc += xi[a] * eta[b] * s * alpha[c];
                }
            }
        }
    }
    acc
}

/// Coadjoint isotropy subalgebra `g_alpha = {xi : <[xi, .], alpha> = 0}`.
pub fn coadjoint_isotropy(structure: &[Vec<Vec<Rat>>], alpha: &[f64]) -> Result<Subspace> {
    let k = structure.len();
    let mut m = DMatrix::zeros(k, k);
    let mut c_max = 0.0f64;
    for b in 0..k {
        for a in 0..k {
            let mut acc = 0.0;
            for c in 0..k {
                let s = crate::exact::rat_to_f64(&structure[a][b][c]);
                c_max = c_max.max(s.abs());
                acc += s * alpha[c];
            }
            m[(b, a)] = acc;
        }
    }
    let alpha_max = alpha.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    crate::symplectic::kernel_scaled(&m, Some(c_max * alpha_max))
}

/// The kernel of omega restricted to the orbit tangent space at `x`,
/// compared against the g_alpha directions (both as subspaces of the orbit
/// tangent). Returns the subspace gap; zero means the corollary identity
/// `ker(omega|_orbit) = {X(xi) x : xi in g_alpha}` holds at `x`.
pub fn orbit_kernel_vs_coadjoint_gap(
    spec: &GroupSpec,
    space: &crate::symplectic::SymplecticSpace,
    x: &[f64],
) -> Result<f64> {
    let gens = spec.generators_exact();
    let k = gens.len();
    if k == 0 {
        return Ok(0.0);
    }
    let dim = spec.space_dim();
    let xv = DVector::from_column_slice(x);
    let mut orbit = DMatrix::zeros(dim, k);
    for (c, g) in gens.iter().enumerate() {
        orbit.set_column(c, &(g.to_f64() * &xv));
    }
    let tangent = Subspace::spanned_by(orbit.clone())?;
    if tangent.dim() == 0 {
        return Ok(0.0);
    }
    // Kernel of the restricted form via the Gram matrix on the tangent
    // basis: the rank of a restriction is judged against the ambient form's
    // scale, not the Gram's own largest entry.
    let gram = tangent.basis().transpose() * space.omega() * tangent.basis();
    let gram_kernel = crate::symplectic::kernel_scaled(&gram, Some(space.omega().norm()))?;
    let kernel_in_ambient = Subspace::spanned_by(tangent.basis() * gram_kernel.basis())?;

    let f = momentum_map(spec)?;
    let alpha = f.eval_f64(x);
    let structure = spec.structure_constants();
    let g_alpha = coadjoint_isotropy(&structure, &alpha)?;
    // Directions X(xi) x for xi in g_alpha.
    let mut dirs = DMatrix::zeros(dim, g_alpha.dim());
    for c in 0..g_alpha.dim() {
        let xi = g_alpha.basis().column(c);
        let mut acc = DVector::zeros(dim);
        for (a, g) in gens.iter().enumerate() {
            acc += g.to_f64() * &xv * xi[a];
        }
        dirs.set_column(c, &acc);
    }
    let coadjoint_dirs = Subspace::spanned_by(dirs)?;
    Ok(crate::symplectic::subspace_gap(
        &kernel_in_ambient,
        &coadjoint_dirs,
    ))
}

/// Deterministic fundamental-domain representative of an orbit: the
/// lexicographically least orbit element for finite groups; for a circle,
/// phase normalization making the first nonzero coordinate pair real
/// positive. Other specs return the point unchanged.
pub fn canonical_representative(spec: &GroupSpec, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let vv = DVector::from_column_slice(v);
            let mut best: Option<Vec<f64>> = None;
            for e in &elements {
                let moved: Vec<f64> = (e.to_f64() * &vv).iter().cloned().collect();
                if best.as_ref().is_none_or(|b| lex_less(&moved, b, tol)) {
                    best = Some(moved);
                }
            }
            Ok(best.unwrap_or_else(|| v.to_vec()))
        }
        GroupSpec::Torus(t) if t.weights.len() == 1 => {
            let n = t.n_pairs;
            let w = &t.weights[0];
            // First support coordinate with nonzero weight.
            let j0 =
                (0..n).find(|&j| w[j] != 0 && (v[j] * v[j] + v[n + j] * v[n + j]).sqrt() > tol);
            let Some(j0) = j0 else { return Ok(v.to_vec()) };
            let r = (v[j0] * v[j0] + v[n + j0] * v[n + j0]).sqrt();
            let (c0, s0) = (v[j0] / r, v[n + j0] / r);
            // Rotate so that (q_{j0}, p_{j0}) -> (r, 0); other planes rotate
            // by the weight-scaled angle.
            let theta = s0.atan2(c0) / w[j0] as f64;
            let mut out = v.to_vec();
            for j in 0..n {
                // The group element exp(theta X) shifts the phase of plane j
                // by -theta * w_j, zeroing the phase at j0.
                let phi = theta * w[j] as f64;
                let (c, s) = (phi.cos(), phi.sin());
                let (q, p) = (v[j], v[n + j]);
                out[j] = c * q + s * p;
                out[n + j] = -s * q + c * p;
            }
            Ok(out)
        }
        _ => Ok(v.to_vec()),
    }
}

fn lex_less(a: &[f64], b: &[f64], tol: f64) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() <= tol {
            continue;
        }
        return x < y;
    }
    false
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratq;
    use crate::poly::VarSet;
    use crate::symplectic::SymplecticSpace;

    pub(crate) fn neg_identity_group() -> FiniteGroup {
        FiniteGroup {
            generators: vec![RatMat::identity(2).neg()],
            n_pairs: 1,
            order_bound: DEFAULT_ORDER_BOUND,
        }
    }

    pub(crate) fn klein_group() -> FiniteGroup {
        // Two commuting symplectic sign flips on R^4 = (q1, q2, p1, p2).
        let a =
            RatMat::from_i64_rows(&[&[-1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, -1, 0], &[0, 0, 0, 1]]);
        let b =
            RatMat::from_i64_rows(&[&[1, 0, 0, 0], &[0, -1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, -1]]);
        FiniteGroup {
            generators: vec![a, b],
            n_pairs: 2,
            order_bound: DEFAULT_ORDER_BOUND,
        }
    }

    pub(crate) fn so3_algebra() -> MatrixLieAlgebra {
        // Block action on (q, p) in R^6: X_a = diag(R_a, R_a) with
        // R_a = e_a x (cross product generators).
        let r1 = [[0i64, 0, 0], [0, 0, -1], [0, 1, 0]];
        let r2 = [[0i64, 0, 1], [0, 0, 0], [-1, 0, 0]];
        let r3 = [[0i64, -1, 0], [1, 0, 0], [0, 0, 0]];
        let block = |r: &[[i64; 3]; 3]| {
            RatMat::from_fn(6, 6, |i, j| {
                let (bi, bj) = (i / 3, j / 3);
                if bi == bj {
                    rat(r[i % 3][j % 3])
                } else {
                    rat(0)
                }
            })
        };
        let mut structure = vec![vec![vec![Rat::zero(); 3]; 3]; 3];
        // [e_a, e_b] = epsilon_abc e_c
        let eps = |a: usize, b: usize, c: usize| -> i64 {
            match (a, b, c) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
                _ => 0,
            }
        };
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    structure[a][b][c] = rat(eps(a, b, c));
                }
            }
        }
        MatrixLieAlgebra {
            basis: vec![block(&r1), block(&r2), block(&r3)],
            structure,
            n_pairs: 3,
        }
    }

    #[test]
    fn close_neg_identity() {
        let els = close_group(&neg_identity_group()).unwrap();
        assert_eq!(els.len(), 2);
    }

    #[test]
    fn close_quarter_rotation_is_cyclic_4() {
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 16,
        };
        assert_eq!(close_group(&g).unwrap().len(), 4);
    }

    #[test]
    fn close_klein_is_order_4() {
        assert_eq!(close_group(&klein_group()).unwrap().len(), 4);
    }

    #[test]
    fn order_bound_enforced() {
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 3,
        };
        assert!(matches!(
            close_group(&g),
            Err(Error::OrderBound { bound: 3 })
        ));
    }

    #[test]
    fn non_symplectic_generator_rejected() {
        let bad = RatMat::from_i64_rows(&[&[2, 0], &[0, 1]]);
        let g = FiniteGroup {
            generators: vec![bad],
            n_pairs: 1,
            order_bound: 8,
        };
        assert!(matches!(close_group(&g), Err(Error::NonSymplectic(_))));
    }

    #[test]
    fn circle_momentum_value() {
        // Weights (1, -1) on C^2: F(z) = 1/2 (|z1|^2 - |z2|^2), F(1, 0) = 1/2.
        let t = GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2));
        let f = momentum_map(&t).unwrap();
        assert_eq!(f.components.len(), 1);
        let vars = VarSet::Phase { pairs: 2 };
        let expect = Poly::parse("1/2*q1^2 + 1/2*p1^2 - 1/2*q2^2 - 1/2*p2^2", &vars).unwrap();
        assert_eq!(f.components[0], expect);
        assert_eq!(
            f.eval_rat(&[rat(1), rat(0), rat(0), rat(0)]),
            vec![ratq(1, 2)]
        );
    }

    #[test]
    fn so3_momentum_is_angular_momentum() {
        let alg = GroupSpec::LieAlgebra(so3_algebra());
        let f = momentum_map(&alg).unwrap();
        let vars = VarSet::Phase { pairs: 3 };
        // q x p componentwise, coordinates (q1, q2, q3, p1, p2, p3).
        let l1 = Poly::parse("q2*p3 - q3*p2", &vars).unwrap();
        let l2 = Poly::parse("q3*p1 - q1*p3", &vars).unwrap();
        let l3 = Poly::parse("q1*p2 - q2*p1", &vars).unwrap();
        assert_eq!(f.components, vec![l1, l2, l3]);
    }

    #[test]
    fn momentum_vanishes_at_origin() {
        let t = GroupSpec::Torus(TorusAction::new(vec![vec![2, 3]], 2));
        let f = momentum_map(&t).unwrap();
        assert_eq!(f.eval_rat(&vec![rat(0); 4]), vec![rat(0)]);
        for c in &f.components {
            assert!(c.is_homogeneous(2));
        }
    }

    #[test]
    fn equivariance_residuals_vanish_for_so3() {
        let alg = GroupSpec::LieAlgebra(so3_algebra());
        let f = momentum_map(&alg).unwrap();
        let residuals = check_equivariance(&f, &alg);
        for row in &residuals {
            for r in row {
                assert!(r.is_zero(), "nonzero residual {:?}", r);
            }
        }
        // And specifically {F1, F2} = F3.
        let br = poisson_bracket(&f.components[0], &f.components[1]);
        assert_eq!(br, f.components[2]);
    }

    #[test]
    fn equivariance_residuals_vanish_for_torus() {
        let t = GroupSpec::Torus(TorusAction::new(vec![vec![1, -1], vec![0, 2]], 2));
        let f = momentum_map(&t).unwrap();
        for row in check_equivariance(&f, &t) {
            for r in row {
                assert!(r.is_zero());
            }
        }
    }

    #[test]
    fn rescaled_basis_scales_consistently() {
        // Doubling a basis element doubles its momentum component.
        let alg = so3_algebra();
        let mut scaled = alg.clone();
        scaled.basis = alg.basis.iter().map(|x| x.scale(&rat(2))).collect();
        // Structure constants for the doubled basis: [2X_a, 2X_b] = 4 eps X_c
        // = 2 eps (2X_c).
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    scaled.structure[a][b][c] = &alg.structure[a][b][c] * rat(2);
                }
            }
        }
        let f = momentum_map(&GroupSpec::LieAlgebra(alg)).unwrap();
        let f2 = momentum_map(&GroupSpec::LieAlgebra(scaled.clone())).unwrap();
        for (a, c) in f.components.iter().enumerate() {
            assert_eq!(f2.components[a], c.scale(&rat(2)));
        }
        for row in check_equivariance(&f2, &GroupSpec::LieAlgebra(scaled)) {
            for r in row {
                assert!(r.is_zero());
            }
        }
    }

    #[test]
    fn torus_momentum_invariant_under_quarter_turns() {
        let t = TorusAction::new(vec![vec![1, -1]], 2);
        let spec = GroupSpec::Torus(t.clone());
        let f = momentum_map(&spec).unwrap();
        let g = t.quarter_turn_element(&[1]);
        assert!(is_symplectic_exact(&g, &standard_omega_exact(2)));
        for c in &f.components {
            assert_eq!(c.compose_linear(&g), *c);
        }
    }

    #[test]
    fn isotropy_at_origin_is_everything() {
        let spec = GroupSpec::Finite(neg_identity_group());
        let iso = isotropy(&spec, &[0.0, 0.0], 1e-9).unwrap();
        let IsotropyData::Finite {
            element_indices, ..
        } = iso
        else {
            panic!()
        };
        assert_eq!(element_indices.len(), 2);
    }

    #[test]
    fn isotropy_generic_is_trivial() {
        let spec = GroupSpec::Finite(neg_identity_group());
        let iso = isotropy(&spec, &[0.3, 0.7], 1e-9).unwrap();
        let IsotropyData::Finite {
            element_indices, ..
        } = iso
        else {
            panic!()
        };
        assert_eq!(element_indices.len(), 1);
    }

    #[test]
    fn isotropy_ambiguity_band_reported() {
        let spec = GroupSpec::Finite(neg_identity_group());
        // Moving -I moves v by 2|v|; |v| = 1e-9 sits inside the band.
        let r = isotropy(&spec, &[1e-9, 0.0], 1e-9);
        assert!(matches!(r, Err(Error::ToleranceAmbiguity { .. })));
    }

    #[test]
    fn circle_isotropy_classification() {
        let t = TorusAction::new(vec![vec![1, -1]], 2);
        let spec = GroupSpec::Torus(t);
        // Both coordinates alive: trivial isotropy.
        let iso = isotropy(&spec, &[0.7, 0.0, 0.7, 0.0], 1e-9).unwrap();
        let IsotropyData::Torus {
            subtorus_dim,
            invariant_factors,
            ..
        } = iso
        else {
            panic!()
        };
        assert_eq!(subtorus_dim, 0);
        assert!(invariant_factors.is_empty());
        // One coordinate alive: still trivial (weight 1).
        let iso = isotropy(&spec, &[0.7, 0.0, 0.0, 0.0], 1e-9).unwrap();
        let IsotropyData::Torus {
            subtorus_dim,
            invariant_factors,
            ..
        } = iso
        else {
            panic!()
        };
        assert_eq!(subtorus_dim, 0);
        assert!(invariant_factors.is_empty());
        // Origin: the full circle.
        let iso = isotropy(&spec, &[0.0; 4], 1e-9).unwrap();
        let IsotropyData::Torus { subtorus_dim, .. } = iso else {
            panic!()
        };
        assert_eq!(subtorus_dim, 1);
    }

    #[test]
    fn weight_two_gives_z2_isotropy() {
        let t = TorusAction::new(vec![vec![2]], 1);
        let spec = GroupSpec::Torus(t);
        let iso = isotropy(&spec, &[1.0, 0.0], 1e-9).unwrap();
        let IsotropyData::Torus {
            subtorus_dim,
            invariant_factors,
            ..
        } = iso
        else {
            panic!()
        };
        assert_eq!(subtorus_dim, 0);
        assert_eq!(invariant_factors, vec![BigInt::from(2)]);
    }

    #[test]
    fn so3_isotropy_subalgebra_dim() {
        let spec = GroupSpec::LieAlgebra(so3_algebra());
        // q parallel to p along e1: rotations about e1 fix the point.
        let iso = isotropy(&spec, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0], 1e-9).unwrap();
        let IsotropyData::Subalgebra(s) = iso else {
            panic!()
        };
        assert_eq!(s.dim(), 1);
        // Generic point: nothing fixes it.
        let iso = isotropy(&spec, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.5], 1e-9).unwrap();
        let IsotropyData::Subalgebra(s) = iso else {
            panic!()
        };
        assert_eq!(s.dim(), 0);
    }

    #[test]
    fn klein_orbit_types_partition() {
        let g = klein_group();
        let spec = GroupSpec::Finite(g.clone());
        let elements = close_group(&g).unwrap();
        // Stabilizers realized: full at 0, each factor on the opposite
        // plane, trivial generically; the diagonal class is absent.
        let all = all_subgroups(&elements).unwrap();
        assert_eq!(all.len(), 5);
        let id_origin = orbit_type(&spec, &[0.0; 4], 1e-9).unwrap();
        let id_plane2 = orbit_type(&spec, &[0.0, 0.8, 0.0, 0.3], 1e-9).unwrap();
        let id_plane1 = orbit_type(&spec, &[0.8, 0.0, 0.3, 0.0], 1e-9).unwrap();
        let id_generic = orbit_type(&spec, &[0.5, 0.6, 0.7, 0.8], 1e-9).unwrap();
        let ids = [&id_origin, &id_plane2, &id_plane1, &id_generic];
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                assert_ne!(a, b);
            }
        }
        // Points of the same type share an identifier.
        let id_generic2 = orbit_type(&spec, &[-1.5, 0.2, 0.9, 2.0], 1e-9).unwrap();
        assert_eq!(id_generic, id_generic2);
    }

    #[test]
    fn conjugate_subgroups_share_id() {
        // In C4, every subgroup is normal, so conjugation fixes ids; use the
        // quarter rotation group and check the 2-element subgroup.
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 16,
        };
        let elements = close_group(&g).unwrap();
        let minus_i = elements
            .iter()
            .position(|e| *e == RatMat::identity(2).neg())
            .unwrap();
        let id_pos = elements
            .iter()
            .position(|e| *e == RatMat::identity(2))
            .unwrap();
        let sub = {
            let mut s = vec![id_pos, minus_i];
            s.sort_unstable();
            s
        };
        let a = finite_class_id(&elements, &sub);
        let b = finite_class_id(&elements, &sub);
        assert_eq!(a, b);
    }

    #[test]
    fn averaged_metric_gives_equivariant_j() {
        // Average a random metric over a finite symplectic group that
        // commutes with the form; the adapted structure then commutes with
        // every element.
        use crate::symplectic::adapted_complex_structure;
        let rot = RatMat::from_i64_rows(&[&[0, 1], &[-1, 0]]);
        let g = FiniteGroup {
            generators: vec![rot],
            n_pairs: 1,
            order_bound: 16,
        };
        let elements = close_group(&g).unwrap();
        let raw = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.1]);
        let mut avg = nalgebra::DMatrix::zeros(2, 2);
        for e in &elements {
            let ef = e.to_f64();
            avg += ef.transpose() * &raw * ef;
        }
        avg /= elements.len() as f64;
        let space = SymplecticSpace::standard(1);
        let acs = adapted_complex_structure(&space, &avg).unwrap();
        for e in &elements {
            let ef = e.to_f64();
            let comm = (&ef * &acs.j - &acs.j * &ef).norm();
            assert!(comm < 1e-10, "J does not commute: {comm}");
        }
    }

    #[test]
    fn kks_so3_unit_value() {
        let alg = so3_algebra();
        let alpha = [0.0, 0.0, 1.0];
        let xi = [1.0, 0.0, 0.0];
        let eta = [0.0, 1.0, 0.0];
        assert_eq!(kks_pairing(&alg.structure, &alpha, &xi, &eta), 1.0);
        assert_eq!(kks_pairing(&alg.structure, &alpha, &eta, &xi), -1.0);
    }

    #[test]
    fn kks_abelian_vanishes() {
        let t = TorusAction::new(vec![vec![1, 0], vec![0, 1]], 2);
        let spec = GroupSpec::Torus(t);
        let structure = spec.structure_constants();
        assert_eq!(
            kks_pairing(&structure, &[0.3, -0.4], &[1.0, 2.0], &[3.0, 4.0]),
            0.0
        );
    }

    #[test]
    fn orbit_kernel_matches_coadjoint_directions_so3() {
        let spec = GroupSpec::LieAlgebra(so3_algebra());
        let space = SymplecticSpace::standard(3);
        // alpha = L = e3: g_alpha = rotations about e3.
        let x = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let gap = orbit_kernel_vs_coadjoint_gap(&spec, &space, &x).unwrap();
        assert!(gap < 1e-9, "gap {gap}");
        // Zero level: the whole orbit tangent is the kernel.
        let x0 = [1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let gap0 = orbit_kernel_vs_coadjoint_gap(&spec, &space, &x0).unwrap();
        assert!(gap0 < 1e-9, "gap {gap0}");
    }

    #[test]
    fn finite_isotropy_equivariance() {
        let g = klein_group();
        let spec = GroupSpec::Finite(g.clone());
        let elements = close_group(&g).unwrap();
        let v = [0.0, 0.8, 0.0, 0.3];
        for e in &elements {
            let ev: Vec<f64> = (e.to_f64() * DVector::from_column_slice(&v))
                .iter()
                .cloned()
                .collect();
            let a = orbit_type(&spec, &v, 1e-9).unwrap();
            let b = orbit_type(&spec, &ev, 1e-9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn canonical_representative_finite_is_orbit_invariant() {
        let g = klein_group();
        let spec = GroupSpec::Finite(g.clone());
        let v = vec![0.5, -0.3, 0.2, 0.9];
        let rep = canonical_representative(&spec, &v, 1e-12).unwrap();
        for e in &close_group(&g).unwrap() {
            let moved: Vec<f64> = (e.to_f64() * DVector::from_column_slice(&v))
                .iter()
                .cloned()
                .collect();
            let rep2 = canonical_representative(&spec, &moved, 1e-12).unwrap();
            for (a, b) in rep.iter().zip(&rep2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_representative_circle_normalizes_phase() {
        let t = TorusAction::new(vec![vec![1, -1]], 2);
        let spec = GroupSpec::Torus(t);
        let v = vec![0.6, 0.0, 0.8, 0.0];
        // Rotate by some angle and check the representative is restored.
        let theta: f64 = 0.9;
        let (c, s) = (theta.cos(), theta.sin());
        // Weight 1 plane rotates by theta, weight -1 plane by -theta
        // (clockwise generator convention: (q,p) -> (c q + s p, -s q + c p)
        // scaled by the weight).
        let moved = vec![
            c * v[0] + s * v[2],
            c * v[1] - s * v[3],
            -s * v[0] + c * v[2],
            s * v[1] + c * v[3],
        ];
        let rep1 = canonical_representative(&spec, &v, 1e-12).unwrap();
        let rep2 = canonical_representative(&spec, &moved, 1e-12).unwrap();
        for (a, b) in rep1.iter().zip(&rep2) {
            assert!((a - b).abs() < 1e-9, "{rep1:?} vs {rep2:?}");
        }
    }
}
