//! Orbit-type stratification of the reduced space at zero, slice models,
//! the abelian model-space level-set check, and per-stratum reduction by
//! the normalizer quotient.

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{colspace_includes, rat, Rat, RatMat};
use crate::groups::{
    all_subgroups, close_group, finite_class_id, isotropy, isotropy_finite_exact, momentum_map,
    torus_class_id, torus_isotropy_fixes_coordinate, torus_isotropy_for_support, FiniteGroup,
    GroupSpec, IsotropyData, MomentumMap, OrbitTypeId, TorusAction,
};
use crate::symplectic::{
    adapted_complex_structure, constant_rank_split, Subspace, SymplecticSpace,
};

pub const LEVEL_TOL: f64 = 1e-12;
pub const ISO_TOL: f64 = 1e-7;

// ---------------------------------------------------------------------------
// Zero-level sampling.

/// Deterministic pseudo-random points on the zero level of the momentum map
/// within the given radius: uniform ball draws projected onto the level by
/// Newton iterations with a pseudo-inverse step. Returns the accepted points
/// and the number of discarded (non-converged) draws.
pub fn zero_level_sampler(
    f: &MomentumMap,
    count: usize,
    radius: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, usize) {
    let dim = 2 * f.n_pairs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut shortfall = 0usize;
    let compiled: Vec<_> = f.components.iter().map(|c| c.compile()).collect();
    let grads: Vec<Vec<_>> = f
        .components
        .iter()
        .map(|c| c.gradient().iter().map(|g| g.compile()).collect())
        .collect();
    for _ in 0..count {
        let mut v = ball_point(&mut rng, dim, radius);
        if compiled.is_empty() {
            out.push(v);
            continue;
        }
        let mut ok = false;
        let mut polish = 0;
        for _ in 0..100 {
            let res: Vec<f64> = compiled.iter().map(|c| c.eval(&v)).collect();
            let norm = res.iter().map(|r| r * r).sum::<f64>().sqrt();
            if norm <= LEVEL_TOL {
                ok = true;
                // A couple of extra steps drive the residual to machine
                // precision, which keeps downstream zero tests out of
                // their guard bands.
                polish += 1;
                if polish > 2 {
                    break;
                }
            }
            let k = compiled.len();
            let mut jac = DMatrix::zeros(k, dim);
            for (a, row) in grads.iter().enumerate() {
                for (i, g) in row.iter().enumerate() {
                    jac[(a, i)] = g.eval(&v);
                }
            }
            let step = pseudo_solve(&jac, &DVector::from_column_slice(&res));
            for (x, s) in v.iter_mut().zip(step.iter()) {
                *x -= s;
            }
        }
        if ok {
            out.push(v);
        } else {
            shortfall += 1;
        }
    }
    (out, shortfall)
}

fn ball_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    // Gaussian direction (Box-Muller), radius scaled for uniform ball.
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r: f64 = rng.gen_range(0.0f64..1.0);
    let scale = radius * r.powf(1.0 / dim as f64) / norm;
    for x in v.iter_mut() {
        *x *= scale;
    }
    v
}

/// Least-squares solve via SVD with a relative cutoff; tolerant of the rank
/// drops that occur on singular level sets.
fn pseudo_solve(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax.max(1e-300);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut coeff = u.transpose() * rhs;
    for (i, s) in svd.singular_values.iter().enumerate() {
        coeff[i] = if *s > cutoff { coeff[i] / s } else { 0.0 };
    }
    vt.transpose() * coeff
}

// ---------------------------------------------------------------------------
// Stratification.

/// One isotropy class of the reduced space at zero.
#[derive(Debug, Clone)]
pub struct StratumDescriptor {
    pub class_id: OrbitTypeId,
    pub label: String,
    pub realized: bool,
    /// dim V^H.
    pub fixed_dim: usize,
    pub fixed_subspace: Subspace,
    pub fixed_basis_exact: Option<RatMat>,
    /// Dimension of the reduced stratum; None for unrealized classes.
    pub stratum_dim: Option<usize>,
    /// A generic point of the stratum on the zero level.
    pub representative: Option<Vec<f64>>,
    pub representative_exact: Option<Vec<Rat>>,
    /// Finite case: class-representative subgroup as element indices.
    pub subgroup: Option<Vec<usize>>,
    /// Torus case: the realized support patterns merged into this class.
    pub supports: Vec<Vec<usize>>,
}

/// The full stratification report.
#[derive(Debug, Clone)]
pub struct Stratification {
    pub strata: Vec<StratumDescriptor>,
    /// Pairs (lower, upper): the lower class (more isotropy) lies in the
    /// closure of the upper stratum.
    pub closure: Vec<(OrbitTypeId, OrbitTypeId)>,
    /// Finite case: the closed element list used for identifiers.
    pub elements: Option<Vec<RatMat>>,
}

impl Stratification {
    pub fn realized(&self) -> impl Iterator<Item = &StratumDescriptor> {
        self.strata.iter().filter(|s| s.realized)
    }

    pub fn find(&self, id: &OrbitTypeId) -> Option<&StratumDescriptor> {
        self.strata.iter().find(|s| &s.class_id == id)
    }

    /// The closure relation restricted to realized classes must coincide
    /// with exact fixed-space inclusion `V^lower ⊆ V^upper`. Returns the
    /// list of mismatching pairs (empty when consistent).
    pub fn closure_vs_fixed_space_mismatches(&self) -> Vec<(OrbitTypeId, OrbitTypeId)> {
        let mut bad = Vec::new();
        let ids: Vec<&StratumDescriptor> = self.realized().collect();
        for a in &ids {
            for b in &ids {
                if a.class_id == b.class_id {
                    continue;
                }
                let related = self
                    .closure
                    .iter()
                    .any(|(lo, up)| lo == &a.class_id && up == &b.class_id);
                let included = match (&a.fixed_basis_exact, &b.fixed_basis_exact) {
                    (Some(ba), Some(bb)) => colspace_includes(bb, ba),
                    _ => b.fixed_subspace.contains_subspace(&a.fixed_subspace, 1e-9),
                };
                if related != included {
                    bad.push((a.class_id.clone(), b.class_id.clone()));
                }
            }
        }
        bad
    }
}

/// Enumerate the isotropy classes realized on the zero level (finite groups
/// and tori), with fixed spaces, dimensions, representatives, and the
/// closure partial order. Finite groups also report unrealized subgroup
/// classes (`realized = false`).
pub fn enumerate_strata(spec: &GroupSpec, f: &MomentumMap) -> Result<Stratification> {
    match spec {
        GroupSpec::Finite(g) => enumerate_finite(g),
        GroupSpec::Torus(t) => enumerate_torus(t, f),
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition(
            "stratification enumeration requires a finite group or torus".into(),
        )),
    }
}

fn fixed_space_exact(elements: &[RatMat], subgroup: &[usize], dim: usize) -> RatMat {
    let mut rows: Vec<Vec<Rat>> = Vec::new();
    for &h in subgroup {
        let m = elements[h].sub(&RatMat::identity(dim));
        for i in 0..dim {
            rows.push(m.row(i));
        }
    }
    if rows.is_empty() {
        return RatMat::identity(dim);
    }
    RatMat::from_rows(&rows).nullspace()
}

fn pointwise_stabilizer(elements: &[RatMat], basis: &RatMat) -> Vec<usize> {
    (0..elements.len())
        .filter(|&i| {
            (0..basis.ncols).all(|c| elements[i].mul_vec(&basis.column(c)) == basis.column(c))
        })
        .collect()
}

/// A generic rational point of the column space whose exact stabilizer is
/// the given subgroup, if one exists.
fn generic_fixed_point(
    elements: &[RatMat],
    subgroup: &[usize],
    basis: &RatMat,
) -> Option<Vec<Rat>> {
    if basis.ncols == 0 {
        let v = vec![Rat::zero(); basis.nrows];
        return (isotropy_finite_exact(elements, &v) == subgroup).then_some(v);
    }
    // Small deterministic coefficient patterns; a generic one hits the
    // complement of finitely many proper subspaces quickly.
    for pattern in 1i64..=23 {
        let coeffs: Vec<Rat> = (0..basis.ncols)
            .map(|i| rat(1 + (pattern * (i as i64 + 1)) % 23))
            .collect();
        let v = basis.mul_vec_cols(&coeffs);
        if isotropy_finite_exact(elements, &v) == subgroup {
            return Some(v);
        }
    }
    None
}

fn enumerate_finite(g: &FiniteGroup) -> Result<Stratification> {
    let elements = close_group(g)?;
    let dim = 2 * g.n_pairs;
    let subgroups = all_subgroups(&elements)?;
    // Group into conjugacy classes by canonical id.
    let mut classes: Vec<(OrbitTypeId, Vec<usize>)> = Vec::new();
    for sub in subgroups {
        let id = finite_class_id(&elements, &sub);
        if !classes.iter().any(|(cid, _)| cid == &id) {
            classes.push((id, sub));
        }
    }
    classes.sort_by(|a, b| a.0.cmp(&b.0));

    let mut strata = Vec::new();
    for (id, sub) in &classes {
        let basis = fixed_space_exact(&elements, sub, dim);
        let stab = pointwise_stabilizer(&elements, &basis);
        let realized = stab == *sub;
        let rep_exact = realized
            .then(|| generic_fixed_point(&elements, sub, &basis))
            .flatten();
        let representative = rep_exact
            .as_ref()
            .map(|v| v.iter().map(crate::exact::rat_to_f64).collect());
        strata.push(StratumDescriptor {
            class_id: id.clone(),
            label: format!("finite isotropy of order {}", sub.len()),
            realized,
            fixed_dim: basis.ncols,
            fixed_subspace: Subspace::spanned_by(basis.to_f64())?,
            fixed_basis_exact: Some(basis.clone()),
            stratum_dim: realized.then_some(basis.ncols),
            representative,
            representative_exact: rep_exact,
            subgroup: Some(sub.clone()),
            supports: Vec::new(),
        });
    }

    // Closure order: lower (more isotropy) contains a conjugate of upper's
    // subgroup.
    let mut closure = Vec::new();
    for (id_lo, sub_lo) in &classes {
        for (id_up, sub_up) in &classes {
            if id_lo == id_up {
                continue;
            }
            let lo_realized = strata.iter().any(|s| &s.class_id == id_lo && s.realized);
            let up_realized = strata.iter().any(|s| &s.class_id == id_up && s.realized);
            if !lo_realized || !up_realized {
                continue;
            }
            if conjugate_contained(&elements, sub_up, sub_lo) {
                closure.push((id_lo.clone(), id_up.clone()));
            }
        }
    }
    Ok(Stratification {
        strata,
        closure,
        elements: Some(elements),
    })
}

/// Is some conjugate of `inner` contained in `outer`?
fn conjugate_contained(elements: &[RatMat], inner: &[usize], outer: &[usize]) -> bool {
    use std::collections::BTreeMap;
    let lookup: BTreeMap<Vec<Rat>, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.lex_key(), i))
        .collect();
    for g in elements {
        let ginv = g.inverse().expect("group element");
        let conj: Vec<usize> = inner
            .iter()
            .map(|&h| lookup[&g.mul(&elements[h]).mul(&ginv).lex_key()])
            .collect();
        if conj.iter().all(|c| outer.contains(c)) {
            return true;
        }
    }
    false
}

fn enumerate_torus(t: &TorusAction, f: &MomentumMap) -> Result<Stratification> {
    let n = t.n_pairs;
    if n > 16 {
        return Err(Error::Precondition(
            "torus support enumeration limited to n <= 16".into(),
        ));
    }
    let k = t.weights.len();
    // Realized supports: positive kernel vector of the weight submatrix.
    let mut per_support: Vec<(Vec<usize>, OrbitTypeId, usize, Option<Vec<Rat>>)> = Vec::new();
    for mask in 0..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let (feasible, witness) = positive_kernel_point(t, &support);
        if !feasible {
            continue;
        }
        let iso = torus_isotropy_for_support(t, &support);
        let IsotropyData::Torus {
            invariant_factors,
            kernel_hnf,
            ..
        } = &iso
        else {
            unreachable!()
        };
        let id = torus_class_id(kernel_hnf, invariant_factors);
        let rank = crate::lattice::int_rank(&t.weight_submatrix(&support));
        let dim = 2 * support.len() - 2 * rank;
        per_support.push((support, id, dim, witness));
    }

    // Merge supports with equal class and dimension.
    let mut strata: Vec<StratumDescriptor> = Vec::new();
    for (support, id, dim, witness) in per_support {
        let iso = torus_isotropy_for_support(t, &support);
        let IsotropyData::Torus {
            subtorus_dim,
            invariant_factors,
            ..
        } = &iso
        else {
            unreachable!()
        };
        if let Some(existing) = strata
            .iter_mut()
            .find(|s| s.class_id == id && s.stratum_dim == Some(dim))
        {
            existing.supports.push(support);
            continue;
        }
        // Fixed space: coordinate planes on which the isotropy acts
        // trivially (exact lattice test).
        let fixed: Vec<usize> = (0..n)
            .filter(|&j| torus_isotropy_fixes_coordinate(t, &support, j))
            .collect();
        let mut basis = RatMat::zeros(2 * n, 2 * fixed.len());
        for (c, &j) in fixed.iter().enumerate() {
            basis[(j, 2 * c)] = rat(1);
            basis[(n + j, 2 * c + 1)] = rat(1);
        }
        // Representative: q_j = sqrt(rho_j) on the support, phases zero.
        let representative = witness.as_ref().map(|rho| {
            let mut v = vec![0.0; 2 * n];
            for (idx, &j) in support.iter().enumerate() {
                v[j] = crate::exact::rat_to_f64(&rho[idx]).sqrt();
            }
            v
        });
        let representative = if support.is_empty() {
            Some(vec![0.0; 2 * n])
        } else {
            representative
        };
        strata.push(StratumDescriptor {
            class_id: id,
            label: format!(
                "torus isotropy: subtorus dim {subtorus_dim}, torsion {:?}",
                invariant_factors
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
            ),
            realized: true,
            fixed_dim: 2 * fixed.len(),
            fixed_subspace: Subspace::spanned_by(basis.to_f64())?,
            fixed_basis_exact: Some(basis),
            stratum_dim: Some(dim),
            representative,
            representative_exact: None,
            subgroup: None,
            supports: vec![support],
        });
    }
    strata.sort_by(|a, b| a.class_id.cmp(&b.class_id));

    // Closure: smaller support (more isotropy) sits in the closure of a
    // larger one.
    let mut closure = Vec::new();
    for lo in &strata {
        for up in &strata {
            if lo.class_id == up.class_id {
                continue;
            }
            let related = lo.supports.iter().any(|s_lo| {
                up.supports
                    .iter()
                    .any(|s_up| s_lo.iter().all(|j| s_up.contains(j)))
            });
            if related {
                closure.push((lo.class_id.clone(), up.class_id.clone()));
            }
        }
    }
    let _ = (f, k);
    Ok(Stratification {
        strata,
        closure,
        elements: None,
    })
}

/// Does the weight submatrix on the support admit a strictly positive
/// kernel vector? Exact Fourier-Motzkin on the homogeneous strict system;
/// also returns a small rational witness when feasible.
fn positive_kernel_point(t: &TorusAction, support: &[usize]) -> (bool, Option<Vec<Rat>>) {
    if support.is_empty() {
        return (true, None);
    }
    let sub = t.weight_submatrix(support);
    // Rational kernel of A_S (columns of the nullspace of the k x s matrix).
    let a = RatMat::from_rows(
        &sub.iter()
            .map(|row| row.iter().map(|x| Rat::from(x.clone())).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    let kernel = a.nullspace(); // s x d
    let d = kernel.ncols;
    if d == 0 {
        return (false, None);
    }
    // Strict system: (kernel u)_i > 0 for each support row i.
    let rows: Vec<Vec<Rat>> = (0..kernel.nrows).map(|i| kernel.row(i)).collect();
    if !fourier_motzkin_strictly_feasible(rows.clone()) {
        return (false, None);
    }
    // Small integer witness search.
    let mut combos: Vec<Vec<i64>> = Vec::new();
    let range: Vec<i64> = vec![0, 1, -1, 2, -2, 3, -3];
    fn build(range: &[i64], d: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for &x in range {
            cur.push(x);
            build(range, d, cur, out);
            cur.pop();
        }
    }
    build(&range, d, &mut Vec::new(), &mut combos);
    for combo in combos {
        if combo.iter().all(|&x| x == 0) {
            continue;
        }
        let u: Vec<Rat> = combo.iter().map(|&x| rat(x)).collect();
        let point = a_mul(&rows, &u);
        if point.iter().all(|x| x > &Rat::zero()) {
            return (true, Some(point));
        }
    }
    // Feasible but the small grid missed it; report feasibility without a
    // witness.
    (true, None)
}

fn a_mul(rows: &[Vec<Rat>], u: &[Rat]) -> Vec<Rat> {
    rows.iter()
        .map(|row| {
            row.iter()
                .zip(u)
                .map(|(a, b)| a * b)
                .fold(Rat::zero(), |acc, x| acc + x)
        })
        .collect()
}

/// Feasibility of the homogeneous strict system `rows . u > 0` by exact
/// Fourier-Motzkin elimination.
fn fourier_motzkin_strictly_feasible(mut rows: Vec<Vec<Rat>>) -> bool {
    if rows.is_empty() {
        return true;
    }
    let d = rows[0].len();
    for var in 0..d {
        // Any all-zero row means 0 > 0.
        if rows.iter().any(|r| r.iter().all(|x| x.is_zero())) {
            return false;
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut zero = Vec::new();
        for r in rows {
            match r[var].cmp(&Rat::zero()) {
                std::cmp::Ordering::Greater => pos.push(r),
                std::cmp::Ordering::Less => neg.push(r),
                std::cmp::Ordering::Equal => zero.push(r),
            }
        }
        let mut next = zero;
        // Rows where the variable appears with one sign only are satisfiable
        // by pushing the variable to +-infinity; they drop out.
        for p in &pos {
            for q in &neg {
                // (-q_var) * p + p_var * q, strict.
                let combined: Vec<Rat> = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| &(-q[var].clone()) * a + &p[var] * b)
                    .collect();
                next.push(combined);
            }
        }
        rows = next;
        if rows.is_empty() {
            return true;
        }
    }
    // Variables exhausted: any remaining row reads 0 > 0.
    !rows.iter().any(|r| r.iter().all(|x| x.is_zero())) && rows.is_empty()
}

// ---------------------------------------------------------------------------
// Slice models.

/// How the isotropy acts on the symplectic slice.
#[derive(Debug, Clone)]
pub enum SliceAction {
    /// Base point fixed by everything: the slice is the whole space with
    /// the original action.
    Whole,
    /// Finite stabilizer acting on the full space (finite group specs).
    FiniteStabilizer(Vec<usize>),
    /// Isotropy acts trivially on the slice.
    Trivial,
    /// A subtorus of the isotropy acts with the given restricted
    /// generators; weights extracted when they round cleanly.
    Toral {
        generators: Vec<DMatrix<f64>>,
        weights: Option<Vec<Vec<i64>>>,
    },
    /// Nontrivial finite part of a torus isotropy; dims-only analysis.
    FiniteFloating,
}

/// Local model data at a zero-level point: the symplectic slice, the
/// isotropy action restricted to it, and its momentum map.
#[derive(Debug, Clone)]
pub struct SliceModel {
    pub base_point: Vec<f64>,
    pub isotropy: IsotropyData,
    pub slice: Subspace,
    pub omega_w: DMatrix<f64>,
    /// Quadratic momentum forms of the isotropy identity component on the
    /// slice: F_i(w) = 1/2 w^T S_i w.
    pub slice_momentum: Vec<DMatrix<f64>>,
    pub action: SliceAction,
    pub orbit_dim: usize,
    pub nu_dim: usize,
}

impl SliceModel {
    pub fn slice_dim(&self) -> usize {
        self.slice.dim()
    }

    pub fn eval_slice_momentum(&self, w: &DVector<f64>) -> Vec<f64> {
        self.slice_momentum
            .iter()
            .map(|s| 0.5 * (w.transpose() * s * w)[(0, 0)])
            .collect()
    }
}

/// Compute the slice model at a point of the zero level.
pub fn slice_model(x: &[f64], spec: &GroupSpec, space: &SymplecticSpace) -> Result<SliceModel> {
    let dim = space.dim();
    if x.len() != dim {
        return Err(Error::Dimension("point dimension mismatch".into()));
    }
    let f = momentum_map(spec)?;
    let fx = f.eval_f64(x);
    let fx_norm = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fx_norm > 1e-10 {
        return Err(Error::Precondition(format!(
            "slice models require a zero-level point (|F(x)| = {fx_norm:.3e})"
        )));
    }
    let iso = isotropy(spec, x, ISO_TOL)?;
    let xv = DVector::from_column_slice(x);
    let x_norm = xv.norm();

    // Base point fixed by the whole group: slice = everything.
    let fixed_by_all = match spec {
        GroupSpec::Finite(_) => false, // finite handled uniformly below
        _ => {
            x_norm <= ISO_TOL || {
                let gens = spec.generators_exact();
                gens.iter()
                    .all(|g| (g.to_f64() * &xv).norm() <= ISO_TOL * x_norm.max(1.0))
            }
        }
    };

    match spec {
        GroupSpec::Finite(_) => {
            let IsotropyData::Finite {
                element_indices, ..
            } = &iso
            else {
                unreachable!()
            };
            Ok(SliceModel {
                base_point: x.to_vec(),
                isotropy: iso.clone(),
                slice: Subspace::full(dim),
                omega_w: space.omega().clone(),
                slice_momentum: Vec::new(),
                action: SliceAction::FiniteStabilizer(element_indices.clone()),
                orbit_dim: 0,
                nu_dim: 0,
            })
        }
        _ if fixed_by_all => Ok(SliceModel {
            base_point: x.to_vec(),
            isotropy: iso,
            slice: Subspace::full(dim),
            omega_w: space.omega().clone(),
            slice_momentum: momentum_quadratic_forms(spec),
            action: SliceAction::Whole,
            orbit_dim: 0,
            nu_dim: 0,
        }),
        _ => {
            // Orbit tangent and its constant-rank split. The generators are
            // antisymmetric for the bundled actions, so the identity metric
            // is invariant and the split is equivariant.
            let gens = spec.generators_exact();
            for g in &gens {
                if *g != g.transpose().neg() {
                    return Err(Error::Precondition(
                        "slice construction needs an invariant metric; non-orthogonal \
                         generators are not supported"
                            .into(),
                    ));
                }
            }
            let mut orbit = DMatrix::zeros(dim, gens.len());
            for (c, g) in gens.iter().enumerate() {
                orbit.set_column(c, &(g.to_f64() * &xv));
            }
            let tangent = Subspace::spanned_by(orbit)?;
            let acs = adapted_complex_structure(space, &DMatrix::identity(dim, dim))?;
            let crd = constant_rank_split(&tangent, space, &acs)?;
            let w = crd.n.clone();
            let omega_w = w.basis().transpose() * space.omega() * w.basis();

            // Isotropy identity-component generators restricted to the slice.
            let iso_dirs: Vec<DVector<f64>> = match &iso {
                IsotropyData::Torus { kernel_hnf, .. } => kernel_hnf
                    .iter()
                    .map(|row| {
                        DVector::from_iterator(
                            row.len(),
                            row.iter()
                                .map(|x| x.to_string().parse::<f64>().unwrap_or(0.0)),
                        )
                    })
                    .collect(),
                IsotropyData::Subalgebra(s) => (0..s.dim())
                    .map(|c| s.basis().column(c).into_owned())
                    .collect(),
                IsotropyData::Finite { .. } => Vec::new(),
            };
            let mut slice_gens = Vec::new();
            let mut slice_momentum = Vec::new();
            for xi in &iso_dirs {
                let mut xmat = DMatrix::zeros(dim, dim);
                for (a, g) in gens.iter().enumerate() {
                    xmat += g.to_f64() * xi[a];
                }
                let restricted = w.basis().transpose() * &xmat * w.basis();
                let s = restricted.transpose() * &omega_w;
                slice_momentum.push((&s + s.transpose()) * 0.5);
                slice_gens.push(restricted);
            }

            let finite_part_nontrivial = matches!(
                &iso,
                IsotropyData::Torus { invariant_factors, .. } if !invariant_factors.is_empty()
            );
            let action = if finite_part_nontrivial {
                SliceAction::FiniteFloating
            } else if slice_gens.is_empty() || slice_gens.iter().all(|m| m.norm() <= 1e-9) {
                SliceAction::Trivial
            } else {
                let weights = extract_integer_weights(&slice_gens);
                SliceAction::Toral {
                    generators: slice_gens,
                    weights,
                }
            };
            Ok(SliceModel {
                base_point: x.to_vec(),
                isotropy: iso,
                slice: w,
                omega_w,
                slice_momentum,
                action,
                orbit_dim: tangent.dim(),
                nu_dim: crd.nu.dim(),
            })
        }
    }
}

fn momentum_quadratic_forms(spec: &GroupSpec) -> Vec<DMatrix<f64>> {
    let omega = crate::exact::standard_omega_exact(spec.n_pairs()).to_f64();
    spec.generators_exact()
        .iter()
        .map(|x| {
            let s = x.to_f64().transpose() * &omega;
            (&s + s.transpose()) * 0.5
        })
        .collect()
}

/// Imaginary parts of the eigenvalues of commuting restricted generators,
/// rounded to integers when within 1e-6.
fn extract_integer_weights(gens: &[DMatrix<f64>]) -> Option<Vec<Vec<i64>>> {
    let mut out = Vec::new();
    for g in gens {
        let eig = g.clone().complex_eigenvalues();
        let mut ws: Vec<i64> = Vec::new();
        for e in eig.iter() {
            if e.im > 1e-9 {
                let r = e.im.round();
                if (e.im - r).abs() > 1e-6 {
                    return None;
                }
                ws.push(r as i64);
            }
        }
        ws.sort_unstable();
        out.push(ws);
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Local model comparison.

#[derive(Debug, Clone)]
pub struct LocalModelReport {
    pub base_point: Vec<f64>,
    /// True when isotropy classification is unavailable (connected
    /// nonabelian isotropy): only dimensions are compared.
    pub dims_only: bool,
    pub slice_side: Vec<(Option<String>, usize)>,
    pub ambient_side: Vec<(Option<String>, usize)>,
    pub matched: bool,
}

/// Compare the stratification of the slice reduction at the origin with the
/// stratification of the reduced space near the class of `x`.
pub fn local_model_match(
    x: &[f64],
    spec: &GroupSpec,
    space: &SymplecticSpace,
) -> Result<LocalModelReport> {
    let sm = slice_model(x, spec, space)?;
    let f = momentum_map(spec)?;
    match spec {
        GroupSpec::Finite(_) | GroupSpec::Torus(_) => {
            let strat = enumerate_strata(spec, &f)?;
            let mut ambient = ambient_classes_near(spec, &strat, x)?;
            let mut slice = slice_reduction_classes(&sm, spec)?;
            ambient.sort();
            slice.sort();
            let matched = ambient == slice;
            Ok(LocalModelReport {
                base_point: x.to_vec(),
                dims_only: false,
                slice_side: slice,
                ambient_side: ambient,
                matched,
            })
        }
        GroupSpec::LieAlgebra(_) => {
            // Dims-only: the principal local dimension near [x], measured at
            // generic zero-level samples in a small ball around x (rank
            // counting at x itself is wrong at singular points).
            let local_dim = principal_local_dim(spec, &f, x)?;
            let slice_side = vec![(None, slice_reduction_dim(&sm, spec)?)];
            let ambient_side = vec![(None, local_dim)];
            let matched = slice_side == ambient_side;
            Ok(LocalModelReport {
                base_point: x.to_vec(),
                dims_only: true,
                slice_side,
                ambient_side,
                matched,
            })
        }
    }
}

/// Dimension of the principal reduced stratum near `x`: for generic
/// zero-level points close to `x`, `dim ker dF - dim(orbit)`, maximized
/// over a few samples.
fn principal_local_dim(spec: &GroupSpec, f: &MomentumMap, x: &[f64]) -> Result<usize> {
    let dim = 2 * f.n_pairs;
    let gens = spec.generators_exact();
    let mut rng = ChaCha8Rng::seed_from_u64(0x10c_a1);
    let compiled: Vec<_> = f.components.iter().map(|c| c.compile()).collect();
    let grads: Vec<Vec<_>> = f
        .components
        .iter()
        .map(|c| c.gradient().iter().map(|g| g.compile()).collect())
        .collect();
    let mut best: Option<usize> = None;
    let mut found = 0;
    for _ in 0..64 {
        if found >= 8 {
            break;
        }
        let mut v: Vec<f64> = x
            .iter()
            .map(|a| a + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        let mut ok = false;
        for _ in 0..100 {
            let res: Vec<f64> = compiled.iter().map(|c| c.eval(&v)).collect();
            if res.iter().map(|r| r * r).sum::<f64>().sqrt() <= LEVEL_TOL {
                ok = true;
                break;
            }
            let mut jac = DMatrix::zeros(compiled.len(), dim);
            for (a, row) in grads.iter().enumerate() {
                for (i, g) in row.iter().enumerate() {
                    jac[(a, i)] = g.eval(&v);
                }
            }
            let step = pseudo_solve(&jac, &DVector::from_column_slice(&res));
            for (xi, s) in v.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
        }
        if !ok {
            continue;
        }
        found += 1;
        let mut jac = DMatrix::zeros(compiled.len(), dim);
        for (a, row) in grads.iter().enumerate() {
            for (i, g) in row.iter().enumerate() {
                jac[(a, i)] = g.eval(&v);
            }
        }
        let rank = jac
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8)
            .count();
        let vv = DVector::from_column_slice(&v);
        let mut orbit = DMatrix::zeros(dim, gens.len());
        for (c, g) in gens.iter().enumerate() {
            orbit.set_column(c, &(g.to_f64() * &vv));
        }
        let orbit_dim = orbit
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8)
            .count();
        let local = (dim - rank) - orbit_dim;
        best = Some(best.map_or(local, |b: usize| b.max(local)));
    }
    best.ok_or_else(|| Error::Numerical("no generic zero-level point near x".into()))
}

/// Realized classes whose strata contain `x` in their closure, with their
/// dimensions.
fn ambient_classes_near(
    spec: &GroupSpec,
    strat: &Stratification,
    x: &[f64],
) -> Result<Vec<(Option<String>, usize)>> {
    match spec {
        GroupSpec::Finite(_) => {
            let elements = strat.elements.as_ref().expect("finite stratification");
            let IsotropyData::Finite {
                element_indices, ..
            } = isotropy(spec, x, ISO_TOL)?
            else {
                unreachable!()
            };
            let mut out = Vec::new();
            for s in strat.realized() {
                let sub = s.subgroup.as_ref().expect("finite class");
                if conjugate_contained(elements, sub, &element_indices) {
                    out.push((Some(s.class_id.0.clone()), s.stratum_dim.unwrap_or(0)));
                }
            }
            Ok(out)
        }
        GroupSpec::Torus(t) => {
            let n = t.n_pairs;
            let support: Vec<usize> = (0..n)
                .filter(|&j| (x[j] * x[j] + x[n + j] * x[n + j]).sqrt() > ISO_TOL)
                .collect();
            let mut out = Vec::new();
            for s in strat.realized() {
                if s.supports
                    .iter()
                    .any(|sp| support.iter().all(|j| sp.contains(j)))
                {
                    out.push((Some(s.class_id.0.clone()), s.stratum_dim.unwrap_or(0)));
                }
            }
            Ok(out)
        }
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition(
            "no ambient classes for algebras".into(),
        )),
    }
}

/// Stratification of the slice reduction at the origin, classes mapped into
/// ambient identifiers where the identification is available.
fn slice_reduction_classes(
    sm: &SliceModel,
    spec: &GroupSpec,
) -> Result<Vec<(Option<String>, usize)>> {
    match &sm.action {
        SliceAction::Whole => {
            let fm = momentum_map(spec)?;
            let strat = enumerate_strata(spec, &fm)?;
            Ok(strat
                .realized()
                .map(|s| (Some(s.class_id.0.clone()), s.stratum_dim.unwrap_or(0)))
                .collect())
        }
        SliceAction::FiniteStabilizer(stab) => {
            let GroupSpec::Finite(g) = spec else {
                return Err(Error::Precondition(
                    "finite stabilizer from non-finite spec".into(),
                ));
            };
            let elements = close_group(g)?;
            let dim = 2 * g.n_pairs;
            // Subgroups of the stabilizer, classified by ambient conjugacy.
            let stab_mats: Vec<RatMat> = stab.iter().map(|&i| elements[i].clone()).collect();
            let sub_group = FiniteGroup {
                generators: stab_mats,
                n_pairs: g.n_pairs,
                order_bound: g.order_bound,
            };
            let sub_elements = close_group(&sub_group)?;
            let subgroups = all_subgroups(&sub_elements)?;
            let mut out = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for sub in subgroups {
                let basis = fixed_space_exact(&sub_elements, &sub, dim);
                let stab_of = pointwise_stabilizer(&sub_elements, &basis);
                if stab_of != sub {
                    continue;
                }
                // Map into ambient indices for the identifier.
                let ambient_indices: Vec<usize> = sub
                    .iter()
                    .map(|&i| {
                        elements
                            .iter()
                            .position(|e| *e == sub_elements[i])
                            .expect("subgroup element")
                    })
                    .collect();
                let id = finite_class_id(&elements, &ambient_indices);
                if seen.insert((id.clone(), basis.ncols)) {
                    out.push((Some(id.0), basis.ncols));
                }
            }
            Ok(out)
        }
        SliceAction::Trivial => Ok(vec![(Some(trivial_class_label(spec)?), sm.slice_dim())]),
        SliceAction::Toral {
            generators,
            weights,
        } => {
            match weights {
                Some(ws)
                    if ws
                        .iter()
                        .all(|row| row.is_empty() || row.iter().all(|&w| w == 0)) =>
                {
                    Ok(vec![(Some(trivial_class_label(spec)?), sm.slice_dim())])
                }
                _ => {
                    // Nontrivial toral slice action: dims of the reduced
                    // slice via rank counting at generic slice points.
                    let _ = generators;
                    Ok(vec![(None, slice_reduction_dim(sm, spec)?)])
                }
            }
        }
        SliceAction::FiniteFloating => Ok(vec![(None, slice_reduction_dim(sm, spec)?)]),
    }
}

fn trivial_class_label(spec: &GroupSpec) -> Result<String> {
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let id_idx = elements
                .iter()
                .position(|e| *e == RatMat::identity(e.nrows))
                .expect("identity");
            Ok(finite_class_id(&elements, &[id_idx]).0)
        }
        GroupSpec::Torus(t) => {
            // The trivial subgroup: isotropy of a full-support generic point.
            let support: Vec<usize> = (0..t.n_pairs).collect();
            let IsotropyData::Torus {
                kernel_hnf,
                invariant_factors,
                ..
            } = torus_isotropy_for_support(t, &support)
            else {
                unreachable!()
            };
            Ok(torus_class_id(&kernel_hnf, &invariant_factors).0)
        }
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition("no class labels for algebras".into())),
    }
}

/// Dimension of the slice reduction at the origin: principal piece of
/// `F_W^{-1}(0) / H0` by rank counting at a generic near-origin solution.
fn slice_reduction_dim(sm: &SliceModel, spec: &GroupSpec) -> Result<usize> {
    let wdim = sm.slice_dim();
    if sm.slice_momentum.is_empty() {
        return Ok(wdim);
    }
    // Generic zero-level point of the slice momentum near the origin.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..64 {
        let mut w = DVector::from_fn(wdim, |_, _| rng.gen_range(-1.0..1.0));
        let mut ok = false;
        for _ in 0..100 {
            let res = DVector::from_vec(sm.eval_slice_momentum(&w));
            if res.norm() <= LEVEL_TOL {
                ok = true;
                break;
            }
            let mut jac = DMatrix::zeros(sm.slice_momentum.len(), wdim);
            for (a, s) in sm.slice_momentum.iter().enumerate() {
                let grad = s * &w;
                for i in 0..wdim {
                    jac[(a, i)] = grad[i];
                }
            }
            let step = pseudo_solve(&jac, &res);
            w -= step;
        }
        if !ok {
            continue;
        }
        // Level dimension minus isotropy orbit dimension at w.
        let mut jac = DMatrix::zeros(sm.slice_momentum.len(), wdim);
        for (a, s) in sm.slice_momentum.iter().enumerate() {
            let grad = s * &w;
            for i in 0..wdim {
                jac[(a, i)] = grad[i];
            }
        }
        let jac_scale = jac.norm().max(1.0);
        let rank = jac
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8 * jac_scale)
            .count();
        let acting: Vec<DMatrix<f64>> = match &sm.action {
            SliceAction::Toral { generators, .. } => generators.clone(),
            SliceAction::Whole => spec.generators_exact().iter().map(|g| g.to_f64()).collect(),
            _ => Vec::new(),
        };
        if acting.is_empty() {
            return Ok(wdim - rank);
        }
        let mut orbit = DMatrix::zeros(wdim, acting.len());
        for (c, g) in acting.iter().enumerate() {
            orbit.set_column(c, &(g * &w));
        }
        let orbit_dim = orbit
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8)
            .count();
        return Ok(wdim - rank - orbit_dim);
    }
    Err(Error::Numerical(
        "no generic zero-level slice point found".into(),
    ))
}

// ---------------------------------------------------------------------------
// Per-stratum reduction by the normalizer quotient.

#[derive(Debug, Clone)]
pub struct NormalizerReductionReport {
    pub class_id: OrbitTypeId,
    /// |N(H)| / |H| for finite groups; quotient torus dimension for tori.
    pub quotient_size: usize,
    pub reduced_dim: usize,
    pub stratum_dim: usize,
    pub dims_match: bool,
    /// Finite: sampled check that G-orbits meet V^H in exactly the
    /// N(H)-orbit. Torus: exact check that the isotropy directions of the
    /// momentum vanish identically on V^H.
    pub orbit_agreement: bool,
}

/// Reduce the fixed space V^H by L = N(H)/H and compare with the stratum.
pub fn normalizer_reduced_stratum(
    spec: &GroupSpec,
    strat: &Stratification,
    class_id: &OrbitTypeId,
) -> Result<NormalizerReductionReport> {
    let desc = strat
        .find(class_id)
        .ok_or_else(|| Error::Precondition(format!("unknown class {class_id}")))?;
    if !desc.realized {
        return Err(Error::Precondition(format!(
            "class {class_id} is not realized"
        )));
    }
    match spec {
        GroupSpec::Finite(_) => {
            let elements = strat.elements.as_ref().expect("finite stratification");
            let sub = desc.subgroup.as_ref().expect("finite class");
            let normalizer = normalizer_of(elements, sub);
            let l_order = normalizer.len() / sub.len();
            let reduced_dim = desc.fixed_dim; // finite quotients preserve dimension
            let stratum_dim = desc.stratum_dim.unwrap_or(0);
            // Sampled agreement: the ambient orbit of a generic fixed point
            // meets V^H in exactly its normalizer orbit.
            let mut agreement = true;
            if let Some(rep) = &desc.representative_exact {
                let basis = desc.fixed_basis_exact.as_ref().expect("exact basis");
                for (i, e) in elements.iter().enumerate() {
                    let moved = e.mul_vec(rep);
                    let in_vh = crate::exact::colspace_contains(basis, &moved);
                    let in_norm_orbit = normalizer.contains(&i);
                    // g rep in V^H iff g in N(H) (times isotropy, already
                    // inside N(H)).
                    let orbit_match = if in_vh {
                        // Must coincide with some normalizer translate.
                        normalizer
                            .iter()
                            .any(|&nidx| elements[nidx].mul_vec(rep) == moved)
                    } else {
                        !in_norm_orbit
                    };
                    if !orbit_match {
                        agreement = false;
                    }
                }
            }
            Ok(NormalizerReductionReport {
                class_id: class_id.clone(),
                quotient_size: l_order,
                reduced_dim,
                stratum_dim,
                dims_match: reduced_dim == stratum_dim,
                orbit_agreement: agreement,
            })
        }
        GroupSpec::Torus(t) => {
            let support = desc
                .supports
                .first()
                .ok_or_else(|| Error::Precondition("torus class without support".into()))?;
            let IsotropyData::Torus {
                kernel_hnf,
                subtorus_dim,
                ..
            } = torus_isotropy_for_support(t, support)
            else {
                unreachable!()
            };
            // Exact: the isotropy directions of the momentum vanish on V^H.
            // V^H spans the coordinate planes fixed by H; F_xi restricted
            // there must be the zero polynomial.
            let n = t.n_pairs;
            let fixed: Vec<usize> = (0..n)
                .filter(|&j| torus_isotropy_fixes_coordinate(t, support, j))
                .collect();
            let mut agreement = true;
            for xi_row in kernel_hnf {
                // F_xi = sum_a xi_a F_a; restricted to the fixed planes its
                // coefficient on plane j is sum_a xi_a A[a][j].
                for &j in &fixed {
                    let mut coeff = num_bigint::BigInt::zero();
                    for (a, xi_a) in xi_row.iter().enumerate() {
                        coeff += xi_a * t.weights[a][j];
                    }
                    if !coeff.is_zero() {
                        agreement = false;
                    }
                }
            }
            // Reduced dimension of (V^H ∩ F_L^{-1}(0)) / L at the stratum:
            // same support formula computed against the restricted weights.
            let sub_rank = crate::lattice::int_rank(&t.weight_submatrix(support));
            let reduced_dim = 2 * support.len() - 2 * sub_rank;
            let stratum_dim = desc.stratum_dim.unwrap_or(0);
            Ok(NormalizerReductionReport {
                class_id: class_id.clone(),
                quotient_size: t.weights.len() - subtorus_dim,
                reduced_dim,
                stratum_dim,
                dims_match: reduced_dim == stratum_dim,
                orbit_agreement: agreement,
            })
        }
        GroupSpec::LieAlgebra(_) => Err(Error::Precondition(
            "per-stratum reduction requires a finite group or torus".into(),
        )),
    }
}

fn normalizer_of(elements: &[RatMat], subgroup: &[usize]) -> Vec<usize> {
    use std::collections::BTreeMap;
    let lookup: BTreeMap<Vec<Rat>, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.lex_key(), i))
        .collect();
    (0..elements.len())
        .filter(|&g| {
            let gm = &elements[g];
            let ginv = gm.inverse().expect("group element");
            let mut conj: Vec<usize> = subgroup
                .iter()
                .map(|&h| lookup[&gm.mul(&elements[h]).mul(&ginv).lex_key()])
                .collect();
            conj.sort_unstable();
            conj == subgroup
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The abelian model-space level-set check.

#[derive(Debug, Clone)]
pub struct AbelianLevelReport {
    pub samples: usize,
    pub solutions: usize,
    pub counterexamples: usize,
    pub max_lambda_at_solution: f64,
    pub max_slice_momentum_at_solution: f64,
}

/// In the abelian local model `Y = G x_H (m* x W)` with momentum
/// `F_Y(lambda, v) = alpha + j(lambda) + i(F_W(v))`, every solution of
/// `F_Y = alpha` near the origin must have `lambda = 0` and `F_W(v) = 0`.
/// Solves from random starts and verifies both components at 1e-10.
pub fn abelian_model_level_set(
    sm: &SliceModel,
    spec: &GroupSpec,
    samples: usize,
    seed: u64,
) -> Result<AbelianLevelReport> {
    abelian_level_core(sm, spec, samples, seed, None)
}

/// The same solve against a target shifted off the orbit value: solutions
/// still found by the solver must leave the model neighborhood, so the
/// local solution set around the origin is empty. `solutions` counts only
/// in-neighborhood solutions.
pub fn abelian_model_level_set_shifted(
    sm: &SliceModel,
    spec: &GroupSpec,
    samples: usize,
    seed: u64,
    offset: &[f64],
) -> Result<AbelianLevelReport> {
    abelian_level_core(sm, spec, samples, seed, Some(offset))
}

fn abelian_level_core(
    sm: &SliceModel,
    spec: &GroupSpec,
    samples: usize,
    seed: u64,
    offset: Option<&[f64]>,
) -> Result<AbelianLevelReport> {
    let k = spec.algebra_dim();
    if matches!(spec, GroupSpec::LieAlgebra(_)) {
        return Err(Error::Precondition(
            "abelian model check requires an abelian spec".into(),
        ));
    }
    // Isotropy algebra directions (h) inside R^k and a complement (m).
    let h_dirs: Vec<DVector<f64>> = match &sm.isotropy {
        IsotropyData::Torus { kernel_hnf, .. } => kernel_hnf
            .iter()
            .map(|row| {
                DVector::from_iterator(
                    row.len(),
                    row.iter()
                        .map(|x| x.to_string().parse::<f64>().unwrap_or(0.0)),
                )
            })
            .collect(),
        IsotropyData::Finite { .. } => Vec::new(),
        IsotropyData::Subalgebra(_) => {
            return Err(Error::Precondition(
                "abelian model check requires an abelian spec".into(),
            ))
        }
    };
    let d_h = h_dirs.len();
    let mut hmat = DMatrix::zeros(k, d_h);
    for (c, v) in h_dirs.iter().enumerate() {
        hmat.set_column(c, &(v / v.norm().max(1e-300)));
    }
    // Orthonormal complement of h in R^k.
    let proj_h = &hmat * hmat.transpose();
    let complement = crate::symplectic::kernel(&hmat.transpose())?;
    let mmat = complement.basis().clone();
    let d_m = mmat.ncols();
    let _ = proj_h;

    let wdim = sm.slice_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solutions = 0usize;
    let mut counterexamples = 0usize;
    let mut max_lambda = 0.0f64;
    let mut max_fw = 0.0f64;
    for _ in 0..samples {
        let mut lambda = DVector::from_fn(d_m, |_, _| rng.gen_range(-0.5..0.5));
        let mut w = DVector::from_fn(wdim, |_, _| rng.gen_range(-0.7..0.7));
        let shift = match offset {
            Some(o) => DVector::from_column_slice(o),
            None => DVector::zeros(k),
        };
        // Newton on residual(lambda, w) = M lambda + H F_W(w) - shift.
        let mut converged = false;
        for _ in 0..100 {
            let fw = DVector::from_vec(sm.eval_slice_momentum(&w));
            let res = &mmat * &lambda + &hmat * &fw - &shift;
            if res.norm() <= LEVEL_TOL {
                converged = true;
                break;
            }
            let mut jac = DMatrix::zeros(k, d_m + wdim);
            jac.view_mut((0, 0), (k, d_m)).copy_from(&mmat);
            for (a, s) in sm.slice_momentum.iter().enumerate() {
                let grad = s * &w; // gradient of F_a
                let hcol = hmat.column(a).into_owned();
                for i in 0..wdim {
                    for r in 0..k {
                        jac[(r, d_m + i)] += hcol[r] * grad[i];
                    }
                }
            }
            let step = pseudo_solve(&jac, &res);
            for i in 0..d_m {
                lambda[i] -= step[i];
            }
            for i in 0..wdim {
                w[i] -= step[d_m + i];
            }
        }
        if !converged {
            continue;
        }
        // When the target is shifted, only solutions inside the model
        // neighborhood count; the claim is that there are none.
        if offset.is_some() && (lambda.norm() > 0.75 || w.norm() > 2.0) {
            continue;
        }
        solutions += 1;
        let fw = DVector::from_vec(sm.eval_slice_momentum(&w));
        let l_norm = lambda.norm();
        let fw_norm = fw.norm();
        max_lambda = max_lambda.max(l_norm);
        max_fw = max_fw.max(fw_norm);
        if l_norm > 1e-10 || fw_norm > 1e-10 {
            counterexamples += 1;
        }
    }
    Ok(AbelianLevelReport {
        samples,
        solutions,
        counterexamples,
        max_lambda_at_solution: max_lambda,
        max_slice_momentum_at_solution: max_fw,
    })
}

// ---------------------------------------------------------------------------
// Diagnostics used by the verification suites.

/// Frontier check: points of an upper stratum degenerating onto a lower
/// stratum representative must have strictly less isotropy than the limit.
pub fn frontier_diagnostic(spec: &GroupSpec, strat: &Stratification, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (lo_id, up_id) in &strat.closure {
        let lo = strat.find(lo_id).expect("closure id");
        let up = strat.find(up_id).expect("closure id");
        let (Some(rep), Some(up_rep)) = (&lo.representative, &up.representative) else {
            continue;
        };
        // Direction from a generic point of the upper stratum, shrunk onto
        // the lower representative.
        for m in [4.0f64, 16.0, 64.0] {
            let v: Vec<f64> = rep
                .iter()
                .zip(up_rep)
                .map(|(a, b)| a + (b + 0.01 * rng.gen_range(-1.0..1.0)) / m)
                .collect();
            let (lo_order, lo_dim) = isotropy(spec, rep, ISO_TOL)?.order_or_dim();
            let (v_order, v_dim) = match isotropy(spec, &v, ISO_TOL) {
                Ok(d) => d.order_or_dim(),
                Err(Error::ToleranceAmbiguity { .. }) => continue,
                Err(e) => return Err(e),
            };
            // The limit has at least as much isotropy.
            if v_order > lo_order || v_dim > lo_dim {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Conjugating a finite spec by an exact symplectic matrix must not change
/// stratum counts or dimensions.
pub fn conjugation_invariance_check(g: &FiniteGroup, seed: u64) -> Result<bool> {
    let spec = GroupSpec::Finite(g.clone());
    let f = momentum_map(&spec)?;
    let base = enumerate_strata(&spec, &f)?;
    let m = crate::exact::random_symplectic_exact(g.n_pairs, seed);
    let m_inv = m.inverse().expect("symplectic invertible");
    let conj = FiniteGroup {
        generators: g.generators.iter().map(|x| m.mul(x).mul(&m_inv)).collect(),
        n_pairs: g.n_pairs,
        order_bound: g.order_bound,
    };
    let conj_spec = GroupSpec::Finite(conj);
    let f2 = momentum_map(&conj_spec)?;
    let other = enumerate_strata(&conj_spec, &f2)?;
    let mut dims_a: Vec<(bool, usize, Option<usize>)> = base
        .strata
        .iter()
        .map(|s| (s.realized, s.fixed_dim, s.stratum_dim))
        .collect();
    let mut dims_b: Vec<(bool, usize, Option<usize>)> = other
        .strata
        .iter()
        .map(|s| (s.realized, s.fixed_dim, s.stratum_dim))
        .collect();
    dims_a.sort();
    dims_b.sort();
    Ok(dims_a == dims_b && base.closure.len() == other.closure.len())
}

// ---------------------------------------------------------------------------

impl RatMat {
    /// Column-space combination `basis * coeffs` (helper for generic point
    /// construction).
    pub fn mul_vec_cols(&self, coeffs: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.ncols, coeffs.len());
        (0..self.nrows)
            .map(|i| {
                let mut acc = Rat::zero();
                for (j, c) in coeffs.iter().enumerate() {
                    if !self[(i, j)].is_zero() && !c.is_zero() {
                        acc += &self[(i, j)] * c;
                    }
                }
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::DEFAULT_ORDER_BOUND;

    fn z2() -> GroupSpec {
        GroupSpec::Finite(FiniteGroup {
            generators: vec![RatMat::identity(2).neg()],
            n_pairs: 1,
            order_bound: DEFAULT_ORDER_BOUND,
        })
    }

    fn klein() -> GroupSpec {
        let a =
            RatMat::from_i64_rows(&[&[-1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, -1, 0], &[0, 0, 0, 1]]);
        let b =
            RatMat::from_i64_rows(&[&[1, 0, 0, 0], &[0, -1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, -1]]);
        GroupSpec::Finite(FiniteGroup {
            generators: vec![a, b],
            n_pairs: 2,
            order_bound: DEFAULT_ORDER_BOUND,
        })
    }

    fn circle() -> GroupSpec {
        GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2))
    }

    fn so3() -> GroupSpec {
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
        GroupSpec::LieAlgebra(crate::groups::MatrixLieAlgebra {
            basis: vec![block(&r1), block(&r2), block(&r3)],
            structure,
            n_pairs: 3,
        })
    }

    #[test]
    fn sampler_finite_accepts_everything() {
        let f = momentum_map(&z2()).unwrap();
        let (pts, short) = zero_level_sampler(&f, 50, 1.0, 7);
        assert_eq!(pts.len(), 50);
        assert_eq!(short, 0);
    }

    #[test]
    fn sampler_circle_equal_moduli() {
        let f = momentum_map(&circle()).unwrap();
        let (pts, short) = zero_level_sampler(&f, 100, 1.5, 11);
        assert_eq!(short, 0);
        for v in &pts {
            let r1 = (v[0] * v[0] + v[2] * v[2]).sqrt();
            let r2 = (v[1] * v[1] + v[3] * v[3]).sqrt();
            assert!((r1 - r2).abs() <= 1e-11, "|z1| != |z2|: {r1} vs {r2}");
        }
    }

    #[test]
    fn sampler_so3_parallel_q_p() {
        let f = momentum_map(&so3()).unwrap();
        let (pts, _short) = zero_level_sampler(&f, 50, 1.0, 13);
        assert!(pts.len() >= 45);
        for v in &pts {
            let q = [v[0], v[1], v[2]];
            let p = [v[3], v[4], v[5]];
            let cross = [
                q[1] * p[2] - q[2] * p[1],
                q[2] * p[0] - q[0] * p[2],
                q[0] * p[1] - q[1] * p[0],
            ];
            let n = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
            assert!(n <= 1e-11, "q x p = {n}");
        }
    }

    #[test]
    fn z2_two_strata() {
        let spec = z2();
        let f = momentum_map(&spec).unwrap();
        let strat = enumerate_strata(&spec, &f).unwrap();
        let realized: Vec<_> = strat.realized().collect();
        assert_eq!(realized.len(), 2);
        let mut dims: Vec<usize> = realized.iter().filter_map(|s| s.stratum_dim).collect();
        dims.sort_unstable();
        assert_eq!(dims, vec![0, 2]);
        assert_eq!(strat.closure.len(), 1);
        assert!(strat.closure_vs_fixed_space_mismatches().is_empty());
    }

    #[test]
    fn circle_two_strata() {
        let spec = circle();
        let f = momentum_map(&spec).unwrap();
        let strat = enumerate_strata(&spec, &f).unwrap();
        let realized: Vec<_> = strat.realized().collect();
        assert_eq!(realized.len(), 2);
        let mut dims: Vec<usize> = realized.iter().filter_map(|s| s.stratum_dim).collect();
        dims.sort_unstable();
        assert_eq!(dims, vec![0, 2]);
        assert!(strat.closure_vs_fixed_space_mismatches().is_empty());
    }

    #[test]
    fn klein_five_classes_four_realized() {
        let spec = klein();
        let f = momentum_map(&spec).unwrap();
        let strat = enumerate_strata(&spec, &f).unwrap();
        assert_eq!(strat.strata.len(), 5);
        let realized: Vec<_> = strat.realized().collect();
        assert_eq!(realized.len(), 4);
        let mut dims: Vec<usize> = realized.iter().filter_map(|s| s.stratum_dim).collect();
        dims.sort_unstable();
        assert_eq!(dims, vec![0, 2, 2, 4]);
        // The absent class is the diagonal order-2 subgroup.
        let absent: Vec<_> = strat.strata.iter().filter(|s| !s.realized).collect();
        assert_eq!(absent.len(), 1);
        assert_eq!(absent[0].fixed_dim, 0);
        assert!(strat.closure_vs_fixed_space_mismatches().is_empty());
    }

    #[test]
    fn finite_slice_is_whole_space() {
        let spec = z2();
        let space = SymplecticSpace::standard(1);
        let sm = slice_model(&[0.0, 0.0], &spec, &space).unwrap();
        assert_eq!(sm.slice_dim(), 2);
        assert!(matches!(sm.action, SliceAction::FiniteStabilizer(ref v) if v.len() == 2));
    }

    #[test]
    fn circle_slice_at_cone_point() {
        let spec = circle();
        let space = SymplecticSpace::standard(2);
        let x = [0.7, 0.7, 0.0, 0.0];
        let sm = slice_model(&x, &spec, &space).unwrap();
        assert_eq!(sm.orbit_dim, 1);
        assert_eq!(sm.nu_dim, 1);
        assert_eq!(sm.slice_dim(), 2);
        assert!(matches!(sm.action, SliceAction::Trivial));
    }

    #[test]
    fn circle_slice_at_origin_is_whole() {
        let spec = circle();
        let space = SymplecticSpace::standard(2);
        let sm = slice_model(&[0.0; 4], &spec, &space).unwrap();
        assert_eq!(sm.slice_dim(), 4);
        assert!(matches!(sm.action, SliceAction::Whole));
    }

    #[test]
    fn so3_slice_at_generic_zero_point() {
        let spec = so3();
        let space = SymplecticSpace::standard(3);
        let x = [1.0, 0.0, 0.0, 0.5, 0.0, 0.0];
        let sm = slice_model(&x, &spec, &space).unwrap();
        assert_eq!(sm.orbit_dim, 2);
        assert_eq!(sm.nu_dim, 2);
        assert_eq!(sm.slice_dim(), 2);
        // Rotations about the common axis act trivially on the slice.
        match &sm.action {
            SliceAction::Trivial => {}
            SliceAction::Toral { weights, .. } => {
                assert!(weights
                    .as_ref()
                    .is_some_and(|ws| ws.iter().all(|r| r.is_empty())));
            }
            other => panic!("unexpected slice action {other:?}"),
        }
    }

    #[test]
    fn local_model_passes_on_samples() {
        for spec in [z2(), klein(), circle()] {
            let space = SymplecticSpace::standard(spec.n_pairs());
            let f = momentum_map(&spec).unwrap();
            let (pts, _) = zero_level_sampler(&f, 8, 1.0, 23);
            for x in &pts {
                let report = local_model_match(x, &spec, &space).unwrap();
                assert!(
                    report.matched,
                    "mismatch at {x:?}: slice {:?} vs ambient {:?}",
                    report.slice_side, report.ambient_side
                );
            }
            // And at the origin, where the slice is the whole model.
            let report = local_model_match(&vec![0.0; space.dim()], &spec, &space).unwrap();
            assert!(report.matched);
        }
    }

    #[test]
    fn local_model_so3_dims_only() {
        let spec = so3();
        let space = SymplecticSpace::standard(3);
        let f = momentum_map(&spec).unwrap();
        let (pts, _) = zero_level_sampler(&f, 8, 1.0, 29);
        for x in &pts {
            let report = local_model_match(x, &spec, &space).unwrap();
            assert!(report.dims_only);
            assert!(
                report.matched,
                "so3 mismatch at {x:?}: {:?} vs {:?}",
                report.slice_side, report.ambient_side
            );
        }
    }

    #[test]
    fn normalizer_reduction_matches_stratum_dims() {
        for spec in [z2(), klein(), circle()] {
            let f = momentum_map(&spec).unwrap();
            let strat = enumerate_strata(&spec, &f).unwrap();
            for s in strat.realized() {
                let report = normalizer_reduced_stratum(&spec, &strat, &s.class_id).unwrap();
                assert!(report.dims_match, "{}: {report:?}", s.class_id);
                assert!(report.orbit_agreement, "{}: orbit agreement", s.class_id);
            }
        }
    }

    #[test]
    fn normalizer_reduction_klein_factor_quotient() {
        let spec = klein();
        let f = momentum_map(&spec).unwrap();
        let strat = enumerate_strata(&spec, &f).unwrap();
        // The order-2 realized classes: V^H is the opposite plane and
        // L = N/H has order 2 acting there.
        let order2: Vec<_> = strat
            .realized()
            .filter(|s| s.subgroup.as_ref().is_some_and(|g| g.len() == 2))
            .collect();
        assert_eq!(order2.len(), 2);
        for s in order2 {
            let report = normalizer_reduced_stratum(&spec, &strat, &s.class_id).unwrap();
            assert_eq!(report.quotient_size, 2);
            assert_eq!(report.reduced_dim, 2);
        }
    }

    #[test]
    fn abelian_level_set_circle_vertex_and_cone() {
        let spec = circle();
        let space = SymplecticSpace::standard(2);
        // Vertex: full-circle isotropy, lambda part empty, F_W nontrivial.
        let sm = slice_model(&[0.0; 4], &spec, &space).unwrap();
        let report = abelian_model_level_set(&sm, &spec, 500, 3).unwrap();
        assert!(report.solutions > 400);
        assert_eq!(report.counterexamples, 0);
        // Cone point: trivial isotropy, lambda part 1-dim, F_W empty.
        let sm = slice_model(&[0.7, 0.7, 0.0, 0.0], &spec, &space).unwrap();
        let report = abelian_model_level_set(&sm, &spec, 500, 5).unwrap();
        assert!(report.solutions > 400);
        assert_eq!(report.counterexamples, 0);
    }

    #[test]
    fn shifted_target_empties_local_level_set() {
        let spec = circle();
        let space = SymplecticSpace::standard(2);
        // Cone point: the lambda part must absorb the shift, pushing every
        // solution out of the model neighborhood.
        let sm = slice_model(&[0.7, 0.7, 0.0, 0.0], &spec, &space).unwrap();
        let r = abelian_model_level_set_shifted(&sm, &spec, 200, 7, &[3.0]).unwrap();
        assert_eq!(r.solutions, 0, "local solution set must be empty");
        // Vertex: the slice momentum must absorb it; a shift along the
        // h-part is reachable only far from the origin.
        let sm = slice_model(&[0.0; 4], &spec, &space).unwrap();
        let r = abelian_model_level_set_shifted(&sm, &spec, 200, 9, &[9.0]).unwrap();
        assert_eq!(r.solutions, 0, "local solution set must be empty");
    }

    #[test]
    fn fixed_spaces_are_symplectic() {
        // omega restricted to V^H is nondegenerate for every realized class.
        for spec in [z2(), klein(), circle()] {
            let f = momentum_map(&spec).unwrap();
            let strat = enumerate_strata(&spec, &f).unwrap();
            let omega = crate::exact::standard_omega_exact(spec.n_pairs());
            for s in strat.realized() {
                let basis = s.fixed_basis_exact.as_ref().unwrap();
                if basis.ncols == 0 {
                    continue;
                }
                let gram = basis.transpose().mul(&omega).mul(basis);
                assert!(
                    !gram.det().is_zero(),
                    "{}: omega degenerate on V^H",
                    s.class_id
                );
            }
        }
    }

    #[test]
    fn frontier_and_conjugation_checks() {
        for spec in [z2(), klein()] {
            let f = momentum_map(&spec).unwrap();
            let strat = enumerate_strata(&spec, &f).unwrap();
            assert!(frontier_diagnostic(&spec, &strat, 31).unwrap());
            let GroupSpec::Finite(g) = &spec else {
                panic!()
            };
            assert!(conjugation_invariance_check(g, 37).unwrap());
        }
        let spec = circle();
        let f = momentum_map(&spec).unwrap();
        let strat = enumerate_strata(&spec, &f).unwrap();
        assert!(frontier_diagnostic(&spec, &strat, 41).unwrap());
    }

    #[test]
    fn slice_model_rejects_off_level_points() {
        let spec = circle();
        let space = SymplecticSpace::standard(2);
        let x = [1.0, 0.0, 0.0, 0.0]; // |z1| != |z2|
        assert!(matches!(
            slice_model(&x, &spec, &space),
            Err(Error::Precondition(_))
        ));
    }
}
