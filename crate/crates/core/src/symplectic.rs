//! Floating linear symplectic algebra: perpendiculars, constant-rank
//! splittings, and adapted almost complex structures.
//!
//! Global convention, inherited by every other module:
//! `omega(v, w) = v^T Omega w` with the standard block form
//! `Omega = [[0, I], [-I, 0]]` in `(q1..qn, p1..pn)` coordinate order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff for floating rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// A symplectic vector space of dimension `2n` with form matrix `Omega`.
#[derive(Debug, Clone)]
pub struct SymplecticSpace {
    omega: DMatrix<f64>,
    omega_t_inv: DMatrix<f64>,
    cond: f64,
}

impl SymplecticSpace {
    /// Standard space: `Omega = [[0, I_n], [-I_n, 0]]` in `(q, p)` order.
    pub fn standard(n_pairs: usize) -> Self {
        let dim = 2 * n_pairs;
        let mut omega = DMatrix::zeros(dim, dim);
        for i in 0..n_pairs {
            omega[(i, n_pairs + i)] = 1.0;
            omega[(n_pairs + i, i)] = -1.0;
        }
        // For the standard form, (Omega^T)^{-1} = Omega.
        let omega_t_inv = omega.clone();
        SymplecticSpace {
            omega,
            omega_t_inv,
            cond: 1.0,
        }
    }

    /// General invertible skew form. The condition number is recorded so
    /// callers can scale tolerances.
    pub fn from_omega(omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() != omega.ncols() || omega.nrows() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "form matrix must be square of even size, got {}x{}",
                omega.nrows(),
                omega.ncols()
            )));
        }
        let skew = (&omega + omega.transpose()).norm();
        if skew > 1e-12 * omega.norm().max(1.0) {
            return Err(Error::Precondition(
                "form matrix is not skew-symmetric".into(),
            ));
        }
        let svd = omega.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= RANK_TOL * smax {
            return Err(Error::RankDeficient("form matrix is singular".into()));
        }
        let omega_t_inv = omega
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("form matrix is singular".into()))?;
        Ok(SymplecticSpace {
            omega,
            omega_t_inv,
            cond: smax / smin,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn n_pairs(&self) -> usize {
        self.dim() / 2
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    pub fn pairing(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (v.transpose() * &self.omega * w)[(0, 0)]
    }

    /// The Hamiltonian vector field of a gradient: solves
    /// `omega(X, .) = dh(.)`, i.e. `X = (Omega^T)^{-1} grad`.
    pub fn hamiltonian_field(&self, grad: &DVector<f64>) -> DVector<f64> {
        &self.omega_t_inv * grad
    }

    /// Is a matrix symplectic for this form, to the given tolerance?
    pub fn is_symplectic(&self, m: &DMatrix<f64>, tol: f64) -> bool {
        (m.transpose() * &self.omega * m - &self.omega).norm() <= tol * self.omega.norm()
    }
}

/// Floating rank with a guard band: any singular value within a factor of 10
/// of the cutoff is an error, not a guess.
pub fn rank_with_guard(singular_values: &[f64], tol_scale: f64) -> Result<usize> {
    let smax = singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    let cutoff = RANK_TOL * tol_scale * smax;
    for &s in singular_values {
        if s > 0.1 * cutoff && s < 10.0 * cutoff {
            return Err(Error::ToleranceAmbiguity { value: s, cutoff });
        }
    }
    Ok(singular_values.iter().filter(|&&s| s >= cutoff).count())
}

/// A subspace of R^(2n), stored as an orthonormal column basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Build from a spanning matrix; columns must be independent within the
    /// rank guard band.
    pub fn new(span: DMatrix<f64>) -> Result<Self> {
        let ambient = span.nrows();
        let ncols = span.ncols();
        if ncols == 0 {
            return Ok(Self::zero(ambient));
        }
        let svd = span.clone().svd(true, false);
        let svals: Vec<f64> = svd.singular_values.iter().cloned().collect();
        let rank = rank_with_guard(&svals, 1.0)?;
        if rank < ncols {
            return Err(Error::RankDeficient(format!(
                "spanning set has rank {rank} < {ncols} columns"
            )));
        }
        let u = svd.u.expect("svd u");
        Ok(Subspace {
            ambient,
            basis: u.columns(0, rank).into_owned(),
        })
    }

    /// Like `new` but silently dropping dependent columns (used for images
    /// of subspaces under maps, which may collapse).
    pub fn spanned_by(span: DMatrix<f64>) -> Result<Self> {
        let ambient = span.nrows();
        if span.ncols() == 0 {
            return Ok(Self::zero(ambient));
        }
        let svd = span.clone().svd(true, false);
        let svals: Vec<f64> = svd.singular_values.iter().cloned().collect();
        let rank = rank_with_guard(&svals, 1.0)?;
        if rank == 0 {
            return Ok(Self::zero(ambient));
        }
        let u = svd.u.expect("svd u");
        Ok(Subspace {
            ambient,
            basis: u.columns(0, rank).into_owned(),
        })
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        (v - self.project(v)).norm()
    }

    pub fn contains_vector(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.distance(v) <= tol * v.norm().max(1.0)
    }

    pub fn contains_subspace(&self, other: &Subspace, tol: f64) -> bool {
        (0..other.dim()).all(|j| {
            let col = DVector::from_column_slice(other.basis.column(j).as_slice());
            self.contains_vector(&col, tol)
        })
    }

    /// Image under a linear map, rank-reduced.
    pub fn map(&self, m: &DMatrix<f64>) -> Result<Subspace> {
        Subspace::spanned_by(m * &self.basis)
    }
}

/// Gap between subspaces: spectral norm of the projector difference.
/// Zero iff equal; 1 when one contains a direction orthogonal to the other.
pub fn subspace_gap(a: &Subspace, b: &Subspace) -> f64 {
    let d = a.projector() - b.projector();
    d.svd(false, false).singular_values.max()
}

/// Kernel of a rectangular matrix as an orthonormal-column subspace. The
/// rank cutoff is relative to the matrix's own largest singular value.
pub fn kernel(m: &DMatrix<f64>) -> Result<Subspace> {
    kernel_scaled(m, None)
}

/// Kernel with an externally supplied scale: singular values are compared
/// against `RANK_TOL * scale`. Use this when the matrix is a restriction of
/// something bigger (a Gram matrix of a form, say) and may be numerically
/// zero as a whole.
pub fn kernel_scaled(m: &DMatrix<f64>, scale: Option<f64>) -> Result<Subspace> {
    let ncols = m.ncols();
    let nrows = m.nrows();
    if nrows == 0 {
        return Ok(Subspace::full(ncols));
    }
    // Pad to square so the thin SVD carries a full set of right vectors.
    let size = nrows.max(ncols);
    let mut padded = DMatrix::zeros(size, ncols);
    padded.view_mut((0, 0), (nrows, ncols)).copy_from(m);
    let svd = padded.svd(false, true);
    let svals: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = svals.iter().cloned().fold(0.0f64, f64::max);
    let reference = scale.unwrap_or(smax);
    let rank = if reference == 0.0 {
        0
    } else {
        let cutoff = RANK_TOL * reference;
        for &s in &svals {
            if s > 0.1 * cutoff && s < 10.0 * cutoff {
                return Err(Error::ToleranceAmbiguity { value: s, cutoff });
            }
        }
        svals.iter().filter(|&&s| s >= cutoff).count()
    };
    let v_t = svd.v_t.expect("svd v_t");
    let null_dim = ncols - rank;
    let mut basis = DMatrix::zeros(ncols, null_dim);
    // Right singular vectors are sorted by decreasing singular value, so the
    // kernel directions are the trailing rows of v_t.
    for k in 0..null_dim {
        basis.set_column(k, &v_t.row(rank + k).transpose());
    }
    Ok(Subspace {
        ambient: ncols,
        basis,
    })
}

/// Symplectic perpendicular `{v : omega(v, w) = 0 for all w in W}`.
pub fn symplectic_perp(w: &Subspace, space: &SymplecticSpace) -> Result<Subspace> {
    if w.ambient_dim() != space.dim() {
        return Err(Error::Dimension(format!(
            "subspace lives in dim {}, space has dim {}",
            w.ambient_dim(),
            space.dim()
        )));
    }
    // omega(v, w_j) = 0 for each basis column: rows (Omega w_j)^T.
    let constraints = (space.omega() * w.basis()).transpose();
    kernel(&constraints)
}

/// Intersection of two subspaces.
pub fn intersect(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    assert_eq!(a.ambient_dim(), b.ambient_dim());
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(Subspace::zero(a.ambient_dim()));
    }
    let mut stacked = DMatrix::zeros(a.ambient_dim(), a.dim() + b.dim());
    stacked
        .view_mut((0, 0), (a.ambient_dim(), a.dim()))
        .copy_from(a.basis());
    stacked
        .view_mut((0, a.dim()), (a.ambient_dim(), b.dim()))
        .copy_from(&(-b.basis()));
    let null = kernel(&stacked)?;
    if null.dim() == 0 {
        return Ok(Subspace::zero(a.ambient_dim()));
    }
    let coeffs = null.basis().rows(0, a.dim()).into_owned();
    Subspace::spanned_by(a.basis() * coeffs)
}

/// Sum (join) of two subspaces.
pub fn join(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    assert_eq!(a.ambient_dim(), b.ambient_dim());
    let mut stacked = DMatrix::zeros(a.ambient_dim(), a.dim() + b.dim());
    stacked
        .view_mut((0, 0), (a.ambient_dim(), a.dim()))
        .copy_from(a.basis());
    stacked
        .view_mut((0, a.dim()), (a.ambient_dim(), b.dim()))
        .copy_from(b.basis());
    Subspace::spanned_by(stacked)
}

/// Adapted almost complex structure `J = A P^{-1}` together with the
/// intermediate data of the polar construction.
#[derive(Debug, Clone)]
pub struct AdaptedComplexStructure {
    pub j: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub p_sqrt: DMatrix<f64>,
    pub metric: DMatrix<f64>,
}

/// Residuals of the defining invariants, all relative.
#[derive(Debug, Clone, Copy)]
pub struct AdaptedResiduals {
    pub square_residual: f64,
    pub symplectic_residual: f64,
    pub metric_min_eigenvalue: f64,
}

impl AdaptedComplexStructure {
    pub fn verify(&self, space: &SymplecticSpace) -> AdaptedResiduals {
        let dim = space.dim();
        let jj = &self.j * &self.j;
        let square_residual =
            (jj + DMatrix::<f64>::identity(dim, dim)).norm() / self.j.norm_squared().max(1.0);
        let symplectic_residual = (self.j.transpose() * space.omega() * &self.j - space.omega())
            .norm()
            / space.omega().norm();
        let gj = space.omega() * &self.j;
        let sym = (&gj + gj.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let metric_min_eigenvalue = eig.eigenvalues.min();
        AdaptedResiduals {
            square_residual,
            symplectic_residual,
            metric_min_eigenvalue,
        }
    }

    pub fn is_adapted(&self, space: &SymplecticSpace, tol: f64) -> bool {
        let r = self.verify(space);
        r.square_residual <= tol && r.symplectic_residual <= tol && r.metric_min_eigenvalue > 0.0
    }

    /// The positive definite metric `g_J(v, w) = omega(v, J w)`.
    pub fn metric_gj(&self, space: &SymplecticSpace) -> DMatrix<f64> {
        let gj = space.omega() * &self.j;
        (&gj + gj.transpose()) * 0.5
    }
}

/// Build the adapted complex structure from a positive definite metric:
/// `A = g^{-1} Omega^T`, `P = sqrt(-A^2)` via a g-orthonormal frame, and
/// `J = A P^{-1}`.
pub fn adapted_complex_structure(
    space: &SymplecticSpace,
    metric: &DMatrix<f64>,
) -> Result<AdaptedComplexStructure> {
    let dim = space.dim();
    if metric.nrows() != dim || metric.ncols() != dim {
        return Err(Error::Dimension(format!(
            "metric is {}x{}, space has dim {dim}",
            metric.nrows(),
            metric.ncols()
        )));
    }
    if (metric - metric.transpose()).norm() > 1e-10 * metric.norm() {
        return Err(Error::Precondition("metric is not symmetric".into()));
    }
    let chol = metric
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let a = chol.solve(&space.omega().transpose());

    // Transport to a g-orthonormal frame where A becomes skew.
    let l = chol.l();
    let l_inv_t = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor not invertible".into()))?;
    let a_tilde = l.transpose() * &a * &l_inv_t;
    let minus_a2 = -(&a_tilde * &a_tilde);
    let sym = (&minus_a2 + minus_a2.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::Numerical(format!(
            "-A^2 is not positive definite (min eigenvalue {min_eig:.3e}); \
             the form or metric is degenerate"
        )));
    }
    let q = &eig.eigenvectors;
    let sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    let p_tilde = q * &sqrt_d * q.transpose();
    let p_tilde_inv = q * &inv_sqrt_d * q.transpose();

    let p_sqrt = &l_inv_t * &p_tilde * l.transpose();
    let p_inv = &l_inv_t * &p_tilde_inv * l.transpose();
    let j = &a * &p_inv;

    let acs = AdaptedComplexStructure {
        j,
        a,
        p_sqrt,
        metric: metric.clone(),
    };
    let res = acs.verify(space);
    if res.square_residual > 1e-9 || res.symplectic_residual > 1e-9 {
        return Err(Error::Numerical(format!(
            "adapted structure residuals too large: J^2 {:.3e}, symplectic {:.3e}",
            res.square_residual, res.symplectic_residual
        )));
    }
    Ok(acs)
}

/// The four-way splitting of the ambient space induced by a subspace `W` of
/// constant rank: `nu = W ∩ W^omega`, a symplectic complement `E` of `nu` in
/// `W`, the symplectic normal representative `N`, and the pairing partner
/// `J nu`.
#[derive(Debug, Clone)]
pub struct ConstantRankData {
    pub nu: Subspace,
    pub e: Subspace,
    pub n: Subspace,
    pub j_nu: Subspace,
}

impl ConstantRankData {
    /// Gram matrix of omega in the concatenated basis `(E, N, nu, J nu)`.
    pub fn gram(&self, space: &SymplecticSpace) -> DMatrix<f64> {
        let cols = self.e.dim() + self.n.dim() + self.nu.dim() + self.j_nu.dim();
        let mut b = DMatrix::zeros(space.dim(), cols);
        let mut at = 0;
        for s in [&self.e, &self.n, &self.nu, &self.j_nu] {
            b.view_mut((0, at), (space.dim(), s.dim()))
                .copy_from(s.basis());
            at += s.dim();
        }
        b.transpose() * space.omega() * b
    }

    /// Largest off-block entry that should vanish, and smallest singular
    /// value of the blocks that must be nondegenerate (relative to omega).
    pub fn verify(&self, space: &SymplecticSpace) -> (f64, f64) {
        let g = self.gram(space);
        let (de, dn, dnu) = (self.e.dim(), self.n.dim(), self.nu.dim());
        let djnu = self.j_nu.dim();
        let starts = [0, de, de + dn, de + dn + dnu];
        let dims = [de, dn, dnu, djnu];
        let mut max_off = 0.0f64;
        // Zero blocks: everything except E-E, N-N, nu-Jnu (and transpose).
        for bi in 0..4 {
            for bj in 0..4 {
                let keep = (bi == bj && bi < 2) || (bi == 2 && bj == 3) || (bi == 3 && bj == 2);
                if keep {
                    continue;
                }
                for i in 0..dims[bi] {
                    for j in 0..dims[bj] {
                        max_off = max_off.max(g[(starts[bi] + i, starts[bj] + j)].abs());
                    }
                }
            }
        }
        let mut min_nondeg = f64::INFINITY;
        let blocks: [(usize, usize, usize, usize); 3] = [
            (0, 0, de, de),
            (de, de, dn, dn),
            (de + dn, de + dn + dnu, dnu, djnu),
        ];
        for (r, c, h, w) in blocks {
            if h == 0 || w == 0 {
                continue;
            }
            let block = g.view((r, c), (h, w)).into_owned();
            min_nondeg = min_nondeg.min(block.svd(false, false).singular_values.min());
        }
        (max_off, min_nondeg)
    }
}

/// Split the ambient space along `W`: `nu = W ∩ W^omega`, `Jnu = J nu`,
/// `E` = the g_J-orthogonal complement of `nu` in `W`, and
/// `N` = the omega-perpendicular of `W + J nu`.
pub fn constant_rank_split(
    w: &Subspace,
    space: &SymplecticSpace,
    acs: &AdaptedComplexStructure,
) -> Result<ConstantRankData> {
    if !acs.is_adapted(space, 1e-8) {
        return Err(Error::Precondition(
            "complex structure is not adapted to the form".into(),
        ));
    }
    let w_perp = symplectic_perp(w, space)?;
    let nu = intersect(w, &w_perp)?;
    let j_nu = nu.map(&acs.j)?;

    // E: g_J-orthogonal complement of nu inside W.
    let e = if nu.dim() == 0 {
        w.clone()
    } else if nu.dim() == w.dim() {
        Subspace::zero(space.dim())
    } else {
        let g = acs.metric_gj(space);
        let nb = nu.basis();
        let gram = nb.transpose() * &g * nb;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Numerical("degenerate metric Gram on nu".into()))?;
        let proj = nb * gram_inv * nb.transpose() * &g;
        let residual = w.basis() - &proj * w.basis();
        Subspace::spanned_by(residual)?
    };

    let w_plus_jnu = join(w, &j_nu)?;
    let n = symplectic_perp(&w_plus_jnu, space)?;

    // Dimension bookkeeping from the splitting theorem.
    let expected_n = space.dim() - w.dim() - nu.dim();
    if e.dim() + nu.dim() != w.dim() || n.dim() != expected_n {
        return Err(Error::Numerical(format!(
            "splitting dimensions inconsistent: dim W = {}, dim nu = {}, dim E = {}, dim N = {}",
            w.dim(),
            nu.dim(),
            e.dim(),
            n.dim()
        )));
    }
    Ok(ConstantRankData { nu, e, n, j_nu })
}

/// A basis `T` with `T^T Omega T` equal to the standard block form
/// (symplectic Gram-Schmidt). Used to push slice data to Darboux form.
pub fn darboux_basis(space: &SymplecticSpace) -> Result<DMatrix<f64>> {
    let dim = space.dim();
    let n = dim / 2;
    let mut pool: Vec<DVector<f64>> = (0..dim)
        .map(|i| DVector::from_fn(dim, |r, _| ((r == i) as u8) as f64))
        .collect();
    let mut qs: Vec<DVector<f64>> = Vec::new();
    let mut ps: Vec<DVector<f64>> = Vec::new();
    for _ in 0..n {
        let u = pool
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .cloned()
            .ok_or_else(|| Error::Numerical("darboux basis ran out of vectors".into()))?;
        let u = &u / u.norm();
        let (mut best, mut best_val) = (None, 0.0f64);
        for (k, v) in pool.iter().enumerate() {
            let val = space.pairing(&u, v).abs();
            if val > best_val {
                best_val = val;
                best = Some(k);
            }
        }
        let k = best.ok_or_else(|| Error::RankDeficient("form degenerate on residual".into()))?;
        let w = pool[k].clone();
        let scale = space.pairing(&u, &w);
        if scale.abs() < 1e-12 {
            return Err(Error::RankDeficient("form degenerate on residual".into()));
        }
        let w = w / scale;
        // Reduce the pool to the symplectic complement of span{u, w}.
        pool = pool
            .iter()
            .map(|v| {
                let a = space.pairing(v, &u);
                let b = space.pairing(v, &w);
                v + &w * a - &u * b
            })
            .filter(|v| v.norm() > 1e-10)
            .collect();
        qs.push(u);
        ps.push(w);
    }
    let mut t = DMatrix::zeros(dim, dim);
    for (i, q) in qs.iter().enumerate() {
        t.set_column(i, q);
    }
    for (i, p) in ps.iter().enumerate() {
        t.set_column(n + i, p);
    }
    Ok(t)
}
