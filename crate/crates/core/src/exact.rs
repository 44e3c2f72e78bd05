//! Dense exact-rational linear algebra.
//!
//! Everything here is deterministic: no pivoting heuristics beyond "first
//! nonzero entry", so reduced forms are reproducible byte for byte.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// Rational from an integer.
pub fn rat(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

/// Rational from a fraction.
pub fn ratq(num: i64, den: i64) -> Rat {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Dense matrix over the rationals, row major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RatMat {
    pub nrows: usize,
    pub ncols: usize,
    data: Vec<Rat>,
}

impl RatMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        RatMat {
            nrows,
            ncols,
            data: vec![Rat::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rat::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Rat>]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        RatMat {
            nrows,
            ncols,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            &rows
                .iter()
                .map(|r| r.iter().map(|&x| rat(x)).collect())
                .collect::<Vec<_>>(),
        )
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> Rat) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(entries: &[Rat]) -> Self {
        RatMat {
            nrows: entries.len(),
            ncols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn column(&self, j: usize) -> Vec<Rat> {
        (0..self.nrows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<Rat> {
        (0..self.ncols).map(|j| self[(i, j)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul shape");
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                if self[(i, k)].is_zero() {
                    continue;
                }
                for j in 0..other.ncols {
                    if !other[(k, j)].is_zero() {
                        let prod = &self[(i, k)] * &other[(k, j)];
                        out[(i, j)] += prod;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.ncols, v.len(), "matvec shape");
        (0..self.nrows)
            .map(|i| {
                let mut acc = Rat::zero();
                for j in 0..self.ncols {
                    if !self[(i, j)].is_zero() && !v[j].is_zero() {
                        acc += &self[(i, j)] * &v[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_fn(self.nrows, self.ncols, |i, j| {
            &self[(i, j)] + &other[(i, j)]
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_fn(self.nrows, self.ncols, |i, j| {
            &self[(i, j)] - &other[(i, j)]
        })
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.nrows, self.ncols, |i, j| -self[(i, j)].clone())
    }

    pub fn scale(&self, c: &Rat) -> Self {
        Self::from_fn(self.nrows, self.ncols, |i, j| &self[(i, j)] * c)
    }

    /// Horizontal concatenation.
    pub fn hcat(&self, other: &Self) -> Self {
        assert_eq!(self.nrows, other.nrows);
        Self::from_fn(self.nrows, self.ncols + other.ncols, |i, j| {
            if j < self.ncols {
                self[(i, j)].clone()
            } else {
                other[(i, j - self.ncols)].clone()
            }
        })
    }

    /// Vertical concatenation.
    pub fn vcat(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.ncols);
        Self::from_fn(self.nrows + other.nrows, self.ncols, |i, j| {
            if i < self.nrows {
                self[(i, j)].clone()
            } else {
                other[(i - self.nrows, j)].clone()
            }
        })
    }

    pub fn submatrix_cols(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.nrows, cols.len(), |i, j| self[(i, cols[j])].clone())
    }

    /// In-place reduced row echelon form; returns the pivot columns.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.ncols {
            if row == self.nrows {
                break;
            }
            let Some(piv) = (row..self.nrows).find(|&r| !self[(r, col)].is_zero()) else {
                continue;
            };
            self.swap_rows(row, piv);
            let inv = self[(row, col)].recip();
            for j in col..self.ncols {
                let v = &self[(row, j)] * &inv;
                self[(row, j)] = v;
            }
            for r in 0..self.nrows {
                if r != row && !self[(r, col)].is_zero() {
                    let factor = self[(r, col)].clone();
                    for j in col..self.ncols {
                        let v = &self[(r, j)] - &(&factor * &self[(row, j)]);
                        self[(r, j)] = v;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref().len()
    }

    /// Basis of the right kernel, returned as matrix columns. Free variables
    /// are set to one in column order, so the basis is canonical.
    pub fn nullspace(&self) -> RatMat {
        let mut m = self.clone();
        let pivots = m.rref();
        let free: Vec<usize> = (0..self.ncols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = RatMat::zeros(self.ncols, free.len());
        for (k, &fc) in free.iter().enumerate() {
            basis[(fc, k)] = Rat::one();
            for (r, &pc) in pivots.iter().enumerate() {
                basis[(pc, k)] = -m[(r, fc)].clone();
            }
        }
        basis
    }

    /// Solve `self * x = b`. Returns the RREF-canonical solution (free
    /// variables zero) or `None` when inconsistent.
    pub fn solve(&self, b: &[Rat]) -> Option<Vec<Rat>> {
        assert_eq!(self.nrows, b.len());
        let mut aug = self.hcat(&RatMat::col_vec(b));
        let pivots = aug.rref();
        if pivots.contains(&self.ncols) {
            return None; // pivot in the augmented column
        }
        let mut x = vec![Rat::zero(); self.ncols];
        for (r, &pc) in pivots.iter().enumerate() {
            x[pc] = aug[(r, self.ncols)].clone();
        }
        Some(x)
    }

    /// Determinant by fraction Gaussian elimination.
    pub fn det(&self) -> Rat {
        assert!(self.is_square());
        let n = self.nrows;
        let mut m = self.clone();
        let mut det = Rat::one();
        for col in 0..n {
            let Some(piv) = (col..n).find(|&r| !m[(r, col)].is_zero()) else {
                return Rat::zero();
            };
            if piv != col {
                m.swap_rows(col, piv);
                det = -det;
            }
            det *= m[(col, col)].clone();
            let inv = m[(col, col)].recip();
            for r in col + 1..n {
                if m[(r, col)].is_zero() {
                    continue;
                }
                let factor = &m[(r, col)] * &inv;
                for j in col..n {
                    let v = &m[(r, j)] - &(&factor * &m[(col, j)]);
                    m[(r, j)] = v;
                }
            }
        }
        det
    }

    pub fn inverse(&self) -> Option<RatMat> {
        assert!(self.is_square());
        let n = self.nrows;
        let mut aug = self.hcat(&RatMat::identity(n));
        let pivots = aug.rref();
        if pivots.len() < n {
            return None;
        }
        Some(Self::from_fn(n, n, |i, j| aug[(i, n + j)].clone()))
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.ncols {
            self.data.swap(a * self.ncols + j, b * self.ncols + j);
        }
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.nrows, self.ncols, |i, j| rat_to_f64(&self[(i, j)]))
    }

    /// Lexicographic key on the flattened entries; fixes element order in
    /// group closures.
    pub fn lex_key(&self) -> Vec<Rat> {
        self.data.clone()
    }
}

impl std::ops::Index<(usize, usize)> for RatMat {
    type Output = Rat;
    fn index(&self, (i, j): (usize, usize)) -> &Rat {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RatMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rat {
        &mut self.data[i * self.ncols + j]
    }
}

pub fn rat_to_f64(x: &Rat) -> f64 {
    // Exact integers convert exactly; general ratios round once.
    let num = x.numer();
    let den = x.denom();
    bigint_to_f64(num) / bigint_to_f64(den)
}

fn bigint_to_f64(x: &BigInt) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Does the column space of `space` contain the vector `v`?
pub fn colspace_contains(space: &RatMat, v: &[Rat]) -> bool {
    space.solve(v).is_some()
}

/// Does the column space of `outer` contain the column space of `inner`?
pub fn colspace_includes(outer: &RatMat, inner: &RatMat) -> bool {
    (0..inner.ncols).all(|j| colspace_contains(outer, &inner.column(j)))
}

/// Intersection of two column spaces, as matrix columns.
pub fn colspace_intersection(a: &RatMat, b: &RatMat) -> RatMat {
    // x = a u = b w  <=>  [a | -b] (u, w)^T = 0
    let stacked = a.hcat(&b.neg());
    let null = stacked.nullspace();
    let mut cols: Vec<Vec<Rat>> = Vec::new();
    for k in 0..null.ncols {
        let u: Vec<Rat> = (0..a.ncols).map(|i| null[(i, k)].clone()).collect();
        cols.push(a.mul_vec(&u));
    }
    let mut m = RatMat::zeros(a.nrows, cols.len());
    for (k, c) in cols.iter().enumerate() {
        for i in 0..a.nrows {
            m[(i, k)] = c[i].clone();
        }
    }
    // Reduce to an independent basis.
    colspace_basis(&m)
}

/// Canonical basis (RREF of the transpose, nonzero rows as columns).
pub fn colspace_basis(m: &RatMat) -> RatMat {
    let mut t = m.transpose();
    let pivots = t.rref();
    let mut out = RatMat::zeros(m.nrows, pivots.len());
    for (r, _) in pivots.iter().enumerate() {
        for i in 0..m.nrows {
            out[(i, r)] = t[(r, i)].clone();
        }
    }
    out
}

/// Check `g^T omega g = omega` exactly.
pub fn is_symplectic_exact(g: &RatMat, omega: &RatMat) -> bool {
    g.transpose().mul(omega).mul(g) == *omega
}

/// Standard form `[[0, I], [-I, 0]]` on `2n` coordinates `(q, p)`.
pub fn standard_omega_exact(n: usize) -> RatMat {
    let mut m = RatMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = rat(1);
        m[(n + i, i)] = rat(-1);
    }
    m
}

/// `|x|` as rational.
pub fn rat_abs(x: &Rat) -> Rat {
    x.abs()
}

/// A random exact symplectic matrix: a product of block shears and a
/// unimodular block-diagonal factor, so the inverse is exact as well.
/// Entries stay small for the deterministic seeds used in tests.
pub fn random_symplectic_exact(n: usize, seed: u64) -> RatMat {
    // xorshift stream for deterministic small-integer picks.
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let small = |x: u64| (x % 5) as i64 - 2; // in {-2..2}
    let dim = 2 * n;
    // Symmetric B, C for the shears.
    let mut b = RatMat::zeros(n, n);
    let mut c = RatMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let vb = rat(small(next()));
            let vc = rat(small(next()));
            b[(i, j)] = vb.clone();
            b[(j, i)] = vb;
            c[(i, j)] = vc.clone();
            c[(j, i)] = vc;
        }
    }
    // Unimodular A: identity plus one strictly-upper entry.
    let mut a = RatMat::identity(n);
    if n > 1 {
        let i = (next() % n as u64) as usize;
        let mut j = (next() % n as u64) as usize;
        if i == j {
            j = (j + 1) % n;
        }
        a[(i, j)] = rat(small(next()));
    }
    let a_inv_t = a.inverse().expect("unimodular").transpose();
    let block = |tl: &RatMat, tr: &RatMat, bl: &RatMat, br: &RatMat| {
        RatMat::from_fn(dim, dim, |i, j| match (i < n, j < n) {
            (true, true) => tl[(i, j)].clone(),
            (true, false) => tr[(i, j - n)].clone(),
            (false, true) => bl[(i - n, j)].clone(),
            (false, false) => br[(i - n, j - n)].clone(),
        })
    };
    let id = RatMat::identity(n);
    let zero = RatMat::zeros(n, n);
    let shear_b = block(&id, &b, &zero, &id);
    let shear_c = block(&id, &zero, &c, &id);
    let diag = block(&a, &zero, &zero, &a_inv_t);
    shear_b.mul(&shear_c).mul(&diag)
}
