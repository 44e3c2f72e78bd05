//! Integer-lattice normal forms: Smith and Hermite, with transform tracking.
//!
//! Used to classify torus isotropy: the subtorus is read off the integer
//! kernel of a weight submatrix, the finite part off its invariant factors.

use num_bigint::BigInt;
use num_traits::{Euclid, Signed, Zero};

pub type IntMat = Vec<Vec<BigInt>>;

pub fn int_mat(rows: &[&[i64]]) -> IntMat {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect()
}

pub fn int_identity(n: usize) -> IntMat {
    (0..n)
        .map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect())
        .collect()
}

pub fn int_mul(a: &IntMat, b: &IntMat) -> IntMat {
    let (n, k) = (a.len(), b.len());
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![BigInt::zero(); m]; n];
    for i in 0..n {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..m {
                out[i][j] += &a[i][l] * &b[l][j];
            }
        }
    }
    out
}

fn shape(a: &IntMat) -> (usize, usize) {
    (a.len(), if a.is_empty() { 0 } else { a[0].len() })
}

/// Smith normal form: returns `(u, d, v)` with `u * a * v = d`, `u` and `v`
/// unimodular and `d` diagonal with `d[0] | d[1] | ...`, all nonnegative.
pub fn smith_normal_form(a: &IntMat) -> (IntMat, IntMat, IntMat) {
    let (n, m) = shape(a);
    let mut d = a.clone();
    let mut u = int_identity(n);
    let mut v = int_identity(m);
    let r = n.min(m);

    for t in 0..r {
        loop {
            // Find the minimal-magnitude nonzero entry in the trailing block.
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..m {
                    if !d[i][j].is_zero()
                        && best.is_none_or(|(bi, bj)| d[i][j].abs() < d[bi][bj].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let Some((bi, bj)) = best else { break };
            d.swap(bi, t);
            u.swap(bi, t);
            swap_cols(&mut d, bj, t);
            swap_cols(&mut v, bj, t);

            let mut dirty = false;
            // Clear the pivot column.
            for i in t + 1..n {
                if !d[i][t].is_zero() {
                    let q = div_round(&d[i][t], &d[t][t]);
                    row_axpy(&mut d, i, t, &q);
                    row_axpy(&mut u, i, t, &q);
                    if !d[i][t].is_zero() {
                        dirty = true;
                    }
                }
            }
            // Clear the pivot row.
            for j in t + 1..m {
                if !d[t][j].is_zero() {
                    let q = div_round(&d[t][j], &d[t][t]);
                    col_axpy(&mut d, j, t, &q);
                    col_axpy(&mut v, j, t, &q);
                    if !d[t][j].is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // Enforce divisibility of the trailing block by the pivot.
            let mut fixed = true;
            'outer: for i in t + 1..n {
                for j in t + 1..m {
                    if !(&d[i][j] % &d[t][t]).is_zero() {
                        // Add row i to row t, restart reduction at t.
                        for jj in 0..m {
                            let add = d[i][jj].clone();
                            d[t][jj] += add;
                        }
                        for jj in 0..n {
                            let add = u[i][jj].clone();
                            u[t][jj] += add;
                        }
                        fixed = false;
                        break 'outer;
                    }
                }
            }
            if fixed {
                break;
            }
        }
        if d[t][t].is_negative() {
            for j in 0..m {
                d[t][j] = -d[t][j].clone();
            }
            for j in 0..n {
                u[t][j] = -u[t][j].clone();
            }
        }
    }
    (u, d, v)
}

fn swap_cols(a: &mut IntMat, x: usize, y: usize) {
    if x == y {
        return;
    }
    for row in a.iter_mut() {
        row.swap(x, y);
    }
}

/// row[i] -= q * row[t]
fn row_axpy(a: &mut IntMat, i: usize, t: usize, q: &BigInt) {
    let m = a[0].len();
    for j in 0..m {
        let sub = q * &a[t][j];
        a[i][j] -= sub;
    }
}

/// col[j] -= q * col[t]
fn col_axpy(a: &mut IntMat, j: usize, t: usize, q: &BigInt) {
    for row in a.iter_mut() {
        let sub = q * &row[t];
        row[j] -= sub;
    }
}

/// Rounded division keeps the remainder small, which speeds convergence.
fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = (a / b, a % b);
    if (&r * 2i64).abs() > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

/// Diagonal of the SNF with the trailing zeros and leading ones dropped.
pub fn invariant_factors(a: &IntMat) -> Vec<BigInt> {
    let (_, d, _) = smith_normal_form(a);
    let r = d.len().min(if d.is_empty() { 0 } else { d[0].len() });
    (0..r)
        .map(|i| d[i][i].clone())
        .filter(|x| !x.is_zero() && *x != BigInt::from(1))
        .collect()
}

pub fn int_rank(a: &IntMat) -> usize {
    let (_, d, _) = smith_normal_form(a);
    let r = d.len().min(if d.is_empty() { 0 } else { d[0].len() });
    (0..r).filter(|&i| !d[i][i].is_zero()).count()
}

/// Basis of `{x : a x = 0}` over the integers (saturated), rows of the result.
pub fn integer_kernel(a: &IntMat) -> IntMat {
    let (n, m) = shape(a);
    if m == 0 {
        return Vec::new();
    }
    if n == 0 {
        return int_identity(m);
    }
    let (_, d, v) = smith_normal_form(a);
    let r = (0..n.min(m)).filter(|&i| !d[i][i].is_zero()).count();
    // a (v e_j) = u^-1 d e_j = 0 for j >= r, and v is unimodular.
    (r..m)
        .map(|j| (0..m).map(|i| v[i][j].clone()).collect())
        .collect()
}

/// Row-style Hermite normal form: canonical upper-echelon basis of the row
/// lattice, pivots positive, entries above a pivot reduced into `[0, pivot)`.
pub fn hermite_normal_form(a: &IntMat) -> IntMat {
    let (n, m) = shape(a);
    let mut h = a.clone();
    let mut row = 0;
    for col in 0..m {
        if row == n {
            break;
        }
        loop {
            let mut piv: Option<usize> = None;
            for i in row..n {
                if !h[i][col].is_zero() && piv.is_none_or(|p| h[i][col].abs() < h[p][col].abs()) {
                    piv = Some(i);
                }
            }
            let Some(p) = piv else { break };
            h.swap(row, p);
            let mut again = false;
            for i in row + 1..n {
                if !h[i][col].is_zero() {
                    let q = div_round(&h[i][col], &h[row][col]);
                    for j in 0..m {
                        let sub = &q * &h[row][j];
                        h[i][j] -= sub;
                    }
                    if !h[i][col].is_zero() {
                        again = true;
                    }
                }
            }
            if !again {
                break;
            }
        }
        if h[row][col].is_zero() {
            continue;
        }
        if h[row][col].is_negative() {
            for j in 0..m {
                h[row][j] = -h[row][j].clone();
            }
        }
        // Reduce entries above the pivot.
        for i in 0..row {
            let q = h[i][col].div_euclid(&h[row][col]);
            if !q.is_zero() {
                for j in 0..m {
                    let sub = &q * &h[row][j];
                    h[i][j] -= sub;
                }
            }
        }
        row += 1;
    }
    h.truncate(row);
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_i64(m: &IntMat) -> Vec<Vec<i64>> {
        use num_traits::ToPrimitive;
        m.iter()
            .map(|r| r.iter().map(|x| x.to_i64().unwrap()).collect())
            .collect()
    }

    #[test]
    fn snf_transforms_multiply_out() {
        let a = int_mat(&[&[2, 4, 4], &[-6, 6, 12], &[10, -4, -16]]);
        let (u, d, v) = smith_normal_form(&a);
        assert_eq!(int_mul(&int_mul(&u, &a), &v), d);
        assert_eq!(to_i64(&d)[0][0], 2);
        assert_eq!(to_i64(&d)[1][1], 6);
        assert_eq!(to_i64(&d)[2][2], 12);
    }

    #[test]
    fn snf_divisibility_chain() {
        let a = int_mat(&[&[6, 0], &[0, 4]]);
        let (_, d, _) = smith_normal_form(&a);
        let d0 = d[0][0].clone();
        let d1 = d[1][1].clone();
        assert!((&d1 % &d0).is_zero(), "{d0} must divide {d1}");
    }

    #[test]
    fn kernel_of_weight_row() {
        // weights (1, -1): kernel of the 1x2 matrix is spanned by (1, 1)
        let a = int_mat(&[&[1, -1]]);
        let k = integer_kernel(&a);
        assert_eq!(k.len(), 1);
        let v = &k[0];
        assert_eq!(v[0], v[1]);
        assert!(!v[0].is_zero());
    }

    #[test]
    fn hnf_canonicalizes_row_lattice() {
        let a = int_mat(&[&[2, 0], &[1, 1]]);
        let b = int_mat(&[&[1, 1], &[2, 0]]);
        assert_eq!(hermite_normal_form(&a), hermite_normal_form(&b));
        let h = hermite_normal_form(&a);
        assert_eq!(to_i64(&h), vec![vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn invariant_factors_drop_units() {
        let a = int_mat(&[&[1, 0], &[0, 2]]);
        let f = invariant_factors(&a);
        assert_eq!(f, vec![BigInt::from(2)]);
    }
}
