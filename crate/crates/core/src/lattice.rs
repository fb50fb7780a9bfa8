//! Exact integer and rational matrix arithmetic: determinants, powers,
//! rational solves and the Smith normal form used for periodic-point
//! enumeration.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Dense row-major matrix over the integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = BigInt::from(v);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)].to_f64().unwrap_or(f64::NAN)
        })
    }

    pub fn to_rows_i64(&self) -> Option<Vec<Vec<i64>>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].to_i64()).collect())
            .collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * &other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &IntMatrix) -> IntMatrix {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn pow(&self, mut n: u64) -> IntMatrix {
        let mut base = self.clone();
        let mut acc = Self::identity(self.rows);
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| &self[(i, j)] * &v[j])
                    .fold(BigInt::zero(), |a, b| a + b)
            })
            .collect()
    }

    pub fn mul_rational_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| BigRational::from_integer(self[(i, j)].clone()) * &v[j])
                    .fold(BigRational::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        assert!(self.is_square());
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[(k, k)].is_zero() {
                let Some(p) = (k + 1..n).find(|&i| !m[(i, k)].is_zero()) else {
                    return BigInt::zero();
                };
                m.swap_rows(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &m[(i, j)] * &m[(k, k)] - &m[(i, k)] * &m[(k, j)];
                    m[(i, j)] = v / &prev;
                }
            }
            prev = m[(k, k)].clone();
        }
        sign * m[(n - 1, n - 1)].clone()
    }

    /// Inverse of a unimodular matrix; `None` if `|det| != 1`.
    pub fn unimodular_inverse(&self) -> Option<IntMatrix> {
        let inv = rational_inverse(self)?;
        let mut out = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let q = &inv[i][j];
                if !q.is_integer() {
                    return None;
                }
                out[(i, j)] = q.to_integer();
            }
        }
        Some(out)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[dst] -= q * row[src]
    fn row_axpy(&mut self, dst: usize, src: usize, q: &BigInt) {
        for j in 0..self.cols {
            let v = q * &self[(src, j)];
            self[(dst, j)] -= v;
        }
    }

    /// col[dst] -= q * col[src]
    fn col_axpy(&mut self, dst: usize, src: usize, q: &BigInt) {
        for i in 0..self.rows {
            let v = q * &self[(i, src)];
            self[(i, dst)] -= v;
        }
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.data[i * self.cols + j]
    }
}

/// Gauss–Jordan inverse over the rationals; `None` when singular.
pub fn rational_inverse(m: &IntMatrix) -> Option<Vec<Vec<BigRational>>> {
    let n = m.nrows();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..2 * n)
                .map(|j| {
                    if j < n {
                        BigRational::from_integer(m[(i, j)].clone())
                    } else if j - n == i {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for v in a[col].iter_mut() {
            *v *= &inv;
        }
        let pivot = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row.iter_mut().zip(&pivot) {
                    *x -= &f * p;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn rational_mat_vec(m: &[Vec<BigRational>], v: &[BigRational]) -> Vec<BigRational> {
    m.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .fold(BigRational::zero(), |s, x| s + x)
        })
        .collect()
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    // scale to keep 64 significant bits regardless of the operand sizes
    let num = q.numer();
    let den = q.denom();
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let scaled = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        (num >> (-shift) as usize) / den
    };
    scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-(shift as i32))
}

/// Representative in `[0, 1)`.
pub fn rational_frac(q: &BigRational) -> BigRational {
    q - BigRational::from_integer(q.floor().to_integer())
}

/// Smith normal form `U · B · V = D` with `U`, `V` unimodular.
#[derive(Debug, Clone)]
pub struct SmithForm {
    pub left: IntMatrix,
    pub right: IntMatrix,
    pub diagonal: Vec<BigInt>,
}

pub fn smith_normal_form(b: &IntMatrix) -> SmithForm {
    let (rows, cols) = (b.nrows(), b.ncols());
    let mut d = b.clone();
    let mut u = IntMatrix::identity(rows);
    let mut v = IntMatrix::identity(cols);
    let rank_bound = rows.min(cols);
    let mut t = 0;
    while t < rank_bound {
        // pivot: smallest nonzero magnitude in the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !d[(i, j)].is_zero()
                    && best.is_none_or(|(bi, bj)| d[(i, j)].abs() < d[(bi, bj)].abs())
                {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        d.swap_rows(t, pi);
        u.swap_rows(t, pi);
        d.swap_cols(t, pj);
        v.swap_cols(t, pj);

        let mut clean = true;
        for i in t + 1..rows {
            if d[(i, t)].is_zero() {
                continue;
            }
            let q = d[(i, t)].div_floor(&d[(t, t)]);
            d.row_axpy(i, t, &q);
            u.row_axpy(i, t, &q);
            if !d[(i, t)].is_zero() {
                clean = false;
            }
        }
        for j in t + 1..cols {
            if d[(t, j)].is_zero() {
                continue;
            }
            let q = d[(t, j)].div_floor(&d[(t, t)]);
            d.col_axpy(j, t, &q);
            v.col_axpy(j, t, &q);
            if !d[(t, j)].is_zero() {
                clean = false;
            }
        }
        if !clean {
            continue;
        }
        // enforce divisibility of the trailing block by the pivot
        let mut fixed = true;
        'outer: for i in t + 1..rows {
            for j in t + 1..cols {
                if !(&d[(i, j)] % &d[(t, t)]).is_zero() {
                    // row t += row i
                    let minus_one = -BigInt::one();
                    d.row_axpy(t, i, &minus_one);
                    u.row_axpy(t, i, &minus_one);
                    fixed = false;
                    break 'outer;
                }
            }
        }
        if !fixed {
            continue;
        }
        if d[(t, t)].is_negative() {
            for j in 0..cols {
                d[(t, j)] = -d[(t, j)].clone();
            }
            for j in 0..rows {
                u[(t, j)] = -u[(t, j)].clone();
            }
        }
        t += 1;
    }
    let diagonal = (0..rank_bound).map(|i| d[(i, i)].clone()).collect();
    SmithForm {
        left: u,
        right: v,
        diagonal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bareiss_determinant() {
        let m = IntMatrix::from_rows(&[vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]]);
        assert_eq!(m.det(), BigInt::from(18));
        let cat = IntMatrix::from_rows(&[vec![2, 1], vec![1, 1]]);
        assert_eq!(cat.det(), BigInt::one());
    }

    #[test]
    fn smith_form_reconstructs() {
        let b = IntMatrix::from_rows(&[vec![4, 3, 3], vec![3, 1, 2], vec![6, 4, 6]]);
        let snf = smith_normal_form(&b);
        let prod = snf.left.mul(&b).mul(&snf.right);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j {
                    snf.diagonal[i].clone()
                } else {
                    BigInt::zero()
                };
                assert_eq!(prod[(i, j)], want);
            }
        }
        for w in snf.diagonal.windows(2) {
            assert!((&w[1] % &w[0]).is_zero());
        }
        let det: BigInt = snf.diagonal.iter().product();
        assert_eq!(det.abs(), b.det().abs());
        assert_eq!(snf.left.det().abs(), BigInt::one());
        assert_eq!(snf.right.det().abs(), BigInt::one());
    }

    #[test]
    fn rational_conversion_is_accurate() {
        let q = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert!((rational_to_f64(&q) - 1.0 / 3.0).abs() < 1e-17);
        let huge = BigRational::new(BigInt::from(7) << 400, BigInt::from(9) << 400);
        assert!((rational_to_f64(&huge) - 7.0 / 9.0).abs() < 1e-16);
    }
}
