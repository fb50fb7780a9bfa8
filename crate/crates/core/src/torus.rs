//! Hyperbolic toral automorphisms and points on the flat torus.
//!
//! A [`ToralAutomorphism`] is validated at construction: unimodular, no
//! eigenvalue on the unit circle, diagonalizable over ℂ. The splitting
//! `E^s ⊕ E^u` comes from the real Jordan basis, and the adapted metric is the
//! Euclidean metric in that basis, so `‖Av‖ ≤ λ‖v‖` on `E^s` and
//! `‖A⁻¹v‖ ≤ λ‖v‖` on `E^u` hold with constant one.
//!
//! Points carry an exact representation (big rationals, or wide fixed-point
//! integers scaled by `2^{-b}`) and a float mirror. Orbit iteration is exact in
//! both exact modes; the fixed-point mode tracks how many bits of the initial
//! truncation have been consumed by expansion and refuses to iterate past the
//! budget.

use nalgebra::{Complex, DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{rational_frac, rational_to_f64, IntMatrix};
use crate::linalg;

pub const DEFAULT_PRECISION_BITS: u32 = 256;
/// Bits that must survive expansion for the fixed-point orbit to be trusted.
pub const GUARD_BITS: u32 = 64;
const UNIT_CIRCLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExactCoords {
    Rational(Vec<BigRational>),
    /// Integers `k_i ∈ [0, 2^bits)` standing for `k_i / 2^bits`. `steps` is the
    /// signed number of map applications since the point was seeded.
    Fixed {
        bits: u32,
        coords: Vec<BigInt>,
        steps: i64,
    },
}

/// A point of `T^d = ℝ^d / ℤ^d`.
#[derive(Debug, Clone)]
pub struct TorusPoint {
    exact: ExactCoords,
    float: Vec<f64>,
}

impl PartialEq for TorusPoint {
    fn eq(&self, other: &Self) -> bool {
        match (&self.exact, &other.exact) {
            (ExactCoords::Rational(a), ExactCoords::Rational(b)) => a == b,
            (
                ExactCoords::Fixed {
                    bits: ba,
                    coords: ca,
                    ..
                },
                ExactCoords::Fixed {
                    bits: bb,
                    coords: cb,
                    ..
                },
            ) if ba == bb => ca == cb,
            _ => self.to_rationals() == other.to_rationals(),
        }
    }
}

fn fixed_to_f64(k: &BigInt, bits: u32) -> f64 {
    if bits <= 64 {
        return k.to_f64().unwrap() * 2f64.powi(-(bits as i32));
    }
    let top = (k >> (bits - 64) as usize).to_u64().unwrap();
    top as f64 * 2f64.powi(-64)
}

/// `floor(x · 2^bits)` for `x ∈ [0, 1)`, exact on the binary expansion of `x`.
fn f64_to_fixed(x: f64, bits: u32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits_repr = x.to_bits();
    let exponent = ((bits_repr >> 52) & 0x7ff) as i64;
    let mantissa = bits_repr & ((1u64 << 52) - 1);
    let (m, e) = if exponent == 0 {
        (mantissa, -1074)
    } else {
        (mantissa | (1u64 << 52), exponent - 1075)
    };
    let shift = e + bits as i64;
    let m = BigInt::from(m);
    if shift >= 0 {
        m << shift as usize
    } else {
        m >> (-shift) as usize
    }
}

fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    /// Exact rational point, reduced into `[0, 1)^d`.
    pub fn from_rationals(coords: Vec<BigRational>) -> Self {
        let coords: Vec<BigRational> = coords.iter().map(rational_frac).collect();
        let float = coords.iter().map(rational_to_f64).map(wrap_unit).collect();
        TorusPoint {
            exact: ExactCoords::Rational(coords),
            float,
        }
    }

    pub fn from_fractions(pairs: &[(i64, i64)]) -> Self {
        Self::from_rationals(
            pairs
                .iter()
                .map(|&(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
                .collect(),
        )
    }

    /// Fixed-point point seeded from floats (reduced mod 1 first).
    pub fn from_f64(coords: &[f64], bits: u32) -> Self {
        let ks: Vec<BigInt> = coords
            .iter()
            .map(|&x| f64_to_fixed(wrap_unit(x), bits))
            .collect();
        Self::from_fixed(bits, ks, 0)
    }

    pub fn from_fixed(bits: u32, coords: Vec<BigInt>, steps: i64) -> Self {
        let modulus = BigInt::one() << bits as usize;
        let coords: Vec<BigInt> = coords.into_iter().map(|k| k.mod_floor(&modulus)).collect();
        let float = coords
            .iter()
            .map(|k| wrap_unit(fixed_to_f64(k, bits)))
            .collect();
        TorusPoint {
            exact: ExactCoords::Fixed {
                bits,
                coords,
                steps,
            },
            float,
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self::from_rationals(vec![BigRational::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.float.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.float
    }

    pub fn exact(&self) -> &ExactCoords {
        &self.exact
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.exact, ExactCoords::Rational(_))
    }

    pub fn to_rationals(&self) -> Vec<BigRational> {
        match &self.exact {
            ExactCoords::Rational(q) => q.clone(),
            ExactCoords::Fixed { bits, coords, .. } => {
                let den = BigInt::one() << *bits as usize;
                coords
                    .iter()
                    .map(|k| BigRational::new(k.clone(), den.clone()))
                    .collect()
            }
        }
    }

    /// Same point, re-expressed as exact rationals.
    pub fn as_rational(&self) -> Self {
        Self::from_rationals(self.to_rationals())
    }

    /// `(numerators, denominators)` per coordinate, for serialization.
    pub fn fraction_parts(&self) -> (Vec<String>, Vec<String>) {
        self.to_rationals()
            .iter()
            .map(|q| (q.numer().to_string(), q.denom().to_string()))
            .unzip()
    }
}

/// Shortest representative of `y − x` in `ℝ^d`, coordinate-wise in `[-1/2, 1/2)`.
pub fn lift_difference(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = b - a;
            d - d.round()
        })
        .collect()
}

/// Flat-torus distance: minimum over integer shifts of the Euclidean norm.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    lift_difference(x, y)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Validated hyperbolic automorphism `x ↦ Ax mod ℤ^d`.
#[derive(Debug, Clone)]
pub struct ToralAutomorphism {
    matrix: IntMatrix,
    inverse: IntMatrix,
    matrix_f: DMatrix<f64>,
    inverse_f: DMatrix<f64>,
    dim: usize,
    eigenvalues: Vec<Eigenvalue>,
    /// Real Jordan basis: stable block columns first, then unstable.
    jordan_basis: DMatrix<f64>,
    jordan_inverse: DMatrix<f64>,
    stable_dim: usize,
    lambda: f64,
    hyperbolicity_c: f64,
    adapted_metric: DMatrix<f64>,
    bits_per_step: f64,
}

struct EigenCluster {
    value: Complex<f64>,
    multiplicity: usize,
}

fn cluster_eigenvalues(eigs: &[Complex<f64>]) -> Vec<EigenCluster> {
    let mut clusters: Vec<EigenCluster> = Vec::new();
    for &z in eigs {
        // one representative per conjugate pair, taken with im >= 0
        if z.im < -1e-9 * z.norm().max(1.0) {
            continue;
        }
        let z = if z.im.abs() <= 1e-9 * z.norm().max(1.0) {
            Complex::new(z.re, 0.0)
        } else {
            z
        };
        match clusters
            .iter_mut()
            .find(|c| (c.value - z).norm() <= 1e-6 * z.norm().max(1.0))
        {
            Some(c) => c.multiplicity += 1,
            None => clusters.push(EigenCluster {
                value: z,
                multiplicity: 1,
            }),
        }
    }
    clusters
}

impl ToralAutomorphism {
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let matrix = IntMatrix::from_rows(rows);
        if !matrix.is_square() || matrix.nrows() < 2 || rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::BadShape {
                rows: rows.len(),
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        Self::from_int_matrix(matrix)
    }

    pub fn from_int_matrix(matrix: IntMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        let det = matrix.det();
        if det.abs() != BigInt::one() {
            return Err(Error::NotUnimodular {
                det: det.to_string(),
            });
        }
        let inverse = matrix
            .unimodular_inverse()
            .expect("unimodular matrices have integer inverses");
        let matrix_f = matrix.to_f64();
        let inverse_f = inverse.to_f64();

        let raw = matrix_f.clone().complex_eigenvalues();
        let raw: Vec<Complex<f64>> = raw.iter().cloned().collect();
        for z in &raw {
            if (z.norm() - 1.0).abs() < UNIT_CIRCLE_TOL {
                return Err(Error::EigenvalueOnUnitCircle { re: z.re, im: z.im });
            }
        }

        let clusters = cluster_eigenvalues(&raw);
        let mut stable_cols: Vec<DVector<f64>> = Vec::new();
        let mut unstable_cols: Vec<DVector<f64>> = Vec::new();
        let cmat = matrix_f.map(|v| Complex::new(v, 0.0));
        for c in &clusters {
            let shifted = &cmat - DMatrix::<Complex<f64>>::identity(dim, dim) * c.value;
            let nullity = linalg::complex_nullity(&shifted, 1e-8);
            if nullity < c.multiplicity {
                return Err(Error::DefectiveSplittingUnsupported {
                    re: c.value.re,
                    im: c.value.im,
                });
            }
            let target = if c.value.norm() < 1.0 {
                &mut stable_cols
            } else {
                &mut unstable_cols
            };
            if c.value.im == 0.0 {
                let real_shift = &matrix_f - DMatrix::identity(dim, dim) * c.value.re;
                let (basis, _, _) = linalg::null_space(&real_shift, c.multiplicity);
                for j in 0..basis.ncols() {
                    target.push(basis.column(j).into_owned());
                }
            } else {
                let basis = linalg::complex_null_space(&shifted, c.multiplicity);
                for j in 0..basis.ncols() {
                    let w = basis.column(j);
                    let re = w.map(|z| z.re);
                    let im = w.map(|z| z.im);
                    let scale = re.norm().max(im.norm());
                    target.push(re / scale);
                    target.push(im / scale);
                }
            }
        }
        let stable_dim = stable_cols.len();
        if stable_dim == 0 || stable_dim == dim || stable_dim + unstable_cols.len() != dim {
            return Err(Error::EigenvalueOnUnitCircle { re: 1.0, im: 0.0 });
        }
        let cols: Vec<DVector<f64>> = stable_cols.into_iter().chain(unstable_cols).collect();
        let jordan_basis = DMatrix::from_columns(&cols);
        let jordan_inverse = linalg::inverse(&jordan_basis)?;

        let eigenvalues: Vec<Eigenvalue> = raw
            .iter()
            .map(|z| Eigenvalue { re: z.re, im: z.im })
            .collect();
        let max_stable = raw
            .iter()
            .filter(|z| z.norm() < 1.0)
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let max_inv_unstable = raw
            .iter()
            .filter(|z| z.norm() > 1.0)
            .map(|z| 1.0 / z.norm())
            .fold(0.0, f64::max);
        let lambda = max_stable.max(max_inv_unstable);
        let spectral_radius = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let inv_radius = raw.iter().map(|z| 1.0 / z.norm()).fold(0.0, f64::max);
        let bits_per_step = spectral_radius.max(inv_radius).log2();

        let adapted_metric = jordan_inverse.transpose() * &jordan_inverse;
        let hyperbolicity_c = linalg::condition_number(&jordan_basis);

        Ok(ToralAutomorphism {
            matrix,
            inverse,
            matrix_f,
            inverse_f,
            dim,
            eigenvalues,
            jordan_basis,
            jordan_inverse,
            stable_dim,
            lambda,
            hyperbolicity_c,
            adapted_metric,
            bits_per_step,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &IntMatrix {
        &self.inverse
    }

    pub fn matrix_f64(&self) -> &DMatrix<f64> {
        &self.matrix_f
    }

    pub fn inverse_f64(&self) -> &DMatrix<f64> {
        &self.inverse_f
    }

    pub fn eigenvalues(&self) -> &[Eigenvalue] {
        &self.eigenvalues
    }

    /// Stable eigenvalue moduli, sorted decreasing.
    pub fn stable_moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(Eigenvalue::modulus)
            .filter(|&r| r < 1.0)
            .collect();
        m.sort_by(|a, b| b.partial_cmp(a).unwrap());
        m
    }

    /// Contraction rate of the adapted metric.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Hyperbolicity constant `C` for the Euclidean metric.
    pub fn hyperbolicity_c(&self) -> f64 {
        self.hyperbolicity_c
    }

    /// Hyperbolicity constant in the adapted metric.
    pub fn adapted_c(&self) -> f64 {
        1.0
    }

    pub fn adapted_metric(&self) -> &DMatrix<f64> {
        &self.adapted_metric
    }

    pub fn adapted_norm(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.adapted_metric * v)[(0, 0)].sqrt()
    }

    pub fn stable_dim(&self) -> usize {
        self.stable_dim
    }

    pub fn unstable_dim(&self) -> usize {
        self.dim - self.stable_dim
    }

    /// Columns spanning `E^s` (real Jordan vectors).
    pub fn stable_basis(&self) -> DMatrix<f64> {
        self.jordan_basis.columns(0, self.stable_dim).into_owned()
    }

    pub fn unstable_basis(&self) -> DMatrix<f64> {
        self.jordan_basis
            .columns(self.stable_dim, self.dim - self.stable_dim)
            .into_owned()
    }

    pub fn jordan_basis(&self) -> &DMatrix<f64> {
        &self.jordan_basis
    }

    pub fn jordan_inverse(&self) -> &DMatrix<f64> {
        &self.jordan_inverse
    }

    /// Bits of precision consumed per iterate (log₂ of the larger of the
    /// spectral radii of `A` and `A⁻¹`).
    pub fn bits_per_step(&self) -> f64 {
        self.bits_per_step
    }

    /// Longest orbit segment (in steps from the seed) a fixed-point point of
    /// width `bits` supports.
    pub fn usable_steps(&self, bits: u32) -> u64 {
        if bits <= GUARD_BITS {
            return 0;
        }
        ((bits - GUARD_BITS) as f64 / self.bits_per_step).floor() as u64
    }

    /// Bits required for a fixed-point orbit of `steps` iterates each way.
    pub fn bits_for_steps(&self, steps: u64) -> u32 {
        let need = (steps as f64 * self.bits_per_step).ceil() as u32 + GUARD_BITS;
        need.div_ceil(64) * 64 + 64
    }

    fn power(&self, n: i64) -> IntMatrix {
        if n >= 0 {
            self.matrix.pow(n as u64)
        } else {
            self.inverse.pow(n.unsigned_abs())
        }
    }

    /// Integer matrix `Aⁿ` (negative `n` uses the integer inverse).
    pub fn matrix_power(&self, n: i64) -> IntMatrix {
        self.power(n)
    }

    /// `fⁿ(x)`, exact in both exact representations.
    pub fn apply(&self, x: &TorusPoint, n: i64) -> Result<TorusPoint> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        if n == 0 {
            return Ok(x.clone());
        }
        let p = self.power(n);
        match &x.exact {
            ExactCoords::Rational(q) => Ok(TorusPoint::from_rationals(p.mul_rational_vec(q))),
            ExactCoords::Fixed {
                bits,
                coords,
                steps,
            } => {
                let new_steps = steps + n;
                self.check_budget(*bits, new_steps)?;
                Ok(TorusPoint::from_fixed(*bits, p.mul_vec(coords), new_steps))
            }
        }
    }

    fn check_budget(&self, bits: u32, steps: i64) -> Result<()> {
        let needed = steps.unsigned_abs() as f64 * self.bits_per_step;
        if needed > bits as f64 - GUARD_BITS as f64 {
            return Err(Error::PrecisionExhausted {
                needed,
                budget: bits.saturating_sub(GUARD_BITS),
            });
        }
        Ok(())
    }

    /// Forward orbit `x, f x, …, f^{len-1} x` by single exact steps.
    pub fn orbit(&self, x: &TorusPoint, start: i64, len: usize) -> Result<Vec<TorusPoint>> {
        let mut out = Vec::with_capacity(len);
        let mut cur = self.apply(x, start)?;
        for _ in 0..len {
            let next = if out.len() + 1 < len {
                Some(self.apply(&cur, 1)?)
            } else {
                None
            };
            out.push(cur);
            match next {
                Some(n) => cur = n,
                None => break,
            }
        }
        Ok(out)
    }

    /// Float image `A x mod 1`.
    pub fn apply_f64(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.matrix_f * DVector::from_column_slice(x);
        v.iter().map(|&c| wrap_unit(c)).collect()
    }

    /// Oblique decomposition `v = v_s + v_u` along the splitting.
    pub fn stable_projection(&self, v: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let v = DVector::from_column_slice(v);
        let c = &self.jordan_inverse * &v;
        let k = self.stable_dim;
        let vs = self.jordan_basis.columns(0, k) * c.rows(0, k);
        let vu = self.jordan_basis.columns(k, self.dim - k) * c.rows(k, self.dim - k);
        (vs, vu)
    }

    /// `‖A⁻ⁿ‖`-style bound helpers: derivative restricted to the stable
    /// bundle in the Jordan frame (constant for linear systems).
    pub fn stable_block(&self) -> DMatrix<f64> {
        let k = self.stable_dim;
        let s = self.jordan_basis.columns(0, k).into_owned();
        let coords = &self.jordan_inverse * &self.matrix_f * &s;
        coords.rows(0, k).into_owned()
    }
}

pub fn is_unimodular(rows: &[Vec<i64>]) -> bool {
    let m = IntMatrix::from_rows(rows);
    m.is_square() && m.det().abs().is_one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::new(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn cat_map_lambda() {
        // roots of x² − 3x + 1
        let want = (3.0 - 5f64.sqrt()) / 2.0;
        let sys = cat();
        assert!((sys.lambda() - want).abs() < 1e-12);
        assert_eq!(sys.adapted_c(), 1.0);
        assert_eq!(sys.stable_dim(), 1);
    }

    #[test]
    fn parabolic_matrix_rejected() {
        let err = ToralAutomorphism::new(&[vec![1, 1], vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::EigenvalueOnUnitCircle { .. }));
    }

    #[test]
    fn non_unimodular_rejected() {
        let err = ToralAutomorphism::new(&[vec![2, 0], vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::NotUnimodular { .. }));
    }

    #[test]
    fn defective_matrix_rejected() {
        // both blocks are the same cat map and sit in a Jordan chain
        let m = vec![
            vec![2, 1, 1, 0],
            vec![1, 1, 0, 1],
            vec![0, 0, 2, 1],
            vec![0, 0, 1, 1],
        ];
        let err = ToralAutomorphism::new(&m).unwrap_err();
        assert!(matches!(err, Error::DefectiveSplittingUnsupported { .. }));
    }

    #[test]
    fn exact_rational_step() {
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(1, 5), (2, 5)]);
        let y = sys.apply(&x, 1).unwrap();
        assert_eq!(y, TorusPoint::from_fractions(&[(4, 5), (3, 5)]));
        let o = TorusPoint::origin(2);
        assert_eq!(sys.apply(&o, 5).unwrap(), o);
    }

    #[test]
    fn fixed_point_roundtrip_and_budget() {
        let sys = cat();
        let x = TorusPoint::from_f64(&[0.123, 0.456], 256);
        let y = sys.apply(&x, 40).unwrap();
        assert_eq!(sys.apply(&y, -40).unwrap(), x);
        let err = sys.apply(&x, 200).unwrap_err();
        assert!(matches!(err, Error::PrecisionExhausted { .. }));
        assert!(sys.usable_steps(256) >= 130);
    }

    #[test]
    fn float_mirror_tracks_exact() {
        let sys = cat();
        let x = TorusPoint::from_f64(&[0.31, 0.77], 512);
        let y = sys.apply(&x, 25).unwrap();
        let exact: Vec<f64> = y.to_rationals().iter().map(rational_to_f64).collect();
        for (a, b) in exact.iter().zip(y.coords()) {
            let d = (a - b).abs();
            assert!(d.min(1.0 - d) < 2f64.powi(-50));
        }
    }

    #[test]
    fn wraparound_distance() {
        assert!((torus_distance(&[0.1, 0.0], &[0.9, 0.0]) - 0.2).abs() < 1e-15);
        assert_eq!(torus_distance(&[0.3, 0.4], &[0.3, 0.4]), 0.0);
    }

    #[test]
    fn stable_projection_solves_eigenbasis_system() {
        let sys = cat();
        let (vs, vu) = sys.stable_projection(&[1.0, 0.0]);
        // oracle: solve [e_s e_u] c = (1,0) with e_s = (1, -φ), e_u = (φ, 1)
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let det = 1.0 + phi * phi;
        let cs = 1.0 / det;
        let cu = phi / det;
        assert!((vs[0] - cs).abs() < 1e-12 && (vs[1] + cs * phi).abs() < 1e-12);
        assert!((vu[0] - cu * phi).abs() < 1e-12 && (vu[1] - cu).abs() < 1e-12);
        let (vs2, vu2) = sys.stable_projection(vs.as_slice());
        assert!((vs2 - &vs).norm() < 1e-14 && vu2.norm() < 1e-14);
    }

    #[test]
    fn adapted_metric_contracts_stable_vectors() {
        let m = vec![
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![0, 0, 0, 1],
            vec![-1, 1, 1, 3],
        ];
        let sys = ToralAutomorphism::new(&m).unwrap();
        let s = sys.stable_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let c = DVector::from_fn(s.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let v = &s * c;
            let av = sys.matrix_f64() * &v;
            assert!(sys.adapted_norm(&av) <= sys.lambda() * sys.adapted_norm(&v) * (1.0 + 1e-12));
        }
    }
}
