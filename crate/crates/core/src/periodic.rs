//! Periodic points of toral automorphisms and the closing lemma.
//!
//! Points of period dividing `n` are the solutions of `(Aⁿ − I)x ∈ ℤ^d`. With
//! the Smith form `U(Aⁿ − I)V = D` they are exactly `x = V·(k_i/d_i) mod 1`,
//! `0 ≤ k_i < d_i`, so enumeration is exact and complete.
//!
//! Closing is a linear solve: if `Aⁿx − x = m + δ` with `m` the nearest
//! lattice vector, then `p = x − (Aⁿ − I)^{-1}δ` satisfies `Aⁿp − p = m`.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    rational_inverse, rational_mat_vec, rational_to_f64, smith_normal_form, IntMatrix,
};
use crate::linalg;
use crate::torus::{torus_distance, ToralAutomorphism, TorusPoint, DEFAULT_PRECISION_BITS};

/// Default closing radius.
pub const DEFAULT_EPS0: f64 = 0.05;
/// Messenger points whose splitting residual exceeds this are flagged.
pub const MESSENGER_TOL: f64 = 1e-10;
/// Relative slack on the closing inequalities, covering float evaluation.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    /// Full forward orbit, starting at the representative.
    pub points: Vec<TorusPoint>,
    pub period: u32,
}

impl PeriodicOrbit {
    /// Lexicographically smallest point of the orbit.
    pub fn representative(&self) -> &TorusPoint {
        &self.points[0]
    }
}

/// `|det(Aⁿ − I)|`, the number of points with `fⁿx = x`.
pub fn count_periodic(sys: &ToralAutomorphism, n: u32) -> BigInt {
    let d = sys.dim();
    sys.matrix_power(n as i64)
        .sub(&IntMatrix::identity(d))
        .det()
        .abs()
}

/// Every `x` with `fⁿx = x`, as exact rationals, in lexicographic order.
pub fn fixed_points_of_power(sys: &ToralAutomorphism, n: u32, cap: u64) -> Result<Vec<TorusPoint>> {
    if n == 0 {
        return Err(Error::InvalidPeriod("0".into()));
    }
    let count = count_periodic(sys, n);
    if count > BigInt::from(cap) {
        return Err(Error::OrbitBudgetExceeded {
            n,
            count: count.to_string(),
            cap,
        });
    }
    let d = sys.dim();
    let b = sys.matrix_power(n as i64).sub(&IntMatrix::identity(d));
    let snf = smith_normal_form(&b);
    let moduli: Vec<BigInt> = snf.diagonal.iter().map(|x| x.abs()).collect();
    let sizes: Vec<u64> = moduli
        .iter()
        .map(|m| u64::try_from(m).expect("bounded by cap"))
        .collect();
    let total: u64 = sizes.iter().product();
    let mut points = Vec::with_capacity(total as usize);
    let mut idx = vec![0u64; d];
    for _ in 0..total {
        let y: Vec<BigRational> = idx
            .iter()
            .zip(&moduli)
            .map(|(&k, m)| BigRational::new(BigInt::from(k), m.clone()))
            .collect();
        points.push(snf.right.mul_rational_vec(&y));
        for (i, size) in sizes.iter().enumerate() {
            idx[i] += 1;
            if idx[i] < *size {
                break;
            }
            idx[i] = 0;
        }
    }
    let mut points: Vec<Vec<BigRational>> = points
        .into_iter()
        .map(|p| TorusPoint::from_rationals(p).to_rationals())
        .collect();
    points.sort();
    debug_assert_eq!(BigInt::from(points.len()), count);
    Ok(points.into_iter().map(TorusPoint::from_rationals).collect())
}

/// All periodic orbits of minimal period `1..=n_max`, sorted by period and
/// then by representative.
pub fn enumerate_periodic(
    sys: &ToralAutomorphism,
    n_max: u32,
    cap: u64,
) -> Result<Vec<PeriodicOrbit>> {
    let mut orbits = Vec::new();
    for n in 1..=n_max {
        let candidates = fixed_points_of_power(sys, n, cap)?;
        let mut seen: HashSet<Vec<BigRational>> = HashSet::new();
        for start in candidates {
            let key = start.to_rationals();
            if seen.contains(&key) {
                continue;
            }
            let mut orbit = vec![start.clone()];
            seen.insert(key);
            let mut cur = sys.apply(&start, 1)?;
            while cur != start {
                seen.insert(cur.to_rationals());
                let next = sys.apply(&cur, 1)?;
                orbit.push(cur);
                cur = next;
            }
            if orbit.len() as u32 != n {
                continue;
            }
            // candidates are visited in sorted order, so the first point of
            // each new orbit is its lexicographic minimum
            orbits.push(PeriodicOrbit {
                points: orbit,
                period: n,
            });
        }
    }
    Ok(orbits)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosingBounds {
    /// `d(x, p) ≤ K·d(fⁿx, x)`
    pub start: bool,
    /// `d(fⁿx, p) ≤ K·d(fⁿx, x)`
    pub end: bool,
    /// Messenger lies on the right leaves within [`MESSENGER_TOL`].
    pub messenger: bool,
}

impl ClosingBounds {
    pub fn all(&self) -> bool {
        self.start && self.end && self.messenger
    }
}

#[derive(Debug, Clone)]
pub struct ClosingResult {
    pub p: TorusPoint,
    /// `z ∈ W^s(p) ∩ W^u(x)`.
    pub z: TorusPoint,
    pub k_used: f64,
    /// `d(fⁿx, x)`.
    pub delta: f64,
    pub period: i64,
    pub lattice_shift: Vec<BigInt>,
    /// Max of the unstable part of `z − p` and the stable part of `z − x`.
    pub messenger_residual: f64,
    pub dist_x_p: f64,
    pub dist_fx_p: f64,
    pub bounds_ok: ClosingBounds,
}

fn round_half_check(q: &BigRational) -> Result<BigInt> {
    let two = BigInt::from(2);
    let frac = q - BigRational::from_integer(q.floor().to_integer());
    if frac.numer() * &two == *frac.denom() {
        return Err(Error::AmbiguousLatticeShift);
    }
    Ok(q.round().to_integer())
}

/// Bound on `‖(Aⁿ − I)^{-1}‖` from spectral data: `C · max_i 1/| |μ_i|ⁿ − 1 |`.
pub fn analytic_k_bound(sys: &ToralAutomorphism, n: i64) -> f64 {
    let worst = sys
        .eigenvalues()
        .iter()
        .map(|e| 1.0 / (e.modulus().powf(n as f64) - 1.0).abs())
        .fold(0.0, f64::max);
    sys.hyperbolicity_c() * worst
}

/// A point `x` whose `n`-step return `fⁿx − x` is `m + δ` for a random
/// lattice vector `m` and a random `δ` with `|δ| < gap`, solved exactly
/// through `(Aⁿ − I)^{-1}`.
pub fn near_return_point<R: Rng + ?Sized>(
    sys: &ToralAutomorphism,
    n: i64,
    gap: f64,
    rng: &mut R,
) -> Result<TorusPoint> {
    if n == 0 {
        return Err(Error::InvalidPeriod("0".into()));
    }
    let d = sys.dim();
    let b = sys.matrix_power(n).sub(&IntMatrix::identity(d));
    let binv = rational_inverse(&b)
        .ok_or_else(|| Error::InvalidPeriod(format!("A^{n} - I is singular")))?;
    let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let r = rng.gen::<f64>() * gap;
    let target: Vec<BigRational> = dir
        .iter()
        .map(|&v| {
            let m = rng.gen_range(-5i64..5);
            let q = BigRational::from_float(v / norm * r).unwrap_or_else(BigRational::zero);
            q + BigRational::from_integer(BigInt::from(m))
        })
        .collect();
    Ok(TorusPoint::from_rationals(rational_mat_vec(&binv, &target)))
}

/// Closes the near-return `d(fⁿx, x) < eps0` to the unique nearby point of
/// period `n`.
pub fn closing_point(
    sys: &ToralAutomorphism,
    x: &TorusPoint,
    n: i64,
    eps0: f64,
) -> Result<ClosingResult> {
    if n == 0 {
        return Err(Error::InvalidPeriod("0".into()));
    }
    let d = sys.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.dim(),
        });
    }
    let xq = x.to_rationals();
    let an = sys.matrix_power(n);
    let b = an.sub(&IntMatrix::identity(d));
    let w: Vec<BigRational> = an
        .mul_rational_vec(&xq)
        .into_iter()
        .zip(&xq)
        .map(|(a, b)| a - b)
        .collect();
    let mut shift = Vec::with_capacity(d);
    for wi in &w {
        shift.push(round_half_check(wi)?);
    }
    let delta_q: Vec<BigRational> = w
        .iter()
        .zip(&shift)
        .map(|(wi, mi)| wi - BigRational::from_integer(mi.clone()))
        .collect();
    let delta_f: Vec<f64> = delta_q.iter().map(rational_to_f64).collect();
    let delta = delta_f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if delta >= eps0 {
        return Err(Error::NotClose {
            distance: delta,
            eps0,
        });
    }

    let binv = rational_inverse(&b).ok_or(Error::SingularInverse)?;
    let correction = rational_mat_vec(&binv, &delta_q);
    let p_lift: Vec<BigRational> = xq.iter().zip(&correction).map(|(a, c)| a - c).collect();
    let p = TorusPoint::from_rationals(p_lift);
    // Aⁿp − p = m exactly; checked again on the reduced point
    debug_assert!(sys.apply(&p, n).map(|q| q == p).unwrap_or(false));

    let binv_f = nalgebra::DMatrix::from_fn(d, d, |i, j| rational_to_f64(&binv[i][j]));
    let k_used = linalg::op_norm(&binv_f).max(linalg::op_norm(&(&binv_f + linalg::identity(d))));

    // x − p = (Aⁿ − I)^{-1} δ as a lifted vector
    let v: Vec<f64> = correction.iter().map(rational_to_f64).collect();
    let (vs, vu) = sys.stable_projection(&v);
    let z = if delta_q.iter().all(|q| q.is_zero()) {
        p.clone()
    } else {
        let zc: Vec<f64> = p
            .coords()
            .iter()
            .zip(vs.iter())
            .map(|(a, b)| a + b)
            .collect();
        TorusPoint::from_f64(&zc, DEFAULT_PRECISION_BITS)
    };
    let (_, zu) = sys.stable_projection(vs.as_slice());
    let (zs_minus_x, _) = sys.stable_projection((-vu).as_slice());
    let messenger_residual = zu.norm().max(zs_minus_x.norm());

    let fx = sys.apply(&x.as_rational(), n)?.coords().to_vec();
    let dist_x_p = torus_distance(x.coords(), p.coords());
    let dist_fx_p = torus_distance(&fx, p.coords());
    let limit = k_used * delta * (1.0 + BOUND_SLACK) + 1e-15;
    let bounds_ok = ClosingBounds {
        start: dist_x_p <= limit,
        end: dist_fx_p <= limit,
        messenger: messenger_residual <= MESSENGER_TOL,
    };
    Ok(ClosingResult {
        p,
        z,
        k_used,
        delta,
        period: n,
        lattice_shift: shift,
        messenger_residual,
        dist_x_p,
        dist_fx_p,
        bounds_ok,
    })
}

/// Closing for the unit-roof suspension of `f`, points `(x, s)` with
/// `s ∈ [0, 1)`. The return time is rounded to the nearest integer `n`; the
/// periodic orbit through `(p, s)` has period `n = T + Δ`.
#[derive(Debug, Clone)]
pub struct SuspensionClosing {
    pub base: ClosingResult,
    pub s: f64,
    /// Period correction `Δ`.
    pub time_shift: f64,
    /// `d(f^T(x, s), (x, s))` in the local product metric.
    pub return_distance: f64,
    pub period: f64,
    /// `|Δ| ≤ K·d(f^T(x,s), (x,s))`.
    pub time_bound_ok: bool,
}

pub fn suspension_closing(
    sys: &ToralAutomorphism,
    x: &TorusPoint,
    s: f64,
    t: f64,
    eps0: f64,
) -> Result<SuspensionClosing> {
    if !(0.0..1.0).contains(&s) || !t.is_finite() || t < 0.5 {
        return Err(Error::InvalidPeriod(format!("s = {s}, T = {t}")));
    }
    let n = t.round() as i64;
    let time_shift = n as f64 - t;
    let fx = sys.apply(&x.as_rational(), n)?.coords().to_vec();
    let base_dist = torus_distance(&fx, x.coords());
    let return_distance = (base_dist * base_dist + time_shift * time_shift).sqrt();
    if return_distance >= eps0 {
        return Err(Error::NotClose {
            distance: return_distance,
            eps0,
        });
    }
    let base = closing_point(sys, x, n, eps0)?;
    let k = base.k_used.max(1.0);
    Ok(SuspensionClosing {
        time_bound_ok: time_shift.abs() <= k * return_distance * (1.0 + BOUND_SLACK),
        base,
        s,
        time_shift,
        return_distance,
        period: n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::new(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    /// Brute force: scan `x = (i, j)/q` for `q = |det(Aⁿ − I)|`.
    fn brute_force_fixed(sys: &ToralAutomorphism, n: u32) -> Vec<(i64, i64, i64)> {
        let q: i64 = (&count_periodic(sys, n)).try_into().unwrap();
        let an = sys.matrix_power(n as i64).to_rows_i64().unwrap();
        let mut out = Vec::new();
        for i in 0..q {
            for j in 0..q {
                let a = an[0][0] * i + an[0][1] * j - i;
                let b = an[1][0] * i + an[1][1] * j - j;
                if a % q == 0 && b % q == 0 {
                    out.push((i, j, q));
                }
            }
        }
        out
    }

    #[test]
    fn counts_match_brute_force() {
        let sys = cat();
        assert_eq!(count_periodic(&sys, 1), BigInt::one());
        assert_eq!(count_periodic(&sys, 2), BigInt::from(5));
        for n in 1..=4 {
            let brute = brute_force_fixed(&sys, n).len();
            assert_eq!(BigInt::from(brute), count_periodic(&sys, n));
        }
    }

    #[test]
    fn enumeration_matches_brute_force_points() {
        let sys = cat();
        for n in 1..=4 {
            let mut brute: Vec<TorusPoint> = brute_force_fixed(&sys, n)
                .into_iter()
                .map(|(i, j, q)| TorusPoint::from_fractions(&[(i, q), (j, q)]))
                .collect();
            brute.sort_by_key(|a| a.to_rationals());
            let snf = fixed_points_of_power(&sys, n, 1 << 20).unwrap();
            assert_eq!(snf, brute);
        }
    }

    #[test]
    fn period_two_structure() {
        let sys = cat();
        let orbits = enumerate_periodic(&sys, 2, 1 << 20).unwrap();
        assert_eq!(orbits.len(), 3);
        assert_eq!(orbits[0].period, 1);
        assert_eq!(orbits[0].points, vec![TorusPoint::origin(2)]);
        let five = BigInt::from(5);
        for orbit in &orbits[1..] {
            assert_eq!(orbit.period, 2);
            for p in &orbit.points {
                assert!(p.to_rationals().iter().all(|q| *q.denom() == five));
            }
        }
    }

    #[test]
    fn completeness_up_to_eight() {
        let sys = cat();
        let orbits = enumerate_periodic(&sys, 8, 1 << 20).unwrap();
        for n in 1..=8u32 {
            let total: u32 = orbits
                .iter()
                .filter(|o| n % o.period == 0)
                .map(|o| o.period)
                .sum();
            assert_eq!(BigInt::from(total), count_periodic(&sys, n));
        }
        for o in &orbits {
            let rep = o.representative();
            assert_eq!(&sys.apply(rep, o.period as i64).unwrap(), rep);
            for m in 1..o.period {
                assert_ne!(&sys.apply(rep, m as i64).unwrap(), rep);
            }
            let keys: Vec<_> = o.points.iter().map(|p| p.to_rationals()).collect();
            assert!(keys.iter().all(|k| *k >= keys[0]));
        }
    }

    #[test]
    fn budget_enforced() {
        let err = enumerate_periodic(&cat(), 10, 1000).unwrap_err();
        assert!(matches!(err, Error::OrbitBudgetExceeded { .. }));
    }

    #[test]
    fn closing_on_periodic_point_is_trivial() {
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(1, 5), (2, 5)]);
        let r = closing_point(&sys, &x, 2, DEFAULT_EPS0).unwrap();
        assert_eq!(r.p, x);
        assert_eq!(r.z, x);
        assert_eq!(r.delta, 0.0);
    }

    #[test]
    fn closing_small_point_period_three() {
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(1, 100), (2, 100)]);
        // the return gap is about 0.32, so the default radius would refuse it
        let r = closing_point(&sys, &x, 3, 0.45).unwrap();
        assert_eq!(sys.apply(&r.p, 3).unwrap(), r.p);
        assert!(r.bounds_ok.all());
    }

    #[test]
    fn far_return_rejected() {
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(3, 10), (1, 7)]);
        assert!(matches!(
            closing_point(&sys, &x, 1, DEFAULT_EPS0),
            Err(Error::NotClose { .. })
        ));
    }

    #[test]
    fn half_cell_residual_is_ambiguous() {
        // (A − I)(1/2, 0) = (1/2, 1/2) for the cat map
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(1, 2), (0, 1)]);
        assert_eq!(
            closing_point(&sys, &x, 1, 0.9).unwrap_err(),
            Error::AmbiguousLatticeShift
        );
    }

    #[test]
    fn closing_bounds_monte_carlo() {
        let sys = cat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=30);
            let x = near_return_point(&sys, n, 0.049, &mut rng).unwrap();
            let r = closing_point(&sys, &x, n, DEFAULT_EPS0).unwrap();
            assert!(r.bounds_ok.start && r.bounds_ok.end, "n = {n}");
            assert!(r.messenger_residual <= MESSENGER_TOL);
            assert_eq!(sys.apply(&r.p, n).unwrap(), r.p);
        }
    }

    #[test]
    fn k_is_uniform_in_n() {
        let sys = cat();
        let lam = sys.lambda();
        for n in 1..=60 {
            let b = sys.matrix_power(n).sub(&IntMatrix::identity(2));
            let binv = rational_inverse(&b).unwrap();
            let m = nalgebra::DMatrix::from_fn(2, 2, |i, j| rational_to_f64(&binv[i][j]));
            let k = linalg::op_norm(&m);
            assert!(k <= analytic_k_bound(&sys, n) * (1.0 + 1e-9));
            assert!(k <= 1.0 / (1.0 - lam) + 1e-9);
        }
    }

    #[test]
    fn suspension_reduces_to_base() {
        let sys = cat();
        let x = TorusPoint::from_fractions(&[(1, 100), (2, 100)]);
        let base = closing_point(&sys, &x, 3, 0.45).unwrap();
        for s in [0.0, 0.4] {
            let r = suspension_closing(&sys, &x, s, 3.0, 0.45).unwrap();
            assert_eq!(r.time_shift, 0.0);
            assert_eq!(r.s, s);
            assert_eq!(r.base.p, base.p);
            assert!(r.time_bound_ok);
        }
    }
}
