//! Small trigonometric perturbations `f(x) = Ax + ε g(x) mod 1` of a linear
//! automorphism, accepted only when a cone condition certifies hyperbolicity
//! on a grid, and power-iteration estimates of their stable and unstable
//! bundles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::torus::ToralAutomorphism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Sin,
    Cos,
}

/// One term `amp · sin(2π k·x)` (or `cos`) of component `component` of `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldTerm {
    pub component: usize,
    pub freq: Vec<i64>,
    pub amp: f64,
    #[serde(default)]
    pub phase: Phase,
}

/// Largest grid the cone check will visit.
const CONE_GRID_CAP: usize = 1 << 18;
const MAX_PERTURBED_DIM: usize = 4;

#[derive(Debug, Clone)]
pub struct PerturbedToral {
    base: ToralAutomorphism,
    terms: Vec<VectorFieldTerm>,
    epsilon: f64,
    cone_margin: f64,
}

fn phase_arg(k: &[i64], x: &[f64]) -> f64 {
    2.0 * PI * k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum::<f64>()
}

impl PerturbedToral {
    /// Validates the perturbation with the cone check on a grid of
    /// `grid_res` points per axis (capped at 2^18 points in total).
    pub fn new(
        base: ToralAutomorphism,
        terms: Vec<VectorFieldTerm>,
        epsilon: f64,
        grid_res: usize,
    ) -> Result<Self> {
        let d = base.dim();
        if d > MAX_PERTURBED_DIM {
            return Err(Error::BadShape { rows: d, cols: d });
        }
        for t in &terms {
            if t.component >= d || t.freq.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: t.freq.len(),
                });
            }
        }
        let mut pert = PerturbedToral {
            base,
            terms,
            epsilon,
            cone_margin: f64::INFINITY,
        };
        pert.cone_margin = pert.check_cones(grid_res)?;
        Ok(pert)
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn terms(&self) -> &[VectorFieldTerm] {
        &self.terms
    }

    /// Smallest cone-condition margin found on the acceptance grid.
    pub fn cone_margin(&self) -> f64 {
        self.cone_margin
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn field(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for t in &self.terms {
            let a = phase_arg(&t.freq, x);
            g[t.component] += t.amp
                * match t.phase {
                    Phase::Sin => a.sin(),
                    Phase::Cos => a.cos(),
                };
        }
        g
    }

    fn field_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        for t in &self.terms {
            let a = phase_arg(&t.freq, x);
            let dphase = match t.phase {
                Phase::Sin => a.cos(),
                Phase::Cos => -a.sin(),
            };
            for (col, &k) in t.freq.iter().enumerate() {
                j[(t.component, col)] += t.amp * 2.0 * PI * k as f64 * dphase;
            }
        }
        j
    }

    /// Bound on the second derivative of `g`, used to cover grid gaps.
    fn second_derivative_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let k2: f64 = t.freq.iter().map(|&k| (k * k) as f64).sum();
                t.amp.abs() * 4.0 * PI * PI * k2
            })
            .sum()
    }

    pub fn apply_f64(&self, x: &[f64]) -> Vec<f64> {
        let lin = self.base.matrix_f64() * DVector::from_column_slice(x);
        let g = self.field(x);
        lin.iter()
            .zip(g.iter())
            .map(|(l, gi)| {
                let v = l + self.epsilon * gi;
                v - v.floor()
            })
            .collect()
    }

    pub fn derivative(&self, x: &[f64]) -> DMatrix<f64> {
        self.base.matrix_f64() + self.field_jacobian(x) * self.epsilon
    }

    /// `f⁻¹(y)` by fixed-point iteration on `x = A⁻¹(y − ε g(x))` followed by
    /// Newton polishing.
    pub fn apply_inverse_f64(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let ainv = self.base.inverse_f64();
        let yv = DVector::from_column_slice(y);
        let mut x = ainv * &yv;
        for _ in 0..60 {
            let next = ainv * (&yv - self.field(x.as_slice()) * self.epsilon);
            let delta = (&next - &x).norm();
            x = next;
            if delta < 1e-15 {
                break;
            }
        }
        for _ in 0..3 {
            let r = self.base.matrix_f64() * &x + self.field(x.as_slice()) * self.epsilon - &yv;
            let Ok(jinv) = linalg::inverse(&self.derivative(x.as_slice())) else {
                break;
            };
            x -= jinv * r;
        }
        (0..d).map(|i| x[i] - x[i].floor()).collect()
    }

    /// Returns the minimum margin over the grid; rejects the perturbation when
    /// any grid point fails. The unstable cone `{‖v_s‖ ≤ ‖v_u‖}` (adapted
    /// coordinates) must be mapped into itself and expanded by `Df`, and the
    /// stable cone likewise by `Df⁻¹`.
    fn check_cones(&self, grid_res: usize) -> Result<f64> {
        let d = self.dim();
        let mut res = grid_res.max(2);
        while res.pow(d as u32) > CONE_GRID_CAP {
            res -= 1;
        }
        let t = self.base.jordan_basis();
        let tinv = linalg::inverse(t)?;
        let k = self.base.stable_dim();
        let slack = self.epsilon * self.second_derivative_bound() * (d as f64).sqrt() / res as f64
            * linalg::op_norm(&tinv)
            * linalg::op_norm(t);
        let total = res.pow(d as u32);
        let mut min_margin = f64::INFINITY;
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let c = rem % res;
                    rem /= res;
                    c as f64 / res as f64
                })
                .collect();
            let m = &tinv * self.derivative(&x) * t;
            let margin_u = cone_margin(&m, k, slack, false);
            let minv = linalg::inverse(&m)?;
            let margin_s = cone_margin(&minv, k, slack, true);
            let margin = margin_u.min(margin_s);
            if margin <= 0.0 {
                return Err(Error::PerturbationTooLarge { point: x, margin });
            }
            min_margin = min_margin.min(margin);
        }
        Ok(min_margin)
    }

    /// Estimates `(E^s_x, E^u_x)` by pushing a reference frame forward along
    /// the backward orbit (unstable) and pulling it back along the forward
    /// orbit (stable).
    pub fn estimate_splitting(&self, x: &[f64], n_iter: usize, tol: f64) -> Result<Splitting> {
        let n_iter = n_iter.max(1);
        let d = self.dim();
        let k = self.base.stable_dim();
        let reference = reference_frame(d);

        let mut backward = vec![x.to_vec()];
        for _ in 0..n_iter {
            let prev = self.apply_inverse_f64(backward.last().unwrap());
            backward.push(prev);
        }
        let mut forward = vec![x.to_vec()];
        for _ in 0..n_iter {
            let next = self.apply_f64(forward.last().unwrap());
            forward.push(next);
        }

        let mut unstable_history = Vec::with_capacity(n_iter);
        let mut stable_history = Vec::with_capacity(n_iter);
        let mut unstable_residuals = Vec::with_capacity(n_iter);
        let mut stable_residuals = Vec::with_capacity(n_iter);
        for m in 1..=n_iter {
            // E^u(m) = Df^m(f^{-m}x) V_ref
            let mut v = reference.columns(k, d - k).into_owned();
            for j in (1..=m).rev() {
                v = linalg::orthonormalize(&(self.derivative(&backward[j]) * v));
            }
            // E^s(m) = Df^{-m}(f^m x) V_ref
            let mut w = reference.columns(0, k).into_owned();
            for j in (0..m).rev() {
                let dinv = linalg::inverse(&self.derivative(&forward[j]))?;
                w = linalg::orthonormalize(&(dinv * w));
            }
            if let Some(prev) = unstable_history.last() {
                unstable_residuals.push(linalg::subspace_distance(prev, &v));
                stable_residuals.push(linalg::subspace_distance(
                    stable_history.last().unwrap(),
                    &w,
                ));
            }
            unstable_history.push(v);
            stable_history.push(w);
        }
        let residual = unstable_residuals
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
            .max(stable_residuals.last().copied().unwrap_or(f64::INFINITY));
        if residual > tol {
            return Err(Error::NoConvergence { residual, tol });
        }
        Ok(Splitting {
            stable: stable_history.pop().unwrap(),
            unstable: unstable_history.pop().unwrap(),
            residual,
            stable_residuals,
            unstable_residuals,
        })
    }
}

/// Margin of the cone condition for the block matrix `m` in adapted
/// coordinates. `stable` selects the cone around the first `k` coordinates.
fn cone_margin(m: &DMatrix<f64>, k: usize, slack: f64, stable: bool) -> f64 {
    let d = m.nrows();
    let (core, other) = if stable { (0..k, k..d) } else { (k..d, 0..k) };
    let block = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        m.view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned()
    };
    let mcc = block(core.clone(), core.clone());
    let mco = block(core.clone(), other.clone());
    let moc = block(other.clone(), core.clone());
    let moo = block(other.clone(), other.clone());
    let sv = mcc.clone().svd(false, false).singular_values;
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let growth = sigma_min - linalg::op_norm(&mco) - slack;
    let leak = linalg::op_norm(&moo) + linalg::op_norm(&moc) + slack;
    (growth - leak).min(growth - 1.0)
}

fn reference_frame(d: usize) -> DMatrix<f64> {
    // a fixed generic rotation of the identity frame
    let mut a = DMatrix::from_fn(d, d, |i, j| ((i * 7 + j * 3 + 1) as f64 * 0.61).sin());
    a += DMatrix::identity(d, d) * 0.5;
    linalg::orthonormalize(&a)
}

#[derive(Debug, Clone)]
pub struct Splitting {
    pub stable: DMatrix<f64>,
    pub unstable: DMatrix<f64>,
    /// Max of the final stable and unstable residuals `‖E(n) − E(n−1)‖`.
    pub residual: f64,
    pub stable_residuals: Vec<f64>,
    pub unstable_residuals: Vec<f64>,
}
