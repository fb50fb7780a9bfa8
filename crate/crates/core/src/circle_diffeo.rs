//! Orientation-preserving diffeomorphisms of the circle, `Diff^r(S¹)`.
//!
//! An element is a lift `h(x) = x + u(x)` with `u` 1-periodic and stored as
//! complex Fourier coefficients `c_0 … c_F`, so that
//! `u(x) = c_0 + 2 Re Σ_{k≥1} c_k e^{2πikx}`. Composition and inversion work on
//! the sample grid of resolution `R` and are refitted; derivatives come from
//! the coefficients.
//!
//! The metric `d_r` is replaced by the `C^r` sup distance of lifts,
//! symmetrized with inverses. For the linear interpolation path it is bounded
//! by `max(ℓ_r(p), ℓ_r(p⁻¹))`, which [`path_length`] computes.

use std::f64::consts::TAU;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Resolution knobs shared by every element of a computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffeoParams {
    /// Highest retained frequency `F`.
    pub freq_cap: usize,
    /// Sample grid size `R`.
    pub resolution: usize,
    /// Highest derivative order tracked.
    pub r_max: usize,
    /// Lower bound on `h′` over the grid.
    pub margin: f64,
    /// Largest allowed relative energy above frequency `F/2`.
    pub tail_tol: f64,
    /// Order of the surrogate metric used by the group abstraction.
    pub metric_order: usize,
}

impl Default for DiffeoParams {
    fn default() -> Self {
        DiffeoParams {
            freq_cap: 64,
            resolution: 1024,
            r_max: 5,
            margin: 1e-3,
            tail_tol: 1e-8,
            metric_order: 3,
        }
    }
}

/// Energies below this are treated as roundoff when measuring the tail, so
/// for lifts with amplitude under about 1e-6 the tail test is absolute.
const TAIL_ENERGY_FLOOR: f64 = 1e-12;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct CircleDiffeo {
    coeffs: Vec<C64>,
    params: DiffeoParams,
}

fn twiddles(g: usize) -> Vec<C64> {
    (0..g)
        .map(|j| {
            let t = TAU * j as f64 / g as f64;
            C64::new(t.cos(), t.sin())
        })
        .collect()
}

/// `(2πik)^n`
fn spectral_factor(k: usize, n: usize) -> C64 {
    C64::new(0.0, TAU * k as f64).powu(n as u32)
}

/// Samples of `Dⁿu` on the uniform grid of size `g`.
fn grid_eval(coeffs: &[C64], n: usize, g: usize) -> Vec<f64> {
    let tw = twiddles(g);
    let scaled: Vec<C64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * spectral_factor(k, n))
        .collect();
    (0..g)
        .map(|j| {
            let mut acc = if n == 0 { scaled[0].re } else { 0.0 };
            let mut idx = 0;
            for c in scaled.iter().skip(1) {
                idx += j;
                if idx >= g {
                    idx %= g;
                }
                let w = tw[idx];
                acc += 2.0 * (c.re * w.re - c.im * w.im);
            }
            acc
        })
        .collect()
}

/// `(u(y), u′(y))` at an arbitrary point.
fn point_eval(coeffs: &[C64], y: f64) -> (f64, f64) {
    let t = TAU * y;
    let z = C64::new(t.cos(), t.sin());
    let mut zk = C64::new(1.0, 0.0);
    let mut u = coeffs[0].re;
    let mut du = 0.0;
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        zk *= z;
        // refresh the power periodically to stop error growth
        if k % 16 == 0 {
            let tk = t * k as f64;
            zk = C64::new(tk.cos(), tk.sin());
        }
        let term = c * zk;
        u += 2.0 * term.re;
        du += 2.0 * (term * C64::new(0.0, TAU * k as f64)).re;
    }
    (u, du)
}

/// `Dⁿu(y)` at an arbitrary point.
fn point_eval_order(coeffs: &[C64], y: f64, n: usize) -> f64 {
    let t = TAU * y;
    let z = C64::new(t.cos(), t.sin());
    let mut zk = C64::new(1.0, 0.0);
    let mut acc = if n == 0 { coeffs[0].re } else { 0.0 };
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        zk *= z;
        if k % 16 == 0 {
            let tk = t * k as f64;
            zk = C64::new(tk.cos(), tk.sin());
        }
        acc += 2.0 * (c * spectral_factor(k, n) * zk).re;
    }
    acc
}

/// Maximum of a continuous 1-periodic `eval` given its samples on a uniform
/// grid: the best grid values are polished by golden-section search on the
/// neighbouring cells.
fn refined_max(grid: &[f64], eval: impl Fn(f64) -> f64) -> f64 {
    let g = grid.len();
    let top = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return top.max(0.0);
    }
    let h = 1.0 / g as f64;
    let mut best = top;
    let mut peaks: Vec<usize> = (0..g)
        .filter(|&j| {
            let v = grid[j];
            v >= grid[(j + g - 1) % g] && v >= grid[(j + 1) % g] && v >= 0.8 * top
        })
        .collect();
    peaks.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    for &j in peaks.iter().take(4) {
        let centre = j as f64 * h;
        let (mut a, mut b) = (centre - h, centre + h);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (eval(c), eval(d));
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(d);
            }
        }
        best = best.max(fc).max(fd);
    }
    best
}

/// `sup |Dⁿu|`; for `n = 0` the distance to the nearest integer.
fn sup_norm(coeffs: &[C64], n: usize, g: usize) -> f64 {
    let samples = grid_eval(coeffs, n, g);
    if n == 0 {
        let grid: Vec<f64> = samples.into_iter().map(circle_gap).collect();
        refined_max(&grid, |y| circle_gap(point_eval_order(coeffs, y, 0)))
    } else {
        let grid: Vec<f64> = samples.into_iter().map(f64::abs).collect();
        refined_max(&grid, |y| point_eval_order(coeffs, y, n).abs())
    }
}

fn fit(samples: &[f64], freq_cap: usize) -> Vec<C64> {
    let g = samples.len();
    let tw = twiddles(g);
    (0..=freq_cap)
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, s) in samples.iter().enumerate() {
                acc += tw[(j * k) % g].conj() * s;
            }
            let c = acc / g as f64;
            if k == 0 {
                C64::new(c.re, 0.0)
            } else {
                c
            }
        })
        .collect()
}

/// `(c₀, coefficients with c₀ = 0)`.
fn split_constant(coeffs: &[C64]) -> (f64, Vec<C64>) {
    let mut osc = coeffs.to_vec();
    osc[0] = C64::new(0.0, 0.0);
    (coeffs[0].re, osc)
}

/// Distance on `S¹ = ℝ/ℤ`.
fn circle_gap(t: f64) -> f64 {
    (t - t.round()).abs()
}

impl CircleDiffeo {
    pub fn identity(params: DiffeoParams) -> Self {
        CircleDiffeo {
            coeffs: vec![C64::new(0.0, 0.0); params.freq_cap + 1],
            params,
        }
    }

    /// Rotation `x ↦ x + a`.
    pub fn rotation(a: f64, params: DiffeoParams) -> Self {
        let mut h = Self::identity(params);
        h.coeffs[0] = C64::new(a, 0.0);
        h
    }

    /// `u(x) = shift + Σ a_k cos 2πkx + b_k sin 2πkx` from `(k, a_k, b_k)` terms.
    pub fn from_trig(
        shift: f64,
        terms: &[(usize, f64, f64)],
        params: DiffeoParams,
    ) -> Result<Self> {
        let mut coeffs = vec![C64::new(0.0, 0.0); params.freq_cap + 1];
        coeffs[0] = C64::new(shift, 0.0);
        for &(k, a, b) in terms {
            if k == 0 || k > params.freq_cap {
                return Err(Error::ResolutionExceeded {
                    tail: k as f64,
                    tol: params.freq_cap as f64,
                });
            }
            coeffs[k] += C64::new(a / 2.0, -b / 2.0);
        }
        Self::from_coeffs(coeffs, params)
    }

    /// Validated element from raw coefficients `c_0 … c_F`.
    pub fn from_coeffs(mut coeffs: Vec<C64>, params: DiffeoParams) -> Result<Self> {
        coeffs.resize(params.freq_cap + 1, C64::new(0.0, 0.0));
        coeffs[0].im = 0.0;
        let h = CircleDiffeo { coeffs, params };
        h.validate()?;
        Ok(h)
    }

    /// Coefficients without the tail and monotonicity checks, for fields that
    /// are not themselves diffeomorphism lifts.
    pub fn from_coeffs_unchecked(mut coeffs: Vec<C64>, params: DiffeoParams) -> Self {
        coeffs.resize(params.freq_cap + 1, C64::new(0.0, 0.0));
        coeffs[0].im = 0.0;
        CircleDiffeo { coeffs, params }
    }

    /// Fit from samples of `u` on the grid `j/R`.
    pub fn from_samples(samples: &[f64], params: DiffeoParams) -> Result<Self> {
        Self::from_coeffs(fit(samples, params.freq_cap), params)
    }

    pub fn params(&self) -> &DiffeoParams {
        &self.params
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Rotation number of a rotation, `None` otherwise.
    pub fn as_rotation(&self) -> Option<f64> {
        self.coeffs[1..]
            .iter()
            .all(|c| c.re == 0.0 && c.im == 0.0)
            .then_some(self.coeffs[0].re)
    }

    pub fn is_identity(&self) -> bool {
        self.as_rotation() == Some(0.0)
    }

    /// Relative energy above frequency `F/2`.
    pub fn tail_energy(&self) -> f64 {
        let f = self.params.freq_cap;
        let total: f64 = self.coeffs[1..].iter().map(|c| c.norm_sqr()).sum();
        let tail: f64 = self.coeffs[f / 2 + 1..].iter().map(|c| c.norm_sqr()).sum();
        tail / total.max(TAIL_ENERGY_FLOOR)
    }

    fn validate(&self) -> Result<()> {
        let tail = self.tail_energy();
        if tail > self.params.tail_tol {
            return Err(Error::ResolutionExceeded {
                tail,
                tol: self.params.tail_tol,
            });
        }
        let min_derivative = self.min_derivative();
        if !(min_derivative >= self.params.margin) {
            return Err(Error::NotDiffeomorphism { min_derivative });
        }
        Ok(())
    }

    /// `min h′` over the sample grid.
    pub fn min_derivative(&self) -> f64 {
        grid_eval(&self.coeffs, 1, self.params.resolution)
            .into_iter()
            .map(|v| 1.0 + v)
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples of `Dⁿu` on the grid of size `g`.
    pub fn periodic_samples(&self, n: usize, g: usize) -> Vec<f64> {
        grid_eval(&self.coeffs, n, g)
    }

    /// Samples of `Dⁿh` on the standard grid (`D⁰h(x) = x + u(x)`).
    pub fn lift_derivative_samples(&self, n: usize) -> Vec<f64> {
        let r = self.params.resolution;
        let mut s = grid_eval(&self.coeffs, n, r);
        match n {
            0 => s
                .iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v += j as f64 / r as f64),
            1 => s.iter_mut().for_each(|v| *v += 1.0),
            _ => {}
        }
        s
    }

    /// `sup |Dⁿh|` over the grid for `n ≥ 1`.
    pub fn derivative_sup(&self, n: usize) -> f64 {
        assert!(n >= 1, "derivative_sup needs n >= 1");
        if n > 1 {
            return sup_norm(&self.coeffs, n, self.params.resolution);
        }
        let grid: Vec<f64> = self
            .lift_derivative_samples(1)
            .into_iter()
            .map(f64::abs)
            .collect();
        refined_max(&grid, |y| {
            (1.0 + point_eval_order(&self.coeffs, y, 1)).abs()
        })
    }

    /// `‖Dh‖_{k} = max_{1≤n≤k+1} sup |Dⁿh|`.
    pub fn derivative_norm(&self, k: usize) -> f64 {
        (1..=k + 1)
            .map(|n| self.derivative_sup(n))
            .fold(0.0, f64::max)
    }

    /// Lift `h(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        x + point_eval(&self.coeffs, x).0
    }

    /// `h′(x)`.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        1.0 + point_eval(&self.coeffs, x).1
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &CircleDiffeo) -> Result<CircleDiffeo> {
        if let Some(a) = self.as_rotation() {
            let mut coeffs = other.coeffs.clone();
            coeffs[0].re += a;
            return Ok(CircleDiffeo {
                coeffs,
                params: other.params,
            });
        }
        if let Some(b) = other.as_rotation() {
            // u(x) = b + u₁(x + b): phase-shift the coefficients
            let coeffs = self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        C64::new(c.re + b, 0.0)
                    } else {
                        let t = TAU * k as f64 * b;
                        c * C64::new(t.cos(), t.sin())
                    }
                })
                .collect();
            return Ok(CircleDiffeo {
                coeffs,
                params: self.params,
            });
        }
        // The constant modes are carried exactly; sampling only the
        // oscillating parts keeps large rotations out of the roundoff.
        let r = self.params.resolution;
        let (s1, osc1) = split_constant(&self.coeffs);
        let (s2, osc2) = split_constant(&other.coeffs);
        let w2 = grid_eval(&osc2, 0, r);
        let samples: Vec<f64> = w2
            .iter()
            .enumerate()
            .map(|(j, &w)| w + point_eval(&osc1, j as f64 / r as f64 + s2 + w).0)
            .collect();
        let mut h = Self::from_samples(&samples, self.params)?;
        h.coeffs[0].re += s1 + s2;
        Ok(h)
    }

    /// Group inverse by Newton's method at every grid node.
    pub fn invert(&self) -> Result<CircleDiffeo> {
        if let Some(a) = self.as_rotation() {
            return Ok(Self::rotation(-a, self.params));
        }
        // y = x − s + z with z + w(x − s + z) = 0, w the oscillating part
        let r = self.params.resolution;
        let (s, osc) = split_constant(&self.coeffs);
        let w = grid_eval(&osc, 0, r);
        let mut samples = Vec::with_capacity(r);
        for (j, wj) in w.iter().enumerate() {
            let x = j as f64 / r as f64 - s;
            let mut z = -wj;
            let mut residual = f64::INFINITY;
            for _ in 0..NEWTON_MAX_ITER {
                let (wy, dwy) = point_eval(&osc, x + z);
                let converged = residual.abs() <= NEWTON_TOL;
                residual = z + wy;
                z -= residual / (1.0 + dwy);
                // one step past the tolerance: Newton then sits at roundoff
                if converged {
                    break;
                }
            }
            if !(residual.abs() <= NEWTON_TOL) {
                return Err(Error::NewtonStall { node: j, residual });
            }
            samples.push(z);
        }
        let mut h = Self::from_samples(&samples, self.params)?;
        h.coeffs[0].re -= s;
        Ok(h)
    }

    /// Linear combination of lifts, `(1 − s) self + s other`.
    pub fn interpolate(&self, other: &CircleDiffeo, s: f64) -> CircleDiffeo {
        CircleDiffeo {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * (1.0 - s) + b * s)
                .collect(),
            params: self.params,
        }
    }

    /// Largest coefficient difference.
    pub fn coeff_distance(&self, other: &CircleDiffeo) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Per-order sup differences of two lifts on a grid of size `g`; order 0 is
/// measured on the circle.
fn lift_gaps(a: &CircleDiffeo, b: &CircleDiffeo, r: usize, g: usize) -> Vec<f64> {
    let diff: Vec<C64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    (0..=r).map(|n| sup_norm(&diff, n, g)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffMetricReport {
    pub r: usize,
    pub d_r_surrogate: f64,
    /// Always true: the value is the max over both directions.
    pub symmetric: bool,
    /// `sup |Dⁿ(h₁ − h₂)|` for `n = 0..=r`.
    pub forward: Vec<f64>,
    /// Same for `h₁⁻¹, h₂⁻¹`.
    pub inverse: Vec<f64>,
}

/// The `C^r` surrogate `max_n max(sup|Dⁿ(h₁−h₂)|, sup|Dⁿ(h₁⁻¹−h₂⁻¹)|)`.
pub fn dr_distance(h1: &CircleDiffeo, h2: &CircleDiffeo, r: usize) -> Result<DiffMetricReport> {
    let g = h1.params.resolution;
    let forward = lift_gaps(h1, h2, r, g);
    let inverse = lift_gaps(&h1.invert()?, &h2.invert()?, r, g);
    let d = forward.iter().chain(&inverse).cloned().fold(0.0, f64::max);
    Ok(DiffMetricReport {
        r,
        d_r_surrogate: d,
        symmetric: true,
        forward,
        inverse,
    })
}

/// `d_r` surrogate value only.
pub fn dr(h1: &CircleDiffeo, h2: &CircleDiffeo, r: usize) -> Result<f64> {
    Ok(dr_distance(h1, h2, r)?.d_r_surrogate)
}

/// `k` equally spaced samples of the linear path from `h1` to `h2`.
pub fn linear_path(h1: &CircleDiffeo, h2: &CircleDiffeo, k: usize) -> Vec<CircleDiffeo> {
    let k = k.max(2);
    (0..k)
        .map(|i| h1.interpolate(h2, i as f64 / (k - 1) as f64))
        .collect()
}

/// Pointwise inverses along a path.
pub fn inverse_path(path: &[CircleDiffeo]) -> Result<Vec<CircleDiffeo>> {
    path.iter().map(CircleDiffeo::invert).collect()
}

/// Powers `e^{2πiky}`, `k = 0..=f`.
fn phase_powers(y: f64, f: usize) -> Vec<C64> {
    let t = TAU * y;
    let z = C64::new(t.cos(), t.sin());
    let mut out = Vec::with_capacity(f + 1);
    let mut zk = C64::new(1.0, 0.0);
    for k in 0..=f {
        if k > 0 {
            zk = if k % 16 == 0 {
                let tk = t * k as f64;
                C64::new(tk.cos(), tk.sin())
            } else {
                zk * z
            };
        }
        out.push(zk);
    }
    out
}

/// `Σ_seg |Dⁿ Δ_seg(y)|` for coefficient differences pre-scaled by `(2πik)^n`.
fn path_integrand(scaled: &[Vec<C64>], include_constant: bool, y: f64) -> f64 {
    let f = scaled[0].len() - 1;
    let zk = phase_powers(y, f);
    scaled
        .iter()
        .map(|c| {
            let mut acc = if include_constant { c[0].re } else { 0.0 };
            for k in 1..=f {
                acc += 2.0 * (c[k].re * zk[k].re - c[k].im * zk[k].im);
            }
            acc.abs()
        })
        .sum()
}

fn path_order_length(steps: &[Vec<C64>], n: usize, g: usize) -> f64 {
    let scaled: Vec<Vec<C64>> = steps
        .iter()
        .map(|d| {
            d.iter()
                .enumerate()
                .map(|(k, c)| c * spectral_factor(k, n))
                .collect()
        })
        .collect();
    let mut integrand = vec![0.0; g];
    for diff in steps {
        for (acc, v) in integrand.iter_mut().zip(grid_eval(diff, n, g)) {
            *acc += v.abs();
        }
    }
    refined_max(&integrand, |y| path_integrand(&scaled, n == 0, y))
}

/// `max_y ∫ |d/ds Dⁿ p_s(y)| ds` for each `n = 0..=r`, for the path that is
/// piecewise linear in lift space between the given samples. On each segment
/// the integrand is constant in `s`, so the integral is an exact sum; the max
/// over `y` is taken on grids refined until it moves by less than 1%.
pub fn path_length_profile(path: &[CircleDiffeo], r: usize) -> Vec<f64> {
    if path.len() < 2 {
        return vec![0.0; r + 1];
    }
    let steps: Vec<Vec<C64>> = path
        .windows(2)
        .map(|pair| {
            pair[1]
                .coeffs
                .iter()
                .zip(&pair[0].coeffs)
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let g0 = (4 * path[0].params.freq_cap).max(64);
    (0..=r)
        .map(|n| {
            let mut g = g0;
            let mut value = path_order_length(&steps, n, g);
            for _ in 0..3 {
                g *= 2;
                let next = path_order_length(&steps, n, g);
                let stable = (next - value).abs() <= 0.01 * next.abs();
                value = next;
                if stable {
                    break;
                }
            }
            value
        })
        .collect()
}

/// `ℓ_r(p)`, see [`path_length_profile`].
pub fn path_length(path: &[CircleDiffeo], r: usize) -> f64 {
    path_length_profile(path, r).into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Both sides of `sup_s ‖D^k p_s‖ ≤ e^{κ ℓ₀(p)} (ℓ_k(p) + ‖D^k p₀‖)`.
pub fn gronwall_check(path: &[CircleDiffeo], k: usize, kappa: f64) -> GronwallCheck {
    let lhs = path.iter().map(|p| p.derivative_sup(k)).fold(0.0, f64::max);
    let rhs =
        (kappa * path_length(path, 0)).exp() * (path_length(path, k) + path[0].derivative_sup(k));
    GronwallCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    }
}

/// `ℓ_r(p∘h) / ((1 + ‖Dh‖_{r−1})^r ℓ_r(p))`, the constant of the
/// post-composition estimate for this path.
pub fn technical_mvt_ratio(path: &[CircleDiffeo], h: &CircleDiffeo, r: usize) -> Result<f64> {
    let composed: Vec<CircleDiffeo> = path.iter().map(|p| p.compose(h)).collect::<Result<_>>()?;
    let base = path_length(path, r);
    if base == 0.0 {
        return Ok(0.0);
    }
    let scale = (1.0 + h.derivative_norm(r - 1)).powi(r as i32);
    Ok(path_length(&composed, r) / (scale * base))
}

#[derive(Debug, Clone, Serialize)]
pub struct MvtRatios {
    /// `d_{r−1}(h∘g₁, h∘g₂) / d_{r−1}(g₁, g₂)`
    pub pre: f64,
    /// `d_{r−1}(g₁∘h, g₂∘h) / d_{r−1}(g₁, g₂)`
    pub post: f64,
}

pub fn mvt_constant_check(
    h: &CircleDiffeo,
    g1: &CircleDiffeo,
    g2: &CircleDiffeo,
    r: usize,
) -> Result<MvtRatios> {
    let order = r.saturating_sub(1);
    let base = dr(g1, g2, order)?;
    if base == 0.0 {
        return Ok(MvtRatios {
            pre: 1.0,
            post: 1.0,
        });
    }
    let pre = dr(&h.compose(g1)?, &h.compose(g2)?, order)? / base;
    let post = dr(&g1.compose(h)?, &g2.compose(h)?, order)? / base;
    Ok(MvtRatios { pre, post })
}
