//! Distortion of derivatives along the stable bundle and the construction of
//! invariant conformal structures by pushing a quadratic form along an orbit.
//!
//! Fibre coordinates for linear systems are the real Jordan coordinates of
//! `E^s`, where the eigen-metric is the identity form.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{self, GroupElement, MatrixGroup};
use crate::linalg;
use crate::livsic::{grid_centers, SpatialIndex, COVERAGE_FACTOR};
use crate::periodic::enumerate_periodic;
use crate::perturbed::PerturbedToral;
use crate::torus::{ToralAutomorphism, TorusPoint};

/// Eigenvalue range allowed for stored forms.
const FORM_EIG_RANGE: (f64, f64) = (1e-8, 1e8);

/// Extreme singular values of `Df` restricted to `span(E)` measured in the
/// metric `g` on both sides.
fn restricted_stretch(df: &DMatrix<f64>, e: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(f64, f64)> {
    image_stretch(e, &(df * e), g)
}

/// Same as [`restricted_stretch`] given the image `Df·E` directly.
fn image_stretch(e: &DMatrix<f64>, img: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(f64, f64)> {
    let ge = e.transpose() * g * e;
    let gi = img.transpose() * g * img;
    let w = linalg::sym_inv_sqrt(&ge);
    let m = &w * gi * &w;
    let ev = linalg::sym_eigenvalues(&m);
    let (lo, hi) = ev
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo > 1e-300 * hi.max(1.0)) || !lo.is_finite() {
        return Err(Error::SingularRestriction);
    }
    Ok((lo.sqrt(), hi.sqrt()))
}

/// `K_g(f, x) = ‖Df|_E‖ ‖(Df|_E)⁻¹‖` in the metric `g`.
pub fn distortion(df: &DMatrix<f64>, e: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let (lo, hi) = restricted_stretch(df, e, g)?;
    Ok((hi / lo).max(1.0))
}

/// `‖A‖ ‖A⁻¹‖` of a square matrix in the standard metric.
pub fn matrix_distortion(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    distortion(a, &DMatrix::identity(n, n), &DMatrix::identity(n, n))
}

/// Linear or perturbed system seen through its derivative cocycle.
pub trait DerivativeSystem {
    fn dim(&self) -> usize;
    fn step(&self, x: &[f64]) -> Vec<f64>;
    fn derivative(&self, x: &[f64]) -> DMatrix<f64>;
    fn stable_basis(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    /// `Dfⁿ(x)·E` for a frame `E` of the stable space at `x`.
    fn push_frame(&self, x: &[f64], e: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        let mut y = x.to_vec();
        let mut img = e.clone();
        for _ in 0..n {
            img = self.derivative(&y) * img;
            y = self.step(&y);
        }
        img
    }
}

impl DerivativeSystem for ToralAutomorphism {
    fn dim(&self) -> usize {
        ToralAutomorphism::dim(self)
    }
    fn step(&self, x: &[f64]) -> Vec<f64> {
        self.apply_f64(x)
    }
    fn derivative(&self, _: &[f64]) -> DMatrix<f64> {
        self.matrix_f64().clone()
    }
    fn stable_basis(&self, _: &[f64]) -> Result<DMatrix<f64>> {
        Ok(ToralAutomorphism::stable_basis(self))
    }
    // Iterating `A` on a stable frame in floating point picks up the
    // unstable direction, so write the frame in Jordan coordinates and
    // apply powers of the stable block instead.
    fn push_frame(&self, _: &[f64], e: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        let s = ToralAutomorphism::stable_basis(self);
        let k = s.ncols();
        let c = (self.jordan_inverse() * e).rows(0, k).into_owned();
        let b = self.stable_block();
        let mut m = c;
        for _ in 0..n {
            m = &b * m;
        }
        s * m
    }
}

impl DerivativeSystem for PerturbedToral {
    fn dim(&self) -> usize {
        PerturbedToral::dim(self)
    }
    fn step(&self, x: &[f64]) -> Vec<f64> {
        self.apply_f64(x)
    }
    fn derivative(&self, x: &[f64]) -> DMatrix<f64> {
        PerturbedToral::derivative(self, x)
    }
    fn stable_basis(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.estimate_splitting(x, 40, 1e-8)?.stable)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    /// `K_{g,E}(fⁿ)` for `n = 1..=N`, maximized over the sample points.
    pub k_per_n: Vec<f64>,
    /// `exp` of the slope of `log K(fⁿ)` over the second half of the range.
    pub kbar_estimate: f64,
    /// Largest distortion over enumerated periodic orbits, linear systems only.
    pub c_per: Option<f64>,
    pub uniform_bound_observed: f64,
    pub subcocycle_checks: usize,
    pub subcocycle_violations: usize,
}

/// Metric on the ambient space used to measure distortion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberMetric {
    Standard,
    /// The adapted (eigen-)metric of a linear system.
    Adapted,
}

fn metric_matrix(sys: &dyn DerivativeSystem, adapted: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    adapted
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(sys.dim(), sys.dim()))
}

/// `K_{g,E^s}(fⁿ)` for `n ≤ n_max` maximized over `points`, with sub-cocycle
/// checks `K(f^{m+n}, x) ≤ K(f^m, fⁿx) K(fⁿ, x)` on every point and split.
pub fn distortion_growth(
    sys: &dyn DerivativeSystem,
    g: &DMatrix<f64>,
    points: &[Vec<f64>],
    n_max: usize,
) -> Result<DistortionReport> {
    let mut k_per_n = vec![1.0f64; n_max];
    let mut checks = 0;
    let mut violations = 0;
    for x in points {
        let e = sys.stable_basis(x)?;
        // K(fⁿ, x) for all n along one pass
        let mut ks = vec![1.0];
        let mut pts = vec![x.clone()];
        let mut y = x.clone();
        for n in 1..=n_max {
            let (lo, hi) = image_stretch(&e, &sys.push_frame(x, &e, n), g)?;
            let k = (hi / lo).max(1.0);
            ks.push(k);
            k_per_n[n - 1] = k_per_n[n - 1].max(k);
            y = sys.step(&y);
            pts.push(y.clone());
        }
        for split in [1usize, n_max / 3, n_max / 2] {
            if split == 0 || split >= n_max {
                continue;
            }
            let rest = n_max - split;
            let e_n = sys.push_frame(x, &e, split);
            let (lo, hi) = image_stretch(&e_n, &sys.push_frame(&pts[split], &e_n, rest), g)?;
            let k_rest = (hi / lo).max(1.0);
            checks += 1;
            if ks[n_max] > k_rest * ks[split] * (1.0 + 1e-10) {
                violations += 1;
            }
        }
    }
    let half = n_max / 2;
    let xs: Vec<f64> = (half..=n_max).map(|n| n as f64).collect();
    let ys: Vec<f64> = (half..=n_max).map(|n| k_per_n[n - 1].ln()).collect();
    let kbar = if xs.len() >= 2 {
        linalg::regression_slope(&xs, &ys).exp().max(1.0)
    } else {
        k_per_n.last().copied().unwrap_or(1.0)
    };
    Ok(DistortionReport {
        uniform_bound_observed: k_per_n.iter().cloned().fold(1.0, f64::max),
        k_per_n,
        kbar_estimate: kbar,
        c_per: None,
        subcocycle_checks: checks,
        subcocycle_violations: violations,
    })
}

/// Distortion growth of a linear system on a grid of `res^d` points, with
/// `C_per` over periodic orbits of period `≤ per_n_max`.
pub fn distortion_growth_linear(
    sys: &ToralAutomorphism,
    metric: FiberMetric,
    n_max: usize,
    res: usize,
    per_n_max: u32,
) -> Result<DistortionReport> {
    let g = match metric {
        FiberMetric::Standard => metric_matrix(sys, None),
        FiberMetric::Adapted => metric_matrix(sys, Some(sys.adapted_metric())),
    };
    let points = grid_centers(sys.dim(), res);
    let mut rep = distortion_growth(sys, &g, &points, n_max)?;
    let e = sys.stable_basis();
    let mut c_per = 1.0f64;
    for o in enumerate_periodic(sys, per_n_max, 1 << 22)? {
        let m = sys.matrix_power(o.period as i64).to_f64();
        c_per = c_per.max(distortion(&m, &e, &g)?);
    }
    rep.c_per = Some(c_per);
    Ok(rep)
}

/// Largest ratio of stable eigenvalue moduli.
pub fn stable_modulus_ratio(sys: &ToralAutomorphism) -> f64 {
    let m = sys.stable_moduli();
    m.first().unwrap() / m.last().unwrap()
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricPropsReport {
    pub samples: usize,
    /// `max ‖ÂᵀÂ − I‖` over `A = c·Q`, `Â = A / |det A|^{1/n}`.
    pub orthogonal_max_defect: f64,
    /// Violations of `‖A‖ ≤ |det A|^{1/n} K(A)` beyond slack `1e-12`.
    pub determinant_violations: usize,
    /// Smallest relative slack `(|det A|^{1/n} K(A) − ‖A‖) / ‖A‖`.
    pub min_slack: f64,
}

/// Random battery for the two elementary facts about distortion: `K(A) = 1`
/// forces `A` to be a scalar times an orthogonal matrix, and
/// `‖A‖ ≤ |det A|^{1/n} K(A)`.
pub fn metric_props_check(samples: usize, seed: u64) -> Result<MetricPropsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orth = 0.0f64;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for i in 0..samples {
        let n = 2 + i % 3;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        if f64::abs(a.determinant()) < 1e-8 {
            continue;
        }
        let k = matrix_distortion(&a)?;
        let bound = f64::abs(a.determinant()).powf(1.0 / n as f64) * k;
        let norm = linalg::op_norm(&a);
        let slack = (bound - norm) / norm;
        min_slack = min_slack.min(slack);
        if slack < -1e-12 {
            violations += 1;
        }
        // scalar times orthogonal
        let q = a.clone().qr().q();
        let c: f64 = rng.gen_range(0.1..10.0);
        let sc = q * c;
        if (matrix_distortion(&sc)? - 1.0).abs() < 1e-9 {
            let hat = &sc / sc.determinant().abs().powf(1.0 / n as f64);
            orth = orth.max((hat.transpose() * &hat - DMatrix::identity(n, n)).norm());
        }
    }
    Ok(MetricPropsReport {
        samples,
        orthogonal_max_defect: orth,
        determinant_violations: violations,
        min_slack,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicConformality {
    pub orbit: usize,
    pub period: u32,
    /// `min_γ ‖M − γI‖ / ‖M‖` for `M = Df^N|_{E^s}` in eigen coordinates.
    pub scalar_defect: f64,
    /// `K(M) − 1` in the eigen-metric.
    pub conformality_defect: f64,
}

/// For every periodic orbit of period `≤ n_max`, how far the return map on
/// `E^s` is from a scalar and from a conformal map.
pub fn periodic_conformality_check(
    sys: &ToralAutomorphism,
    n_max: u32,
) -> Result<Vec<PeriodicConformality>> {
    let d = sys.stable_block();
    let k = d.nrows();
    enumerate_periodic(sys, n_max, 1 << 22)?
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let mut m = DMatrix::identity(k, k);
            for _ in 0..o.period {
                m = &d * m;
            }
            let gamma = m.trace() / k as f64;
            let scalar = (&m - DMatrix::identity(k, k) * gamma).norm() / m.norm();
            Ok(PeriodicConformality {
                orbit: i,
                period: o.period,
                scalar_defect: scalar,
                conformality_defect: matrix_distortion(&m)? - 1.0,
            })
        })
        .collect()
}

/// `f_# g = |det D|^{2/k} D⁻ᵀ g D⁻¹` on a `k`-dimensional fibre, then
/// rescaled to determinant 1.
pub fn pushforward_form(d: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = d.nrows() as f64;
    let det = d.determinant();
    if det.abs() < 1e-300 {
        return Err(Error::SingularRestriction);
    }
    let inv = linalg::inverse(d).map_err(|_| Error::SingularRestriction)?;
    let out = inv.transpose() * g * &inv * det.abs().powf(2.0 / k);
    normalize_form(&out)
}

/// Symmetrizes and scales a form to determinant 1, checking positivity.
pub fn normalize_form(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = (g + g.transpose()) * 0.5;
    let ev = linalg::sym_eigenvalues(&s);
    if ev.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidForm(format!("eigenvalues {ev:?}")));
    }
    let k = s.nrows() as f64;
    let logdet: f64 = ev.iter().map(|v| v.ln()).sum();
    Ok(s * (-logdet / k).exp())
}

fn check_form_range(g: &DMatrix<f64>) -> Result<()> {
    let ev = linalg::sym_eigenvalues(g);
    let (lo, hi) = FORM_EIG_RANGE;
    if ev.iter().any(|&v| !(lo..=hi).contains(&v)) {
        return Err(Error::InvalidForm(format!(
            "eigenvalues {ev:?} outside [{lo:e}, {hi:e}]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConformalStructure {
    pub fiber_dim: usize,
    pub base_point: Vec<f64>,
    pub orbit_forms: Vec<DMatrix<f64>>,
    pub grid_res: usize,
    pub grid_forms: Vec<DMatrix<f64>>,
    pub coverage_radius: f64,
    /// `max_n dist(f_#ⁿ g₀ iterated, f_#ⁿ g₀ in one step)` along the orbit.
    pub orbit_residual: f64,
    /// `sup_y dist(f_# g_y, g_{f y})` over cell centres.
    pub grid_residual: f64,
    pub holder_quotient: f64,
    /// `dist(g_n, eigen-metric)` for `n = 0..=L`.
    pub distance_to_eigen: Vec<f64>,
    /// `log ‖f_#^ℓ‖ / ℓ` on the tangent space of forms, `ℓ = 1..`.
    pub fsharp_growth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedForm {
    Eigen,
    Random,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalSummary {
    pub fiber_dim: usize,
    pub base_point: Vec<f64>,
    pub coverage_radius: f64,
    pub orbit_residual: f64,
    pub grid_residual: f64,
    pub holder_quotient: f64,
    pub distance_to_eigen_start: f64,
    pub distance_to_eigen_end: f64,
    pub fsharp_growth: Vec<f64>,
}

impl ConformalStructure {
    pub fn summary(&self) -> ConformalSummary {
        ConformalSummary {
            fiber_dim: self.fiber_dim,
            base_point: self.base_point.clone(),
            coverage_radius: self.coverage_radius,
            orbit_residual: self.orbit_residual,
            grid_residual: self.grid_residual,
            holder_quotient: self.holder_quotient,
            distance_to_eigen_start: self.distance_to_eigen[0],
            distance_to_eigen_end: *self.distance_to_eigen.last().unwrap(),
            fsharp_growth: self.fsharp_growth.clone(),
        }
    }
}

fn random_spd_det1(k: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    normalize_form(&(a.transpose() * &a + DMatrix::identity(k, k) * 0.2))
}

/// Propagates a seed form at `x*` along the two-sided orbit by `f_#`,
/// extends it to a `grid_res^d` grid by nearest sample and measures the
/// invariance residual. Forms live in the Jordan coordinates of `E^s`.
pub fn build_conformal_structure(
    sys: &ToralAutomorphism,
    grid_res: usize,
    orbit_len: usize,
    seed_form: SeedForm,
    seed: u64,
) -> Result<ConformalStructure> {
    let dim = sys.dim();
    let d = sys.stable_block();
    let k = d.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let g0 = match seed_form {
        SeedForm::Eigen => DMatrix::identity(k, k),
        SeedForm::Random => random_spd_det1(k, &mut rng)?,
    };
    let bits = sys.bits_for_steps(orbit_len as u64);
    let x = TorusPoint::from_f64(&x0, bits);
    let pts = sys.orbit(&x, -(orbit_len as i64), 2 * orbit_len + 1)?;
    let dinv = linalg::inverse(&d)?;
    // forms for n = 0..=L forward and n = 0..=-L backward
    let mut fwd = vec![g0.clone()];
    let mut back = vec![g0.clone()];
    for _ in 0..orbit_len {
        let g = pushforward_form(&d, fwd.last().unwrap())?;
        check_form_range(&g)?;
        fwd.push(g);
        let g = pushforward_form(&dinv, back.last().unwrap())?;
        check_form_range(&g)?;
        back.push(g);
    }
    let mut orbit_residual = 0.0f64;
    let mut dn = DMatrix::identity(k, k);
    for g in fwd.iter().skip(1) {
        dn = &d * dn;
        orbit_residual = orbit_residual.max(linalg::spd_distance(g, &pushforward_form(&dn, &g0)?));
    }
    let distance_to_eigen: Vec<f64> = fwd
        .iter()
        .map(|g| linalg::spd_distance(g, &DMatrix::identity(k, k)))
        .collect();
    let mut orbit_forms: Vec<DMatrix<f64>> = back.into_iter().skip(1).rev().collect();
    orbit_forms.extend(fwd);

    let coords: Vec<Vec<f64>> = pts.iter().map(|p| p.coords().to_vec()).collect();
    let index = SpatialIndex::new(coords, dim);
    let centers = grid_centers(dim, grid_res);
    let mut coverage_radius = 0.0f64;
    let mut grid_forms = Vec::with_capacity(centers.len());
    for c in &centers {
        let (i, dist) = index.nearest(c);
        coverage_radius = coverage_radius.max(dist);
        grid_forms.push(orbit_forms[i].clone());
    }
    let limit = COVERAGE_FACTOR * (dim as f64).sqrt() / grid_res as f64;
    if coverage_radius > limit {
        return Err(Error::CoverageTooCoarse {
            coverage: coverage_radius,
            limit,
        });
    }
    let mut grid_residual = 0.0f64;
    for (c, g) in centers.iter().zip(&grid_forms) {
        let fy = sys.apply_f64(c);
        let target = &orbit_forms[index.nearest(&fy).0];
        grid_residual = grid_residual.max(linalg::spd_distance(&pushforward_form(&d, g)?, target));
    }
    let h = 1.0 / grid_res as f64;
    let mut holder_quotient = 0.0f64;
    let total = centers.len();
    for idx in 0..total {
        let mut stride = 1;
        for _ in 0..dim {
            let coord = (idx / stride) % grid_res;
            let next = if coord + 1 == grid_res {
                idx - coord * stride
            } else {
                idx + stride
            };
            holder_quotient =
                holder_quotient.max(linalg::spd_distance(&grid_forms[idx], &grid_forms[next]) / h);
            stride *= grid_res;
        }
    }
    let fsharp_growth = fsharp_growth(&d, 20)?;
    Ok(ConformalStructure {
        fiber_dim: k,
        base_point: x.coords().to_vec(),
        orbit_forms,
        grid_res,
        grid_forms,
        coverage_radius,
        orbit_residual,
        grid_residual,
        holder_quotient,
        distance_to_eigen,
        fsharp_growth,
    })
}

/// `log ‖f_#^ℓ‖ / ℓ` for `ℓ = 1..=l_max`, where `f_#^ℓ` acts on symmetric
/// matrices by `Q ↦ |det Dℓ|^{2/k} D^{−ℓᵀ} Q D^{−ℓ}`; its norm is
/// `|det Dℓ|^{2/k} σ_max(D^{−ℓ})²`.
pub fn fsharp_growth(d: &DMatrix<f64>, l_max: usize) -> Result<Vec<f64>> {
    let k = d.nrows() as f64;
    let dinv = linalg::inverse(d)?;
    let mut p = DMatrix::identity(d.nrows(), d.nrows());
    let mut out = Vec::with_capacity(l_max);
    let logdet = d.determinant().abs().ln();
    for l in 1..=l_max {
        p = &dinv * p;
        let norm_log = 2.0 * l as f64 * logdet / k + 2.0 * linalg::op_norm(&p).ln();
        out.push(norm_log / l as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformDistortionReport {
    pub n_max: usize,
    pub log_k: Vec<f64>,
    /// Regression slope of `log K(fⁿ)` against `n`.
    pub slope: f64,
    /// `log` of the largest ratio of stable eigenvalue moduli.
    pub predicted_slope: f64,
    pub c_per: f64,
    /// Fitted uniform bound `max_n K(fⁿ)`.
    pub bound: f64,
    /// Localization of the determinant-normalized derivative cocycle on `E^s`.
    pub rho: f64,
    /// `log ρ + α log λ` with `α = 1`.
    pub margin: f64,
    /// Whether every periodic return map is a scalar on `E^s`.
    pub scalar_at_periodic_points: bool,
}

/// Distortion of `fⁿ` on `E^s` in the eigen-metric for `n ≤ n_max`, with
/// the periodic data and the hyperbolicity margin of the normalized
/// derivative cocycle.
pub fn uniform_distortion_experiment(
    sys: &ToralAutomorphism,
    n_max: usize,
    per_n_max: u32,
) -> Result<UniformDistortionReport> {
    let rep = distortion_growth_linear(sys, FiberMetric::Adapted, n_max, 2, per_n_max)?;
    let log_k: Vec<f64> = rep.k_per_n.iter().map(|k| k.ln()).collect();
    let ns: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let slope = linalg::regression_slope(&ns, &log_k);
    let d = sys.stable_block();
    let k = d.nrows();
    let normalized = &d / d.determinant().abs().powf(1.0 / k as f64);
    let eta = GroupElement::Matrix {
        group: MatrixGroup::Gl,
        m: normalized,
    };
    let loc = groups::rho_matrix_norm(&[eta], sys.lambda(), 1.0)?;
    let periodic = periodic_conformality_check(sys, per_n_max)?;
    Ok(UniformDistortionReport {
        n_max,
        slope,
        predicted_slope: stable_modulus_ratio(sys).ln(),
        c_per: rep.c_per.unwrap_or(1.0),
        bound: rep.uniform_bound_observed,
        rho: loc.rho,
        margin: loc.margin,
        scalar_at_periodic_points: periodic.iter().all(|p| p.scalar_defect < 1e-9),
        log_k,
    })
}

/// Random SPD matrix with determinant 1, for tests and experiments.
pub fn random_form(k: usize, seed: u64) -> Result<DMatrix<f64>> {
    random_spd_det1(k, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn rot(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    #[test]
    fn distortion_basics() {
        let id = DMatrix::identity(2, 2);
        assert!((distortion(&(&id * 3.0), &id, &id).unwrap() - 1.0).abs() < 1e-14);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((distortion(&d, &id, &id).unwrap() - 2.0).abs() < 1e-14);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            distortion(&sing, &id, &id).unwrap_err(),
            Error::SingularRestriction
        );
    }

    #[test]
    fn reciprocity_and_singular_value_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            if f64::abs(a.determinant()) < 1e-3 {
                continue;
            }
            let e = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
            let g = random_form(3, rng.gen()).unwrap();
            let k = distortion(&a, &e, &g).unwrap();
            let back = distortion(&linalg::inverse(&a).unwrap(), &(&a * &e), &g).unwrap();
            assert!((k - back).abs() <= 1e-9 * k);
            // singular values of the restricted map in g-orthonormal frames
            let gs = linalg::sym_sqrt(&g);
            let q = linalg::orthonormalize(&(&gs * &e));
            let qi = linalg::orthonormalize(&(&gs * &a * &e));
            let r = qi.transpose() * &gs * &a * linalg::inverse(&gs).unwrap() * &q;
            let sv = r.singular_values();
            let ratio = sv.max() / sv.min();
            assert!((k - ratio).abs() <= 1e-9 * k);
        }
    }

    #[test]
    fn metric_change_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            if f64::abs(a.determinant()) < 1e-3 {
                continue;
            }
            let id = DMatrix::identity(2, 2);
            let g = random_form(2, rng.gen()).unwrap();
            let c = linalg::sym_eigenvalues(&g);
            let cond = c.iter().cloned().fold(0.0, f64::max)
                / c.iter().cloned().fold(f64::INFINITY, f64::min);
            let kg = distortion(&a, &id, &g).unwrap();
            let k = distortion(&a, &id, &id).unwrap();
            assert!(kg <= k * cond * (1.0 + 1e-12) && k <= kg * cond * (1.0 + 1e-12));
        }
    }

    #[test]
    fn metric_props_battery() {
        let rep = metric_props_check(10_000, 3).unwrap();
        assert_eq!(rep.determinant_violations, 0);
        assert!(rep.orthogonal_max_defect <= 1e-10);
        let a = rot(0.7) * 3.0;
        let hat = &a / f64::abs(a.determinant()).sqrt();
        assert!((hat.transpose() * &hat - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pushforward_properties() {
        let g = random_form(2, 4).unwrap();
        let c = DMatrix::identity(2, 2) * 0.3;
        assert!((pushforward_form(&c, &g).unwrap() - &g).norm() < 1e-12);
        // orthogonal with respect to g
        let gs = linalg::sym_sqrt(&g);
        let o = linalg::inverse(&gs).unwrap() * rot(0.4) * &gs;
        assert!((pushforward_form(&o, &g).unwrap() - &g).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            if f64::abs(a.determinant()) < 0.1 || f64::abs(b.determinant()) < 0.1 {
                continue;
            }
            let g = random_form(3, rng.gen()).unwrap();
            let two = pushforward_form(&a, &pushforward_form(&b, &g).unwrap()).unwrap();
            let one = pushforward_form(&(&a * &b), &g).unwrap();
            assert!(linalg::spd_distance(&one, &two) <= 1e-8);
            assert!((one.determinant() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn cat_map_has_scalar_stable_bundle() {
        let sys = fixtures::cat_map();
        let rep = distortion_growth_linear(&sys, FiberMetric::Standard, 10, 4, 4).unwrap();
        assert!(rep.k_per_n.iter().all(|&k| k == 1.0));
        for p in periodic_conformality_check(&sys, 5).unwrap() {
            assert!(p.scalar_defect < 1e-12 && p.conformality_defect.abs() < 1e-12);
        }
        let u = uniform_distortion_experiment(&sys, 10, 3).unwrap();
        assert_eq!(u.slope, 0.0);
    }

    #[test]
    fn conformal_pair_is_bounded_and_diagonal_grows() {
        let conf = fixtures::conformal_pair_4d();
        let rep = distortion_growth_linear(&conf, FiberMetric::Adapted, 40, 2, 3).unwrap();
        assert!(rep.uniform_bound_observed < 1.0 + 1e-6);
        assert!((rep.kbar_estimate - 1.0).abs() < 0.05);
        assert_eq!(rep.subcocycle_violations, 0);
        let std = distortion_growth_linear(&conf, FiberMetric::Standard, 40, 2, 3).unwrap();
        assert!(std.uniform_bound_observed < 50.0);
        let pc = periodic_conformality_check(&conf, 4).unwrap();
        assert!(pc.iter().any(|p| p.scalar_defect > 1e-3));
        assert!(pc.iter().all(|p| p.conformality_defect < 1e-9));

        let diag = fixtures::diagonal_4d();
        let rep = distortion_growth_linear(&diag, FiberMetric::Adapted, 40, 2, 3).unwrap();
        let ratio = stable_modulus_ratio(&diag);
        assert!((rep.kbar_estimate / ratio - 1.0).abs() < 0.05);
        let u = uniform_distortion_experiment(&diag, 40, 3).unwrap();
        assert!((u.slope / u.predicted_slope - 1.0).abs() < 0.1);
        let u = uniform_distortion_experiment(&conf, 40, 3).unwrap();
        assert!(u.slope <= 0.01);
    }

    #[test]
    fn perturbed_subcocycle() {
        use crate::perturbed::{Phase, VectorFieldTerm};
        let base = fixtures::cat_map();
        let terms = vec![VectorFieldTerm {
            component: 0,
            freq: vec![1, 0],
            amp: 1.0,
            phase: Phase::Sin,
        }];
        let pert = PerturbedToral::new(base, terms, 0.01, 64).unwrap();
        let pts = grid_centers(2, 3);
        let rep = distortion_growth(&pert, &DMatrix::identity(2, 2), &pts, 6).unwrap();
        assert_eq!(rep.subcocycle_violations, 0);
        assert!(rep.k_per_n.iter().all(|&k| k >= 1.0));
    }

    #[test]
    fn eigen_seed_is_invariant() {
        let sys = fixtures::conformal_pair_4d();
        let s = build_conformal_structure(&sys, 6, 200, SeedForm::Eigen, 1).unwrap();
        assert!(s.orbit_residual <= 1e-9);
        assert!(s.grid_residual <= 1e-9);
        let r = build_conformal_structure(&sys, 6, 200, SeedForm::Random, 1).unwrap();
        assert!(r.orbit_residual <= 1e-9);
        assert!(r
            .orbit_forms
            .iter()
            .all(|g| (g.determinant() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn one_dimensional_fiber_is_trivial() {
        let sys = fixtures::cat_map();
        let s = build_conformal_structure(&sys, 16, 150, SeedForm::Random, 2).unwrap();
        assert!(s.grid_forms.iter().all(|g| (g[(0, 0)] - 1.0).abs() < 1e-15));
        assert_eq!(s.grid_residual, 0.0);
    }
}
