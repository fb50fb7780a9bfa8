//! Target groups for cocycles: vectors under addition, matrix groups and
//! `Diff(S¹)`, with products, inverses, distances, exponential and logarithm,
//! and the localization quantities.
//!
//! Distances: Euclidean on vectors; `‖log(g⁻¹h)‖_F` on SO(2), SO(3) and
//! positive diagonal matrices, where it is a bi-invariant metric computed in
//! closed form; the Frobenius chordal distance `‖g − h‖_F` on GL, SL and the
//! Heisenberg group, where the log-norm would fail the triangle inequality;
//! the `C^r` surrogate on diffeomorphisms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circle_diffeo::{self, CircleDiffeo, DiffeoParams};
use crate::error::{Error, Result};
use crate::linalg;

/// Margin of the spectrum from the closed negative real axis for `log`.
pub const LOG_MARGIN: f64 = 1e-6;
/// SL/SO elements further than this from the group are re-projected.
const RENORM_THRESHOLD: f64 = 1e-13;
/// Products between renormalizations along a cocycle.
pub const RENORM_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixGroup {
    #[serde(rename = "GL")]
    Gl,
    #[serde(rename = "SL")]
    Sl,
    #[serde(rename = "SO")]
    So,
    #[serde(rename = "DiagPos")]
    DiagPos,
    #[serde(rename = "Heisenberg")]
    Heisenberg,
}

impl MatrixGroup {
    pub fn is_commutative(self, n: usize) -> bool {
        match self {
            MatrixGroup::DiagPos => true,
            MatrixGroup::So => n == 2,
            _ => n == 1,
        }
    }
}

/// Which group a value lives in, with its size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupKind {
    Additive(usize),
    Matrix(MatrixGroup, usize),
    Diffeo(DiffeoParams),
}

impl GroupKind {
    pub fn is_commutative(&self) -> bool {
        match self {
            GroupKind::Additive(_) => true,
            GroupKind::Matrix(g, n) => g.is_commutative(*n),
            GroupKind::Diffeo(_) => false,
        }
    }

    /// Parses tags such as `R3`, `SL2`, `SO3`, `GL4`, `DiagPos2`,
    /// `Heisenberg`, `Diff`.
    pub fn parse(tag: &str, diffeo: DiffeoParams) -> Result<Self> {
        let split = tag.find(|c: char| c.is_ascii_digit()).unwrap_or(tag.len());
        let (name, size) = tag.split_at(split);
        let n: Option<usize> = size.parse().ok();
        let need = |n: Option<usize>| {
            n.filter(|&n| n >= 1)
                .ok_or_else(|| Error::InvalidGenerator(format!("group tag {tag:?} needs a size")))
        };
        Ok(match name {
            "R" | "Additive" => GroupKind::Additive(need(n)?),
            "GL" => GroupKind::Matrix(MatrixGroup::Gl, need(n)?),
            "SL" => GroupKind::Matrix(MatrixGroup::Sl, need(n)?),
            "SO" => GroupKind::Matrix(MatrixGroup::So, need(n)?),
            "DiagPos" => GroupKind::Matrix(MatrixGroup::DiagPos, need(n)?),
            "Heisenberg" => GroupKind::Matrix(MatrixGroup::Heisenberg, 3),
            "Diff" => GroupKind::Diffeo(diffeo),
            _ => {
                return Err(Error::InvalidGenerator(format!(
                    "unknown group tag {tag:?}"
                )))
            }
        })
    }
}

/// Lie-algebra element matching a [`GroupKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraElement {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    /// Periodic vector field `u` on the circle, `exp(u)(x) = x + u(x)`.
    Field(CircleDiffeo),
}

impl AlgebraElement {
    pub fn zero(kind: GroupKind) -> Self {
        match kind {
            GroupKind::Additive(k) => AlgebraElement::Vector(DVector::zeros(k)),
            GroupKind::Matrix(_, n) => AlgebraElement::Matrix(DMatrix::zeros(n, n)),
            GroupKind::Diffeo(p) => AlgebraElement::Field(CircleDiffeo::identity(p)),
        }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &AlgebraElement, s: f64) -> Result<()> {
        match (self, other) {
            (AlgebraElement::Vector(a), AlgebraElement::Vector(b)) if a.len() == b.len() => {
                *a += b * s
            }
            (AlgebraElement::Matrix(a), AlgebraElement::Matrix(b)) if a.shape() == b.shape() => {
                *a += b * s
            }
            (AlgebraElement::Field(a), AlgebraElement::Field(b)) => {
                let coeffs = a
                    .coeffs()
                    .iter()
                    .zip(b.coeffs())
                    .map(|(x, y)| x + y * s)
                    .collect();
                *a = CircleDiffeo::from_coeffs_unchecked(coeffs, *a.params());
            }
            _ => {
                return Err(Error::VariantMismatch(
                    "algebra elements of different kinds".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Result<AlgebraElement> {
        Ok(match self {
            AlgebraElement::Vector(v) => AlgebraElement::Vector(v * s),
            AlgebraElement::Matrix(m) => AlgebraElement::Matrix(m * s),
            AlgebraElement::Field(h) => {
                let id = CircleDiffeo::identity(*h.params());
                AlgebraElement::Field(id.interpolate(h, s))
            }
        })
    }

    pub fn norm(&self) -> f64 {
        match self {
            AlgebraElement::Vector(v) => v.norm(),
            AlgebraElement::Matrix(m) => m.norm(),
            AlgebraElement::Field(h) => h.derivative_sup(1).max(
                (0..h.params().resolution)
                    .map(|j| {
                        let x = j as f64 / h.params().resolution as f64;
                        (h.eval(x) - x).abs()
                    })
                    .fold(0.0, f64::max),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupElement {
    Additive(DVector<f64>),
    Matrix { group: MatrixGroup, m: DMatrix<f64> },
    Diffeo(CircleDiffeo),
}

fn mismatch(a: &GroupElement, b: &GroupElement) -> Error {
    Error::VariantMismatch(format!("{:?} vs {:?}", a.kind(), b.kind()))
}

impl GroupElement {
    pub fn identity(kind: GroupKind) -> Self {
        match kind {
            GroupKind::Additive(k) => GroupElement::Additive(DVector::zeros(k)),
            GroupKind::Matrix(group, n) => GroupElement::Matrix {
                group,
                m: DMatrix::identity(n, n),
            },
            GroupKind::Diffeo(p) => GroupElement::Diffeo(CircleDiffeo::identity(p)),
        }
    }

    /// Matrix element, checked against the group's defining condition and
    /// projected onto it.
    pub fn matrix(group: MatrixGroup, m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::BadShape {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let n = m.nrows();
        let ok = match group {
            MatrixGroup::Gl => m.determinant().abs() > 0.0,
            MatrixGroup::Sl => (m.determinant() - 1.0).abs() <= 1e-6,
            MatrixGroup::So => {
                (m.transpose() * &m - DMatrix::identity(n, n)).norm() <= 1e-6
                    && m.determinant() > 0.0
            }
            MatrixGroup::DiagPos => {
                (0..n).all(|i| m[(i, i)] > 0.0)
                    && (m.norm_squared() - (0..n).map(|i| m[(i, i)].powi(2)).sum::<f64>()).abs()
                        <= 1e-24
            }
            MatrixGroup::Heisenberg => {
                n == 3
                    && m[(0, 0)] == 1.0
                    && m[(1, 1)] == 1.0
                    && m[(2, 2)] == 1.0
                    && m[(1, 0)] == 0.0
                    && m[(2, 0)] == 0.0
                    && m[(2, 1)] == 0.0
            }
        };
        if !ok {
            return Err(Error::VariantMismatch(format!(
                "matrix is not in {group:?}({n})"
            )));
        }
        let mut g = GroupElement::Matrix { group, m };
        g.renormalize();
        Ok(g)
    }

    pub fn kind(&self) -> GroupKind {
        match self {
            GroupElement::Additive(v) => GroupKind::Additive(v.len()),
            GroupElement::Matrix { group, m } => GroupKind::Matrix(*group, m.nrows()),
            GroupElement::Diffeo(h) => GroupKind::Diffeo(*h.params()),
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            GroupElement::Matrix { m, .. } => Some(m),
            _ => None,
        }
    }

    pub fn as_diffeo(&self) -> Option<&CircleDiffeo> {
        match self {
            GroupElement::Diffeo(h) => Some(h),
            _ => None,
        }
    }

    /// Group product `self · other` (composition `self ∘ other` for diffeos).
    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement> {
        match (self, other) {
            (GroupElement::Additive(a), GroupElement::Additive(b)) if a.len() == b.len() => {
                Ok(GroupElement::Additive(a + b))
            }
            (
                GroupElement::Matrix { group: ga, m: a },
                GroupElement::Matrix { group: gb, m: b },
            ) if ga == gb && a.shape() == b.shape() => Ok(GroupElement::Matrix {
                group: *ga,
                m: a * b,
            }),
            (GroupElement::Diffeo(a), GroupElement::Diffeo(b)) => {
                Ok(GroupElement::Diffeo(a.compose(b)?))
            }
            _ => Err(mismatch(self, other)),
        }
    }

    pub fn inv(&self) -> Result<GroupElement> {
        Ok(match self {
            GroupElement::Additive(a) => GroupElement::Additive(-a),
            GroupElement::Matrix { group, m } => {
                let inv = match group {
                    MatrixGroup::So => m.transpose(),
                    MatrixGroup::DiagPos => DMatrix::from_diagonal(&m.diagonal().map(|v| 1.0 / v)),
                    MatrixGroup::Heisenberg => {
                        let (a, b, c) = (m[(0, 1)], m[(1, 2)], m[(0, 2)]);
                        DMatrix::from_row_slice(
                            3,
                            3,
                            &[1.0, -a, a * b - c, 0.0, 1.0, -b, 0.0, 0.0, 1.0],
                        )
                    }
                    _ => linalg::inverse(m)?,
                };
                GroupElement::Matrix {
                    group: *group,
                    m: inv,
                }
            }
            GroupElement::Diffeo(h) => GroupElement::Diffeo(h.invert()?),
        })
    }

    /// Group distance; see the module docs for the metric on each group.
    pub fn dist(&self, other: &GroupElement) -> Result<f64> {
        match (self, other) {
            (GroupElement::Additive(a), GroupElement::Additive(b)) if a.len() == b.len() => {
                Ok((a - b).norm())
            }
            (
                GroupElement::Matrix { group: ga, m: a },
                GroupElement::Matrix { group: gb, m: b },
            ) if ga == gb && a.shape() == b.shape() => Ok(matrix_distance(*ga, a, b)),
            (GroupElement::Diffeo(a), GroupElement::Diffeo(b)) => {
                circle_diffeo::dr(a, b, a.params().metric_order)
            }
            _ => Err(mismatch(self, other)),
        }
    }

    /// `d_G(self, Id)`.
    pub fn dist_to_identity(&self) -> Result<f64> {
        self.dist(&GroupElement::identity(self.kind()))
    }

    /// Projects SL/SO/DiagPos/Heisenberg elements back onto the group. Does
    /// nothing when already within 1e-13, so a second call returns the input
    /// bit for bit.
    pub fn renormalize(&mut self) {
        let GroupElement::Matrix { group, m } = self else {
            return;
        };
        let n = m.nrows();
        match group {
            MatrixGroup::Sl => {
                let det = m.determinant();
                if (det - 1.0).abs() > RENORM_THRESHOLD && det > 0.0 {
                    *m /= det.powf(1.0 / n as f64);
                }
            }
            MatrixGroup::So => {
                let drift = (m.transpose() * &*m - DMatrix::identity(n, n)).norm();
                if drift > RENORM_THRESHOLD {
                    let svd = m.clone().svd(true, true);
                    *m = svd.u.unwrap() * svd.v_t.unwrap();
                }
            }
            MatrixGroup::DiagPos => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            m[(i, j)] = 0.0;
                        }
                    }
                }
            }
            MatrixGroup::Heisenberg => {
                for i in 0..3 {
                    m[(i, i)] = 1.0;
                    for j in 0..i {
                        m[(i, j)] = 0.0;
                    }
                }
            }
            MatrixGroup::Gl => {}
        }
    }
}

/// Closed-form rotation angle of an SO(2) or SO(3) matrix.
fn rotation_angle(r: &DMatrix<f64>) -> Option<f64> {
    match r.nrows() {
        2 => Some(r[(1, 0)].atan2(r[(0, 0)]).abs()),
        3 => {
            // sin θ from the skew part, cos θ from the trace
            let s = 0.5
                * ((r[(2, 1)] - r[(1, 2)]).powi(2)
                    + (r[(0, 2)] - r[(2, 0)]).powi(2)
                    + (r[(1, 0)] - r[(0, 1)]).powi(2))
                .sqrt();
            let c = 0.5 * (r.trace() - 1.0);
            Some(s.atan2(c))
        }
        _ => None,
    }
}

fn matrix_distance(group: MatrixGroup, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    match group {
        MatrixGroup::So => {
            let rel = a.transpose() * b;
            match rotation_angle(&rel) {
                Some(theta) => std::f64::consts::SQRT_2 * theta,
                None => linalg::logm(&rel)
                    .map(|l| l.norm())
                    .unwrap_or_else(|_| (a - b).norm()),
            }
        }
        MatrixGroup::DiagPos => a
            .diagonal()
            .iter()
            .zip(b.diagonal().iter())
            .map(|(x, y)| (y.ln() - x.ln()).powi(2))
            .sum::<f64>()
            .sqrt(),
        _ => (a - b).norm(),
    }
}

pub fn exp_map(v: &AlgebraElement, group: GroupKind) -> Result<GroupElement> {
    match (v, group) {
        (AlgebraElement::Vector(x), GroupKind::Additive(k)) if x.len() == k => {
            Ok(GroupElement::Additive(x.clone()))
        }
        (AlgebraElement::Matrix(x), GroupKind::Matrix(g, n)) if x.nrows() == n => {
            let m = match g {
                MatrixGroup::DiagPos => DMatrix::from_diagonal(&x.diagonal().map(f64::exp)),
                _ => linalg::expm(x),
            };
            let mut e = GroupElement::Matrix { group: g, m };
            e.renormalize();
            Ok(e)
        }
        (AlgebraElement::Field(h), GroupKind::Diffeo(_)) => Ok(GroupElement::Diffeo(
            CircleDiffeo::from_coeffs(h.coeffs().to_vec(), *h.params())?,
        )),
        _ => Err(Error::VariantMismatch(format!(
            "algebra element does not match {group:?}"
        ))),
    }
}

pub fn log_map(g: &GroupElement) -> Result<AlgebraElement> {
    Ok(match g {
        GroupElement::Additive(v) => AlgebraElement::Vector(v.clone()),
        GroupElement::Matrix { group, m } => match group {
            MatrixGroup::DiagPos => {
                AlgebraElement::Matrix(DMatrix::from_diagonal(&m.diagonal().map(f64::ln)))
            }
            _ => {
                linalg::check_log_domain(m, LOG_MARGIN)?;
                AlgebraElement::Matrix(linalg::logm(m)?)
            }
        },
        GroupElement::Diffeo(h) => AlgebraElement::Field(h.clone()),
    })
}

/// Named basis element of the Lie algebra of `kind`.
///
/// `sl(2)`: `H, E, F`; `so(2)`: `L`; `so(3)`: `Lx, Ly, Lz`; Heisenberg:
/// `X, Y, Z` (entries (0,1), (1,2), (0,2)); diagonal groups: `D0, D1, …`;
/// `gl(n)`/`sl(n)`: `Eij`; vectors: `e0, e1, …`; `Diff`: `R` (the constant
/// field, generating rotations) and `sin1, cos1, sin2, …` meaning `sin 2πkx`
/// and `cos 2πkx`.
pub fn basis_element(kind: GroupKind, name: &str) -> Result<AlgebraElement> {
    let bad = || Error::InvalidGenerator(format!("no basis element {name:?} for {kind:?}"));
    let unit = |n: usize, i: usize, j: usize| {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = 1.0;
        m
    };
    let index = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.parse().ok() };
    match kind {
        GroupKind::Additive(k) => {
            let i = index("e").filter(|&i| i < k).ok_or_else(bad)?;
            let mut v = DVector::zeros(k);
            v[i] = 1.0;
            Ok(AlgebraElement::Vector(v))
        }
        GroupKind::Matrix(group, n) => {
            let m = match (group, n, name) {
                (MatrixGroup::Sl, 2, "H") => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                (MatrixGroup::Sl, 2, "E") => unit(2, 0, 1),
                (MatrixGroup::Sl, 2, "F") => unit(2, 1, 0),
                (MatrixGroup::So, 2, "L") => unit(2, 1, 0) - unit(2, 0, 1),
                (MatrixGroup::So, 3, "Lx") => unit(3, 2, 1) - unit(3, 1, 2),
                (MatrixGroup::So, 3, "Ly") => unit(3, 0, 2) - unit(3, 2, 0),
                (MatrixGroup::So, 3, "Lz") => unit(3, 1, 0) - unit(3, 0, 1),
                (MatrixGroup::Heisenberg, 3, "X") => unit(3, 0, 1),
                (MatrixGroup::Heisenberg, 3, "Y") => unit(3, 1, 2),
                (MatrixGroup::Heisenberg, 3, "Z") => unit(3, 0, 2),
                (MatrixGroup::DiagPos, n, _) | (MatrixGroup::Gl, n, _) if index("D").is_some() => {
                    let i = index("D").filter(|&i| i < n).ok_or_else(bad)?;
                    unit(n, i, i)
                }
                (MatrixGroup::Gl, n, _) | (MatrixGroup::Sl, n, _)
                    if name.len() == 3 && name.starts_with('E') =>
                {
                    let digits: Vec<usize> = name[1..]
                        .chars()
                        .filter_map(|c| c.to_digit(10).map(|d| d as usize))
                        .collect();
                    match digits[..] {
                        [i, j] if i < n && j < n && (group == MatrixGroup::Gl || i != j) => {
                            unit(n, i, j)
                        }
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(bad()),
            };
            Ok(AlgebraElement::Matrix(m))
        }
        GroupKind::Diffeo(p) => {
            let mut coeffs = CircleDiffeo::identity(p).coeffs().to_vec();
            if name == "R" {
                coeffs[0] = nalgebra::Complex::new(1.0, 0.0);
                return Ok(AlgebraElement::Field(CircleDiffeo::from_coeffs_unchecked(
                    coeffs, p,
                )));
            }
            let (k, is_sin) = if let Some(k) = index("sin") {
                (k, true)
            } else if let Some(k) = index("cos") {
                (k, false)
            } else {
                return Err(bad());
            };
            if k == 0 || k > p.freq_cap {
                return Err(bad());
            }
            let term = if is_sin { (k, 0.0, 1.0) } else { (k, 1.0, 0.0) };
            // built without validation: a basis field need not be a small
            // enough lift to be a diffeomorphism itself
            coeffs[term.0] += nalgebra::Complex::new(term.1 / 2.0, -term.2 / 2.0);
            Ok(AlgebraElement::Field(CircleDiffeo::from_coeffs_unchecked(
                coeffs, p,
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MatrixNorm,
    RightInvariant,
    Commutative,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub rho: f64,
    pub metric_kind: MetricKind,
    /// `ρ λ^α < 1`.
    pub holds_hyperbolicity: bool,
    /// `log ρ + α log λ`.
    pub margin: f64,
    /// `max_x max(‖η(x)‖, ‖η⁻¹(x)‖)` (matrix-norm case), or the closed-form
    /// `max ‖Ad_η‖` (right-invariant case).
    pub max_norm: f64,
    /// Growth rate of `|Δⁿ|` guaranteed by submultiplicativity alone:
    /// `max_norm²` for matrix norms.
    pub rigorous_rho: f64,
    pub rigorous_margin: f64,
}

fn report(
    rho: f64,
    kind: MetricKind,
    max_norm: f64,
    rigorous_rho: f64,
    lambda: f64,
    alpha: f64,
) -> LocalizationReport {
    let margin = rho.ln() + alpha * lambda.ln();
    let rigorous_margin = rigorous_rho.ln() + alpha * lambda.ln();
    LocalizationReport {
        rho,
        metric_kind: kind,
        holds_hyperbolicity: margin < 0.0,
        margin,
        max_norm,
        rigorous_rho,
        rigorous_margin,
    }
}

/// Localization in matrix operator norm from generator samples `η(x)`:
/// `ρ² = max(‖η(x)‖, ‖η⁻¹(x)‖)`. For commutative groups no localization is
/// needed and the effective `ρ` is 1.
pub fn rho_matrix_norm(
    samples: &[GroupElement],
    lambda: f64,
    alpha: f64,
) -> Result<LocalizationReport> {
    let mut max_norm = 1.0f64;
    let mut commutative = true;
    for g in samples {
        let m = g
            .as_matrix()
            .ok_or_else(|| Error::VariantMismatch("matrix-valued generator expected".into()))?;
        commutative &= g.kind().is_commutative();
        let inv = g.inv()?;
        max_norm = max_norm
            .max(linalg::op_norm(m))
            .max(linalg::op_norm(inv.as_matrix().unwrap()));
    }
    if commutative {
        return Ok(report(
            1.0,
            MetricKind::Commutative,
            max_norm,
            1.0,
            lambda,
            alpha,
        ));
    }
    Ok(report(
        max_norm.sqrt(),
        MetricKind::MatrixNorm,
        max_norm,
        max_norm * max_norm,
        lambda,
        alpha,
    ))
}

/// Operator norm of `Ad_h : X ↦ h X h⁻¹` on `gl(n)` with the Frobenius norm.
pub fn adjoint_norm(h: &DMatrix<f64>) -> Result<f64> {
    let hinv = linalg::inverse(h)?;
    // vec(h X h⁻¹) = (h⁻ᵀ ⊗ h) vec(X)
    Ok(linalg::op_norm(&hinv.transpose().kronecker(h)))
}

/// Localization for the right-invariant metric `‖v‖_g = ‖v g⁻¹‖_F`: the
/// Lipschitz constant of left translation by `h` is the same at every base
/// point. It is estimated by finite differences at random base points on the
/// unit ball around the identity and random directions; the closed form
/// `‖Ad_h‖` is reported alongside as `max_norm`.
pub fn rho_right_invariant(
    samples: &[GroupElement],
    lambda: f64,
    alpha: f64,
    probes: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut est = 1.0f64;
    let mut exact = 1.0f64;
    let eps = 1e-6;
    for g in samples {
        let h = g
            .as_matrix()
            .ok_or_else(|| Error::VariantMismatch("matrix-valued generator expected".into()))?;
        let n = h.nrows();
        for hh in [h.clone(), linalg::inverse(h)?] {
            exact = exact.max(adjoint_norm(&hh)?);
            for _ in 0..probes {
                let mut w: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let scale = rng.gen::<f64>() / w.norm().max(1e-300);
                w *= scale;
                let base = linalg::expm(&w);
                let v: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let moved = linalg::expm(&(&v * eps)) * &base;
                // tangent vectors at `base` and at `hh·base`, measured right-invariantly
                let before = (&moved - &base) * linalg::inverse(&base)?;
                let target = &hh * &base;
                let after = (&hh * &moved - &target) * linalg::inverse(&target)?;
                est = est.max(after.norm() / before.norm());
            }
        }
    }
    Ok(report(
        est,
        MetricKind::RightInvariant,
        exact,
        est,
        lambda,
        alpha,
    ))
}

/// `‖Φ⁻¹(x,n)‖ · ‖Φ(y,n)‖`, the norm of `g ↦ Φ⁻¹(x,n) g Φ(y,n)`.
pub fn delta_operator_norm(phi_x: &GroupElement, phi_y: &GroupElement) -> Result<f64> {
    let ix = phi_x.inv()?;
    let (a, b) = match (ix.as_matrix(), phi_y.as_matrix()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => {
            return Err(Error::VariantMismatch(
                "matrix-valued cocycle expected".into(),
            ))
        }
    };
    Ok(linalg::op_norm(&a) * linalg::op_norm(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot2(a: f64) -> GroupElement {
        exp_map(
            &AlgebraElement::Matrix(DMatrix::from_row_slice(2, 2, &[0.0, -a, a, 0.0])),
            GroupKind::Matrix(MatrixGroup::So, 2),
        )
        .unwrap()
    }

    fn random_algebra(kind: GroupKind, rng: &mut ChaCha8Rng, size: f64) -> AlgebraElement {
        let names: &[&str] = match kind {
            GroupKind::Matrix(MatrixGroup::Sl, 2) => &["H", "E", "F"],
            GroupKind::Matrix(MatrixGroup::So, 3) => &["Lx", "Ly", "Lz"],
            GroupKind::Matrix(MatrixGroup::Heisenberg, 3) => &["X", "Y", "Z"],
            GroupKind::Matrix(MatrixGroup::DiagPos, 2) => &["D0", "D1"],
            _ => unreachable!(),
        };
        let mut m = DMatrix::zeros(kind_size(kind), kind_size(kind));
        for name in names {
            let AlgebraElement::Matrix(b) = basis_element(kind, name).unwrap() else {
                unreachable!()
            };
            m += b * rng.gen_range(-size..size);
        }
        AlgebraElement::Matrix(m)
    }

    fn kind_size(kind: GroupKind) -> usize {
        match kind {
            GroupKind::Matrix(_, n) => n,
            _ => unreachable!(),
        }
    }

    const KINDS: [GroupKind; 4] = [
        GroupKind::Matrix(MatrixGroup::Sl, 2),
        GroupKind::Matrix(MatrixGroup::So, 3),
        GroupKind::Matrix(MatrixGroup::Heisenberg, 3),
        GroupKind::Matrix(MatrixGroup::DiagPos, 2),
    ];

    #[test]
    fn so2_angles_add() {
        let p = rot2(0.3).mul(&rot2(0.5)).unwrap();
        assert!((p.as_matrix().unwrap() - rot2(0.8).as_matrix().unwrap()).norm() < 1e-12);
        assert!(
            (rot2(0.3).dist(&rot2(0.8)).unwrap() - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-12
        );
    }

    #[test]
    fn inverse_and_self_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in KINDS {
            for _ in 0..50 {
                let g = exp_map(&random_algebra(kind, &mut rng, 1.0), kind).unwrap();
                let e = g.inv().unwrap().mul(&g).unwrap();
                assert!(e.dist_to_identity().unwrap() <= 1e-10, "{kind:?}");
                assert_eq!(g.dist(&g).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in KINDS {
            for _ in 0..10_000 / KINDS.len() {
                let [a, b, c] =
                    [0, 1, 2].map(|_| exp_map(&random_algebra(kind, &mut rng, 1.5), kind).unwrap());
                let ab = a.dist(&b).unwrap();
                let bc = b.dist(&c).unwrap();
                let ac = a.dist(&c).unwrap();
                assert!(ac <= ab + bc + 1e-12, "{kind:?}");
                assert!((ab - b.dist(&a).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in KINDS {
            for _ in 0..100 {
                let v = random_algebra(kind, &mut rng, 0.4);
                let AlgebraElement::Matrix(vm) = &v else {
                    unreachable!()
                };
                if vm.norm() > 1.0 {
                    continue;
                }
                let back = log_map(&exp_map(&v, kind).unwrap()).unwrap();
                let AlgebraElement::Matrix(bm) = back else {
                    unreachable!()
                };
                assert!((bm - vm).norm() <= 1e-9, "{kind:?}");
            }
        }
    }

    fn series_exp(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * x / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn sl2_exp_matches_series_and_log_inverts() {
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let v = random_algebra(kind, &mut rng, 0.3);
            let AlgebraElement::Matrix(vm) = &v else {
                unreachable!()
            };
            let g = exp_map(&v, kind).unwrap();
            if vm.norm() <= 0.1 {
                assert!((g.as_matrix().unwrap() - series_exp(vm)).norm() < 1e-14);
            }
            if vm.norm() <= 0.5 {
                let AlgebraElement::Matrix(back) = log_map(&g).unwrap() else {
                    unreachable!()
                };
                assert!((back - vm).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for kind in KINDS {
            let n = kind_size(kind);
            let g = exp_map(&AlgebraElement::Matrix(DMatrix::zeros(n, n)), kind).unwrap();
            assert_eq!(g, GroupElement::identity(kind));
        }
        let v = AlgebraElement::Vector(DVector::from_vec(vec![1.0, -2.0]));
        assert_eq!(
            exp_map(&v, GroupKind::Additive(2)).unwrap(),
            GroupElement::Additive(DVector::from_vec(vec![1.0, -2.0]))
        );
    }

    #[test]
    fn log_rejects_branch_cut() {
        let g = GroupElement::matrix(
            MatrixGroup::Sl,
            DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -0.5]),
        )
        .unwrap();
        assert!(matches!(log_map(&g), Err(Error::LogBranchFailure(_))));
    }

    #[test]
    fn renormalization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [KINDS[0], KINDS[1]] {
            let mut g = exp_map(&random_algebra(kind, &mut rng, 1.0), kind).unwrap();
            for _ in 0..500 {
                let h = exp_map(&random_algebra(kind, &mut rng, 0.5), kind).unwrap();
                g = g.mul(&h).unwrap();
            }
            if let GroupElement::Matrix { m, .. } = &mut g {
                *m *= 1.0 + 1e-9;
            }
            let mut once = g.clone();
            once.renormalize();
            let mut twice = once.clone();
            twice.renormalize();
            assert_eq!(once, twice);
            let m = once.as_matrix().unwrap();
            match kind {
                GroupKind::Matrix(MatrixGroup::Sl, _) => {
                    assert!((m.determinant() - 1.0).abs() <= 1e-9)
                }
                _ => assert!((m.transpose() * m - DMatrix::identity(3, 3)).norm() <= 1e-9),
            }
        }
    }

    #[test]
    fn variant_mismatch_detected() {
        let a = GroupElement::identity(GroupKind::Additive(2));
        let b = GroupElement::identity(GroupKind::Matrix(MatrixGroup::Sl, 2));
        assert!(matches!(a.mul(&b), Err(Error::VariantMismatch(_))));
        let c = GroupElement::identity(GroupKind::Matrix(MatrixGroup::So, 2));
        assert!(matches!(b.dist(&c), Err(Error::VariantMismatch(_))));
    }

    #[test]
    fn singular_gl_element_has_no_inverse() {
        let g = GroupElement::Matrix {
            group: MatrixGroup::Gl,
            m: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
        };
        assert_eq!(g.inv().unwrap_err(), Error::SingularInverse);
    }

    #[test]
    fn rho_of_identity_generator() {
        let id = GroupElement::identity(GroupKind::Matrix(MatrixGroup::Sl, 2));
        let rep = rho_matrix_norm(&[id], 0.38, 1.0).unwrap();
        assert_eq!(rep.rho, 1.0);
        assert!(rep.holds_hyperbolicity);
    }

    #[test]
    fn rho_of_diagonal_oscillation() {
        // η(x) = diag(e^{0.1 sin 2πx}, e^{-0.1 sin 2πx}) in SL(2)
        let n = 4096;
        let samples: Vec<GroupElement> = (0..n)
            .map(|j| {
                let s = 0.1 * (std::f64::consts::TAU * j as f64 / n as f64).sin();
                GroupElement::matrix(
                    MatrixGroup::Sl,
                    DMatrix::from_row_slice(2, 2, &[s.exp(), 0.0, 0.0, (-s).exp()]),
                )
                .unwrap()
            })
            .collect();
        let rep = rho_matrix_norm(&samples, 0.38, 1.0).unwrap();
        assert_eq!(rep.metric_kind, MetricKind::MatrixNorm);
        assert!((rep.rho - 0.05f64.exp()).abs() < 1e-12);
        // the same values as a commutative DiagPos generator
        let diag: Vec<GroupElement> = samples
            .iter()
            .map(|g| {
                GroupElement::matrix(MatrixGroup::DiagPos, g.as_matrix().unwrap().clone()).unwrap()
            })
            .collect();
        let rep = rho_matrix_norm(&diag, 0.38, 0.5).unwrap();
        assert_eq!(rep.metric_kind, MetricKind::Commutative);
        assert!(rep.holds_hyperbolicity);
    }

    #[test]
    fn right_invariant_estimate_below_adjoint_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let kind = KINDS[0];
        let samples: Vec<GroupElement> = (0..5)
            .map(|_| exp_map(&random_algebra(kind, &mut rng, 0.3), kind).unwrap())
            .collect();
        let rep = rho_right_invariant(&samples, 0.38, 1.0, 200, 7).unwrap();
        assert!(rep.rho <= rep.max_norm * (1.0 + 1e-4));
        assert!(rep.rho >= 0.8 * rep.max_norm);
        for g in &samples {
            let m = g.as_matrix().unwrap();
            let bound = linalg::op_norm(m) * linalg::op_norm(&linalg::inverse(m).unwrap());
            assert!(adjoint_norm(m).unwrap() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn delta_norm_trivial_cases() {
        let id = GroupElement::identity(GroupKind::Matrix(MatrixGroup::Sl, 2));
        assert!((delta_operator_norm(&id, &id).unwrap() - 1.0).abs() < 1e-15);
    }
}
