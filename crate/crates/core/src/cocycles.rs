//! Generators `η : T^d → G`, the cocycles they generate over a toral
//! automorphism, flow cocycles over the unit-roof suspension, and coboundary
//! factories used as ground truth.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circle_diffeo::{CircleDiffeo, DiffeoParams};
use crate::error::{Error, Result};
use crate::groups::{
    self, basis_element, AlgebraElement, GroupElement, GroupKind, MatrixGroup, RENORM_INTERVAL,
};
use crate::linalg;
use crate::perturbed::Phase;
use crate::torus::{torus_distance, ToralAutomorphism, TorusPoint};

/// Largest flow integration step accepted.
pub const MAX_DT: f64 = 1e-2;
/// Default per-step error tolerance of the step-doubling estimate.
pub const DEFAULT_STEP_TOL: f64 = 1e-6;

/// One algebra-valued term `amp · trig(2π k·x) · basis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    pub basis: String,
    pub amp: f64,
    #[serde(default)]
    pub phase: Phase,
}

/// Algebra-valued trigonometric polynomial on `T^d`. With `kink = Some(α)`
/// each term's factor `sin(2π k·x)` is replaced by `|sin(π k·x)|^α` (and
/// `cos` likewise), which is exactly `α`-Hölder along `k·x ∈ ℤ`.
#[derive(Debug, Clone)]
pub struct AlgebraMap {
    kind: GroupKind,
    terms: Vec<(TrigTerm, AlgebraElement)>,
    kink: Option<f64>,
}

impl AlgebraMap {
    pub fn new(kind: GroupKind, terms: &[TrigTerm], kink: Option<f64>) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|t| Ok((t.clone(), basis_element(kind, &t.basis)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AlgebraMap { kind, terms, kink })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    fn factor(&self, t: &TrigTerm, x: &[f64]) -> f64 {
        let phase: f64 = t.freq.iter().zip(x).map(|(&k, &c)| k as f64 * c).sum();
        match (self.kink, t.phase) {
            (None, Phase::Sin) => (TAU * phase).sin(),
            (None, Phase::Cos) => (TAU * phase).cos(),
            (Some(a), Phase::Sin) => (PI * phase).sin().abs().powf(a),
            (Some(a), Phase::Cos) => (PI * phase).cos().abs().powf(a),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<AlgebraElement> {
        let mut v = AlgebraElement::zero(self.kind);
        for (t, b) in &self.terms {
            if t.freq.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.freq.len(),
                    got: x.len(),
                });
            }
            v.add_scaled(b, t.amp * self.factor(t, x))?;
        }
        Ok(v)
    }

    pub fn exp(&self, x: &[f64]) -> Result<GroupElement> {
        groups::exp_map(&self.eval(x)?, self.kind)
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum GeneratorKind {
    /// `η = exp(trig polynomial)`.
    TrigSmooth(AlgebraMap),
    /// `η = exp(kinked trig polynomial)`.
    HolderKinked(AlgebraMap),
    /// `η(x) = ψ(f x) · ψ(x)⁻¹`.
    CoboundaryOf {
        psi: Box<Generator>,
        base: ToralAutomorphism,
    },
    Constant(GroupElement),
}

/// A map `η : T^d → G`.
#[derive(Debug, Clone)]
pub struct Generator {
    target: GroupKind,
    alpha: f64,
    kind: GeneratorKind,
}

impl Generator {
    pub fn trig_smooth(map: AlgebraMap) -> Self {
        Generator {
            target: map.kind(),
            alpha: 1.0,
            kind: GeneratorKind::TrigSmooth(map),
        }
    }

    pub fn holder_kinked(kind: GroupKind, terms: &[TrigTerm], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidGenerator(format!(
                "Hölder exponent {alpha} outside (0, 1]"
            )));
        }
        Ok(Generator {
            target: kind,
            alpha,
            kind: GeneratorKind::HolderKinked(AlgebraMap::new(kind, terms, Some(alpha))?),
        })
    }

    pub fn constant(g: GroupElement) -> Self {
        Generator {
            target: g.kind(),
            alpha: 1.0,
            kind: GeneratorKind::Constant(g),
        }
    }

    pub fn target(&self) -> GroupKind {
        self.target
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    /// The transfer function of a coboundary generator.
    pub fn coboundary_psi(&self) -> Option<&Generator> {
        match &self.kind {
            GeneratorKind::CoboundaryOf { psi, .. } => Some(psi),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<GroupElement> {
        match &self.kind {
            GeneratorKind::TrigSmooth(m) | GeneratorKind::HolderKinked(m) => m.exp(x),
            GeneratorKind::CoboundaryOf { psi, base } => {
                let fx = base.apply_f64(x);
                psi.eval(&fx)?.mul(&psi.eval(x)?.inv()?)
            }
            GeneratorKind::Constant(g) => Ok(g.clone()),
        }
    }

    /// `η(x)⁻¹`.
    pub fn eval_inv(&self, x: &[f64]) -> Result<GroupElement> {
        match &self.kind {
            GeneratorKind::CoboundaryOf { psi, base } => {
                let fx = base.apply_f64(x);
                psi.eval(x)?.mul(&psi.eval(&fx)?.inv()?)
            }
            _ => self.eval(x)?.inv(),
        }
    }
}

/// Generator `η(x) = ψ(f x) ψ(x)⁻¹` whose cocycle telescopes to
/// `ψ(fⁿ x) ψ(x)⁻¹`.
pub fn coboundary_from(psi: Generator, base: &ToralAutomorphism) -> Generator {
    Generator {
        target: psi.target,
        alpha: psi.alpha,
        kind: GeneratorKind::CoboundaryOf {
            psi: Box::new(psi),
            base: base.clone(),
        },
    }
}

/// Serializable generator description, e.g.
/// `{"group":"SL2","alpha":1.0,"kind":"trig","coeffs":[{"freq":[1,0],"basis":"E","amp":0.1}]}`.
/// `constant` uses `exp(Σ amp · basis)`, ignoring frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub group: String,
    #[serde(default = "one")]
    pub alpha: f64,
    pub kind: GeneratorSpecKind,
    #[serde(default)]
    pub coeffs: Vec<TrigTerm>,
    /// Transfer function for `coboundary`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Box<GeneratorSpec>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSpecKind {
    Trig,
    Kinked,
    Coboundary,
    Constant,
}

impl GeneratorSpec {
    pub fn build(&self, base: &ToralAutomorphism, diffeo: DiffeoParams) -> Result<Generator> {
        let kind = GroupKind::parse(&self.group, diffeo)?;
        for t in &self.coeffs {
            if t.freq.len() != base.dim() {
                return Err(Error::InvalidGenerator(format!(
                    "frequency {:?} does not match torus dimension {}",
                    t.freq,
                    base.dim()
                )));
            }
        }
        match self.kind {
            GeneratorSpecKind::Trig => Ok(Generator::trig_smooth(AlgebraMap::new(
                kind,
                &self.coeffs,
                None,
            )?)),
            GeneratorSpecKind::Kinked => Generator::holder_kinked(kind, &self.coeffs, self.alpha),
            GeneratorSpecKind::Coboundary => {
                let psi = self
                    .psi
                    .as_ref()
                    .ok_or_else(|| Error::InvalidGenerator("coboundary needs psi".into()))?;
                let psi = psi.build(base, diffeo)?;
                if psi.target() != kind {
                    return Err(Error::InvalidGenerator(
                        "psi targets a different group".into(),
                    ));
                }
                Ok(coboundary_from(psi, base))
            }
            GeneratorSpecKind::Constant => {
                let mut v = AlgebraElement::zero(kind);
                for t in &self.coeffs {
                    v.add_scaled(&basis_element(kind, &t.basis)?, t.amp)?;
                }
                Ok(Generator::constant(groups::exp_map(&v, kind)?))
            }
        }
    }
}

/// `Φ(x, n)`: `η(f^{n−1}x)···η(x)` for `n > 0`, `η⁻¹(fⁿx)···η⁻¹(f⁻¹x)` for
/// `n < 0`, the identity for `n = 0`. The orbit is followed exactly.
pub fn cocycle_eval(
    gen: &Generator,
    sys: &ToralAutomorphism,
    x: &TorusPoint,
    n: i64,
) -> Result<GroupElement> {
    let mut phi = GroupElement::identity(gen.target());
    let mut cur = x.clone();
    let step = n.signum();
    for k in 0..n.unsigned_abs() as usize {
        if step > 0 {
            phi = gen.eval(cur.coords())?.mul(&phi)?;
            cur = sys.apply(&cur, 1)?;
        } else {
            cur = sys.apply(&cur, -1)?;
            phi = gen.eval_inv(cur.coords())?.mul(&phi)?;
        }
        if (k + 1) % RENORM_INTERVAL == 0 {
            phi.renormalize();
        }
    }
    Ok(phi)
}

/// Orbit points `fⁿx` and values `Φ(x, n)` for `n = −l, …, l`, in that order.
pub fn cocycle_table(
    gen: &Generator,
    sys: &ToralAutomorphism,
    x: &TorusPoint,
    l: usize,
) -> Result<(Vec<TorusPoint>, Vec<GroupElement>)> {
    let id = GroupElement::identity(gen.target());
    let mut fwd_pts = vec![x.clone()];
    let mut fwd_vals = vec![id.clone()];
    for k in 0..l {
        let cur = &fwd_pts[k];
        let mut v = gen.eval(cur.coords())?.mul(&fwd_vals[k])?;
        if (k + 1) % RENORM_INTERVAL == 0 {
            v.renormalize();
        }
        fwd_vals.push(v);
        fwd_pts.push(sys.apply(cur, 1)?);
    }
    let mut back_pts = Vec::with_capacity(l);
    let mut back_vals = Vec::with_capacity(l);
    let mut cur = x.clone();
    let mut val = id;
    for k in 0..l {
        cur = sys.apply(&cur, -1)?;
        val = gen.eval_inv(cur.coords())?.mul(&val)?;
        if (k + 1) % RENORM_INTERVAL == 0 {
            val.renormalize();
        }
        back_pts.push(cur.clone());
        back_vals.push(val.clone());
    }
    back_pts.reverse();
    back_vals.reverse();
    back_pts.extend(fwd_pts);
    back_vals.extend(fwd_vals);
    Ok((back_pts, back_vals))
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    /// `sup d_G(η(x), η(y)) / d(x, y)^α` over near pairs.
    pub constant: f64,
    /// `sup d_G(η(x)η(y)⁻¹, Id) / d_G(η(x), η(y))` over the same pairs.
    pub k_uniform: f64,
    pub pairs: usize,
}

fn grid_points(dim: usize, res: usize) -> Vec<Vec<f64>> {
    let total = res.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let i = idx % res;
                    idx /= res;
                    i as f64 / res as f64
                })
                .collect()
        })
        .collect()
}

/// Empirical Hölder constant of `η` on a grid of `res` points per axis
/// (`d = 2`), pairing each node with the nodes at offsets up to 2 cells.
/// In higher dimension `res^2` stratified random pairs are used instead.
pub fn holder_constant(
    gen: &Generator,
    dim: usize,
    alpha: f64,
    res: usize,
    seed: u64,
) -> Result<HolderReport> {
    use rand::{Rng, SeedableRng};
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    if dim == 2 {
        use rayon::prelude::*;
        let h = 1.0 / res as f64;
        let offsets: Vec<(i64, i64)> = (-2..=2)
            .flat_map(|a| (0..=2).map(move |b| (a, b)))
            .filter(|&(a, b)| b > 0 || a > 0)
            .collect();
        let vals: Vec<GroupElement> = grid_points(2, res)
            .par_iter()
            .map(|p| gen.eval(p))
            .collect::<Result<_>>()?;
        let rows: Vec<(f64, f64)> = (0..res)
            .into_par_iter()
            .map(|j| -> Result<(f64, f64)> {
                let mut constant = 0.0f64;
                let mut k_uniform = 0.0f64;
                for i in 0..res {
                    let a = &vals[j * res + i];
                    for &(di, dj) in &offsets {
                        let ii = (i as i64 + di).rem_euclid(res as i64) as usize;
                        let jj = (j as i64 + dj).rem_euclid(res as i64) as usize;
                        let b = &vals[jj * res + ii];
                        let dm = h * ((di * di + dj * dj) as f64).sqrt();
                        let dg = a.dist(b)?;
                        constant = constant.max(dg / dm.powf(alpha));
                        if dg > 1e-12 {
                            let q = a.mul(&b.inv()?)?.dist_to_identity()?;
                            k_uniform = k_uniform.max(q / dg);
                        }
                    }
                }
                Ok((constant, k_uniform))
            })
            .collect::<Result<_>>()?;
        let (constant, k_uniform) = rows
            .iter()
            .fold((0.0f64, 0.0f64), |acc, r| (acc.0.max(r.0), acc.1.max(r.1)));
        return Ok(HolderReport {
            alpha,
            constant,
            k_uniform,
            pairs: res * res * offsets.len(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..res * res {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let r = 4.0 / res as f64 * rng.gen::<f64>().max(1e-3);
        let y: Vec<f64> = x
            .iter()
            .map(|&c| c + r * rng.gen_range(-1.0..1.0))
            .collect();
        pairs.push((x, y));
    }
    let mut constant = 0.0f64;
    let mut k_uniform = 0.0f64;
    for (x, y) in &pairs {
        let a = gen.eval(x)?;
        let b = gen.eval(y)?;
        let dm = torus_distance(x, y);
        if dm == 0.0 {
            continue;
        }
        let dg = a.dist(&b)?;
        constant = constant.max(dg / dm.powf(alpha));
        if dg > 1e-12 {
            k_uniform = k_uniform.max(a.mul(&b.inv()?)?.dist_to_identity()? / dg);
        }
    }
    Ok(HolderReport {
        alpha,
        constant,
        k_uniform,
        pairs: pairs.len(),
    })
}

// ---------------------------------------------------------------------------
// flows over the unit-roof suspension

/// `m(s) = 6s⁵ − 15s⁴ + 10s³`.
pub fn smoothstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

pub fn smoothstep_derivative(s: f64) -> f64 {
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

/// Point `(x, s)` of the suspension `T^d × [0, 1) / (x, 1) ∼ (f x, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPoint {
    pub x: Vec<f64>,
    pub s: f64,
}

/// The unit-roof suspension flow of a toral automorphism.
#[derive(Debug, Clone)]
pub struct SuspensionFlow {
    base: ToralAutomorphism,
}

fn wrap(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl SuspensionFlow {
    pub fn new(base: ToralAutomorphism) -> Self {
        SuspensionFlow { base }
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        let v = self.base.inverse_f64() * nalgebra::DVector::from_column_slice(x);
        v.iter().map(|&c| wrap(c)).collect()
    }

    /// `f^t(x, s)`.
    pub fn flow(&self, p: &FlowPoint, t: f64) -> FlowPoint {
        let total = p.s + t;
        let k = total.floor();
        let mut x = p.x.clone();
        for _ in 0..k.abs() as i64 {
            x = if k > 0.0 {
                self.base.apply_f64(&x)
            } else {
                self.apply_inverse(&x)
            };
        }
        FlowPoint { x, s: total - k }
    }
}

/// Infinitesimal generator `η : T^d × [0,1) → 𝔤` of a matrix flow cocycle.
pub trait FlowAlgebra: Send + Sync {
    fn group(&self) -> MatrixGroup;
    fn size(&self) -> usize;
    fn at(&self, x: &[f64], s: f64) -> Result<DMatrix<f64>>;
}

/// Time-independent generator `X`.
#[derive(Debug, Clone)]
pub struct ConstantFlow {
    pub group: MatrixGroup,
    pub x: DMatrix<f64>,
}

impl FlowAlgebra for ConstantFlow {
    fn group(&self) -> MatrixGroup {
        self.group
    }
    fn size(&self) -> usize {
        self.x.nrows()
    }
    fn at(&self, _: &[f64], _: f64) -> Result<DMatrix<f64>> {
        Ok(self.x.clone())
    }
}

/// Suspension of a discrete generator: `m′(s) · log η(x)`, so the time-one
/// cocycle from `(x, 0)` is `η(x)`.
#[derive(Debug, Clone)]
pub struct SuspendedGenerator {
    pub gen: Generator,
}

impl FlowAlgebra for SuspendedGenerator {
    fn group(&self) -> MatrixGroup {
        match self.gen.target() {
            GroupKind::Matrix(g, _) => g,
            _ => MatrixGroup::Gl,
        }
    }
    fn size(&self) -> usize {
        match self.gen.target() {
            GroupKind::Matrix(_, n) => n,
            _ => 0,
        }
    }
    fn at(&self, x: &[f64], s: f64) -> Result<DMatrix<f64>> {
        let g = self.gen.eval(x)?;
        match groups::log_map(&g)? {
            AlgebraElement::Matrix(l) => Ok(l * smoothstep_derivative(s)),
            _ => Err(Error::VariantMismatch(
                "flow generators must be matrix valued".into(),
            )),
        }
    }
}

/// Generator of the flow coboundary `Φ(y, t) = ψ(f^t y) ψ(y)⁻¹` for
/// `ψ(x, s) = exp((1 − m(s)) L(x) + m(s) L(f x))`, which satisfies
/// `ψ(x, 1) = ψ(f x, 0)`. `η = ∂_s ψ · ψ⁻¹` by central differences.
#[derive(Debug, Clone)]
pub struct FlowCoboundary {
    pub psi: AlgebraMap,
    pub base: ToralAutomorphism,
    pub group: MatrixGroup,
}

impl FlowCoboundary {
    pub fn psi_at(&self, x: &[f64], s: f64) -> Result<DMatrix<f64>> {
        let (AlgebraElement::Matrix(a), AlgebraElement::Matrix(b)) =
            (self.psi.eval(x)?, self.psi.eval(&self.base.apply_f64(x))?)
        else {
            return Err(Error::VariantMismatch(
                "flow generators must be matrix valued".into(),
            ));
        };
        let m = smoothstep(s);
        Ok(linalg::expm(&(a * (1.0 - m) + b * m)))
    }
}

impl FlowAlgebra for FlowCoboundary {
    fn group(&self) -> MatrixGroup {
        self.group
    }
    fn size(&self) -> usize {
        match self.psi.kind() {
            GroupKind::Matrix(_, n) => n,
            _ => 0,
        }
    }
    fn at(&self, x: &[f64], s: f64) -> Result<DMatrix<f64>> {
        let h = 1e-5;
        let d = (self.psi_at(x, s + h)? - self.psi_at(x, s - h)?) / (2.0 * h);
        Ok(d * linalg::inverse(&self.psi_at(x, s)?)?)
    }
}

/// Result of a flow integration.
#[derive(Debug, Clone)]
pub struct FlowCocycle {
    pub value: GroupElement,
    pub end: FlowPoint,
    /// Largest step-doubling error estimate seen.
    pub max_step_error: f64,
}

fn rk4_step(
    gen: &dyn FlowAlgebra,
    x: &[f64],
    s: f64,
    h: f64,
    phi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a1 = gen.at(x, s)?;
    let a2 = gen.at(x, s + 0.5 * h)?;
    let a4 = gen.at(x, s + h)?;
    let k1 = &a1 * phi;
    let k2 = &a2 * (phi + &k1 * (0.5 * h));
    let k3 = &a2 * (phi + &k2 * (0.5 * h));
    let k4 = &a4 * (phi + &k3 * h);
    Ok(phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates `Φ′ = η(f^t y) Φ`, `Φ(0) = Id` from `start` for time `t` with
/// classical RK4, stepping exactly onto every fibre boundary `s ∈ ℤ`.
/// Each step is compared with two half steps; an estimate above `tol` or
/// `|dt| > MAX_DT` is an error.
pub fn flow_cocycle(
    flow: &SuspensionFlow,
    gen: &dyn FlowAlgebra,
    start: &FlowPoint,
    t: f64,
    dt: f64,
    tol: f64,
) -> Result<FlowCocycle> {
    let dt = dt.abs();
    if dt > MAX_DT || dt == 0.0 {
        return Err(Error::StepTooLarge {
            dt,
            estimate: f64::INFINITY,
            tol: MAX_DT,
        });
    }
    let n = gen.size();
    let group = gen.group();
    let dir = t.signum();
    let mut phi = DMatrix::identity(n, n);
    let mut x = start.x.clone();
    let mut s = start.s;
    let mut remaining = t.abs();
    let mut max_err = 0.0f64;
    let eps = 1e-12;
    while remaining > eps * dt {
        // distance to the next fibre boundary in the direction of travel
        let to_boundary = if dir > 0.0 { 1.0 - s } else { s };
        let to_boundary = if to_boundary <= eps { 1.0 } else { to_boundary };
        let mut h = dt.min(remaining).min(to_boundary);
        // avoid a sliver step before a boundary
        if to_boundary - h < 1e-3 * dt && to_boundary <= remaining {
            h = to_boundary;
        }
        let hs = dir * h;
        let full = rk4_step(gen, &x, s, hs, &phi)?;
        let half = rk4_step(gen, &x, s, 0.5 * hs, &phi)?;
        let two = rk4_step(gen, &x, s + 0.5 * hs, 0.5 * hs, &half)?;
        let est = (&full - &two).norm() / 15.0 / full.norm().max(1.0);
        max_err = max_err.max(est);
        if est > tol {
            return Err(Error::StepTooLarge {
                dt,
                estimate: est,
                tol,
            });
        }
        phi = two;
        let mut e = GroupElement::Matrix { group, m: phi };
        e.renormalize();
        phi = match e {
            GroupElement::Matrix { m, .. } => m,
            _ => unreachable!(),
        };
        s += hs;
        remaining -= h;
        if dir > 0.0 && s >= 1.0 - eps {
            s = 0.0;
            x = flow.base.apply_f64(&x);
        } else if dir < 0.0 && s <= eps {
            s = 1.0;
            x = flow.apply_inverse(&x);
        }
    }
    if s >= 1.0 {
        s = 0.0;
        x = flow.base.apply_f64(&x);
    }
    Ok(FlowCocycle {
        value: GroupElement::Matrix { group, m: phi },
        end: FlowPoint { x, s },
        max_step_error: max_err,
    })
}

/// Convergence of the flow integrator over a step ladder `dt, dt/2, …`
/// against a reference run at the smallest step divided by 8.
#[derive(Debug, Clone, Serialize)]
pub struct FlowConvergence {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
}

pub fn flow_convergence(
    flow: &SuspensionFlow,
    gen: &dyn FlowAlgebra,
    start: &FlowPoint,
    t: f64,
    dt: f64,
    rungs: usize,
) -> Result<FlowConvergence> {
    let steps: Vec<f64> = (0..rungs).map(|k| dt / (1u64 << k) as f64).collect();
    let finest = steps[rungs - 1] / 8.0;
    let reference = flow_cocycle(flow, gen, start, t, finest, f64::INFINITY)?.value;
    let mut errors = Vec::with_capacity(rungs);
    for &h in &steps {
        let v = flow_cocycle(flow, gen, start, t, h, f64::INFINITY)?.value;
        errors.push((v.as_matrix().unwrap() - reference.as_matrix().unwrap()).norm());
    }
    let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    Ok(FlowConvergence {
        order: linalg::regression_slope(&lx, &ly),
        steps,
        errors,
    })
}

// ---------------------------------------------------------------------------
// diffeomorphism-valued cocycles

/// Derivative bounds of a `Diff(S¹)` generator: `ρ₀ = max d₀(η_x, Id)` and
/// `b_m = max(sup|Dᵐη_x|, sup|Dᵐη_x⁻¹|)` for `m = 1, 2, 3` over the samples
/// seen. `ρ₁ = b_1`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffeoBounds {
    pub rho0: f64,
    pub b: [f64; 3],
}

impl DiffeoBounds {
    pub fn rho1(&self) -> f64 {
        self.b[0]
    }

    pub fn empty() -> Self {
        DiffeoBounds {
            rho0: 0.0,
            b: [1.0, 0.0, 0.0],
        }
    }

    /// Folds in one generator value.
    pub fn include(&mut self, h: &CircleDiffeo) -> Result<()> {
        let hi = h.invert()?;
        let id = CircleDiffeo::identity(*h.params());
        let d0 = crate::circle_diffeo::dr(h, &id, 0)?;
        self.rho0 = self.rho0.max(d0);
        for m in 1..=3 {
            self.b[m - 1] = self.b[m - 1]
                .max(h.derivative_sup(m))
                .max(hi.derivative_sup(m));
        }
        Ok(())
    }

    /// Sampled on a grid of `res` points per axis.
    pub fn measure(gen: &Generator, dim: usize, res: usize) -> Result<Self> {
        let mut b = DiffeoBounds::empty();
        for p in grid_points(dim, res) {
            let g = gen.eval(&p)?;
            let h = g.as_diffeo().ok_or_else(|| {
                Error::VariantMismatch("diffeomorphism generator expected".into())
            })?;
            b.include(h)?;
        }
        Ok(b)
    }

    /// `P_m(n)` from the chain rule for `n` compositions with derivative
    /// bounds `b`: `P₁′ = b₁P₁`, `P₂′ = b₂P₁² + b₁P₂`,
    /// `P₃′ = b₃P₁³ + 3b₂P₁P₂ + b₁P₃`.
    pub fn chain_bounds(&self, n: usize) -> [f64; 3] {
        let [b1, b2, b3] = self.b;
        let mut p = [1.0, 0.0, 0.0];
        for _ in 0..n {
            p = [
                b1 * p[0],
                b2 * p[0] * p[0] + b1 * p[1],
                b3 * p[0].powi(3) + 3.0 * b2 * p[0] * p[1] + b1 * p[2],
            ];
        }
        p
    }

    /// `C_m = sup_{n ≤ n_max} P_m(n) / ρ₁^{mn}`.
    pub fn constants(&self, n_max: usize) -> [f64; 3] {
        let r1 = self.rho1();
        let mut c = [1.0f64; 3];
        for n in 0..=n_max {
            let p = self.chain_bounds(n);
            for m in 0..3 {
                c[m] = c[m].max(p[m] / r1.powi(((m + 1) * n) as i32));
            }
        }
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffeoCocycleReport {
    pub n: i64,
    pub d0: f64,
    pub d0_bound: f64,
    /// `sup |DᵐΦ(x, n)|` for `m = 1, 2, 3`.
    pub derivative_norms: [f64; 3],
    /// `C_m ρ₁^{m|n|}`.
    pub derivative_bounds: [f64; 3],
    pub holds: bool,
}

/// `Φ(x, n)` in `Diff(S¹)` together with the checks `d₀(Φ, Id) ≤ ρ₀|n|` and
/// `‖DᵐΦ‖ ≤ C_m ρ₁^{m|n|}`. The generator values met along the orbit are
/// folded into `bounds` first, so the constants cover every factor used.
pub fn diffeo_cocycle_eval(
    gen: &Generator,
    sys: &ToralAutomorphism,
    x: &TorusPoint,
    n: i64,
    bounds: &DiffeoBounds,
    n_max: usize,
) -> Result<(CircleDiffeo, DiffeoCocycleReport)> {
    let mut b = bounds.clone();
    let mut cur = x.clone();
    let p = *match gen.target() {
        GroupKind::Diffeo(ref p) => p,
        _ => {
            return Err(Error::VariantMismatch(
                "diffeomorphism generator expected".into(),
            ))
        }
    };
    let mut phi = CircleDiffeo::identity(p);
    for _ in 0..n.unsigned_abs() {
        let factor = if n > 0 {
            let e = gen.eval(cur.coords())?;
            cur = sys.apply(&cur, 1)?;
            e
        } else {
            cur = sys.apply(&cur, -1)?;
            gen.eval_inv(cur.coords())?
        };
        let h = factor.as_diffeo().unwrap();
        b.include(h)?;
        phi = h.compose(&phi)?;
    }
    let id = CircleDiffeo::identity(p);
    let d0 = crate::circle_diffeo::dr(&phi, &id, 0)?;
    let d0_bound = b.rho0 * n.unsigned_abs() as f64;
    let c = b.constants(n_max.max(n.unsigned_abs() as usize));
    let mut norms = [0.0; 3];
    let mut bnds = [0.0; 3];
    let slack = 1e-9;
    let mut holds = d0 <= d0_bound * (1.0 + slack) + slack;
    for m in 1..=3 {
        norms[m - 1] = phi.derivative_sup(m);
        bnds[m - 1] = c[m - 1] * b.rho1().powi((m as i64 * n.abs()) as i32);
        holds &= norms[m - 1] <= bnds[m - 1] * (1.0 + slack) + slack;
    }
    Ok((
        phi,
        DiffeoCocycleReport {
            n,
            d0,
            d0_bound,
            derivative_norms: norms,
            derivative_bounds: bnds,
            holds,
        },
    ))
}

/// Shared handle for flow generators held in reports and configs.
pub type SharedFlowAlgebra = Arc<dyn FlowAlgebra>;
