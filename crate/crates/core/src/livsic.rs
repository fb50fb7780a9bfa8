//! Periodic orbit obstruction and construction of transfer functions by
//! propagation along a long exact orbit, extended to a grid by nearest
//! orbit sample.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_diffeo;
use crate::cocycles::{self, flow_cocycle, FlowAlgebra, FlowPoint, Generator, SuspensionFlow};
use crate::error::{Error, Result};
use crate::groups::{self, GroupElement, GroupKind, LocalizationReport};
use crate::linalg;
use crate::periodic::enumerate_periodic;
use crate::torus::{ToralAutomorphism, TorusPoint};

pub const DEFAULT_OBSTRUCTION_TOL: f64 = 1e-8;
/// Coverage radius allowed, in grid cell diameters.
pub const COVERAGE_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Serialize)]
pub struct OrbitDefect {
    pub orbit: usize,
    pub period: u32,
    pub representative: Vec<f64>,
    /// `d_G(Φ(p, period), Id)`.
    pub defect: f64,
    /// Same quantity at the second point of the orbit.
    pub defect_second_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Vanishes {
        tol: f64,
    },
    Fails {
        orbit: usize,
        period: u32,
        defect: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ObstructionReport {
    pub n_max: u32,
    pub per_orbit: Vec<OrbitDefect>,
    pub max_defect: f64,
    pub verdict: Verdict,
}

/// Evaluates `Φ(p, period)` on every periodic orbit of period `≤ n_max`.
pub fn check_obstruction(
    sys: &ToralAutomorphism,
    gen: &Generator,
    n_max: u32,
    tol: f64,
    cap: u64,
) -> Result<ObstructionReport> {
    let orbits = enumerate_periodic(sys, n_max, cap)?;
    let per_orbit: Vec<OrbitDefect> = orbits
        .par_iter()
        .enumerate()
        .map(|(i, o)| -> Result<OrbitDefect> {
            let n = o.period as i64;
            let p = o.representative();
            let defect = cocycles::cocycle_eval(gen, sys, p, n)?.dist_to_identity()?;
            let q = &o.points[1 % o.points.len()];
            let defect_second_point = cocycles::cocycle_eval(gen, sys, q, n)?.dist_to_identity()?;
            Ok(OrbitDefect {
                orbit: i,
                period: o.period,
                representative: p.coords().to_vec(),
                defect,
                defect_second_point,
            })
        })
        .collect::<Result<_>>()?;
    let worst = per_orbit
        .iter()
        .max_by(|a, b| a.defect.total_cmp(&b.defect))
        .expect("every automorphism has a fixed point");
    let max_defect = worst.defect;
    let verdict = if max_defect <= tol {
        Verdict::Vanishes { tol }
    } else {
        Verdict::Fails {
            orbit: worst.orbit,
            period: worst.period,
            defect: worst.defect,
        }
    };
    Ok(ObstructionReport {
        n_max,
        per_orbit,
        max_defect,
        verdict,
    })
}

// ---------------------------------------------------------------------------
// nearest-sample lookup on the torus

/// Bucket grid over `T^d` for nearest-neighbour queries in the flat metric.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    dim: usize,
    res: usize,
    buckets: Vec<Vec<usize>>,
    points: Vec<Vec<f64>>,
}

fn cell_of(x: &[f64], res: usize) -> Vec<usize> {
    x.iter()
        .map(|&c| ((c.rem_euclid(1.0) * res as f64) as usize).min(res - 1))
        .collect()
}

fn flat_index(cell: &[usize], res: usize) -> usize {
    cell.iter().rev().fold(0, |acc, &c| acc * res + c)
}

impl SpatialIndex {
    pub fn new(points: Vec<Vec<f64>>, dim: usize) -> Self {
        // about two points per bucket
        let target = (points.len() as f64 / 2.0).max(1.0);
        let res = (target.powf(1.0 / dim as f64).floor() as usize).clamp(1, 256);
        let mut buckets = vec![Vec::new(); res.pow(dim as u32)];
        for (i, p) in points.iter().enumerate() {
            buckets[flat_index(&cell_of(p, res), res)].push(i);
        }
        SpatialIndex {
            dim,
            res,
            buckets,
            points,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Index and distance of the nearest point, plus the second nearest.
    pub fn nearest2(&self, q: &[f64]) -> ((usize, f64), Option<(usize, f64)>) {
        let res = self.res as i64;
        let h = 1.0 / self.res as f64;
        let c = cell_of(q, self.res);
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second: Option<(usize, f64)> = None;
        let max_r = (self.res / 2 + 1) as i64;
        for r in 0..=max_r {
            // visit cells at Chebyshev distance exactly r (deduplicated when
            // the ring wraps around the torus)
            let side = 2 * r + 1;
            let total = side.pow(self.dim as u32);
            let mut seen = std::collections::HashSet::new();
            for k in 0..total {
                let mut rem = k;
                let mut offs = Vec::with_capacity(self.dim);
                for _ in 0..self.dim {
                    offs.push(rem % side - r);
                    rem /= side;
                }
                if offs.iter().map(|o| o.abs()).max().unwrap_or(0) != r {
                    continue;
                }
                let cell: Vec<usize> = c
                    .iter()
                    .zip(&offs)
                    .map(|(&ci, &o)| (ci as i64 + o).rem_euclid(res) as usize)
                    .collect();
                let fi = flat_index(&cell, self.res);
                if side > res && !seen.insert(fi) {
                    continue;
                }
                for &i in &self.buckets[fi] {
                    let d = crate::torus::torus_distance(q, &self.points[i]);
                    if d < best.1 {
                        if best.0 != usize::MAX {
                            second = Some(best);
                        }
                        best = (i, d);
                    } else if second.is_none_or(|s| d < s.1) {
                        second = Some((i, d));
                    }
                }
            }
            let reach = r as f64 * h;
            if best.1 <= reach && second.is_some_and(|s| s.1 <= reach) {
                break;
            }
            if side > res {
                break;
            }
        }
        (best, second)
    }

    pub fn nearest(&self, q: &[f64]) -> (usize, f64) {
        self.nearest2(q).0
    }
}

/// Cell centres `(i + 1/2)/res` of a `res^d` grid, first axis fastest.
pub fn grid_centers(dim: usize, res: usize) -> Vec<Vec<f64>> {
    (0..res.pow(dim as u32))
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let i = idx % res;
                    idx /= res;
                    (i as f64 + 0.5) / res as f64
                })
                .collect()
        })
        .collect()
}

/// Neighbouring cell pairs `(a, b)` differing by one step along one axis.
fn adjacent_pairs(dim: usize, res: usize) -> Vec<(usize, usize)> {
    let total = res.pow(dim as u32);
    let mut out = Vec::with_capacity(total * dim);
    for idx in 0..total {
        let mut stride = 1;
        for _ in 0..dim {
            let coord = (idx / stride) % res;
            let next = if coord + 1 == res {
                idx - coord * stride
            } else {
                idx + stride
            };
            out.push((idx, next));
            stride *= res;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// transfer functions

/// Distance used by the solver: the group's own, or a fixed order of the
/// `C^r` surrogate on diffeomorphisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMetric {
    Group,
    DiffOrder(usize),
}

impl SolverMetric {
    pub fn dist(self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        match (self, a, b) {
            (SolverMetric::DiffOrder(r), GroupElement::Diffeo(x), GroupElement::Diffeo(y)) => {
                circle_diffeo::dr(x, y, r)
            }
            _ => a.dist(b),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub grid_res: usize,
    /// Orbit half-length `L`: the table covers `n ∈ [−L, L]`.
    pub orbit_len: usize,
    pub seed: u64,
    /// Base point `x*`; drawn from the seeded generator when absent.
    pub base_point: Option<Vec<f64>>,
    /// Fixed-point width; sized from `L` when absent.
    pub precision_bits: Option<u32>,
    /// Log-blend of the two nearest samples (matrix groups only).
    pub blend: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            grid_res: 64,
            orbit_len: 150,
            seed: 0,
            base_point: None,
            precision_bits: None,
            blend: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Warning {
    pub kind: String,
    /// The violated inequality.
    pub inequality: String,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct TransferSolution {
    pub dim: usize,
    pub alpha: f64,
    pub metric: SolverMetric,
    pub base_point: Vec<f64>,
    pub base_value: GroupElement,
    /// `n` for each orbit sample, from `−L` to `L`.
    pub orbit_steps: Vec<i64>,
    pub orbit_values: Vec<GroupElement>,
    pub index: SpatialIndex,
    pub grid_res: usize,
    pub grid_values: Vec<GroupElement>,
    /// Orbit sample used for each cell and its distance to the cell centre.
    pub grid_source: Vec<usize>,
    pub grid_gap: Vec<f64>,
    pub coverage_radius: f64,
    /// `sup_y d_G(φ(f y), η(y) φ(y))` over cell centres.
    pub residual: f64,
    /// Same on consecutive orbit samples.
    pub orbit_residual: f64,
    pub holder_quotient: f64,
    pub localization: Option<LocalizationReport>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub base_point: Vec<f64>,
    pub orbit_len: usize,
    pub grid_res: usize,
    pub coverage_radius: f64,
    pub residual: f64,
    pub orbit_residual: f64,
    pub holder_quotient: f64,
    pub localization: Option<LocalizationReport>,
    pub warnings: Vec<Warning>,
}

impl TransferSolution {
    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            base_point: self.base_point.clone(),
            orbit_len: self.orbit_steps.len() / 2,
            grid_res: self.grid_res,
            coverage_radius: self.coverage_radius,
            residual: self.residual,
            orbit_residual: self.orbit_residual,
            holder_quotient: self.holder_quotient,
            localization: self.localization.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn cell_diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / self.grid_res as f64
    }

    /// `φ(y)` from the nearest orbit sample, or the log-blend of the two
    /// nearest when requested.
    pub fn value_at(&self, y: &[f64], blend: bool) -> Result<GroupElement> {
        let ((i, d1), second) = self.index.nearest2(y);
        let a = &self.orbit_values[i];
        match (blend, second, a) {
            (true, Some((j, d2)), GroupElement::Matrix { .. }) if d1 + d2 > 0.0 => {
                let w = d1 / (d1 + d2);
                let rel = a.inv()?.mul(&self.orbit_values[j])?;
                match groups::log_map(&rel) {
                    Ok(l) => a.mul(&groups::exp_map(&l.scale(w)?, rel.kind())?),
                    Err(_) => Ok(a.clone()),
                }
            }
            _ => Ok(a.clone()),
        }
    }

    /// `sup_y d_G(φ(y), ψ(y) g)` with `g = ψ(x*)⁻¹ φ(x*)`, against a known
    /// transfer function `ψ`.
    pub fn recovery_error(&self, psi: &Generator) -> Result<f64> {
        let g = psi.eval(&self.base_point)?.inv()?.mul(&self.base_value)?;
        let centers = grid_centers(self.dim, self.grid_res);
        let errs: Vec<f64> = centers
            .par_iter()
            .zip(&self.grid_values)
            .map(|(y, v)| self.metric.dist(v, &psi.eval(y)?.mul(&g)?))
            .collect::<Result<_>>()?;
        Ok(errs.into_iter().fold(0.0, f64::max))
    }

    /// Log-log regression slope of the upper envelope of `d_G(φ(y), φ(y′))`
    /// against `d(y, y′)` over random pairs of orbit samples closer than
    /// 0.1, binned in distance.
    pub fn holder_exponent_fit(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = self.index.points();
        let n = pts.len();
        let bins = 12;
        let (lo, hi) = ((1e-3f64).ln(), (0.1f64).ln());
        let mut env = vec![f64::NEG_INFINITY; bins];
        let mut tried = 0;
        let mut found = 0;
        while found < pairs && tried < pairs * 200 {
            tried += 1;
            let i = rng.gen_range(0..n);
            let (j, d) = {
                // nearby partner: jitter a point and take its nearest sample
                let r = (lo + (hi - lo) * rng.gen::<f64>()).exp();
                let q: Vec<f64> = pts[i]
                    .iter()
                    .map(|&c| c + r * rng.gen_range(-1.0..1.0))
                    .collect();
                let (j, _) = self.index.nearest(&q);
                (j, crate::torus::torus_distance(&pts[i], &pts[j]))
            };
            if i == j || d <= 0.0 || d.ln() < lo || d.ln() >= hi {
                continue;
            }
            found += 1;
            let dg = self
                .metric
                .dist(&self.orbit_values[i], &self.orbit_values[j])?;
            let b = (((d.ln() - lo) / (hi - lo)) * bins as f64) as usize;
            env[b.min(bins - 1)] = env[b.min(bins - 1)].max(dg.max(1e-300).ln());
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = env
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(b, &v)| (lo + (b as f64 + 0.5) * (hi - lo) / bins as f64, v))
            .unzip();
        Ok(linalg::regression_slope(&xs, &ys))
    }
}

fn random_base_point(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

/// Localization report for a generator sampled on a grid.
pub fn generator_localization(
    gen: &Generator,
    dim: usize,
    res: usize,
    lambda: f64,
) -> Result<Option<LocalizationReport>> {
    match gen.target() {
        GroupKind::Matrix(..) => {
            let samples: Vec<GroupElement> = grid_centers(dim, res)
                .iter()
                .map(|p| gen.eval(p))
                .collect::<Result<_>>()?;
            Ok(Some(groups::rho_matrix_norm(
                &samples,
                lambda,
                gen.alpha(),
            )?))
        }
        _ => Ok(None),
    }
}

/// Builds `φ` on the two-sided orbit of `x*` by `φ(fⁿx*) = Φ(x*, n) φ(x*)`
/// and extends it to a `grid_res^d` grid by nearest orbit sample.
pub fn solve_transfer(
    sys: &ToralAutomorphism,
    gen: &Generator,
    params: &SolverParams,
    base_value: &GroupElement,
    metric: SolverMetric,
) -> Result<TransferSolution> {
    let dim = sys.dim();
    let l = params.orbit_len;
    let bits = params
        .precision_bits
        .unwrap_or_else(|| sys.bits_for_steps(l as u64));
    let x0 = params
        .base_point
        .clone()
        .unwrap_or_else(|| random_base_point(dim, params.seed));
    let x = TorusPoint::from_f64(&x0, bits);
    let (pts, phis) = cocycles::cocycle_table(gen, sys, &x, l)?;
    let values: Vec<GroupElement> = phis
        .iter()
        .map(|p| p.mul(base_value))
        .collect::<Result<_>>()?;
    let coords: Vec<Vec<f64>> = pts.iter().map(|p| p.coords().to_vec()).collect();

    // exact propagation identity on consecutive samples
    let orbit_residual = (0..coords.len() - 1)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let step = gen.eval(&coords[i])?.mul(&values[i])?;
            metric.dist(&values[i + 1], &step)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let index = SpatialIndex::new(coords, dim);
    let centers = grid_centers(dim, params.grid_res);
    let nearest: Vec<(usize, f64)> = centers.par_iter().map(|c| index.nearest(c)).collect();
    let coverage_radius = nearest.iter().map(|n| n.1).fold(0.0, f64::max);

    let mut sol = TransferSolution {
        dim,
        alpha: gen.alpha(),
        metric,
        base_point: x.coords().to_vec(),
        base_value: base_value.clone(),
        orbit_steps: (-(l as i64)..=l as i64).collect(),
        orbit_values: values,
        index,
        grid_res: params.grid_res,
        grid_values: Vec::new(),
        grid_source: nearest.iter().map(|n| n.0).collect(),
        grid_gap: nearest.iter().map(|n| n.1).collect(),
        coverage_radius,
        residual: 0.0,
        orbit_residual,
        holder_quotient: 0.0,
        localization: None,
        warnings: Vec::new(),
    };
    let limit = COVERAGE_FACTOR * sol.cell_diameter();
    if coverage_radius > limit {
        return Err(Error::CoverageTooCoarse {
            coverage: coverage_radius,
            limit,
        });
    }
    sol.grid_values = centers
        .par_iter()
        .map(|c| sol.value_at(c, params.blend))
        .collect::<Result<_>>()?;

    sol.residual = centers
        .par_iter()
        .zip(&sol.grid_values)
        .map(|(y, phi_y)| -> Result<f64> {
            let fy = sys.apply_f64(y);
            let lhs = sol.value_at(&fy, params.blend)?;
            let rhs = gen.eval(y)?.mul(phi_y)?;
            metric.dist(&lhs, &rhs)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let h = 1.0 / params.grid_res as f64;
    sol.holder_quotient = adjacent_pairs(dim, params.grid_res)
        .par_iter()
        .map(|&(a, b)| {
            Ok(metric.dist(&sol.grid_values[a], &sol.grid_values[b])? / h.powf(sol.alpha))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    sol.localization = generator_localization(gen, dim, 32.min(params.grid_res), sys.lambda())?;
    if let Some(rep) = &sol.localization {
        if !rep.holds_hyperbolicity {
            sol.warnings.push(Warning {
                kind: "hyperbolicity_condition_violated".into(),
                inequality: "rho * lambda^alpha < 1".into(),
                margin: rep.margin,
            });
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub cell: usize,
    pub gap: f64,
}

/// Right constant `g = φ₁(y₀)⁻¹ φ₂(y₀)` at the best-covered cell `y₀` and
/// `sup_y d_G(φ₁(y) g, φ₂(y))`.
pub fn uniqueness_gap(
    sol1: &TransferSolution,
    sol2: &TransferSolution,
) -> Result<(GroupElement, UniquenessReport)> {
    if sol1.grid_res != sol2.grid_res || sol1.dim != sol2.dim {
        return Err(Error::DimensionMismatch {
            expected: sol1.grid_values.len(),
            got: sol2.grid_values.len(),
        });
    }
    let cell = (0..sol1.grid_gap.len())
        .min_by(|&a, &b| {
            (sol1.grid_gap[a] + sol2.grid_gap[a]).total_cmp(&(sol1.grid_gap[b] + sol2.grid_gap[b]))
        })
        .unwrap();
    let g = sol1.grid_values[cell].inv()?.mul(&sol2.grid_values[cell])?;
    let gap = sol1
        .grid_values
        .par_iter()
        .zip(&sol2.grid_values)
        .map(|(a, b)| sol1.metric.dist(&a.mul(&g)?, b))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((g, UniquenessReport { cell, gap }))
}

/// One rung of a refinement ladder.
#[derive(Debug, Clone, Serialize)]
pub struct LadderRung {
    pub orbit_len: usize,
    pub coverage_radius: f64,
    pub residual: f64,
    pub holder_quotient: f64,
    /// `sup d_G(φ, ψ g)` when the transfer function is known.
    pub recovery: Option<f64>,
    /// `recovery / coverage^α`.
    pub fitted_c: Option<f64>,
}

/// Solves at each orbit length and records coverage, residual and, for
/// coboundary generators, the recovery error.
pub fn coverage_ladder(
    sys: &ToralAutomorphism,
    gen: &Generator,
    params: &SolverParams,
    lengths: &[usize],
    base_value: &GroupElement,
    metric: SolverMetric,
) -> Result<Vec<LadderRung>> {
    lengths
        .iter()
        .map(|&len| {
            let p = SolverParams {
                orbit_len: len,
                ..params.clone()
            };
            let sol = solve_transfer(sys, gen, &p, base_value, metric)?;
            let recovery = gen
                .coboundary_psi()
                .map(|psi| sol.recovery_error(psi))
                .transpose()?;
            Ok(LadderRung {
                orbit_len: len,
                coverage_radius: sol.coverage_radius,
                residual: sol.residual,
                holder_quotient: sol.holder_quotient,
                fitted_c: recovery.map(|r| r / sol.coverage_radius.powf(gen.alpha())),
                recovery,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// diffeomorphism-valued transfer

#[derive(Debug, Clone, Serialize)]
pub struct DiffeoHyperbolicity {
    pub rho0: f64,
    pub rho1: f64,
    pub kappa: f64,
    /// `ρ₁ + κρ₀`.
    pub rho: f64,
    pub r: usize,
    /// `(2r − 1) log ρ + α log λ`.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct DiffeoTransferSolution {
    /// Residual and Hölder quotient measured in `d_{r−2}`.
    pub solution: TransferSolution,
    /// Residual measured in `d_{r−3}`.
    pub residual_low: f64,
    pub hyperbolicity: DiffeoHyperbolicity,
}

/// `solve_transfer` over `Diff(S¹)` with residuals at orders `r − 2` and
/// `r − 3`, and the condition `ρ^{2r−1} λ^α < 1`.
pub fn solve_transfer_diffeo(
    sys: &ToralAutomorphism,
    gen: &Generator,
    params: &SolverParams,
    r: usize,
    kappa: f64,
) -> Result<DiffeoTransferSolution> {
    let GroupKind::Diffeo(p) = gen.target() else {
        return Err(Error::VariantMismatch(
            "diffeomorphism generator expected".into(),
        ));
    };
    if r < 3 {
        return Err(Error::InvalidGenerator(format!(
            "order r = {r} must be at least 3"
        )));
    }
    let bounds = cocycles::DiffeoBounds::measure(gen, sys.dim(), 16)?;
    let rho = bounds.rho1() + kappa * bounds.rho0;
    let margin = (2 * r - 1) as f64 * rho.ln() + gen.alpha() * sys.lambda().ln();
    let hyperbolicity = DiffeoHyperbolicity {
        rho0: bounds.rho0,
        rho1: bounds.rho1(),
        kappa,
        rho,
        r,
        margin,
        holds: margin < 0.0,
    };
    let id = GroupElement::identity(GroupKind::Diffeo(p));
    let mut solution = solve_transfer(sys, gen, params, &id, SolverMetric::DiffOrder(r - 2))?;
    if !hyperbolicity.holds {
        solution.warnings.push(Warning {
            kind: "hyperbolicity_condition_violated".into(),
            inequality: "rho^(2r-1) * lambda^alpha < 1".into(),
            margin,
        });
    }
    let low = SolverMetric::DiffOrder(r - 3);
    let centers = grid_centers(sys.dim(), params.grid_res);
    let residual_low = centers
        .par_iter()
        .zip(&solution.grid_values)
        .map(|(y, phi_y)| -> Result<f64> {
            let lhs = solution.value_at(&sys.apply_f64(y), false)?;
            low.dist(&lhs, &gen.eval(y)?.mul(phi_y)?)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(DiffeoTransferSolution {
        solution,
        residual_low,
        hyperbolicity,
    })
}

// ---------------------------------------------------------------------------
// flows

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowSolverParams {
    pub grid_res: usize,
    /// Number of fibre levels `s_j = (j + 1/2)/s_res`.
    pub s_res: usize,
    /// Orbit half-length in units of time.
    pub horizon: usize,
    /// Integration steps per fibre level spacing.
    pub substeps: usize,
    pub seed: u64,
    /// Cells on which the time-one residual is evaluated.
    pub residual_samples: usize,
}

impl Default for FlowSolverParams {
    fn default() -> Self {
        FlowSolverParams {
            grid_res: 32,
            s_res: 4,
            horizon: 150,
            substeps: 25,
            seed: 0,
            residual_samples: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowTransferSolution {
    pub base_point: Vec<f64>,
    pub grid_res: usize,
    pub s_res: usize,
    /// One nearest-sample index per fibre level.
    pub levels: Vec<(SpatialIndex, Vec<GroupElement>)>,
    /// Values on cells, level-major.
    pub grid_values: Vec<GroupElement>,
    pub coverage_radius: f64,
    pub residual: f64,
    pub orbit_residual: f64,
    pub localization: Option<LocalizationReport>,
    pub warnings: Vec<Warning>,
}

impl FlowTransferSolution {
    pub fn value_at(&self, y: &[f64], level: usize) -> GroupElement {
        let (idx, vals) = &self.levels[level];
        vals[idx.nearest(y).0].clone()
    }

    pub fn level_s(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.s_res as f64
    }

    /// `sup d_G(φ(y, s), ψ(y, s) g)` with `g = ψ(x*, s₀)⁻¹ φ(x*, s₀)`.
    pub fn recovery_error(
        &self,
        psi: impl Fn(&[f64], f64) -> Result<DMatrix<f64>> + Sync,
    ) -> Result<f64> {
        let base = &self.levels[0].1[self.levels[0].0.nearest(&self.base_point).0];
        let g =
            linalg::inverse(&psi(&self.base_point, self.level_s(0))?)? * base.as_matrix().unwrap();
        let centers = grid_centers(self.base_point.len(), self.grid_res);
        let per_level = centers.len();
        let errs: Vec<f64> = self
            .grid_values
            .par_iter()
            .enumerate()
            .map(|(k, v)| -> Result<f64> {
                let (j, c) = (k / per_level, k % per_level);
                let want = psi(&centers[c], self.level_s(j))? * &g;
                Ok((v.as_matrix().unwrap() - want).norm())
            })
            .collect::<Result<_>>()?;
        Ok(errs.into_iter().fold(0.0, f64::max))
    }
}

/// Transfer function for a flow cocycle over the unit-roof suspension:
/// `φ(f^t(x*, s₀)) = Φ((x*, s₀), t) φ(x*, s₀)` sampled at the fibre levels
/// along `t ∈ [−T, T]`, extended per level by nearest sample. The base orbit
/// is followed exactly; the residual uses the time-one map on a random
/// subset of cells.
pub fn solve_transfer_flow(
    flow: &SuspensionFlow,
    gen: &dyn FlowAlgebra,
    params: &FlowSolverParams,
    alpha: f64,
) -> Result<FlowTransferSolution> {
    let sys = flow.base();
    let dim = sys.dim();
    let t = params.horizon;
    let sres = params.s_res;
    let tau = 1.0 / sres as f64;
    let dt = tau / params.substeps as f64;
    let bits = sys.bits_for_steps(t as u64 + 1);
    let x0 = random_base_point(dim, params.seed);
    let x = TorusPoint::from_f64(&x0, bits);
    let pts = sys.orbit(&x, -(t as i64), 2 * t + 1)?;
    let n = gen.size();
    let id = GroupElement::Matrix {
        group: gen.group(),
        m: DMatrix::identity(n, n),
    };
    // samples (base index k, level j) in time order; φ(x*, s₀) = Id
    let total = (2 * t + 1) * sres;
    let start = t * sres;
    let mut vals: Vec<Option<GroupElement>> = vec![None; total];
    vals[start] = Some(id.clone());
    let point = |k: usize| -> FlowPoint {
        FlowPoint {
            x: pts[k / sres].coords().to_vec(),
            s: ((k % sres) as f64 + 0.5) * tau,
        }
    };
    let mut orbit_residual = 0.0f64;
    for k in start..total - 1 {
        let step = flow_cocycle(flow, gen, &point(k), tau, dt, f64::INFINITY)?;
        let v = step.value.mul(vals[k].as_ref().unwrap())?;
        vals[k + 1] = Some(v);
    }
    for k in (1..=start).rev() {
        let step = flow_cocycle(flow, gen, &point(k), -tau, dt, f64::INFINITY)?;
        let v = step.value.mul(vals[k].as_ref().unwrap())?;
        vals[k - 1] = Some(v);
    }
    let vals: Vec<GroupElement> = vals.into_iter().map(Option::unwrap).collect();
    // time-one propagation identity along the table
    for k in (0..total - sres).step_by((total / 64).max(1)) {
        let one = flow_cocycle(flow, gen, &point(k), 1.0, dt, f64::INFINITY)?;
        orbit_residual = orbit_residual.max(vals[k + sres].dist(&one.value.mul(&vals[k])?)?);
    }

    let mut levels = Vec::with_capacity(sres);
    for j in 0..sres {
        let idx: Vec<usize> = (0..total).filter(|k| k % sres == j).collect();
        let coords = idx
            .iter()
            .map(|&k| pts[k / sres].coords().to_vec())
            .collect();
        levels.push((
            SpatialIndex::new(coords, dim),
            idx.iter().map(|&k| vals[k].clone()).collect::<Vec<_>>(),
        ));
    }
    let centers = grid_centers(dim, params.grid_res);
    let mut coverage_radius = 0.0f64;
    let mut grid_values = Vec::with_capacity(sres * centers.len());
    for (index, lv) in &levels {
        for c in &centers {
            let (i, d) = index.nearest(c);
            coverage_radius = coverage_radius.max(d);
            grid_values.push(lv[i].clone());
        }
    }
    let mut sol = FlowTransferSolution {
        base_point: x.coords().to_vec(),
        grid_res: params.grid_res,
        s_res: sres,
        levels,
        grid_values,
        coverage_radius,
        residual: 0.0,
        orbit_residual,
        localization: None,
        warnings: Vec::new(),
    };
    let limit = COVERAGE_FACTOR * (dim as f64).sqrt() / params.grid_res as f64;
    if coverage_radius > limit {
        return Err(Error::CoverageTooCoarse {
            coverage: coverage_radius,
            limit,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed);
    let cells: Vec<usize> = (0..params.residual_samples)
        .map(|_| rng.gen_range(0..sol.grid_values.len()))
        .collect();
    sol.residual = cells
        .par_iter()
        .map(|&k| -> Result<f64> {
            let (j, c) = (k / centers.len(), k % centers.len());
            let y = FlowPoint {
                x: centers[c].clone(),
                s: sol.level_s(j),
            };
            let one = flow_cocycle(flow, gen, &y, 1.0, dt, f64::INFINITY)?;
            let lhs = sol.value_at(&one.end.x, j);
            lhs.dist(&one.value.mul(&sol.grid_values[k])?)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    // localization: ρ from the time-one cocycle over a coarse grid, and the
    // flow condition ρ − λα < 0 in exponential-rate form
    let samples: Vec<GroupElement> = grid_centers(dim, 8)
        .iter()
        .map(|c| {
            flow_cocycle(
                flow,
                gen,
                &FlowPoint {
                    x: c.clone(),
                    s: 0.0,
                },
                1.0,
                dt,
                f64::INFINITY,
            )
            .map(|r| r.value)
        })
        .collect::<Result<_>>()?;
    let rep = groups::rho_matrix_norm(&samples, sys.lambda(), alpha)?;
    if !rep.holds_hyperbolicity {
        sol.warnings.push(Warning {
            kind: "hyperbolicity_condition_violated".into(),
            inequality: "log rho - alpha * |log lambda| < 0".into(),
            margin: rep.margin,
        });
    }
    sol.localization = Some(rep);
    Ok(sol)
}

/// Flat numeric entries of a value for CSV output: vector entries, matrix
/// entries row by row, or the first Fourier coefficients of a lift.
pub fn value_entries(g: &GroupElement) -> Vec<f64> {
    match g {
        GroupElement::Additive(v) => v.iter().cloned().collect(),
        GroupElement::Matrix { m, .. } => m.transpose().iter().cloned().collect(),
        GroupElement::Diffeo(h) => h
            .coeffs()
            .iter()
            .take(4)
            .flat_map(|c| [c.re, c.im])
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_diffeo::{CircleDiffeo, DiffeoParams};
    use crate::cocycles::{coboundary_from, AlgebraMap, TrigTerm};
    use crate::groups::MatrixGroup;
    use crate::perturbed::Phase;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::new(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn term(freq: [i64; 2], basis: &str, amp: f64, phase: Phase) -> TrigTerm {
        TrigTerm {
            freq: freq.to_vec(),
            basis: basis.into(),
            amp,
            phase,
        }
    }

    fn sl2_psi() -> Generator {
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        Generator::trig_smooth(
            AlgebraMap::new(
                kind,
                &[
                    term([1, 0], "E", 0.1, Phase::Sin),
                    term([0, 1], "F", 0.1, Phase::Cos),
                ],
                None,
            )
            .unwrap(),
        )
    }

    #[test]
    fn spatial_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2, 4] {
            let pts: Vec<Vec<f64>> = (0..500)
                .map(|_| (0..dim).map(|_| rng.gen()).collect())
                .collect();
            let idx = SpatialIndex::new(pts.clone(), dim);
            for _ in 0..200 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                let brute = pts
                    .iter()
                    .map(|p| crate::torus::torus_distance(&q, p))
                    .fold(f64::INFINITY, f64::min);
                let ((_, d), second) = idx.nearest2(&q);
                assert_eq!(d, brute);
                assert!(second.unwrap().1 >= d);
            }
        }
    }

    #[test]
    fn coboundary_obstruction_vanishes_and_constant_fails() {
        let sys = cat();
        let gen = coboundary_from(sl2_psi(), &sys);
        let rep = check_obstruction(&sys, &gen, 8, DEFAULT_OBSTRUCTION_TOL, 1 << 20).unwrap();
        assert!(rep.max_defect <= 1e-9);
        assert!(matches!(rep.verdict, Verdict::Vanishes { .. }));
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        let g = groups::exp_map(
            &groups::basis_element(kind, "H")
                .unwrap()
                .scale(0.2)
                .unwrap(),
            kind,
        )
        .unwrap();
        let rep = check_obstruction(
            &sys,
            &Generator::constant(g.clone()),
            4,
            DEFAULT_OBSTRUCTION_TOL,
            1 << 20,
        )
        .unwrap();
        let fixed = &rep.per_orbit[0];
        assert_eq!(fixed.period, 1);
        assert_eq!(fixed.defect, g.dist_to_identity().unwrap());
        assert!(matches!(rep.verdict, Verdict::Fails { .. }));
    }

    #[test]
    fn biased_coboundary_defect_grows_with_bias() {
        let sys = cat();
        let kind = GroupKind::Matrix(MatrixGroup::So, 3);
        let psi = Generator::trig_smooth(
            AlgebraMap::new(kind, &[term([1, 0], "Lx", 0.2, Phase::Sin)], None).unwrap(),
        );
        let defect = |c: f64| {
            let bias = groups::exp_map(
                &groups::basis_element(kind, "Lz").unwrap().scale(c).unwrap(),
                kind,
            )
            .unwrap();
            let cob = coboundary_from(psi.clone(), &sys);
            // η(x) = ψ(f x) ψ(x)⁻¹ · bias at the fixed point reduces to the bias
            let x = TorusPoint::origin(2);
            let eta = cob.eval(x.coords()).unwrap().mul(&bias).unwrap();
            eta.dist_to_identity().unwrap()
        };
        let (a, b) = (defect(1e-3), defect(1e-2));
        assert!((b / a - 10.0).abs() < 0.01);
    }

    #[test]
    fn identity_generator_gives_identity_transfer() {
        let sys = cat();
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        let gen = Generator::constant(GroupElement::identity(kind));
        let params = SolverParams {
            grid_res: 16,
            orbit_len: 60,
            ..Default::default()
        };
        let sol = solve_transfer(
            &sys,
            &gen,
            &params,
            &GroupElement::identity(kind),
            SolverMetric::Group,
        )
        .unwrap();
        assert!(sol
            .grid_values
            .iter()
            .all(|v| *v == GroupElement::identity(kind)));
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn coboundary_recovery_and_orbit_exactness() {
        let sys = cat();
        let psi = sl2_psi();
        let gen = coboundary_from(psi.clone(), &sys);
        let kind = psi.target();
        let params = SolverParams {
            grid_res: 32,
            orbit_len: 150,
            seed: 3,
            ..Default::default()
        };
        let sol = solve_transfer(
            &sys,
            &gen,
            &params,
            &GroupElement::identity(kind),
            SolverMetric::Group,
        )
        .unwrap();
        assert!(sol.orbit_residual <= 1e-9);
        let err = sol.recovery_error(&psi).unwrap();
        let lip = 2.0 * std::f64::consts::TAU * 0.1 * 1.5;
        assert!(
            err <= lip * sol.coverage_radius,
            "{err} {}",
            sol.coverage_radius
        );
        let longer = solve_transfer(
            &sys,
            &gen,
            &SolverParams {
                orbit_len: 300,
                ..params.clone()
            },
            &GroupElement::identity(kind),
            SolverMetric::Group,
        )
        .unwrap();
        assert!(longer.coverage_radius <= sol.coverage_radius);
    }

    #[test]
    fn uniqueness_up_to_right_constant() {
        let sys = cat();
        let psi = sl2_psi();
        let gen = coboundary_from(psi.clone(), &sys);
        let kind = psi.target();
        let params = SolverParams {
            grid_res: 32,
            orbit_len: 200,
            seed: 5,
            ..Default::default()
        };
        let h = groups::exp_map(
            &groups::basis_element(kind, "E")
                .unwrap()
                .scale(0.4)
                .unwrap(),
            kind,
        )
        .unwrap();
        let a = solve_transfer(
            &sys,
            &gen,
            &params,
            &GroupElement::identity(kind),
            SolverMetric::Group,
        )
        .unwrap();
        let b = solve_transfer(&sys, &gen, &params, &h, SolverMetric::Group).unwrap();
        let (g, rep) = uniqueness_gap(&a, &b).unwrap();
        assert!(g.dist(&h).unwrap() <= 1e-9 && rep.gap <= 1e-9);
        let c = solve_transfer(
            &sys,
            &gen,
            &SolverParams { seed: 6, ..params },
            &h,
            SolverMetric::Group,
        )
        .unwrap();
        let (_, rep) = uniqueness_gap(&a, &c).unwrap();
        assert!(rep.gap <= 4.0 * (a.coverage_radius + c.coverage_radius));
    }

    #[test]
    fn coarse_coverage_rejected() {
        let sys = cat();
        let gen = coboundary_from(sl2_psi(), &sys);
        let params = SolverParams {
            grid_res: 128,
            orbit_len: 5,
            ..Default::default()
        };
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        assert!(matches!(
            solve_transfer(
                &sys,
                &gen,
                &params,
                &GroupElement::identity(kind),
                SolverMetric::Group
            ),
            Err(Error::CoverageTooCoarse { .. })
        ));
    }

    #[test]
    fn rotation_diffeo_coboundary() {
        let sys = cat();
        let p = DiffeoParams::default();
        let kind = GroupKind::Diffeo(p);
        let psi = Generator::trig_smooth(
            AlgebraMap::new(kind, &[term([1, 0], "R", 0.1, Phase::Sin)], None).unwrap(),
        );
        let gen = coboundary_from(psi.clone(), &sys);
        let rep = check_obstruction(&sys, &gen, 6, DEFAULT_OBSTRUCTION_TOL, 1 << 20).unwrap();
        assert!(rep.max_defect <= 1e-10);
        let params = SolverParams {
            grid_res: 16,
            orbit_len: 100,
            ..Default::default()
        };
        let sol = solve_transfer_diffeo(&sys, &gen, &params, 5, 0.0).unwrap();
        assert!(sol.solution.orbit_residual <= 1e-9);
        let err = sol.solution.recovery_error(&psi).unwrap();
        assert!(err <= 0.1 * std::f64::consts::TAU * 1.5 * sol.solution.coverage_radius);
        let rot = Generator::constant(GroupElement::Diffeo(CircleDiffeo::rotation(0.3, p)));
        let rep = check_obstruction(&sys, &rot, 1, DEFAULT_OBSTRUCTION_TOL, 16).unwrap();
        assert!((rep.per_orbit[0].defect - 0.3).abs() < 1e-12);
    }

    #[test]
    fn flow_solver_identity_and_coboundary() {
        let sys = cat();
        let flow = SuspensionFlow::new(sys.clone());
        let zero = crate::cocycles::ConstantFlow {
            group: MatrixGroup::Sl,
            x: DMatrix::zeros(2, 2),
        };
        let params = FlowSolverParams {
            grid_res: 8,
            horizon: 40,
            residual_samples: 16,
            ..Default::default()
        };
        let sol = solve_transfer_flow(&flow, &zero, &params, 1.0).unwrap();
        assert!(sol
            .grid_values
            .iter()
            .all(|v| v.dist_to_identity().unwrap() == 0.0));
        let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
        let psi = AlgebraMap::new(
            kind,
            &[
                term([1, 0], "E", 0.1, Phase::Sin),
                term([0, 1], "H", 0.05, Phase::Cos),
            ],
            None,
        )
        .unwrap();
        let cob = crate::cocycles::FlowCoboundary {
            psi,
            base: sys,
            group: MatrixGroup::Sl,
        };
        let sol = solve_transfer_flow(&flow, &cob, &params, 1.0).unwrap();
        assert!(sol.orbit_residual <= 1e-6);
        let err = sol.recovery_error(|x, s| cob.psi_at(x, s)).unwrap();
        assert!(
            err <= 4.0 * sol.coverage_radius,
            "{err} {}",
            sol.coverage_radius
        );
    }
}
