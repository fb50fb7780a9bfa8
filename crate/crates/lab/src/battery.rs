//! Randomized invariant checks run by the `proptest` subcommand.

use livsic_core::circle_diffeo::{self, CircleDiffeo, DiffeoParams};
use livsic_core::cocycles::{cocycle_eval, AlgebraMap, Generator, TrigTerm};
use livsic_core::conformal;
use livsic_core::groups::{self, AlgebraElement, GroupElement, GroupKind, MatrixGroup};
use livsic_core::linalg;
use livsic_core::periodic::{self, closing_point, count_periodic, fixed_points_of_power};
use livsic_core::{ToralAutomorphism, TorusPoint};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Context, Result};

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest measured defect.
    pub worst: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryReport {
    pub checks: Vec<PropertyCheck>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }
}

struct Tally {
    check: PropertyCheck,
}

impl Tally {
    fn new(name: &str, tol: f64) -> Self {
        Tally {
            check: PropertyCheck {
                name: name.into(),
                samples: 0,
                violations: 0,
                worst: 0.0,
                tol,
            },
        }
    }

    fn record(&mut self, defect: f64) {
        self.check.samples += 1;
        self.check.worst = self.check.worst.max(defect);
        if defect.is_nan() || defect > self.check.tol {
            self.check.violations += 1;
        }
    }
}

pub fn run_battery(sys: &ToralAutomorphism, samples: usize, seed: u64) -> Result<BatteryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = sys.dim();
    let mut checks = Vec::new();

    let mut t = Tally::new("periodic_count_matches_determinant", 0.0);
    for n in 1..=4 {
        let found = fixed_points_of_power(sys, n, 1 << 20)
            .ctx("proptest")?
            .len();
        let want: f64 = count_periodic(sys, n)
            .to_string()
            .parse()
            .unwrap_or(f64::INFINITY);
        t.record((found as f64 - want).abs());
    }
    checks.push(t.check);

    let mut t = Tally::new("closing_inequalities", 0.0);
    for _ in 0..samples {
        let n = rng.gen_range(1..=20);
        let x = periodic::near_return_point(sys, n, 0.049, &mut rng).ctx("proptest")?;
        let r = closing_point(sys, &x, n, periodic::DEFAULT_EPS0).ctx("proptest")?;
        let exact = sys.apply(&r.p, n).ctx("proptest")? == r.p;
        t.record(if r.bounds_ok.all() && exact { 0.0 } else { 1.0 });
    }
    checks.push(t.check);

    let kind = GroupKind::Matrix(MatrixGroup::Sl, 2);
    let mut freq = vec![0i64; d];
    freq[0] = 1;
    let terms = [
        TrigTerm {
            freq: freq.clone(),
            basis: "E".into(),
            amp: 0.3,
            phase: Default::default(),
        },
        TrigTerm {
            freq,
            basis: "H".into(),
            amp: 0.2,
            phase: livsic_core::perturbed::Phase::Cos,
        },
    ];
    let gen = Generator::trig_smooth(AlgebraMap::new(kind, &terms, None).ctx("proptest")?);
    let mut t = Tally::new("cocycle_identity", 1e-9);
    for _ in 0..samples {
        let coords: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let x = TorusPoint::from_f64(&coords, sys.bits_for_steps(40));
        let (m, n) = (rng.gen_range(-15i64..=15), rng.gen_range(-15i64..=15));
        let whole = cocycle_eval(&gen, sys, &x, m + n).ctx("proptest")?;
        let fx = sys.apply(&x, n).ctx("proptest")?;
        let split = cocycle_eval(&gen, sys, &fx, m)
            .and_then(|a| a.mul(&cocycle_eval(&gen, sys, &x, n)?))
            .ctx("proptest")?;
        let scale = whole.as_matrix().map(|w| w.norm()).unwrap_or(1.0);
        t.record((whole.as_matrix().unwrap() - split.as_matrix().unwrap()).norm() / scale);
    }
    checks.push(t.check);

    let mut t = Tally::new("exp_log_roundtrip", 1e-10);
    for _ in 0..samples {
        for (kind, names) in [
            (
                GroupKind::Matrix(MatrixGroup::So, 3),
                &["Lx", "Ly", "Lz"][..],
            ),
            (GroupKind::Matrix(MatrixGroup::Sl, 2), &["H", "E", "F"][..]),
        ] {
            let mut v = AlgebraElement::zero(kind);
            for name in names {
                let b = groups::basis_element(kind, name).ctx("proptest")?;
                v.add_scaled(&b, rng.gen_range(-0.5..0.5)).ctx("proptest")?;
            }
            let g = groups::exp_map(&v, kind).ctx("proptest")?;
            let back =
                groups::exp_map(&groups::log_map(&g).ctx("proptest")?, kind).ctx("proptest")?;
            t.record(g.dist(&back).ctx("proptest")?);
        }
    }
    checks.push(t.check);

    let props = conformal::metric_props_check(samples.max(1) * 10, rng.gen()).ctx("proptest")?;
    let mut t = Tally::new("distortion_determinant_inequality", 0.0);
    t.check.samples = props.samples;
    t.check.violations = props.determinant_violations;
    t.check.worst = (-props.min_slack).max(0.0);
    checks.push(t.check);
    let mut t = Tally::new("unit_distortion_is_conformal", 1e-10);
    t.record(props.orthogonal_max_defect);
    checks.push(t.check);

    let mut t = Tally::new("pushforward_functorial", 1e-8);
    for _ in 0..samples {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        if f64::abs(a.determinant()) < 0.1 || f64::abs(b.determinant()) < 0.1 {
            continue;
        }
        let g = conformal::random_form(3, rng.gen()).ctx("proptest")?;
        let two =
            conformal::pushforward_form(&a, &conformal::pushforward_form(&b, &g).ctx("proptest")?)
                .ctx("proptest")?;
        let one = conformal::pushforward_form(&(&a * &b), &g).ctx("proptest")?;
        t.record(linalg::spd_distance(&one, &two));
    }
    checks.push(t.check);

    let params = DiffeoParams::default();
    let mut t = Tally::new("diffeo_compose_invert_roundtrip", 1e-8);
    for _ in 0..(samples / 20).max(2) {
        // one mode: higher modes of the same size push the inverse's
        // spectrum past the frequency cap
        let terms = [(
            1,
            rng.gen_range(-0.035..0.035),
            rng.gen_range(-0.035..0.035),
        )];
        let h =
            CircleDiffeo::from_trig(rng.gen_range(-0.5..0.5), &terms, params).ctx("proptest")?;
        let id = h.compose(&h.invert().ctx("proptest")?).ctx("proptest")?;
        t.record(circle_diffeo::dr(&id, &CircleDiffeo::identity(params), 3).ctx("proptest")?);
    }
    checks.push(t.check);

    let mut t = Tally::new("group_distance_symmetric", 1e-12);
    let kind = GroupKind::Matrix(MatrixGroup::Gl, 2);
    for _ in 0..samples {
        let m1 = DMatrix::from_fn(
            2,
            2,
            |i, j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3),
        );
        let m2 = DMatrix::from_fn(
            2,
            2,
            |i, j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3),
        );
        let a = GroupElement::matrix(MatrixGroup::Gl, m1).ctx("proptest")?;
        let b = GroupElement::matrix(MatrixGroup::Gl, m2).ctx("proptest")?;
        debug_assert_eq!(a.kind(), kind);
        t.record((a.dist(&b).ctx("proptest")? - b.dist(&a).ctx("proptest")?).abs());
    }
    checks.push(t.check);

    Ok(BatteryReport { checks })
}
