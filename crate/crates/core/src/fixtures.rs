//! Standard systems used by tests, the acceptance suite and the CLI.

use crate::error::Result;
use crate::torus::ToralAutomorphism;

/// `[[2, 1], [1, 1]]`.
pub fn cat_map() -> ToralAutomorphism {
    ToralAutomorphism::new(&[vec![2, 1], vec![1, 1]]).expect("cat map is hyperbolic")
}

fn companion(c: [i64; 4]) -> Vec<Vec<i64>> {
    // x⁴ + c3 x³ + c2 x² + c1 x + c0
    vec![
        vec![0, 1, 0, 0],
        vec![0, 0, 1, 0],
        vec![0, 0, 0, 1],
        vec![-c[0], -c[1], -c[2], -c[3]],
    ]
}

/// Companion matrix of `x⁴ + a x³ + b x² + a x + 1` for the first `(a, b)`
/// (by `|a| + |b|`, then `a`, then `b`) whose stable eigenvalues form a
/// non-real conjugate pair with argument away from `πℚ` of small height.
/// With `y = x + 1/x` the roots solve `y² + a y + b − 2 = 0`; a negative
/// discriminant `a² − 4(b − 2) < 0` keeps every root off the unit circle
/// and makes the stable pair non-real.
pub fn conformal_pair_4d() -> ToralAutomorphism {
    let mut candidates: Vec<(i64, i64)> = (-4i64..=4)
        .flat_map(|a| (-4i64..=6).map(move |b| (a, b)))
        .filter(|&(a, b)| a * a - 4 * (b - 2) < 0)
        .collect();
    candidates.sort_by_key(|&(a, b)| (a.abs() + b.abs(), a, b));
    for (a, b) in candidates {
        let Ok(sys) = ToralAutomorphism::new(&companion([1, a, b, a])) else {
            continue;
        };
        if sys.stable_dim() != 2 {
            continue;
        }
        let stable: Vec<_> = sys
            .eigenvalues()
            .iter()
            .filter(|e| e.modulus() < 1.0)
            .cloned()
            .collect();
        let theta = stable[0].im.atan2(stable[0].re).abs();
        // rotation by θ per step must not be a rational multiple of π with
        // small denominator
        let rational = (1..=12).any(|q| {
            let t = theta * q as f64 / std::f64::consts::PI;
            (t - t.round()).abs() < 1e-9
        });
        if stable[0].im.abs() > 1e-6 && !rational {
            return sys;
        }
    }
    unreachable!("the search box contains admissible polynomials")
}

/// Block diagonal `diag([[2,1],[1,1]], [[3,1],[2,1]])`, whose stable
/// eigenvalues `(3 − √5)/2` and `2 − √3` are real and distinct, so the
/// stable bundle carries no invariant conformal structure.
pub fn diagonal_4d() -> ToralAutomorphism {
    ToralAutomorphism::new(&[
        vec![2, 1, 0, 0],
        vec![1, 1, 0, 0],
        vec![0, 0, 3, 1],
        vec![0, 0, 2, 1],
    ])
    .expect("blocks are hyperbolic")
}

/// Looks a fixture up by name: `cat`, `conformal4`, `diagonal4`.
pub fn by_name(name: &str) -> Option<ToralAutomorphism> {
    match name {
        "cat" => Some(cat_map()),
        "conformal4" => Some(conformal_pair_4d()),
        "diagonal4" => Some(diagonal_4d()),
        _ => None,
    }
}

/// System from explicit integer rows.
pub fn from_rows(rows: &[Vec<i64>]) -> Result<ToralAutomorphism> {
    ToralAutomorphism::new(rows)
}
