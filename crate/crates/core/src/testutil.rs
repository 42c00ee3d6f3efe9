//! Seeded generators shared by unit, property, and acceptance tests.

use crate::linalg::Matrix;
use crate::market::{MarketSpec, ModelProfile, SimplexPoint};
use crate::rng::CounterRng;

/// The reference two-feature market used throughout the test suites:
/// independent zero-mean features with variances 3 and 7, unit noise,
/// zero base model, one agent with the given influence.
pub fn market_diag37(lambda: f64) -> MarketSpec {
    MarketSpec::new(
        vec![lambda],
        vec![0.0, 0.0],
        Matrix::diag(&[3.0, 7.0]),
        vec![0.0, 0.0],
        1.0,
    )
    .unwrap()
}

/// Coordinate-swapped variant of [`market_diag37`] (variances 7 and 3), so
/// the reduced map's asymptotic fixed point falls below one half.
pub fn market_diag73(lambda: f64) -> MarketSpec {
    MarketSpec::new(
        vec![lambda],
        vec![0.0, 0.0],
        Matrix::diag(&[7.0, 3.0]),
        vec![0.0, 0.0],
        1.0,
    )
    .unwrap()
}

/// Random symmetric positive-definite market with moderate moments.
pub fn random_spec(rng: &mut CounterRng, d: usize, n: usize) -> MarketSpec {
    let a = random_spd(rng, d);
    let theta0: Vec<f64> = (0..d).map(|_| rng.uniform_in(-0.5, 0.5)).collect();
    let c: Vec<f64> = (0..d).map(|_| rng.uniform_in(-0.5, 0.5)).collect();
    let lambda: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.5, 2.0)).collect();
    let sigma0_sq = rng.uniform_in(0.5, 2.0);
    MarketSpec::new(lambda, theta0, a, c, sigma0_sq).unwrap()
}

/// Random spd matrix `B B' + I/2`; bitwise symmetric by construction.
pub fn random_spd(rng: &mut CounterRng, d: usize) -> Matrix {
    let b: Vec<f64> = (0..d * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = if i == j { 0.5 } else { 0.0 };
            for k in 0..d {
                s += b[i * d + k] * b[j * d + k];
            }
            a.set(i, j, s);
        }
    }
    a
}

/// Random diagonally dominant 2x2 market (diagonal entries dominate the
/// off-diagonal one), as required by the reduced-map analysis.
pub fn random_diag_dominant_2x2(rng: &mut CounterRng) -> MarketSpec {
    let a11 = rng.uniform_in(2.0, 6.0);
    let a22 = rng.uniform_in(2.0, 6.0);
    let off = rng.uniform_in(-0.4, 0.4) * a11.min(a22);
    let a = Matrix::from_row_major(2, 2, vec![a11, off, off, a22]).unwrap();
    let theta0 = vec![rng.uniform_in(-0.2, 0.2), rng.uniform_in(-0.2, 0.2)];
    let lambda = vec![rng.uniform_in(0.5, 2.0)];
    MarketSpec::new(lambda, theta0, a, vec![0.0, 0.0], 1.0).unwrap()
}

/// Dirichlet(1,...,1)-style random simplex point with an optional floor on
/// the smallest coordinate (resampled until satisfied).
pub fn random_simplex(rng: &mut CounterRng, d: usize, min_coord: f64) -> SimplexPoint {
    loop {
        let raw: Vec<f64> = (0..d).map(|_| -rng.next_uniform().ln()).collect();
        let point = SimplexPoint::normalized(raw).unwrap();
        if point.coords().iter().all(|&v| v >= min_coord) {
            return point;
        }
    }
}

pub fn random_interior_profile(
    rng: &mut CounterRng,
    spec: &MarketSpec,
    min_coord: f64,
) -> ModelProfile {
    let models = (0..spec.n())
        .map(|_| random_simplex(rng, spec.d(), min_coord))
        .collect();
    ModelProfile::new(models).unwrap()
}
