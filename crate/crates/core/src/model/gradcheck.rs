use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::FlatParams;

pub const MIN_CHECKED_COORDS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences
/// `(L(θ + ε e_i) - L(θ - ε e_i)) / 2ε` on a seeded subsample of at least
/// [`MIN_CHECKED_COORDS`] coordinates (all of them for small models).
/// Relative error uses the denominator `max(|g_i|, 1e-8)`.
pub fn finite_diff_check<P, F>(
    params: &P,
    loss: F,
    analytic: &[f64],
    epsilon: f64,
    coords: usize,
    seed: u64,
) -> GradCheckReport
where
    P: FlatParams + Clone,
    F: Fn(&P) -> f64,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let n = params.len();
    let want = coords.max(MIN_CHECKED_COORDS);
    let picks: Vec<usize> = if n <= want {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, n, want).into_vec();
        v.sort_unstable();
        v
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: picks.first().copied().unwrap_or(0),
        checked: picks.len(),
    };
    for &i in &picks {
        let orig = work.get(i);
        work.set(i, orig + epsilon);
        let up = loss(&work);
        work.set(i, orig - epsilon);
        let down = loss(&work);
        work.set(i, orig);
        let numeric = (up - down) / (2.0 * epsilon);
        let g = analytic[i];
        let err = (numeric - g).abs() / g.abs().max(1e-8);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst = i;
        }
    }
    report
}
