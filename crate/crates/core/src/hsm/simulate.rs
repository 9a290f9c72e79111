use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::hsm::{make_quadrature, HsmParams, MarkedPattern, Point, PointIndex, Window};

/// Default number of birth–death–move sweeps for [`simulate_hsm`].
pub const DEFAULT_SWEEPS: usize = 200;

fn uniform_point<R: Rng + ?Sized>(w: &Window, rng: &mut R) -> Point {
    [w.x0 + w.width() * rng.random::<f64>(), w.y0 + w.height() * rng.random::<f64>()]
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    if !mean.is_finite() || mean > 1e8 {
        return Err(Error::Domain(format!("expected point count {mean} is not simulable")));
    }
    let d = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(d.sample(rng) as usize)
}

/// Homogeneous Poisson pattern with log-intensity `beta`.
pub fn simulate_poisson<R: Rng + ?Sized>(beta: f64, window: &Window, rng: &mut R) -> Result<Vec<Point>> {
    let n = poisson_count(beta.exp() * window.area(), rng)?;
    Ok((0..n).map(|_| uniform_point(window, rng)).collect())
}

/// Draws from the hierarchical Strauss density: type 1 as a Poisson
/// pattern, then type 2 given type 1 by birth–death–move
/// Metropolis–Hastings started from a Poisson pattern. One sweep is as
/// many proposals as the expected type-2 count without interaction.
pub fn simulate_hsm<R: Rng + ?Sized>(
    params: &HsmParams,
    window: &Window,
    rng: &mut R,
    sweeps: usize,
) -> Result<MarkedPattern> {
    params.validate()?;
    let points_1 = simulate_poisson(params.beta1, window, rng)?;
    let points_2 = simulate_second_type_mh(&points_1, params, window, rng, sweeps)?;
    MarkedPattern::new(*window, points_1, points_2)
}

/// Type-2 points given type-1 points by birth–death–move MH targeting
/// `exp(n₂β₂ + θ S_R)` relative to a unit-rate Poisson process.
pub fn simulate_second_type_mh<R: Rng + ?Sized>(
    points_1: &[Point],
    params: &HsmParams,
    window: &Window,
    rng: &mut R,
    sweeps: usize,
) -> Result<Vec<Point>> {
    let index = PointIndex::new(points_1, window, params.r);
    let log_lambda = |u: Point| params.beta2 + params.theta * index.count_within(u) as f64;
    let area = window.area();
    let mut pts: Vec<Point> = simulate_poisson(params.beta2, window, rng)?;
    let mut ll: Vec<f64> = pts.iter().map(|&u| log_lambda(u)).collect();
    let per_sweep = (params.beta2.exp() * area).round().max(1.0) as usize;
    for _ in 0..sweeps * per_sweep {
        let kind: f64 = rng.random();
        if kind < 1.0 / 3.0 {
            let u = uniform_point(window, rng);
            let l = log_lambda(u);
            let log_ratio = l + area.ln() - ((pts.len() + 1) as f64).ln();
            if rng.random::<f64>().ln() < log_ratio {
                pts.push(u);
                ll.push(l);
            }
        } else if kind < 2.0 / 3.0 {
            if pts.is_empty() {
                continue;
            }
            let i = rng.random_range(0..pts.len());
            let log_ratio = (pts.len() as f64).ln() - area.ln() - ll[i];
            if rng.random::<f64>().ln() < log_ratio {
                pts.swap_remove(i);
                ll.swap_remove(i);
            }
        } else {
            if pts.is_empty() {
                continue;
            }
            let i = rng.random_range(0..pts.len());
            let u = uniform_point(window, rng);
            let l = log_lambda(u);
            if rng.random::<f64>().ln() < l - ll[i] {
                pts[i] = u;
                ll[i] = l;
            }
        }
    }
    Ok(pts)
}

/// Exact draw of type 2 given type 1 by thinning. With no within-type
/// term, type 2 given type 1 is an inhomogeneous Poisson process with
/// intensity `exp(β₂ + θ c₁(u))`; the bound on `c₁` is the type-1 count
/// in any square of side `2r`, taken over a grid of such squares.
pub fn simulate_second_type_exact<R: Rng + ?Sized>(
    points_1: &[Point],
    params: &HsmParams,
    window: &Window,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let index = PointIndex::new(points_1, window, params.r);
    let max_c = if params.theta > 0.0 { max_disc_count_bound(points_1, window, params.r) } else { 0 };
    let log_bound = params.beta2 + params.theta.max(0.0) * max_c as f64;
    let candidates = simulate_poisson(log_bound, window, rng)?;
    Ok(candidates
        .into_iter()
        .filter(|&u| {
            let l = params.beta2 + params.theta * index.count_within(u) as f64;
            rng.random::<f64>() < (l - log_bound).exp()
        })
        .collect())
}

fn max_disc_count_bound(points: &[Point], window: &Window, r: f64) -> usize {
    let nx = ((window.width() / r).ceil() as usize).max(1);
    let ny = ((window.height() / r).ceil() as usize).max(1);
    let mut bins = vec![0usize; nx * ny];
    for p in points {
        let cx = (((p[0] - window.x0) / r) as usize).min(nx - 1);
        let cy = (((p[1] - window.y0) / r) as usize).min(ny - 1);
        bins[cy * nx + cx] += 1;
    }
    // a disc of radius r meets at most a 3×3 block of side-r bins
    let mut best = 0;
    for cy in 0..ny {
        for cx in 0..nx {
            let mut s = 0;
            for y in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
                    s += bins[y * nx + x];
                }
            }
            best = best.max(s);
        }
    }
    best
}

/// `β₂` that makes the expected type-2 count equal `target` given the
/// type-1 points, computed on a quadrature of the window.
pub fn beta2_for_expected_count(
    points_1: &[Point],
    window: &Window,
    r: f64,
    theta: f64,
    target: f64,
    resolution: usize,
) -> Result<f64> {
    let q = make_quadrature(window, resolution)?;
    let index = PointIndex::new(points_1, window, r);
    let z: f64 = q
        .nodes
        .iter()
        .zip(&q.weights)
        .map(|(&u, &w)| w * (theta * index.count_within(u) as f64).exp())
        .sum();
    Ok(target.ln() - z.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsm::s_r_count;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_case_is_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Window::new(0.0, 5.0, 0.0, 4.0).unwrap();
        let h = HsmParams { beta1: 0.0, beta2: 1.0f64.ln(), theta: 0.0, r: 0.5 };
        let counts: Vec<f64> = (0..1000)
            .map(|_| simulate_hsm(&h, &w, &mut rng, 20).unwrap().n2() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / 1000.0;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 999.0;
        // Poisson(20): mean and variance both 20
        assert!((mean - 20.0).abs() < 4.0 * (20.0f64 / 1000.0).sqrt(), "{mean}");
        assert!((var / 20.0 - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn mh_matches_exact_thinning() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Window::new(0.0, 4.0, 0.0, 4.0).unwrap();
        let x1 = simulate_poisson(2.0f64.ln(), &w, &mut rng).unwrap();
        let h = HsmParams { beta1: 0.0, beta2: 0.0, theta: 0.8, r: 0.4 };
        let reps = 600;
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..reps {
            a += simulate_second_type_mh(&x1, &h, &w, &mut rng, 150).unwrap().len() as f64;
            b += simulate_second_type_exact(&x1, &h, &w, &mut rng).unwrap().len() as f64;
        }
        let (a, b) = (a / reps as f64, b / reps as f64);
        let se = (2.0 * b / reps as f64).sqrt();
        assert!((a - b).abs() < 4.0 * se + 0.5, "mh {a} exact {b}");
    }

    #[test]
    fn interaction_shifts_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = Window::new(0.0, 5.0, 0.0, 5.0).unwrap();
        let mean_pairs = |theta: f64, rng: &mut ChaCha8Rng| {
            let h = HsmParams { beta1: 2.0f64.ln(), beta2: 2.0f64.ln(), theta, r: 0.5 };
            (0..100)
                .map(|_| s_r_count(&simulate_hsm(&h, &w, rng, 30).unwrap(), h.r) as f64)
                .sum::<f64>()
                / 100.0
        };
        let neg = mean_pairs(-1.5, &mut rng);
        let zero = mean_pairs(0.0, &mut rng);
        let pos = mean_pairs(1.0, &mut rng);
        assert!(neg < zero && zero < pos, "{neg} {zero} {pos}");
    }

    #[test]
    fn calibrated_beta2_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Window::new(0.0, 10.0, 0.0, 10.0).unwrap();
        let x1 = simulate_poisson(1.0f64.ln(), &w, &mut rng).unwrap();
        let b2 = beta2_for_expected_count(&x1, &w, 0.6, 1.0, 80.0, 200).unwrap();
        let h = HsmParams { beta1: 0.0, beta2: b2, theta: 1.0, r: 0.6 };
        let m = (0..300)
            .map(|_| simulate_second_type_exact(&x1, &h, &w, &mut rng).unwrap().len() as f64)
            .sum::<f64>()
            / 300.0;
        assert!((m - 80.0).abs() < 3.0, "{m}");
    }
}
