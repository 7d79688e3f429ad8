//! Seeded synthetic point sets for the demos: Gaussian blobs, a noisy
//! circle, and concentric rings. Noise percentages mean the standard
//! deviation of zero-mean Gaussian noise added per coordinate.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::points::PointSet;

/// Points on a circle of the given radius, angles sampled uniformly, with
/// Gaussian coordinate noise of standard deviation `sigma`.
pub fn circle_points(n: usize, radius: f64, sigma: f64, rng: &mut StdRng) -> Result<PointSet> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = if sigma > 0.0 {
                (noise.sample(rng), noise.sample(rng))
            } else {
                (0.0, 0.0)
            };
            vec![radius * a.cos() + dx, radius * a.sin() + dy]
        })
        .collect();
    PointSet::from_rows(&rows)
}

/// Three blobs, 20 points each: one wide blob (30% noise) at the origin and
/// two tight blobs (5% noise). Returns the points with their blob ids.
pub fn gen_blobs(seed: u64) -> Result<(PointSet, Vec<usize>)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let spec = [
        ([0.0, 0.0], 0.30),
        ([3.0, 0.0], 0.05),
        ([1.5, 2.6], 0.05),
    ];
    let mut rows = Vec::with_capacity(60);
    let mut labels = Vec::with_capacity(60);
    for (id, (center, sigma)) in spec.iter().enumerate() {
        let noise = Normal::new(0.0, *sigma).expect("finite sigma");
        for _ in 0..20 {
            rows.push(vec![
                center[0] + noise.sample(&mut rng),
                center[1] + noise.sample(&mut rng),
            ]);
            labels.push(id);
        }
    }
    Ok((PointSet::from_rows(&rows)?, labels))
}

/// A single circle: 30 samples, radius 1, 5% noise.
pub fn gen_circle(seed: u64) -> Result<PointSet> {
    let mut rng = StdRng::seed_from_u64(seed);
    circle_points(30, 1.0, 0.05, &mut rng)
}

/// Concentric circles of radius 1 and 2: 25 samples each, 2% noise.
/// Returns ring ids alongside the points.
pub fn gen_concentric(seed: u64) -> Result<(PointSet, Vec<usize>)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let inner = circle_points(25, 1.0, 0.02, &mut rng)?;
    let outer = circle_points(25, 2.0, 0.02, &mut rng)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(50);
    let mut labels = Vec::with_capacity(50);
    for i in 0..inner.len() {
        rows.push(inner.point(i).iter().copied().collect());
        labels.push(0);
    }
    for i in 0..outer.len() {
        rows.push(outer.point(i).iter().copied().collect());
        labels.push(1);
    }
    Ok((PointSet::from_rows(&rows)?, labels))
}
