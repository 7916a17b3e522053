use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, a) in points.iter().zip(out.iter_mut()) {
        *a = nearest(p, centers);
        inertia += sq_dist(p, &centers[*a]);
    }
    inertia
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[idx] = true;
        centers.push(points[idx].clone());
        let c = centers.last().expect("just pushed");
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded at
/// the point farthest from its current center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iterations: usize) -> Result<KMeansFit> {
    if k == 0 || points.len() < k {
        return Err(Error::TooFewSamples {
            have: points.len(),
            need: k.max(1),
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("points have differing dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0; points.len()];
    let mut inertia = assign(points, &centers, &mut assignments);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centers[assignments[i]]);
                        let dj = sq_dist(&points[j], &centers[assignments[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("k <= n leaves a free point");
                taken[far] = true;
                centers[c] = points[far].clone();
            }
        }
        let previous = assignments.clone();
        inertia = assign(points, &centers, &mut assignments);
        trace.push(inertia);
        if previous == assignments {
            break;
        }
    }
    Ok(KMeansFit {
        centers,
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}
