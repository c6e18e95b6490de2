//! Floating-point RK4 reference trajectories and a sampling containment check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::field::VectorField;
use crate::interval::IBox;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the start point")
    }
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

/// Classical RK4 from `x0` over `[0, horizon]` with step at most `h`.
pub fn rk4(f: &VectorField, x0: &[f64], horizon: f64, h: f64) -> Trajectory {
    let steps = ((horizon / h).ceil() as usize).max(1);
    let dt = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for s in 0..steps {
        let k1 = f.eval_vec(&x);
        let k2 = f.eval_vec(&axpy(&x, dt / 2.0, &k1));
        let k3 = f.eval_vec(&axpy(&x, dt / 2.0, &k2));
        let k4 = f.eval_vec(&axpy(&x, dt, &k3));
        for d in 0..x.len() {
            x[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        times.push((s + 1) as f64 * dt);
        states.push(x.clone());
    }
    Trajectory { times, states }
}

/// End point of the RK4 trajectory only.
pub fn rk4_end(f: &VectorField, x0: &[f64], horizon: f64, h: f64) -> Vec<f64> {
    let steps = ((horizon / h).ceil() as usize).max(1);
    let dt = horizon / steps as f64;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = f.eval_vec(&x);
        let k2 = f.eval_vec(&axpy(&x, dt / 2.0, &k1));
        let k3 = f.eval_vec(&axpy(&x, dt / 2.0, &k2));
        let k4 = f.eval_vec(&axpy(&x, dt, &k3));
        for d in 0..x.len() {
            x[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    }
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct Miss {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Distance from `end` to the nearest cover box in the max norm.
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Containment {
    pub hits: usize,
    pub misses: usize,
    pub miss_list: Vec<Miss>,
}

/// Max-norm distance from `p` to `b`; zero inside.
pub fn box_distance(b: &IBox, p: &[f64]) -> f64 {
    b.dims
        .iter()
        .zip(p)
        .map(|(d, &x)| (d.lo - x).max(x - d.hi).max(0.0))
        .fold(0.0, f64::max)
}

/// Draw `samples` uniform starts in `b0` plus its corners, integrate each to
/// `horizon`, and count end points outside the union of `boxes` inflated by `tol`.
pub fn sample_containment(
    f: &VectorField,
    b0: &IBox,
    horizon: f64,
    step: f64,
    boxes: &[IBox],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Containment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b0.n();
    let mut starts: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            b0.dims
                .iter()
                .map(|d| if d.width() > 0.0 { rng.random_range(d.lo..=d.hi) } else { d.lo })
                .collect()
        })
        .collect();
    if n <= 10 {
        for mask in 0..(1usize << n) {
            starts.push(
                (0..n)
                    .map(|i| if mask >> i & 1 == 0 { b0.dims[i].lo } else { b0.dims[i].hi })
                    .collect(),
            );
        }
    }
    let results: Vec<Option<Miss>> = starts
        .par_iter()
        .map(|s| {
            let end = rk4_end(f, s, horizon, step);
            let distance = boxes
                .iter()
                .map(|b| box_distance(b, &end))
                .fold(f64::INFINITY, f64::min);
            (distance > tol).then(|| Miss {
                start: s.clone(),
                end,
                distance,
            })
        })
        .collect();
    let miss_list: Vec<Miss> = results.into_iter().flatten().collect();
    Containment {
        hits: starts.len() - miss_list.len(),
        misses: miss_list.len(),
        miss_list,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;

    #[test]
    fn rk4_matches_exponential_decay() {
        let f = VectorField::parse(&["x"], &["-x"], &[], 4).unwrap();
        let t = rk4(&f, &[1.0], 1.0, 1e-3);
        assert_eq!(t.times.len(), 1001);
        assert!((t.last()[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_rotation_preserves_radius() {
        let f = VectorField::parse(&["x", "y"], &["-y", "x"], &[], 4).unwrap();
        let e = rk4_end(&f, &[1.0, 0.0], std::f64::consts::PI, 1e-3);
        assert!((e[0] + 1.0).abs() < 1e-10 && e[1].abs() < 1e-10);
    }

    #[test]
    fn sampling_is_seeded() {
        let f = VectorField::parse(&["x"], &["-x"], &[], 4).unwrap();
        let b0 = IBox::new(vec![Interval::new(0.9, 1.1)]);
        let target = vec![IBox::new(vec![Interval::new(0.3, 0.38)])];
        let a = sample_containment(&f, &b0, 1.0, 1e-3, &target, 50, 7, 0.0);
        let b = sample_containment(&f, &b0, 1.0, 1e-3, &target, 50, 7, 0.0);
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.hits + a.misses, 52);
        // exp(-1) * [0.9, 1.1] = [0.331, 0.405] pokes out of the target
        assert!(a.misses > 0);
        assert!(a.miss_list.iter().all(|m| m.end[0] > 0.38));
    }
}
