//! Deterministic state sweeps and random test models.

use nalgebra::DMatrix;
use rand::Rng;

use crate::eta::Eta;
use crate::zero_range::ZeroRangeModel;

/// Smallest coordinate of the near-boundary sweep points.
pub const NEAR_BOUNDARY_MIN: f64 = 1e-4;

/// Puts the rounding error of a normalised vector on its largest entry so the
/// mass is 1 to the last bit that matters.
fn fix_mass(v: &mut [f64]) {
    let k = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let rest: f64 = v.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
    v[k] = 1.0 - rest;
}

/// Maps a point of the open unit cube to the simplex; uniform cube points give
/// uniform (flat Dirichlet) simplex points.
pub fn cube_to_simplex(u: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = u.iter().map(|&x| -(x.clamp(1e-12, 1.0 - 1e-12)).ln()).collect();
    let s: f64 = w.iter().sum();
    let mut v: Vec<f64> = w.iter().map(|x| x / s).collect();
    fix_mass(&mut v);
    v
}

fn sobol_point(index: u32, dims: usize, seed: u32) -> Vec<f64> {
    (0..dims)
        .map(|d| {
            // Centre of the f32 cell keeps the coordinate off 0 and 1.
            let s = sobol_burley::sample(index, d as u32, seed) as f64;
            s + 0.5 / (1u64 << 24) as f64
        })
        .collect()
}

/// `count` scrambled-Sobol points in the interior of the simplex.
pub fn sobol_simplex(n_nodes: usize, count: usize, seed: u32) -> Vec<Vec<f64>> {
    (0..count as u32)
        .map(|i| cube_to_simplex(&sobol_point(i, n_nodes, seed)))
        .collect()
}

/// Points whose smallest coordinate is exactly `NEAR_BOUNDARY_MIN`; the small
/// node cycles through the nodes.
pub fn near_boundary(n_nodes: usize, count: usize, seed: u32) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let k = i % n_nodes;
            let rest = cube_to_simplex(&sobol_point(i as u32, n_nodes - 1, seed ^ 0x9e37_79b9));
            let mut v = Vec::with_capacity(n_nodes);
            let mut it = rest.into_iter();
            for x in 0..n_nodes {
                if x == k {
                    v.push(NEAR_BOUNDARY_MIN);
                } else {
                    let r = it.next().unwrap_or(0.0);
                    v.push(NEAR_BOUNDARY_MIN.max(r * (1.0 - NEAR_BOUNDARY_MIN)));
                }
            }
            let s: f64 = v.iter().sum();
            for r in v.iter_mut() {
                *r /= s;
            }
            v[k] = NEAR_BOUNDARY_MIN;
            let kk = (k + 1) % n_nodes;
            let rest: f64 = v.iter().enumerate().filter(|(i, _)| *i != kk).map(|(_, x)| x).sum();
            v[kk] = 1.0 - rest;
            v
        })
        .collect()
}

/// The standard "for all states" sweep: 100 interior Sobol points and 10
/// near-boundary points.
pub fn standard_sweep(n_nodes: usize) -> Vec<Vec<f64>> {
    let mut pts = sobol_simplex(n_nodes, 100, 0x5eed);
    pts.extend(near_boundary(n_nodes, 10, 0x5eed));
    pts
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize) -> Vec<f64> {
    let u: Vec<f64> = (0..n_nodes).map(|_| rng.gen::<f64>()).collect();
    cube_to_simplex(&u)
}

/// Random irreducible model with all off-diagonal rates in `[0.2, 3)`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize, eta: Eta) -> ZeroRangeModel {
    let q = DMatrix::from_fn(n_nodes, n_nodes, |x, y| {
        if x == y {
            0.0
        } else {
            rng.gen_range(0.2..3.0)
        }
    });
    ZeroRangeModel::with_uniform_eta(q, None, eta).expect("dense positive rates are irreducible")
}

/// Random detailed-balance model: symmetric conductances over random weights.
pub fn random_db_model<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize, eta: Eta) -> ZeroRangeModel {
    let w: Vec<f64> = (0..n_nodes).map(|_| rng.gen_range(0.5..2.0)).collect();
    let total: f64 = w.iter().sum();
    let mut pi: Vec<f64> = w.iter().map(|x| x / total).collect();
    fix_mass(&mut pi);
    let mut cond = DMatrix::zeros(n_nodes, n_nodes);
    for x in 0..n_nodes {
        for y in x + 1..n_nodes {
            let c = rng.gen_range(0.2..2.0);
            cond[(x, y)] = c;
            cond[(y, x)] = c;
        }
    }
    let q = DMatrix::from_fn(n_nodes, n_nodes, |x, y| cond[(x, y)] / pi[x]);
    ZeroRangeModel::with_uniform_eta(q, Some(pi), eta).expect("conductance model is valid")
}
