//! Node/edge geometry of the complete graph on `n` nodes.
//!
//! Edges are the ordered pairs `(x, y)` with `x < y`, enumerated
//! lexicographically. Every edge-indexed vector in the crate uses this layout.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass tolerance for a point on the simplex.
pub const MASS_TOL: f64 = 1e-12;
/// Entries in `[-NEG_TOL, 0)` are clipped to zero, anything below is an error.
pub const NEG_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSet {
    n: usize,
}

impl NodeSet {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("need at least 2 nodes, got {n}")));
        }
        Ok(NodeSet { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_edges(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |x| (x + 1..self.n).map(move |y| (x, y)))
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().collect()
    }

    /// Position of edge `(x, y)`, `x < y`, in the lexicographic layout.
    pub fn edge_index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < y && y < self.n);
        x * self.n - x * (x + 1) / 2 + (y - x - 1)
    }

    fn check_nodes(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::input(format!(
                "{what} has length {}, expected {} nodes",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_edges(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.n_edges() {
            return Err(Error::input(format!(
                "{what} has length {}, expected {} edges",
                v.len(),
                self.n_edges()
            )));
        }
        Ok(())
    }

    /// `(ddiv j)_x = Σ_{y>x} j_xy − Σ_{y<x} j_yx`.
    pub fn ddiv(&self, j: &[f64]) -> Result<Vec<f64>> {
        self.check_edges(j, "flux")?;
        let mut out = vec![0.0; self.n];
        for (k, (x, y)) in self.edges().enumerate() {
            out[x] += j[k];
            out[y] -= j[k];
        }
        Ok(out)
    }

    /// `(dgrad ξ)_xy = ξ_y − ξ_x`.
    pub fn dgrad(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(xi, "node covector")?;
        Ok(self.edges().map(|(x, y)| xi[y] - xi[x]).collect())
    }

    /// Cumulative-flux reconstruction `ρ0 − ddiv w`. The result may leave the
    /// simplex; callers validate.
    pub fn continuity_reconstruct(&self, rho0: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(rho0, "initial state")?;
        let d = self.ddiv(w)?;
        Ok(rho0.iter().zip(&d).map(|(r, d)| r - d).collect())
    }

    /// Matrix of `dgrad` (edges × nodes). Its transpose is `−ddiv`.
    pub fn grad_matrix(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_edges(), self.n);
        for (k, (x, y)) in self.edges().enumerate() {
            g[(k, x)] = -1.0;
            g[(k, y)] = 1.0;
        }
        g
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pair_edges(zeta: &[f64], j: &[f64]) -> Result<f64> {
    if zeta.len() != j.len() {
        return Err(Error::input("edge pairing of mismatched lengths"));
    }
    Ok(dot(zeta, j))
}

/// Pairing of a node covector (mod constants) with a mass-free node vector.
pub fn pair_nodes(xi: &[f64], u: &[f64]) -> Result<f64> {
    if xi.len() != u.len() {
        return Err(Error::input("node pairing of mismatched lengths"));
    }
    let total: f64 = u.iter().sum();
    if total.abs() > 1e-10 {
        return Err(Error::input(format!(
            "node pairing needs a zero-sum vector, got sum {total:e}"
        )));
    }
    Ok(dot(xi, u))
}

/// Equality of node covectors modulo constants.
pub fn covectors_equal(a: &[f64], b: &[f64], tol: f64) -> bool {
    if a.len() != b.len() || a.is_empty() {
        return false;
    }
    let shift = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    a.iter().zip(b).all(|(x, y)| (x - y - shift).abs() <= tol)
}

/// A validated point on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(mut rho: Vec<f64>) -> Result<Self> {
        check_state(&mut rho)?;
        Ok(State(rho))
    }

    pub fn uniform(n: usize) -> Self {
        State(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&r| r > 0.0)
    }
}

impl std::ops::Deref for State {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Validates a density in place, clipping rounding-level negatives.
pub fn check_state(rho: &mut [f64]) -> Result<()> {
    if rho.iter().any(|r| !r.is_finite()) {
        return Err(Error::input("state has non-finite entries"));
    }
    for r in rho.iter_mut() {
        if *r < -NEG_TOL {
            return Err(Error::input(format!("state has negative entry {r:e}")));
        }
        if *r < 0.0 {
            *r = 0.0;
        }
    }
    let mass: f64 = rho.iter().sum();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::input(format!("state mass {mass} differs from 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three() -> NodeSet {
        NodeSet::new(3).unwrap()
    }

    #[test]
    fn edge_layout_is_lexicographic() {
        let ns = NodeSet::new(4).unwrap();
        let edges = ns.edge_list();
        assert_eq!(edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for (k, (x, y)) in edges.into_iter().enumerate() {
            assert_eq!(ns.edge_index(x, y), k);
        }
        assert!(NodeSet::new(1).is_err());
    }

    #[test]
    fn ddiv_examples() {
        let ns = three();
        assert_eq!(ns.ddiv(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, -1.0, 0.0]);
        assert_eq!(ns.ddiv(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        for c in [0.3, -2.0, 7.5] {
            let d = ns.ddiv(&[c, -c, c]).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-15));
        }
        assert!(ns.ddiv(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn dgrad_examples() {
        let ns = three();
        assert_eq!(ns.dgrad(&[0.0, 1.0, 0.0]).unwrap(), vec![1.0, 0.0, -1.0]);
        assert_eq!(ns.dgrad(&[4.0, 4.0, 4.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(ns.dgrad(&[0.0, 1.0, 2.0]).unwrap(), vec![1.0, 2.0, 1.0]);
        assert!(ns.dgrad(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn continuity_examples() {
        let ns = three();
        let r = [0.2, 0.3, 0.5];
        assert_eq!(ns.continuity_reconstruct(&r, &[0.0; 3]).unwrap(), r.to_vec());
        assert_eq!(
            ns.continuity_reconstruct(&[1.0, 0.0, 0.0], &[0.5, 0.0, 0.0]).unwrap(),
            vec![0.5, 0.5, 0.0]
        );
        let third = 1.0 / 3.0;
        let out = ns
            .continuity_reconstruct(&[third; 3], &[0.25, -0.25, 0.25])
            .unwrap();
        assert!(out.iter().all(|v| (v - third).abs() < 1e-15));
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_edges(&[1.0, 2.0, 3.0], &[1.0, 0.0, -1.0]).unwrap(), -2.0);
        assert_eq!(pair_edges(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap(), 0.0);
        let ns = three();
        let xi = [0.0, 1.0, 0.0];
        let j = [1.0, 0.0, 0.0];
        let lhs = pair_edges(&ns.dgrad(&xi).unwrap(), &j).unwrap();
        let div: Vec<f64> = ns.ddiv(&j).unwrap().iter().map(|v| -v).collect();
        assert_eq!(lhs, 1.0);
        assert_eq!(pair_nodes(&xi, &div).unwrap(), 1.0);
        assert!(pair_nodes(&xi, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(State::new(vec![0.5, 0.5]).is_ok());
        let s = State::new(vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(s[1], 0.0);
        assert!(State::new(vec![1.1, -0.1]).is_err());
        assert!(State::new(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn grad_matrix_matches_dgrad() {
        let ns = NodeSet::new(4).unwrap();
        let xi = nalgebra::DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let g = ns.grad_matrix() * &xi;
        assert_eq!(g.as_slice(), ns.dgrad(xi.as_slice()).unwrap().as_slice());
    }

    proptest! {
        #[test]
        fn adjointness(n in 2usize..7, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ns = NodeSet::new(n).unwrap();
            let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let j: Vec<f64> = (0..ns.n_edges()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lhs = pair_edges(&ns.dgrad(&xi).unwrap(), &j).unwrap();
            let d = ns.ddiv(&j).unwrap();
            let rhs: f64 = -dot(&xi, &d);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-12);
            let shifted: Vec<f64> = xi.iter().map(|v| v + 1.75).collect();
            let a = ns.dgrad(&xi).unwrap();
            let b = ns.dgrad(&shifted).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-14);
            }
        }
    }
}
