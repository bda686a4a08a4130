//! The zero-range process on the complete graph: rates, typical flux, cost,
//! Hamiltonian, dissipation potentials, forces and quasipotential.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eta::Eta;
use crate::geometry::{dot, NodeSet, MASS_TOL, NEG_TOL};

/// Per-edge scalar formulas. `a` is the forward rate `π_x Q_xy η_x`, `b` the
/// backward rate `π_y Q_yx η_y`, and `two_c = 2√(ab)`.
pub mod edge {
    /// Relative entropy `s(x|y) = x log(x/y) − x + y`, extended by continuity.
    pub fn entropy(x: f64, y: f64) -> f64 {
        if x < 0.0 || y < 0.0 {
            return f64::INFINITY;
        }
        if x == 0.0 {
            return y;
        }
        if y == 0.0 {
            return f64::INFINITY;
        }
        x * (x / y).ln() - x + y
    }

    /// Optimal forward one-way flux for net flux `j`; the backward one-way
    /// flux is `ab / j⁺`.
    pub fn forward_flux(j: f64, a: f64, b: f64) -> f64 {
        let r = j.hypot(2.0 * a.sqrt() * b.sqrt());
        if j >= 0.0 {
            0.5 * (j + r)
        } else {
            2.0 * a * b / (r - j)
        }
    }

    pub fn cost(j: f64, a: f64, b: f64) -> f64 {
        match (a > 0.0, b > 0.0) {
            (false, false) => {
                if j == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            (false, true) => {
                if j > 0.0 {
                    f64::INFINITY
                } else {
                    entropy(-j, b)
                }
            }
            (true, false) => {
                if j < 0.0 {
                    f64::INFINITY
                } else {
                    entropy(j, a)
                }
            }
            (true, true) => {
                let jp = forward_flux(j, a, b);
                let jm = a * b / jp;
                entropy(jp, a) + entropy(jm, b)
            }
        }
    }

    /// `∂L/∂j = log(j⁺/a)`.
    pub fn cost_slope(j: f64, a: f64, b: f64) -> f64 {
        if a > 0.0 && b > 0.0 {
            (forward_flux(j, a, b) / a).ln()
        } else {
            f64::NAN
        }
    }

    /// `∂²L/∂j² = 1/√(j² + 4ab)`.
    pub fn cost_curvature(j: f64, a: f64, b: f64) -> f64 {
        1.0 / j.hypot(2.0 * a.sqrt() * b.sqrt())
    }

    pub fn hamiltonian(zeta: f64, a: f64, b: f64) -> f64 {
        let mut h = 0.0;
        if a > 0.0 {
            h += a * zeta.exp_m1();
        }
        if b > 0.0 {
            h += b * (-zeta).exp_m1();
        }
        h
    }

    /// `2c (cosh ζ − 1)`.
    pub fn psi_star(zeta: f64, two_c: f64) -> f64 {
        if two_c == 0.0 {
            return 0.0;
        }
        let s = (0.5 * zeta).sinh();
        2.0 * two_c * s * s
    }

    pub fn psi_star_slope(zeta: f64, two_c: f64) -> f64 {
        two_c * zeta.sinh()
    }

    /// Legendre dual of `cosh`: `v asinh v − √(1+v²)`.
    pub fn cosh_star(v: f64) -> f64 {
        v * v.asinh() - v.hypot(1.0)
    }

    pub fn psi(j: f64, two_c: f64) -> f64 {
        if two_c == 0.0 {
            return if j == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let v = j / two_c;
        // cosh*(v) + 1 = v asinh v − v²/(1+√(1+v²)), free of cancellation.
        let r = v.hypot(1.0);
        two_c * (v * v.asinh() - v * v / (1.0 + r))
    }
}

/// Outcome of [`validate_model`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub n_nodes: usize,
    pub irreducible: bool,
    pub stationarity_residual: f64,
    pub pi: Vec<f64>,
    pub eta_ok: bool,
    pub detailed_balance: bool,
    pub detailed_balance_residual: f64,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

fn generator(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut g = q.clone();
    for x in 0..n {
        g[(x, x)] = 0.0;
        let out: f64 = g.row(x).iter().sum();
        g[(x, x)] = -out;
    }
    g
}

fn check_rate_matrix(q: &DMatrix<f64>) -> Result<()> {
    if q.nrows() != q.ncols() || q.nrows() < 2 {
        return Err(Error::ModelInvalid(format!(
            "rate matrix must be square with at least 2 nodes, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    for x in 0..q.nrows() {
        for y in 0..q.ncols() {
            let v = q[(x, y)];
            if x != y && (!v.is_finite() || v < 0.0) {
                return Err(Error::ModelInvalid(format!("rate Q[{x}][{y}] = {v} is not a nonnegative number")));
            }
        }
    }
    Ok(())
}

/// Strong connectivity of the directed graph `{x → y : Q_xy > 0}`.
pub fn is_irreducible(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let r = if forward { q[(x, y)] } else { q[(y, x)] };
                if y != x && r > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Normalised solution of `Qᵀπ = 0`.
pub fn stationary_weights(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_rate_matrix(q)?;
    let n = q.nrows();
    let gt = generator(q).transpose();
    let sv = gt.clone().singular_values();
    let scale = sv.max().max(f64::MIN_POSITIVE);
    let null_dim = sv.iter().filter(|&&s| s <= 1e-12 * scale).count();
    if null_dim > 1 || !is_irreducible(q) {
        return Err(Error::ModelInvalid(format!(
            "rate matrix is reducible (stationary null space has dimension {})",
            null_dim.max(2)
        )));
    }
    // Replace the last balance equation by the normalisation.
    let mut a = gt;
    for y in 0..n {
        a[(n - 1, y)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("stationary system is singular".into()))?;
    Ok(pi.iter().copied().collect())
}

fn stationarity_residual(q: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let g = generator(q);
    let p = DVector::from_column_slice(pi);
    (g.transpose() * p).amax()
}

pub fn validate_model(q: &DMatrix<f64>, pi: Option<&[f64]>, eta: &[Eta]) -> ValidationReport {
    let n = q.nrows();
    let mut problems = Vec::new();
    if let Err(e) = check_rate_matrix(q) {
        problems.push(e.to_string());
        return ValidationReport {
            n_nodes: n,
            irreducible: false,
            stationarity_residual: f64::NAN,
            pi: Vec::new(),
            eta_ok: false,
            detailed_balance: false,
            detailed_balance_residual: f64::NAN,
            problems,
        };
    }
    let irreducible = is_irreducible(q);
    if !irreducible {
        problems.push("rate matrix is reducible".into());
    }
    let pi: Vec<f64> = match pi {
        Some(p) => p.to_vec(),
        None => stationary_weights(q).unwrap_or_default(),
    };
    let mut residual = f64::NAN;
    if pi.len() != n {
        problems.push(format!("stationary weights have length {}, expected {n}", pi.len()));
    } else {
        residual = stationarity_residual(q, &pi);
        if !(residual < 1e-10) {
            problems.push(format!("stationarity residual {residual:e} exceeds 1e-10"));
        }
        if pi.iter().any(|&p| !(p > 0.0)) {
            problems.push("stationary weights must be positive".into());
        }
        let mass: f64 = pi.iter().sum();
        if (mass - 1.0).abs() > 1e-10 {
            problems.push(format!("stationary weights sum to {mass}"));
        }
    }
    let mut eta_ok = eta.len() == n;
    if !eta_ok {
        problems.push(format!("{} eta functions for {n} nodes", eta.len()));
    }
    for (x, e) in eta.iter().enumerate() {
        if let Err(err) = e.check() {
            eta_ok = false;
            problems.push(format!("node {x}: {err}"));
        }
    }
    let mut db = f64::NAN;
    if pi.len() == n {
        db = 0.0;
        for x in 0..n {
            for y in x + 1..n {
                db = db.max((pi[x] * q[(x, y)] - pi[y] * q[(y, x)]).abs());
            }
        }
    }
    ValidationReport {
        n_nodes: n,
        irreducible,
        stationarity_residual: residual,
        pi,
        eta_ok,
        detailed_balance: db <= 1e-12,
        detailed_balance_residual: db,
        problems,
    }
}

/// Forward and backward rates on each edge at a given density.
#[derive(Clone, Debug)]
pub struct EdgeRates {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl EdgeRates {
    pub fn two_c(&self, k: usize) -> f64 {
        2.0 * self.a[k].sqrt() * self.b[k].sqrt()
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ZeroRangeModel {
    nodes: NodeSet,
    q: DMatrix<f64>,
    pi: Vec<f64>,
    eta: Vec<Eta>,
    /// `π_x Q_xy` per edge.
    fwd: Vec<f64>,
    /// `π_y Q_yx` per edge.
    bwd: Vec<f64>,
}

impl ZeroRangeModel {
    /// Builds and validates a model; `pi` is solved for when absent.
    pub fn new(q: DMatrix<f64>, pi: Option<Vec<f64>>, eta: Vec<Eta>) -> Result<Self> {
        let report = validate_model(&q, pi.as_deref(), &eta);
        if !report.passed() {
            return Err(Error::ModelInvalid(report.problems.join("; ")));
        }
        let nodes = NodeSet::new(q.nrows())?;
        let pi = report.pi;
        let mut q = q;
        for x in 0..nodes.len() {
            q[(x, x)] = 0.0;
        }
        let fwd = nodes.edges().map(|(x, y)| pi[x] * q[(x, y)]).collect();
        let bwd = nodes.edges().map(|(x, y)| pi[y] * q[(y, x)]).collect();
        Ok(ZeroRangeModel { nodes, q, pi, eta, fwd, bwd })
    }

    /// Same `η` on every node.
    pub fn with_uniform_eta(q: DMatrix<f64>, pi: Option<Vec<f64>>, eta: Eta) -> Result<Self> {
        let n = q.nrows();
        Self::new(q, pi, vec![eta; n])
    }

    pub fn nodes(&self) -> NodeSet {
        self.nodes
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn eta(&self) -> &[Eta] {
        &self.eta
    }

    /// `(π_x Q_xy, π_y Q_yx)` per edge.
    pub fn edge_weights(&self) -> (&[f64], &[f64]) {
        (&self.fwd, &self.bwd)
    }

    pub fn detailed_balance_residual(&self) -> f64 {
        self.fwd
            .iter()
            .zip(&self.bwd)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_detailed_balance(&self) -> bool {
        self.detailed_balance_residual() <= 1e-12
    }

    pub fn generator(&self) -> DMatrix<f64> {
        generator(&self.q)
    }

    /// Smallest nonzero decay rate of the single-particle chain.
    pub fn spectral_gap(&self) -> f64 {
        let ev = self.generator().complex_eigenvalues();
        let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        ev.iter()
            .map(|z| -z.re)
            .filter(|&r| r > 1e-10 * scale)
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks a density: right length, finite, nonnegative up to rounding.
    /// Mass is not checked here.
    fn check_density(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.n() {
            return Err(Error::input(format!("state has length {}, expected {}", rho.len(), self.n())));
        }
        for &r in rho {
            if !r.is_finite() || r < -NEG_TOL {
                return Err(Error::input(format!("invalid density entry {r}")));
            }
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, rho: &[f64]) -> Result<()> {
        self.check_density(rho)?;
        let mass: f64 = rho.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::input(format!("state mass {mass} differs from 1")));
        }
        Ok(())
    }

    fn check_interior(&self, rho: &[f64]) -> Result<()> {
        self.check_density(rho)?;
        if let Some(x) = rho.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::Boundary(format!("density vanishes at node {x}")));
        }
        Ok(())
    }

    /// `η_x(ρ_x/π_x)` at every node.
    pub fn eta_values(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_density(rho)?;
        Ok(rho
            .iter()
            .zip(&self.pi)
            .zip(&self.eta)
            .map(|((&r, &p), e)| e.eval(r.max(0.0) / p))
            .collect())
    }

    /// Edge rates for any nonnegative density (mass not enforced).
    pub fn edge_rates(&self, rho: &[f64]) -> Result<EdgeRates> {
        let eta = self.eta_values(rho)?;
        let mut a = Vec::with_capacity(self.fwd.len());
        let mut b = Vec::with_capacity(self.fwd.len());
        for (k, (x, y)) in self.nodes.edges().enumerate() {
            a.push(self.fwd[k] * eta[x]);
            b.push(self.bwd[k] * eta[y]);
        }
        Ok(EdgeRates { a, b })
    }

    fn state_rates(&self, rho: &[f64]) -> Result<EdgeRates> {
        self.check_state(rho)?;
        self.edge_rates(rho)
    }

    fn check_edges(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.nodes.n_edges() {
            return Err(Error::input(format!(
                "edge vector has length {}, expected {}",
                v.len(),
                self.nodes.n_edges()
            )));
        }
        Ok(())
    }

    pub fn zero_cost_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_state(rho)?;
        self.zero_cost_flux_raw(rho)
    }

    pub(crate) fn zero_cost_flux_raw(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let r = self.edge_rates(rho)?;
        Ok(r.a.iter().zip(&r.b).map(|(a, b)| a - b).collect())
    }

    pub fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.check_edges(j)?;
        let r = self.state_rates(rho)?;
        Ok(j.iter().enumerate().map(|(k, &jk)| edge::cost(jk, r.a[k], r.b[k])).sum())
    }

    pub fn cost_gradient(&self, rho: &[f64], j: &[f64]) -> Result<Vec<f64>> {
        self.check_edges(j)?;
        let r = self.state_rates(rho)?;
        let g: Vec<f64> = j.iter().enumerate().map(|(k, &jk)| edge::cost_slope(jk, r.a[k], r.b[k])).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Boundary("cost is not differentiable at a vanishing rate".into()));
        }
        Ok(g)
    }

    pub fn cost_curvature(&self, rho: &[f64], j: &[f64]) -> Result<Vec<f64>> {
        self.check_edges(j)?;
        let r = self.state_rates(rho)?;
        Ok(j.iter().enumerate().map(|(k, &jk)| edge::cost_curvature(jk, r.a[k], r.b[k])).collect())
    }

    pub fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.check_edges(zeta)?;
        let r = self.state_rates(rho)?;
        Ok(zeta.iter().enumerate().map(|(k, &z)| edge::hamiltonian(z, r.a[k], r.b[k])).sum())
    }

    pub fn psi_star(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.check_edges(zeta)?;
        let r = self.state_rates(rho)?;
        Ok(zeta.iter().enumerate().map(|(k, &z)| edge::psi_star(z, r.two_c(k))).sum())
    }

    /// `∂_ζ Ψ*(ρ, ζ)`, a flux.
    pub fn psi_star_gradient(&self, rho: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        self.check_state(rho)?;
        self.psi_star_gradient_raw(rho, zeta)
    }

    pub(crate) fn psi_star_gradient_raw(&self, rho: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        self.check_edges(zeta)?;
        let r = self.edge_rates(rho)?;
        Ok(zeta.iter().enumerate().map(|(k, &z)| edge::psi_star_slope(z, r.two_c(k))).collect())
    }

    pub fn psi(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.check_edges(j)?;
        let r = self.state_rates(rho)?;
        Ok(j.iter().enumerate().map(|(k, &jk)| edge::psi(jk, r.two_c(k))).sum())
    }

    /// Edges with no rate in either direction carry no force.
    fn is_absent_edge(&self, k: usize) -> bool {
        self.fwd[k] == 0.0 && self.bwd[k] == 0.0
    }

    /// `F_xy = ½ log(a/b)`.
    pub fn force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_state(rho)?;
        self.force_raw(rho)
    }

    pub(crate) fn force_raw(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(rho)?;
        let (fsym, fasym) = self.split_raw(rho)?;
        Ok(fsym.iter().zip(&fasym).map(|(s, a)| s + a).collect())
    }

    /// `(F^sym, F^asym)` with `F^sym_xy = ½ log(η_x/η_y)` and
    /// `F^asym_xy = ½ log(π_x Q_xy / π_y Q_yx)`.
    pub fn force_split(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(rho)?;
        self.split_raw(rho)
    }

    pub(crate) fn split_raw(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_interior(rho)?;
        let fasym = self.antisymmetric_force()?;
        let log_eta = self.log_eta_raw(rho);
        let fsym = self.nodes.edges().map(|(x, y)| 0.5 * (log_eta[x] - log_eta[y])).collect();
        Ok((fsym, fasym))
    }

    /// The state-independent part of the force.
    pub fn antisymmetric_force(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.fwd.len());
        for k in 0..self.fwd.len() {
            if self.is_absent_edge(k) {
                out.push(0.0);
            } else if self.fwd[k] == 0.0 || self.bwd[k] == 0.0 {
                return Err(Error::ForceUndefined(format!("edge {k} has a one-way rate")));
            } else {
                out.push(0.5 * (self.fwd[k] / self.bwd[k]).ln());
            }
        }
        Ok(out)
    }

    fn log_eta_raw(&self, rho: &[f64]) -> Vec<f64> {
        rho.iter()
            .zip(&self.pi)
            .zip(&self.eta)
            .map(|((&r, &p), e)| e.log_eval(r / p))
            .collect()
    }

    /// `V(ρ) = Σ_x ∫₀^{ρ_x} log η_x(a/π_x) da`, shifted so that `V(π) = 0`.
    pub fn quasipotential(&self, rho: &[f64]) -> Result<f64> {
        self.check_state(rho)?;
        Ok(self.quasipotential_raw(rho))
    }

    pub(crate) fn quasipotential_raw(&self, rho: &[f64]) -> f64 {
        let mut v = 0.0;
        for x in 0..self.n() {
            let e = &self.eta[x];
            let p = self.pi[x];
            v += e.log_antiderivative(rho[x].max(0.0), p) - e.log_antiderivative(p, p);
        }
        v
    }

    /// `∇V_x = log η_x(ρ_x/π_x)`.
    pub fn grad_v(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_state(rho)?;
        self.grad_v_raw(rho)
    }

    pub(crate) fn grad_v_raw(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(rho)?;
        Ok(self.log_eta_raw(rho))
    }

    /// `Ψ*(ρ, F(ρ)) = Σ (√a − √b)²`.
    pub fn fisher_information(&self, rho: &[f64]) -> Result<f64> {
        let r = self.state_rates(rho)?;
        Ok(r.a.iter().zip(&r.b).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum())
    }

    /// `Σ ½(η_x − η_y)(π_x Q_xy − π_y Q_yx)`; zero by stationarity.
    pub fn global_orthogonality(&self, rho: &[f64]) -> Result<f64> {
        let eta = self.eta_values(rho)?;
        Ok(self
            .nodes
            .edges()
            .enumerate()
            .map(|(k, (x, y))| 0.5 * (eta[x] - eta[y]) * (self.fwd[k] - self.bwd[k]))
            .sum())
    }

    /// Same model with `η` replaced at every node.
    pub fn with_eta(&self, eta: Vec<Eta>) -> Result<Self> {
        Self::new(self.q.clone(), Some(self.pi.clone()), eta)
    }

    pub fn hje_residual(&self, rho: &[f64]) -> Result<f64> {
        let g = self.grad_v(rho)?;
        let zeta = self.nodes.dgrad(&g)?;
        self.hamiltonian(rho, &zeta)
    }

    /// `⟨dgrad ∇V, j⟩`.
    pub fn entropy_production_pairing(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        let g = self.grad_v(rho)?;
        Ok(dot(&self.nodes.dgrad(&g)?, j))
    }
}

/// Reference models used throughout the tests and examples.
pub mod reference {
    use super::*;

    /// Complete graph on three nodes, unit rates, uniform weights, `η = id`.
    pub fn m3() -> ZeroRangeModel {
        let q = DMatrix::from_fn(3, 3, |x, y| if x == y { 0.0 } else { 1.0 });
        ZeroRangeModel::with_uniform_eta(q, None, Eta::Identity).unwrap()
    }

    /// Three-node cycle with rate 2 along `1→2→3→1` and 1 against it.
    pub fn m3_cyc() -> ZeroRangeModel {
        ZeroRangeModel::with_uniform_eta(m3_cyc_rates(), None, Eta::Identity).unwrap()
    }

    pub fn m3_cyc_rates() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 0.0, 2.0, 2.0, 1.0, 0.0])
    }
}
