//! Quadratic (linear-response) structures of the zero-range process: the edge
//! mobilities `K` and `M`, the associated quadratic costs, the contracted
//! quasi-GENERIC structure and the quasipotential diagnostic of `M`.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{fmt17, FlowKind, FlowModel};
use crate::geometry::dot;
use crate::hamiltonian::zr_poisson_structure;
use crate::zero_range::ZeroRangeModel;

/// Below this `|log(η_x/η_y)|` the `K` quotient is replaced by its series.
pub const K_SERIES_SWITCH: f64 = 1e-6;

/// Logarithmic mean `(a − b)/(log a − log b)`, with `Λ(a,a) = a` and
/// `Λ(a,0) = 0`.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let x = (a / b).ln();
    if x == 0.0 {
        return b;
    }
    b * x.exp_m1() / x
}

/// `(log β)² Λ(f,g) + (log β)(f − g)`: the contribution of one edge to
/// `H_M(ρ, dgrad∇V)` with `β = η_y/η_x`, `f = a`, `g = b`.
pub fn log_mean_form(beta: f64, f: f64, g: f64) -> f64 {
    let l = beta.ln();
    l * l * log_mean(f, g) + l * (f - g)
}

fn k_edge(p: f64, q: f64, eta_x: f64, eta_y: f64) -> f64 {
    let g = (eta_x * eta_y).sqrt();
    let u = 0.5 * (eta_x.ln() - eta_y.ln());
    if (2.0 * u).abs() < K_SERIES_SWITCH {
        g * ((p + q) + 0.5 * (p - q) * u + (p + q) * u * u / 6.0)
    } else {
        g * (p * u.exp_m1() - q * (-u).exp_m1()) / u
    }
}

/// Edge mobility `K` with `K F^sym + ∂_ζΨ*(F^asym) = j⁰`.
pub fn k_operator(m: &ZeroRangeModel, rho: &[f64]) -> Result<Vec<f64>> {
    m.grad_v_raw(rho)?;
    let eta = m.eta_values(rho)?;
    let (p, q) = m.edge_weights();
    Ok(m.nodes().edges().enumerate().map(|(k, (x, y))| k_edge(p[k], q[k], eta[x], eta[y])).collect())
}

/// Edge mobility `M = 2Λ(a, b)` with `M F = j⁰`.
pub fn m_operator(m: &ZeroRangeModel, rho: &[f64]) -> Result<Vec<f64>> {
    let r = m.edge_rates(rho)?;
    Ok(r.a.iter().zip(&r.b).map(|(a, b)| 2.0 * log_mean(*a, *b)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Quadratisation {
    /// Symmetric force linearised, antisymmetric flux kept.
    K,
    /// Whole force linearised.
    M,
}

impl FromStr for Quadratisation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(Quadratisation::K),
            "M" | "m" => Ok(Quadratisation::M),
            other => Err(Error::input(format!("unknown quadratisation '{other}'"))),
        }
    }
}

/// Mobility and drift of a quadratisation; the drift equals `j⁰(ρ)`.
pub fn mobility_and_drift(m: &ZeroRangeModel, rho: &[f64], variant: Quadratisation) -> Result<(Vec<f64>, Vec<f64>)> {
    let (fs, fa) = m.split_raw(rho)?;
    match variant {
        Quadratisation::K => {
            let k = k_operator(m, rho)?;
            let ja = m.psi_star_gradient_raw(rho, &fa)?;
            let drift = k.iter().zip(&fs).zip(&ja).map(|((k, f), a)| k * f + a).collect();
            Ok((k, drift))
        }
        Quadratisation::M => {
            let mm = m_operator(m, rho)?;
            let drift = mm.iter().zip(&fs).zip(&fa).map(|((m, s), a)| m * (s + a)).collect();
            Ok((mm, drift))
        }
    }
}

/// `½ ‖j − drift‖²` in the inverse mobility.
pub fn quadratic_cost(m: &ZeroRangeModel, rho: &[f64], j: &[f64], variant: Quadratisation) -> Result<f64> {
    if j.len() != m.nodes().n_edges() {
        return Err(Error::input("flux has the wrong length"));
    }
    let (op, drift) = mobility_and_drift(m, rho, variant)?;
    Ok(0.5 * j.iter().zip(&drift).zip(&op).map(|((j, d), o)| (j - d).powi(2) / o).sum::<f64>())
}

/// `max |drift − j⁰|` for a quadratisation.
pub fn identity_residual(m: &ZeroRangeModel, rho: &[f64], variant: Quadratisation) -> Result<f64> {
    let (_, drift) = mobility_and_drift(m, rho, variant)?;
    let j0 = m.zero_cost_flux_raw(rho)?;
    Ok(drift.iter().zip(&j0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `K̂ = dgradᵀ K dgrad`, symmetric positive semidefinite.
pub fn contracted_operator(m: &ZeroRangeModel, rho: &[f64]) -> Result<DMatrix<f64>> {
    let k = k_operator(m, rho)?;
    let d = m.nodes().grad_matrix();
    Ok(d.transpose() * DMatrix::from_diagonal(&DVector::from_vec(k)) * d)
}

/// `½⟨dgrad ξ, K dgrad ξ⟩`.
pub fn contracted_psi_star(m: &ZeroRangeModel, rho: &[f64], xi: &[f64]) -> Result<f64> {
    let k = k_operator(m, rho)?;
    let g = m.nodes().dgrad(xi)?;
    Ok(0.5 * g.iter().zip(&k).map(|(g, k)| k * g * g).sum::<f64>())
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiGenericReport {
    pub samples: usize,
    /// `max ‖−ddiv j⁰ + ½K̂∇V − Ĵ∇E‖∞`.
    pub flux_split_residual: f64,
    /// `max ⟨∇V, −ddiv j⁰⟩`; must be `≤ 0`.
    pub max_free_energy_rate: f64,
    /// `max |Ψ̂*(ξ + θ∇E) − Ψ̂*(ξ)|` over `θ ∈ {−1, ½, 3}`.
    pub energy_degeneracy_residual: f64,
    /// `max |K̂ − K̂ᵀ|`, `max |K̂ 1|` and the smallest eigenvalue of `K̂`.
    pub asymmetry: f64,
    pub kernel_residual: f64,
    pub min_eigenvalue: f64,
    /// `max ‖Ĵ∇E‖∞`; zero under detailed balance.
    pub max_hamiltonian_field: f64,
    pub passed: bool,
}

/// Checks the contracted quasi-GENERIC conditions at the given interior states.
pub fn contracted_quasi_generic(m: &ZeroRangeModel, states: &[Vec<f64>]) -> Result<QuasiGenericReport> {
    let n = m.n();
    let ham = zr_poisson_structure(m);
    let mut rep = QuasiGenericReport {
        samples: states.len(),
        flux_split_residual: 0.0,
        max_free_energy_rate: f64::NEG_INFINITY,
        energy_degeneracy_residual: 0.0,
        asymmetry: 0.0,
        kernel_residual: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_hamiltonian_field: 0.0,
        passed: false,
    };
    for rho in states {
        m.check_state(rho)?;
        let kh = contracted_operator(m, rho)?;
        let gv = m.grad_v(rho)?;
        let rate = m.velocity(FlowKind::Full, rho)?;
        let grad_e = ham.energy_gradient(rho)?;
        let field = ham.field(rho)?;
        let diss = &kh * DVector::from_column_slice(&gv);
        for x in 0..n {
            let r = rate[x] + 0.5 * diss[x] - field[x];
            rep.flux_split_residual = rep.flux_split_residual.max(r.abs());
            rep.max_hamiltonian_field = rep.max_hamiltonian_field.max(field[x].abs());
        }
        rep.max_free_energy_rate = rep.max_free_energy_rate.max(dot(&gv, &rate));
        let xi: Vec<f64> = gv.iter().enumerate().map(|(x, g)| g + 0.1 * x as f64).collect();
        let base = contracted_psi_star(m, rho, &xi)?;
        for theta in [-1.0, 0.5, 3.0] {
            let shifted: Vec<f64> = xi.iter().zip(&grad_e).map(|(a, e)| a + theta * e).collect();
            let d = (contracted_psi_star(m, rho, &shifted)? - base).abs();
            rep.energy_degeneracy_residual = rep.energy_degeneracy_residual.max(d);
        }
        rep.asymmetry = rep.asymmetry.max((&kh - kh.transpose()).amax());
        rep.kernel_residual = rep.kernel_residual.max((&kh * DVector::from_element(n, 1.0)).amax());
        let ev = kh.symmetric_eigen().eigenvalues.min();
        rep.min_eigenvalue = rep.min_eigenvalue.min(ev);
    }
    let scale = 1e-12 * (1.0 + rep.min_eigenvalue.abs());
    rep.passed = rep.flux_split_residual < 1e-8
        && rep.max_free_energy_rate <= 1e-12
        && rep.energy_degeneracy_residual < 1e-12
        && rep.asymmetry < 1e-12
        && rep.min_eigenvalue >= -scale;
    Ok(rep)
}

/// `H_M(ρ, dgrad∇V(ρ))` as a sum of per-edge log-mean forms. Any positive
/// density is accepted; mass is not enforced.
pub fn m_structure_hje_diagnostic(m: &ZeroRangeModel, rho: &[f64]) -> Result<f64> {
    m.grad_v_raw(rho)?;
    let eta = m.eta_values(rho)?;
    let r = m.edge_rates(rho)?;
    Ok(m
        .nodes()
        .edges()
        .enumerate()
        .map(|(k, (x, y))| log_mean_form(eta[y] / eta[x], r.a[k], r.b[k]))
        .sum())
}

/// `½⟨ζ, Mζ⟩ + ⟨ζ, j⁰⟩` at `ζ = dgrad∇V`, evaluated directly.
pub fn m_structure_hamiltonian(m: &ZeroRangeModel, rho: &[f64]) -> Result<f64> {
    let zeta = m.nodes().dgrad(&m.grad_v_raw(rho)?)?;
    let mm = m_operator(m, rho)?;
    let j0 = m.zero_cost_flux_raw(rho)?;
    Ok(zeta.iter().zip(&mm).zip(&j0).map(|((z, m), j)| 0.5 * m * z * z + z * j).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct DegenerationPoint {
    pub alpha: f64,
    /// On the unnormalised path `(απ_x, (1−α)π_y, π_z)`.
    pub raw: f64,
    /// On the same path rescaled to unit mass.
    pub rescaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegenerationSeries {
    pub x: usize,
    pub y: usize,
    pub points: Vec<DegenerationPoint>,
    /// `−Σ_{z≠x} π_zQ_zx log(π_zQ_zx / (π_xQ_xz))`, the limit the raw series
    /// approaches.
    pub limit_rate_ratio: f64,
    /// `−Σ_{z≠x} π_zQ_zx log(π_zQ_xz / (π_xQ_xz))`, the alternative reading.
    pub limit_weight_ratio: f64,
    /// Raw series extrapolated linearly in `1/|log α|` from its two smallest
    /// `α`, when there are two.
    pub observed_limit: Option<f64>,
}

impl DegenerationSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
        w.write_record(["alpha", "raw", "rescaled"]).map_err(fail)?;
        for p in &self.points {
            w.write_record([fmt17(p.alpha), fmt17(p.raw), fmt17(p.rescaled)]).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// The path that empties node `x` into node `y`.
pub fn degeneration_path(m: &ZeroRangeModel, x: usize, y: usize, alpha: f64) -> Vec<f64> {
    let mut rho = m.pi().to_vec();
    rho[x] = alpha * m.pi()[x];
    rho[y] = (1.0 - alpha) * m.pi()[y];
    rho
}

pub fn m_structure_degeneration(m: &ZeroRangeModel, x: usize, y: usize, alphas: &[f64]) -> Result<DegenerationSeries> {
    let n = m.n();
    if x >= n || y >= n || x == y {
        return Err(Error::input(format!("degeneration needs two distinct nodes below {n}")));
    }
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::input(format!("alpha = {alpha} outside (0, 1)")));
        }
        let rho = degeneration_path(m, x, y, alpha);
        let mass: f64 = rho.iter().sum();
        let scaled: Vec<f64> = rho.iter().map(|r| r / mass).collect();
        points.push(DegenerationPoint {
            alpha,
            raw: m_structure_hje_diagnostic(m, &rho)?,
            rescaled: m_structure_hje_diagnostic(m, &scaled)?,
        });
    }
    let q = m.rates();
    let pi = m.pi();
    let mut rate_ratio = 0.0;
    let mut weight_ratio = 0.0;
    for z in (0..n).filter(|&z| z != x) {
        let inflow = pi[z] * q[(z, x)];
        if inflow > 0.0 {
            rate_ratio -= inflow * (inflow / (pi[x] * q[(x, z)])).ln();
            weight_ratio -= inflow * (pi[z] / pi[x]).ln();
        }
    }
    let mut by_alpha: Vec<&DegenerationPoint> = points.iter().collect();
    by_alpha.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let observed_limit = match by_alpha.as_slice() {
        [p0, p1, ..] if p0.alpha < p1.alpha => {
            let s0 = -1.0 / p0.alpha.ln();
            let s1 = -1.0 / p1.alpha.ln();
            Some(p0.raw - (p1.raw - p0.raw) / (s1 - s0) * s0)
        }
        _ => None,
    };
    Ok(DegenerationSeries {
        x,
        y,
        points,
        limit_rate_ratio: rate_ratio,
        limit_weight_ratio: weight_ratio,
        observed_limit,
    })
}
