//! Detailed-balance zero-range process on three nodes with an added
//! deterministic circulating flux, and its pre-GENERIC, GENERIC and MANERIC
//! structures.
//!
//! Every drifted quantity is computed as the base quantity plus a correction
//! that vanishes identically at zero drift, so `λ = 0` reproduces the base
//! model exactly.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{FlowKind, FlowModel};
use crate::geometry::{dot, NodeSet};
use crate::hamiltonian::{EnergyFn, GradientFn, HamiltonianStructure, SkewFn};
use crate::mft::{Capabilities, CostOracle};
use crate::zero_range::ZeroRangeModel;

/// Largest `|π_xQ_xy − π_yQ_yx|` accepted for the base model.
pub const DB_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DriftedModel {
    base: ZeroRangeModel,
    lambda: f64,
}

impl DriftedModel {
    pub fn new(base: ZeroRangeModel, lambda: f64) -> Result<Self> {
        if base.n() != 3 {
            return Err(Error::ModelInvalid("the drifted model is defined on three nodes".into()));
        }
        let res = base.detailed_balance_residual();
        if res > DB_TOL {
            return Err(Error::ModelInvalid(format!("base model violates detailed balance (residual {res:e})")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::input(format!("drift scale {lambda} must be finite and >= 0")));
        }
        let dm = DriftedModel { base, lambda };
        for rho in [[0.5, 0.3, 0.2], [0.1, 0.2, 0.7], [0.25, 0.6, 0.15]] {
            let div: Vec<f64> = dm.nodes().ddiv(&dm.deterministic_flux(&rho)?)?.iter().map(|v| -v).collect();
            let cross = dm.cross_field(&rho)?;
            let worst = div.iter().zip(&cross).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if worst > 1e-12 * (1.0 + lambda) {
                return Err(Error::ModelInvalid(format!("drift divergence disagrees with its cross-product form by {worst:e}")));
            }
        }
        Ok(dm)
    }

    pub fn base(&self) -> &ZeroRangeModel {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nodes(&self) -> NodeSet {
        self.base.nodes()
    }

    fn log_eta(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.base.grad_v_raw(rho)
    }

    /// Circulating drift `b`: `λ(ℓ₁+ℓ₂, −(ℓ₁+ℓ₃), ℓ₂+ℓ₃)` on edges
    /// `(1,2), (1,3), (2,3)` with `ℓ = log η`.
    pub fn deterministic_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let l = self.log_eta(rho)?;
        let s = self.lambda;
        Ok(vec![s * (l[0] + l[1]), -(s * (l[0] + l[2])), s * (l[1] + l[2])])
    }

    /// `λ(ℓ₃ − ℓ₂, ℓ₁ − ℓ₃, ℓ₂ − ℓ₁)`.
    fn cross_field(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let l = self.log_eta(rho)?;
        let s = self.lambda;
        Ok(vec![s * (l[2] - l[1]), s * (l[0] - l[2]), s * (l[1] - l[0])])
    }

    /// `L_s(ρ, j − b(ρ))`.
    pub fn combined_cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        let b = self.deterministic_flux(rho)?;
        if j.len() != b.len() {
            return Err(Error::input("flux has the wrong length"));
        }
        let shifted: Vec<f64> = j.iter().zip(&b).map(|(j, b)| j - b).collect();
        self.base.cost(rho, &shifted)
    }

    /// `H_s(ρ, ζ) + ⟨ζ, b(ρ)⟩`.
    pub fn combined_hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        let b = self.deterministic_flux(rho)?;
        Ok(self.base.hamiltonian(rho, zeta)? + dot(zeta, &b))
    }

    pub fn zero_cost_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let b = self.deterministic_flux(rho)?;
        let j0 = self.base.zero_cost_flux(rho)?;
        Ok(j0.iter().zip(&b).map(|(a, b)| a + b).collect())
    }

    /// `F^sym = −½ dgrad∇V` and `F^asym = F^asym_base + asinh(b / 2c)`.
    pub fn force_split(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.base.check_state(rho)?;
        self.split_raw(rho)
    }

    fn split_raw(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (fs, fa) = self.base.split_raw(rho)?;
        let b = self.deterministic_flux(rho)?;
        let r = self.base.edge_rates(rho)?;
        let fa = (0..b.len()).map(|k| fa[k] + (b[k] / r.two_c(k)).asinh()).collect();
        Ok((fs, fa))
    }

    pub fn force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let (fs, fa) = self.force_split(rho)?;
        Ok(fs.iter().zip(&fa).map(|(s, a)| s + a).collect())
    }

    /// `Σ √(b² + 4c²)(cosh ζ − 1) + (ζ − sinh ζ) b`.
    pub fn psi_star_mft(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        let base = self.base.psi_star(rho, zeta)?;
        let b = self.deterministic_flux(rho)?;
        let r = self.base.edge_rates(rho)?;
        let extra: f64 = (0..b.len())
            .map(|k| {
                let tc = r.two_c(k);
                let z = zeta[k];
                excess_radius(b[k], tc) * (z.cosh() - 1.0) + (z - z.sinh()) * b[k]
            })
            .sum();
        Ok(base + extra)
    }

    /// `∂_ζ` of [`DriftedModel::psi_star_mft`].
    pub fn psi_star_mft_gradient(&self, rho: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        let base = self.base.psi_star_gradient_raw(rho, zeta)?;
        let b = self.deterministic_flux(rho)?;
        let r = self.base.edge_rates(rho)?;
        Ok((0..b.len())
            .map(|k| {
                let z = zeta[k];
                base[k] + excess_radius(b[k], r.two_c(k)) * z.sinh() + (1.0 - z.cosh()) * b[k]
            })
            .collect())
    }

    /// `Ψ_GEN(j − b) − Ψ_GEN(−b) + ⟨asinh(b/2c), j⟩`, the dual of
    /// [`DriftedModel::psi_star_mft`].
    pub fn psi_mft(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        let b = self.deterministic_flux(rho)?;
        let r = self.base.edge_rates(rho)?;
        let shifted: Vec<f64> = j.iter().zip(&b).map(|(j, b)| j - b).collect();
        let neg: Vec<f64> = b.iter().map(|b| -b).collect();
        let tilt: f64 = (0..b.len()).map(|k| (b[k] / r.two_c(k)).asinh() * j[k]).sum();
        Ok(self.base.psi(rho, &shifted)? - self.base.psi(rho, &neg)? + tilt)
    }

    /// `(Ĵ built from log η, total mass)` and `(constant Ĵ², V)`.
    pub fn drift_hamiltonian_pair(&self) -> (HamiltonianStructure, HamiltonianStructure) {
        let s = self.lambda;
        let model = self.base.clone();
        let skew_e: SkewFn = Arc::new(move |rho: &[f64]| {
            let l = model.grad_v_raw(rho)?;
            Ok(DMatrix::from_row_slice(
                3,
                3,
                &[0.0, s * l[2], -(s * l[1]), -(s * l[2]), 0.0, s * l[0], s * l[1], -(s * l[0]), 0.0],
            ))
        });
        let mass: EnergyFn = Arc::new(|r: &[f64]| Ok(r.iter().sum()));
        let ones: GradientFn = Arc::new(|_: &[f64]| Ok(vec![1.0; 3]));
        let first = HamiltonianStructure::new(3, skew_e, mass, ones);

        let skew_v: SkewFn =
            Arc::new(move |_: &[f64]| Ok(DMatrix::from_row_slice(3, 3, &[0.0, -s, s, s, 0.0, -s, -s, s, 0.0])));
        let model = self.base.clone();
        let v: EnergyFn = Arc::new(move |r: &[f64]| Ok(model.quasipotential_raw(r)));
        let model = self.base.clone();
        let grad_v: GradientFn = Arc::new(move |r: &[f64]| model.grad_v_raw(r));
        (first, HamiltonianStructure::new(3, skew_v, v, grad_v))
    }

    /// `∂_ζΨ*_MFT(ρ, F_kind)` for any positive density.
    fn kind_flux_raw(&self, kind: FlowKind, rho: &[f64]) -> Result<Vec<f64>> {
        let base = self.base.kind_flux(kind, rho)?;
        let b = self.deterministic_flux(rho)?;
        match kind {
            FlowKind::Full | FlowKind::Antisymmetric => Ok(base.iter().zip(&b).map(|(a, b)| a + b).collect()),
            FlowKind::Symmetric => {
                let (fs, _) = self.base.split_raw(rho)?;
                let r = self.base.edge_rates(rho)?;
                Ok((0..b.len())
                    .map(|k| {
                        let z = fs[k];
                        base[k] + excess_radius(b[k], r.two_c(k)) * z.sinh() + (1.0 - z.cosh()) * b[k]
                    })
                    .collect())
            }
        }
    }
}

/// `√(b² + t²) − t` for `t ≥ 0`, exactly zero at `b = 0`.
fn excess_radius(b: f64, t: f64) -> f64 {
    let bb = b * b;
    if bb == 0.0 {
        return 0.0;
    }
    bb / ((bb + t * t).sqrt() + t)
}

impl FlowModel for DriftedModel {
    fn nodes(&self) -> NodeSet {
        self.base.nodes()
    }
    fn kind_flux(&self, kind: FlowKind, rho: &[f64]) -> Result<Vec<f64>> {
        self.kind_flux_raw(kind, rho)
    }
    fn free_energy(&self, rho: &[f64]) -> Result<f64> {
        Ok(self.base.quasipotential_raw(rho))
    }
}

impl CostOracle for DriftedModel {
    fn nodes(&self) -> NodeSet {
        self.base.nodes()
    }
    fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.combined_cost(rho, j)
    }
    fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.combined_hamiltonian(rho, zeta)
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities { force: true, psi: true, psi_star: true, grad_v: true, zero_cost_flux: true, cost_gradient: false }
    }
    fn analytic_force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.force(rho)
    }
    fn analytic_psi(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.psi_mft(rho, j)
    }
    fn analytic_psi_star(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.psi_star_mft(rho, zeta)
    }
    fn grad_v(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.base.grad_v(rho)
    }
    fn analytic_zero_cost_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.zero_cost_flux(rho)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct PreGenericReport {
    pub detailed_balance_residual: f64,
    /// `‖ddiv b(π)‖∞`.
    pub drift_divergence_at_pi: f64,
    /// `max |⟨dgrad∇V, b⟩|`.
    pub orthogonality: f64,
    /// `max |L − [Ψ_GEN(j−b) + Ψ*_GEN(−½dgrad∇V) + ⟨½dgrad∇V, j−b⟩]|`.
    pub identity_residual: f64,
    /// `max |Ψ*_GEN(ζ) − Ψ*_GEN(−ζ)|` and the same for `Ψ_GEN`.
    pub psi_star_oddness: f64,
    pub psi_oddness: f64,
    pub passed: bool,
}

/// Checks the pre-GENERIC assumptions and identity at the given `(ρ, j)`.
pub fn pre_generic_verify(dm: &DriftedModel, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<PreGenericReport> {
    let base = dm.base();
    let pi = base.pi().to_vec();
    let mut rep = PreGenericReport {
        detailed_balance_residual: base.detailed_balance_residual(),
        drift_divergence_at_pi: dm.nodes().ddiv(&dm.deterministic_flux(&pi)?)?.iter().fold(0.0, |m, v| m.max(v.abs())),
        orthogonality: 0.0,
        identity_residual: 0.0,
        psi_star_oddness: 0.0,
        psi_oddness: 0.0,
        passed: false,
    };
    for (rho, j) in samples {
        let b = dm.deterministic_flux(rho)?;
        let half_grad: Vec<f64> = dm.nodes().dgrad(&base.grad_v(rho)?)?.iter().map(|v| 0.5 * v).collect();
        let neg_half: Vec<f64> = half_grad.iter().map(|v| -v).collect();
        rep.orthogonality = rep.orthogonality.max(2.0 * dot(&half_grad, &b).abs());
        let jb: Vec<f64> = j.iter().zip(&b).map(|(j, b)| j - b).collect();
        let rhs = base.psi(rho, &jb)? + base.psi_star(rho, &neg_half)? + dot(&half_grad, &jb);
        let lhs = dm.combined_cost(rho, j)?;
        rep.identity_residual = rep.identity_residual.max((lhs - rhs).abs());
        let zeta: Vec<f64> = j.iter().map(|v| 0.7 * v - 0.1).collect();
        let mz: Vec<f64> = zeta.iter().map(|v| -v).collect();
        rep.psi_star_oddness = rep.psi_star_oddness.max((base.psi_star(rho, &zeta)? - base.psi_star(rho, &mz)?).abs());
        let mj: Vec<f64> = j.iter().map(|v| -v).collect();
        rep.psi_oddness = rep.psi_oddness.max((base.psi(rho, j)? - base.psi(rho, &mj)?).abs());
    }
    rep.passed = rep.detailed_balance_residual <= DB_TOL
        && rep.drift_divergence_at_pi < 1e-10
        && rep.orthogonality < 1e-10
        && rep.identity_residual < 1e-8
        && rep.psi_star_oddness < 1e-12
        && rep.psi_oddness < 1e-12;
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct ManericReport {
    /// `max ‖−ddiv ∂_ζΨ*_MFT(F^asym) − Ĵ∇E‖∞`.
    pub antisymmetric_vs_first: f64,
    /// `max ‖Ĵ∇E − Ĵ²∇V‖∞`.
    pub first_vs_second: f64,
    /// `max |L − [Ψ_MFT + Ψ*_MFT(F) − ⟨F, j⟩]|`.
    pub force_structure_residual: f64,
    /// `max |H(ρ, dgrad∇V)|` for the combined Hamiltonian.
    pub hje_residual: f64,
    /// `max ‖j⁰ − ∂_ζΨ*_GEN(−½dgrad∇V) − b‖∞` and `max ‖j⁰ − ∂_ζΨ*_MFT(F)‖∞`.
    pub zero_flux_generic: f64,
    pub zero_flux_maneric: f64,
    /// `max |Ψ̂*_GEN(ξ + θ∇E) − Ψ̂*_GEN(ξ)|`.
    pub energy_degeneracy: f64,
    /// `min Ψ*_MFT` over the samples and `max |Ψ*_MFT(ζ) − Ψ*_MFT(−ζ)|`.
    pub min_psi_star: f64,
    pub psi_star_asymmetry: f64,
    pub jacobi_first: f64,
    pub jacobi_second: f64,
    pub passed: bool,
}

/// Checks the MANERIC and GENERIC claims of the drifted model at `(ρ, j)`.
pub fn maneric_verify(dm: &DriftedModel, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<ManericReport> {
    use crate::hamiltonian::{jacobi_residual, standard_probes};
    let base = dm.base();
    let nodes = dm.nodes();
    let (h1, h2) = dm.drift_hamiltonian_pair();
    let probes = standard_probes(3, 0xd1f7);
    let mut rep = ManericReport {
        antisymmetric_vs_first: 0.0,
        first_vs_second: 0.0,
        force_structure_residual: 0.0,
        hje_residual: 0.0,
        zero_flux_generic: 0.0,
        zero_flux_maneric: 0.0,
        energy_degeneracy: 0.0,
        min_psi_star: f64::INFINITY,
        psi_star_asymmetry: 0.0,
        jacobi_first: 0.0,
        jacobi_second: 0.0,
        passed: false,
    };
    for (rho, j) in samples {
        let (fs, fa) = dm.force_split(rho)?;
        let f: Vec<f64> = fs.iter().zip(&fa).map(|(a, b)| a + b).collect();
        let asym: Vec<f64> = nodes.ddiv(&dm.psi_star_mft_gradient(rho, &fa)?)?.iter().map(|v| -v).collect();
        let e1 = h1.field(rho)?;
        let e2 = h2.field(rho)?;
        rep.antisymmetric_vs_first = rep.antisymmetric_vs_first.max(max_abs_diff(&asym, &e1));
        rep.first_vs_second = rep.first_vs_second.max(max_abs_diff(&e1, &e2));

        let l = dm.combined_cost(rho, j)?;
        let rhs = dm.psi_mft(rho, j)? + dm.psi_star_mft(rho, &f)? - dot(&f, j);
        rep.force_structure_residual = rep.force_structure_residual.max((l - rhs).abs());

        let gv = base.grad_v(rho)?;
        let zeta = nodes.dgrad(&gv)?;
        rep.hje_residual = rep.hje_residual.max(dm.combined_hamiltonian(rho, &zeta)?.abs());

        let j0 = dm.zero_cost_flux(rho)?;
        let b = dm.deterministic_flux(rho)?;
        let gen: Vec<f64> = base.psi_star_gradient(rho, &fs)?.iter().zip(&b).map(|(a, b)| a + b).collect();
        rep.zero_flux_generic = rep.zero_flux_generic.max(max_abs_diff(&j0, &gen));
        rep.zero_flux_maneric = rep.zero_flux_maneric.max(max_abs_diff(&j0, &dm.psi_star_mft_gradient(rho, &f)?));

        let xi = [0.3, -0.2, 0.5];
        let base_val = base.psi_star(rho, &nodes.dgrad(&xi)?)?;
        for theta in [-1.0, 0.5, 3.0] {
            let shifted: Vec<f64> = xi.iter().map(|x| x + theta).collect();
            let d = (base.psi_star(rho, &nodes.dgrad(&shifted)?)? - base_val).abs();
            rep.energy_degeneracy = rep.energy_degeneracy.max(d);
        }

        let probe: Vec<f64> = j.iter().map(|v| 1.5 * v + 0.2).collect();
        let neg: Vec<f64> = probe.iter().map(|v| -v).collect();
        let p = dm.psi_star_mft(rho, &probe)?;
        rep.min_psi_star = rep.min_psi_star.min(p);
        rep.psi_star_asymmetry = rep.psi_star_asymmetry.max((p - dm.psi_star_mft(rho, &neg)?).abs());

        rep.jacobi_first = rep.jacobi_first.max(jacobi_residual(&h1, rho, &probes)?);
        rep.jacobi_second = rep.jacobi_second.max(jacobi_residual(&h2, rho, &probes)?);
    }
    rep.passed = rep.antisymmetric_vs_first < 1e-8
        && rep.first_vs_second < 1e-8
        && rep.force_structure_residual < 1e-8
        && rep.hje_residual < 1e-8
        && rep.zero_flux_generic < 1e-8
        && rep.zero_flux_maneric < 1e-8
        && rep.energy_degeneracy < 1e-12
        && rep.min_psi_star >= -1e-12
        && rep.jacobi_first < 1e-6
        && rep.jacobi_second < 1e-6;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::Eta;
    use crate::flows::{conserve_monitor, integrate_flow, lyapunov_monitor, FlowOptions};
    use crate::mft::{check_duality, force_from_cost};
    use crate::sweep::{random_db_model, random_state};
    use crate::zero_range::reference::{m3, m3_cyc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (random_state(&mut rng, 3), (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn drift_example_values() {
        let dm = DriftedModel::new(m3(), 1.0).unwrap();
        let b = dm.deterministic_flux(&[0.5, 0.3, 0.2]).unwrap();
        assert!((b[0] - 1.35f64.ln()).abs() < 1e-14);
        assert!((b[0] - 0.300105).abs() < 1e-6);
        assert!((b[2] + 0.616186).abs() < 1e-6);
        assert!((b[1] - 0.105361).abs() < 1e-6);
        let at_pi = dm.deterministic_flux(m3().pi()).unwrap();
        assert!(at_pi.iter().all(|v| v.abs() < 1e-14));
        let (h1, h2) = dm.drift_hamiltonian_pair();
        let rho = [0.5, 0.3, 0.2];
        let div: Vec<f64> = dm.nodes().ddiv(&b).unwrap().iter().map(|v| -v).collect();
        let l: Vec<f64> = [1.5f64, 0.9, 0.6].iter().map(|v| v.ln()).collect();
        let expect = [l[2] - l[1], l[0] - l[2], l[1] - l[0]];
        assert!(max_abs_diff(&h2.field(&rho).unwrap(), &expect) < 1e-12);
        assert!(max_abs_diff(&h1.field(&rho).unwrap(), &div) < 1e-12);
        assert!(max_abs_diff(&div, &expect) < 1e-12);
    }

    #[test]
    fn rejects_invalid_bases() {
        assert!(matches!(DriftedModel::new(m3_cyc(), 1.0), Err(Error::ModelInvalid(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let four = random_db_model(&mut rng, 4, Eta::Identity);
        assert!(DriftedModel::new(four, 1.0).is_err());
        assert!(DriftedModel::new(m3(), -1.0).is_err());
    }

    #[test]
    fn combined_cost_examples() {
        let dm = DriftedModel::new(m3(), 1.0).unwrap();
        let rho = [0.5, 0.3, 0.2];
        assert!(dm.combined_cost(&rho, &dm.zero_cost_flux(&rho).unwrap()).unwrap().abs() < 1e-14);
        let b = dm.deterministic_flux(&rho).unwrap();
        let v = dm.combined_cost(&rho, &b).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let flat = DriftedModel::new(m3(), 0.0).unwrap();
        for (rho, j) in samples(3, 10) {
            assert_eq!(flat.combined_cost(&rho, &j).unwrap(), m3().cost(&rho, &j).unwrap());
        }
    }

    #[test]
    fn pre_generic_and_maneric_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for base in [m3(), random_db_model(&mut rng, 3, Eta::power(2.0).unwrap())] {
            for lambda in [0.0, 0.5, 1.0] {
                let dm = DriftedModel::new(base.clone(), lambda).unwrap();
                let s = samples(7, 20);
                let pg = pre_generic_verify(&dm, &s).unwrap();
                assert!(pg.passed, "{pg:?}");
                let mr = maneric_verify(&dm, &s).unwrap();
                assert!(mr.passed, "{mr:?}");
                if lambda > 0.0 {
                    assert!(mr.psi_star_asymmetry > 1e-6);
                } else {
                    assert_eq!(mr.psi_star_asymmetry, 0.0);
                }
            }
        }
    }

    #[test]
    fn psi_star_mft_properties() {
        let dm = DriftedModel::new(m3(), 1.0).unwrap();
        for (rho, _) in samples(4, 10) {
            let (_, fa) = dm.force_split(&rho).unwrap();
            let g = dm.psi_star_mft_gradient(&rho, &fa).unwrap();
            let b = dm.deterministic_flux(&rho).unwrap();
            assert!(max_abs_diff(&g, &b) < 1e-12);
            assert_eq!(dm.psi_star_mft(&rho, &[0.0; 3]).unwrap(), 0.0);
            // Closed form against the displayed expression.
            let r = dm.base().edge_rates(&rho).unwrap();
            let zeta = [0.4f64, -1.1, 0.7];
            let direct: f64 = (0..3)
                .map(|k| {
                    let rad = (b[k] * b[k] + r.two_c(k).powi(2)).sqrt();
                    rad * (zeta[k].cosh() - 1.0) + (zeta[k] - zeta[k].sinh()) * b[k]
                })
                .sum();
            assert!((dm.psi_star_mft(&rho, &zeta).unwrap() - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn generic_tools_see_the_drifted_cost() {
        let dm = DriftedModel::new(m3(), 0.8).unwrap();
        let rho = [0.45, 0.35, 0.2];
        let fd = force_from_cost(&dm, &rho).unwrap();
        assert!(max_abs_diff(&fd, &dm.force(&rho).unwrap()) < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = check_duality(&dm, 5, &mut rng).unwrap();
        assert!(d.cost_vs_hamiltonian < 1e-5 && d.psi_vs_psi_star < 1e-5, "{d:?}");
    }

    #[test]
    fn flows_of_the_drifted_model() {
        let dm = DriftedModel::new(m3(), 1.0).unwrap();
        let rho0 = [0.5, 0.3, 0.2];
        let only = integrate_flow(&dm, FlowKind::Antisymmetric, &rho0, 10.0, &FlowOptions::default()).unwrap();
        assert!(conserve_monitor(&only, |r| Ok(r.iter().sum())).unwrap() < 1e-7);
        assert!(conserve_monitor(&only, |r| dm.free_energy(r)).unwrap() < 1e-7);
        let full = integrate_flow(&dm, FlowKind::Full, &rho0, 10.0, &FlowOptions::default()).unwrap();
        assert!(lyapunov_monitor(&full, |r| dm.free_energy(r)).unwrap() < 1e-9);
        // Zero drift reproduces the base flows exactly.
        let flat = DriftedModel::new(m3(), 0.0).unwrap();
        for kind in [FlowKind::Full, FlowKind::Symmetric] {
            let a = integrate_flow(&flat, kind, &rho0, 3.0, &FlowOptions::default()).unwrap();
            let b = integrate_flow(&m3(), kind, &rho0, 3.0, &FlowOptions::default()).unwrap();
            assert_eq!(a.states, b.states);
        }
    }
}
