//! State-dependent skew operators with an energy, numerical Jacobi checks,
//! and the concrete structures of the zero-range antisymmetric flow.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flows::{skew_rates, weighted_eta};
use crate::ode::{integrate, OdeOptions, OdeSolution};
use crate::zero_range::ZeroRangeModel;

/// Finite-difference step for derivatives of `ρ ↦ J(ρ)`.
pub const JACOBI_STEP: f64 = 1e-6;

pub type SkewFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
pub type EnergyFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A skew operator field `J(ρ)` on covectors together with an energy `E`.
#[derive(Clone)]
pub struct HamiltonianStructure {
    dim: usize,
    skew: SkewFn,
    energy: EnergyFn,
    energy_gradient: GradientFn,
}

impl std::fmt::Debug for HamiltonianStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianStructure").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl HamiltonianStructure {
    pub fn new(dim: usize, skew: SkewFn, energy: EnergyFn, energy_gradient: GradientFn) -> Self {
        HamiltonianStructure { dim, skew, energy, energy_gradient }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_dim(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.dim {
            return Err(Error::input(format!("state has length {}, expected {}", rho.len(), self.dim)));
        }
        Ok(())
    }

    pub fn skew_at(&self, rho: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(rho)?;
        (self.skew)(rho)
    }

    pub fn energy(&self, rho: &[f64]) -> Result<f64> {
        self.check_dim(rho)?;
        (self.energy)(rho)
    }

    pub fn energy_gradient(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(rho)?;
        (self.energy_gradient)(rho)
    }

    /// `J(ρ)∇E(ρ)`.
    pub fn field(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let j = self.skew_at(rho)?;
        let g = DVector::from_vec(self.energy_gradient(rho)?);
        Ok((j * g).as_slice().to_vec())
    }

    /// `max |J + Jᵀ|`.
    pub fn skewness(&self, rho: &[f64]) -> Result<f64> {
        let j = self.skew_at(rho)?;
        Ok((&j + j.transpose()).amax())
    }

    /// Same energy, operator replaced by `f(J)`.
    pub fn map_skew<F>(&self, f: F) -> Self
    where
        F: Fn(DMatrix<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let inner = self.skew.clone();
        HamiltonianStructure {
            dim: self.dim,
            skew: Arc::new(move |r| inner(r).map(&f)),
            energy: self.energy.clone(),
            energy_gradient: self.energy_gradient.clone(),
        }
    }

    /// Integrates `ρ̇ = J(ρ)∇E(ρ)`, recording every accepted step.
    pub fn integrate(&self, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<OdeSolution> {
        integrate(|y| self.field(y), y0, t_end, opts, None, |_| Ok(()))
    }
}

/// A test functional on the state space.
#[derive(Clone, Debug)]
pub enum Probe {
    /// `ρ ↦ ξ·ρ`.
    Linear(Vec<f64>),
    /// `ρ ↦ ½ ρᵀMρ` with symmetric `M`.
    Quadratic(DMatrix<f64>),
}

impl Probe {
    fn gradient(&self, rho: &DVector<f64>) -> DVector<f64> {
        match self {
            Probe::Linear(xi) => DVector::from_column_slice(xi),
            Probe::Quadratic(m) => m * rho,
        }
    }

    fn hessian_column(&self, k: usize, dim: usize) -> DVector<f64> {
        match self {
            Probe::Linear(_) => DVector::zeros(dim),
            Probe::Quadratic(m) => m.column(k).into_owned(),
        }
    }
}

/// Two linear and two quadratic probes with entries in `[-1, 1]`.
pub fn standard_probes(dim: usize, seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    for _ in 0..2 {
        probes.push(Probe::Linear((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    }
    for _ in 0..2 {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        probes.push(Probe::Quadratic((&a + a.transpose()) * 0.5));
    }
    probes
}

/// Largest `|{F,{G,H}} + {G,{H,F}} + {H,{F,G}}|` over all triples of distinct
/// probes, with `{F,G} = ∇F·J∇G` and `∂J` by central differences.
pub fn jacobi_residual(h: &HamiltonianStructure, rho: &[f64], probes: &[Probe]) -> Result<f64> {
    let n = h.dim();
    let j = h.skew_at(rho)?;
    let mut dj = Vec::with_capacity(n);
    for k in 0..n {
        let mut up = rho.to_vec();
        let mut dn = rho.to_vec();
        up[k] += JACOBI_STEP;
        dn[k] -= JACOBI_STEP;
        dj.push((h.skew_at(&up)? - h.skew_at(&dn)?) / (2.0 * JACOBI_STEP));
    }
    let r = DVector::from_column_slice(rho);
    let grads: Vec<DVector<f64>> = probes.iter().map(|p| p.gradient(&r)).collect();

    // ∇{G,H} at ρ.
    let bracket_grad = |g: usize, hh: usize| -> DVector<f64> {
        let jg = &j * &grads[hh];
        let gj = j.transpose() * &grads[g];
        DVector::from_fn(n, |k, _| {
            probes[g].hessian_column(k, n).dot(&jg)
                + grads[g].dot(&(&dj[k] * &grads[hh]))
                + gj.dot(&probes[hh].hessian_column(k, n))
        })
    };
    let outer = |f: usize, inner: DVector<f64>| grads[f].dot(&(&j * inner));

    let mut worst: f64 = 0.0;
    let m = probes.len();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let s = outer(a, bracket_grad(b, c)) + outer(b, bracket_grad(c, a)) + outer(c, bracket_grad(a, b));
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

fn mass_energy(n: usize) -> (EnergyFn, GradientFn) {
    (Arc::new(|r: &[f64]| Ok(r.iter().sum())), Arc::new(move |_: &[f64]| Ok(vec![1.0; n])))
}

/// `Ĵ_xy = √(s_x s_y) A_xy` with `E` the total mass.
pub fn zr_poisson_structure(m: &ZeroRangeModel) -> HamiltonianStructure {
    let n = m.n();
    let a = skew_rates(m);
    let model = m.clone();
    let skew: SkewFn = Arc::new(move |rho: &[f64]| {
        let s = weighted_eta(&model, rho)?;
        Ok(DMatrix::from_fn(n, n, |x, y| a[x][y] * (s[x] * s[y]).sqrt()))
    });
    let (e, ge) = mass_energy(n);
    HamiltonianStructure::new(n, skew, e, ge)
}

/// The pair of Hamiltonian structures of the three-node antisymmetric flow:
/// `(Ĵ¹, E¹)` with `E¹ = −A₂₃g₁ − A₃₁g₂ − A₁₂g₃`, and the mass structure.
pub fn three_node_structures(m: &ZeroRangeModel) -> Result<(HamiltonianStructure, HamiltonianStructure)> {
    if m.n() != 3 {
        return Err(Error::input("the paired structures exist for three nodes only"));
    }
    let a = skew_rates(m);
    let coeff = [-a[1][2], -a[2][0], -a[0][1]];
    let model = m.clone();
    let skew: SkewFn = Arc::new(move |rho: &[f64]| {
        let s = weighted_eta(&model, rho)?;
        let w = (s[0] * s[1] * s[2]).sqrt();
        Ok(DMatrix::from_row_slice(3, 3, &[0.0, w, -w, -w, 0.0, w, w, -w, 0.0]))
    });
    let model = m.clone();
    let energy: EnergyFn = Arc::new(move |rho: &[f64]| {
        let pi = model.pi();
        Ok((0..3).map(|x| coeff[x] * model.eta()[x].sqrt_coordinate(rho[x], pi[x])).sum())
    });
    let model = m.clone();
    let gradient: GradientFn = Arc::new(move |rho: &[f64]| {
        let s = weighted_eta(&model, rho)?;
        Ok((0..3).map(|x| coeff[x] / s[x].sqrt()).collect())
    });
    let first = HamiltonianStructure::new(3, skew, energy, gradient);
    Ok((first, zr_poisson_structure(m)))
}

pub type VectorField = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Structure on `(ρ, e)` with `Ẽ = e` and `J̃ = [[0, b],[−bᵀ, 0]]`, so that
/// `J̃∇Ẽ = (b(ρ), 0)`.
pub fn extend_with_energy(dim: usize, b: VectorField) -> HamiltonianStructure {
    let skew: SkewFn = Arc::new(move |y: &[f64]| {
        let v = b(&y[..dim])?;
        let mut j = DMatrix::zeros(dim + 1, dim + 1);
        for (x, bx) in v.iter().enumerate() {
            j[(x, dim)] = *bx;
            j[(dim, x)] = -bx;
        }
        Ok(j)
    });
    let energy: EnergyFn = Arc::new(move |y: &[f64]| Ok(y[dim]));
    let gradient: GradientFn = Arc::new(move |_: &[f64]| {
        let mut g = vec![0.0; dim + 1];
        g[dim] = 1.0;
        Ok(g)
    });
    HamiltonianStructure::new(dim + 1, skew, energy, gradient)
}

/// Negative control: the `(0,1)` entry alone scaled by `factor`.
pub fn corrupted(h: &HamiltonianStructure, factor: f64) -> HamiltonianStructure {
    h.map_skew(move |mut j| {
        j[(0, 1)] *= factor;
        j
    })
}
