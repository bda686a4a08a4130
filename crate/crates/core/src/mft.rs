//! Model-agnostic fluctuation-theory analysis of a cost function `L(ρ, j)`
//! and its dual `H(ρ, ζ)` over the flux space of a complete graph.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{dot, NodeSet};
use crate::sweep::random_state;
use crate::zero_range::ZeroRangeModel;

/// Step for finite-difference derivatives of order-one quantities.
pub const FD_STEP: f64 = 1e-5;

/// Which pieces a [`CostOracle`] supplies in closed form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub force: bool,
    pub psi: bool,
    pub psi_star: bool,
    pub grad_v: bool,
    pub zero_cost_flux: bool,
    pub cost_gradient: bool,
}

/// A cost `L` with its convex dual `H`, plus optional closed forms.
pub trait CostOracle: Sync {
    fn nodes(&self) -> NodeSet;
    fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64>;
    fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
    fn analytic_force(&self, _rho: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("force"))
    }
    fn analytic_psi(&self, _rho: &[f64], _j: &[f64]) -> Result<f64> {
        Err(Error::Unsupported("psi"))
    }
    fn analytic_psi_star(&self, _rho: &[f64], _zeta: &[f64]) -> Result<f64> {
        Err(Error::Unsupported("psi_star"))
    }
    fn grad_v(&self, _rho: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("grad_v"))
    }
    fn analytic_zero_cost_flux(&self, _rho: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("zero_cost_flux"))
    }

    /// `∂_j L`, by central differences unless overridden.
    fn cost_gradient(&self, rho: &[f64], j: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(&|x: &[f64]| self.cost(rho, x), j, FD_STEP)
    }

    /// `∂²_j L`, by differencing the gradient unless overridden.
    fn cost_hessian(&self, rho: &[f64], j: &[f64]) -> Result<DMatrix<f64>> {
        let m = j.len();
        let mut h = DMatrix::zeros(m, m);
        let mut x = j.to_vec();
        for k in 0..m {
            x[k] = j[k] + FD_STEP;
            let gp = self.cost_gradient(rho, &x)?;
            x[k] = j[k] - FD_STEP;
            let gm = self.cost_gradient(rho, &x)?;
            x[k] = j[k];
            for i in 0..m {
                h[(i, k)] = (gp[i] - gm[i]) / (2.0 * FD_STEP);
            }
        }
        Ok(0.5 * (&h + h.transpose()))
    }
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        y[k] = x[k] + h;
        let fp = f(&y)?;
        y[k] = x[k] - h;
        let fm = f(&y)?;
        y[k] = x[k];
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::Numerical(format!("non-finite difference in coordinate {k}")));
        }
        g.push(d);
    }
    Ok(g)
}

impl CostOracle for ZeroRangeModel {
    fn nodes(&self) -> NodeSet {
        ZeroRangeModel::nodes(self)
    }
    fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        ZeroRangeModel::cost(self, rho, j)
    }
    fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        ZeroRangeModel::hamiltonian(self, rho, zeta)
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            force: true,
            psi: true,
            psi_star: true,
            grad_v: true,
            zero_cost_flux: true,
            cost_gradient: true,
        }
    }
    fn analytic_force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.force(rho)
    }
    fn analytic_psi(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.psi(rho, j)
    }
    fn analytic_psi_star(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        ZeroRangeModel::psi_star(self, rho, zeta)
    }
    fn grad_v(&self, rho: &[f64]) -> Result<Vec<f64>> {
        ZeroRangeModel::grad_v(self, rho)
    }
    fn analytic_zero_cost_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.zero_cost_flux(rho)
    }
    fn cost_gradient(&self, rho: &[f64], j: &[f64]) -> Result<Vec<f64>> {
        ZeroRangeModel::cost_gradient(self, rho, j)
    }
    fn cost_hessian(&self, rho: &[f64], j: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.cost_curvature(rho, j)?;
        Ok(DMatrix::from_diagonal(&DVector::from_vec(d)))
    }
}

/// `F(ρ) = −∂_j L(ρ, 0)` by central differences with one Richardson step.
/// Fails when `L` is infinite next to `j = 0` or has a kink there.
pub fn force_from_cost<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<Vec<f64>> {
    let m = c.nodes().n_edges();
    let zero = vec![0.0; m];
    let l0 = c.cost(rho, &zero)?;
    if !l0.is_finite() {
        return Err(Error::ForceUndefined("cost is infinite at zero flux".into()));
    }
    let mut e = zero.clone();
    let mut force = Vec::with_capacity(m);
    for k in 0..m {
        let mut eval = |h: f64| -> Result<(f64, f64)> {
            e[k] = h;
            let lp = c.cost(rho, &e)?;
            e[k] = -h;
            let lm = c.cost(rho, &e)?;
            e[k] = 0.0;
            if !lp.is_finite() || !lm.is_finite() {
                return Err(Error::ForceUndefined(format!(
                    "cost is infinite next to zero flux along edge {k}"
                )));
            }
            Ok((lp, lm))
        };
        let h = FD_STEP;
        let (lp1, lm1) = eval(h)?;
        let (lp2, lm2) = eval(0.5 * h)?;
        // One-sided slopes must agree in the limit; a kink keeps them apart.
        let kink1 = ((lp1 - l0) - (l0 - lm1)) / h;
        let kink2 = ((lp2 - l0) - (l0 - lm2)) / (0.5 * h);
        if kink2.abs() > 1e-3 && kink2.abs() > 0.75 * kink1.abs() {
            return Err(Error::ForceUndefined(format!(
                "one-sided derivatives of the cost differ at zero flux along edge {k}"
            )));
        }
        let d1 = (lp1 - lm1) / (2.0 * h);
        let d2 = (lp2 - lm2) / h;
        force.push(-(4.0 * d2 - d1) / 3.0);
    }
    Ok(force)
}

/// Closed-form force when available, finite differences otherwise.
pub fn force<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<Vec<f64>> {
    if c.capabilities().force {
        c.analytic_force(rho)
    } else {
        force_from_cost(c, rho)
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scale(s: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// `Ψ*(ρ, ζ) = H(ρ, ζ − F) − H(ρ, −F)`.
pub fn psi_star_from_h<C: CostOracle + ?Sized>(c: &C, rho: &[f64], zeta: &[f64]) -> Result<f64> {
    let f = force(c, rho)?;
    Ok(c.hamiltonian(rho, &sub(zeta, &f))? - c.hamiltonian(rho, &neg(&f))?)
}

pub fn psi_star<C: CostOracle + ?Sized>(c: &C, rho: &[f64], zeta: &[f64]) -> Result<f64> {
    if c.capabilities().psi_star {
        c.analytic_psi_star(rho, zeta)
    } else {
        psi_star_from_h(c, rho, zeta)
    }
}

/// `∂_ζ Ψ*(ρ, ζ)` by central differences.
pub fn psi_star_gradient<C: CostOracle + ?Sized>(c: &C, rho: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    fd_gradient(&|z: &[f64]| psi_star(c, rho, z), zeta, FD_STEP)
}

/// `H(ρ, dgrad ∇V(ρ))` for a supplied gradient of a candidate quasipotential.
pub fn hje_residual<C, G>(c: &C, grad_v: G, rho: &[f64]) -> Result<f64>
where
    C: CostOracle + ?Sized,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let g = grad_v(rho)?;
    c.hamiltonian(rho, &c.nodes().dgrad(&g)?)
}

/// `L←(ρ, j) = L(ρ, −j) + ⟨dgrad ∇V(ρ), j⟩`.
pub fn time_reverse_cost<C, G>(c: &C, grad_v: G, rho: &[f64], j: &[f64]) -> Result<f64>
where
    C: CostOracle + ?Sized,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let g = grad_v(rho)?;
    let dg = c.nodes().dgrad(&g)?;
    Ok(c.cost(rho, &neg(j))? + dot(&dg, j))
}

/// `θ_ρ(ζ, ζ̃) = ½[Ψ*(ζ+ζ̃) − Ψ*(ζ̃−ζ)]`.
pub fn theta_pairing<C: CostOracle + ?Sized>(c: &C, rho: &[f64], zeta: &[f64], zeta_t: &[f64]) -> Result<f64> {
    Ok(0.5 * (psi_star(c, rho, &add(zeta, zeta_t))? - psi_star(c, rho, &sub(zeta_t, zeta))?))
}

/// `Ψ*_ζ̃(ζ) = ½[Ψ*(ζ+ζ̃) + Ψ*(ζ̃−ζ)] − Ψ*(ζ̃)`.
pub fn modified_psi_star<C: CostOracle + ?Sized>(c: &C, rho: &[f64], zeta: &[f64], zeta_t: &[f64]) -> Result<f64> {
    Ok(0.5 * (psi_star(c, rho, &add(zeta, zeta_t))? + psi_star(c, rho, &sub(zeta_t, zeta))?)
        - psi_star(c, rho, zeta_t)?)
}

/// `H_G(ρ, ζ) = Ψ*(ρ, ζ + G) − Ψ*(ρ, G)`.
pub fn tilted_h<C: CostOracle + ?Sized>(c: &C, rho: &[f64], g: &[f64], zeta: &[f64]) -> Result<f64> {
    Ok(psi_star(c, rho, &add(zeta, g))? - psi_star(c, rho, g)?)
}

/// `(F^sym, F^asym)` with `F^sym = −½ dgrad ∇V` and `F^asym = F − F^sym`.
pub fn force_split<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = force(c, rho)?;
    let g = c.grad_v(rho)?;
    let fsym = scale(-0.5, &c.nodes().dgrad(&g)?);
    let fasym = sub(&f, &fsym);
    Ok((fsym, fasym))
}

fn zero_cost_flux<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<Vec<f64>> {
    if c.capabilities().zero_cost_flux {
        c.analytic_zero_cost_flux(rho)
    } else {
        let m = c.nodes().n_edges();
        fd_gradient(&|z: &[f64]| c.hamiltonian(rho, z), &vec![0.0; m], FD_STEP)
    }
}

/// Terms of the two cost decompositions; each `sum` should equal `cost`.
#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub cost: f64,
    /// `Ψ(j)`, `Ψ*(F^asym)`, `−⟨F^asym, j⟩`, `Ψ*_{F^asym}(−½dgrad∇V)`, `⟨½dgrad∇V, j⟩`.
    pub first: [f64; 5],
    /// `Ψ(j)`, `Ψ*(−½dgrad∇V)`, `⟨½dgrad∇V, j⟩`, `Ψ*_{F^sym}(F^asym)`, `−⟨F^asym, j⟩`.
    pub second: [f64; 5],
}

impl Decomposition {
    pub fn first_sum(&self) -> f64 {
        self.first.iter().sum()
    }
    pub fn second_sum(&self) -> f64 {
        self.second.iter().sum()
    }
    pub fn max_residual(&self) -> f64 {
        (self.first_sum() - self.cost).abs().max((self.second_sum() - self.cost).abs())
    }
}

pub fn decompose_cost<C: CostOracle + ?Sized>(c: &C, rho: &[f64], j: &[f64]) -> Result<Decomposition> {
    let (fsym, fasym) = force_split(c, rho)?;
    let half_dg = neg(&fsym);
    let psi = c.analytic_psi(rho, j)?;
    let first = [
        psi,
        psi_star(c, rho, &fasym)?,
        -dot(&fasym, j),
        modified_psi_star(c, rho, &fsym, &fasym)?,
        dot(&half_dg, j),
    ];
    let second = [
        psi,
        psi_star(c, rho, &fsym)?,
        dot(&half_dg, j),
        modified_psi_star(c, rho, &fasym, &fsym)?,
        -dot(&fasym, j),
    ];
    Ok(Decomposition { cost: c.cost(rho, j)?, first, second })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FirGap {
    pub gap: f64,
    pub bound: f64,
}

/// Gap in the bound `L(ρ,j) ≥ Ψ*_{F^asym}(−½dgrad∇V) + ⟨½dgrad∇V, j⟩`.
pub fn fir_gap<C: CostOracle + ?Sized>(c: &C, rho: &[f64], j: &[f64]) -> Result<FirGap> {
    let (fsym, fasym) = force_split(c, rho)?;
    let bound = modified_psi_star(c, rho, &fsym, &fasym)? - dot(&fsym, j);
    Ok(FirGap { gap: c.cost(rho, j)? - bound, bound })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThreeFaces {
    /// Closed form of `⟨½dgrad∇V, j⁰⟩`.
    pub free_energy_loss: f64,
    /// The same quantity as a direct pairing `⟨½∇V, −ddiv j⁰⟩`.
    pub free_energy_loss_direct: f64,
    /// Closed form of `−⟨F^asym, j⁰⟩`.
    pub asym_work: f64,
    pub asym_work_direct: f64,
}

pub fn three_faces<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<ThreeFaces> {
    let (fsym, fasym) = force_split(c, rho)?;
    let j0 = zero_cost_flux(c, rho)?;
    let half_dg = neg(&fsym);
    let psi0 = c.analytic_psi(rho, &j0)?;
    let free_energy_loss = -psi0 - psi_star(c, rho, &fasym)? + dot(&fasym, &j0)
        - modified_psi_star(c, rho, &fsym, &fasym)?;
    let asym_work = -psi0 - psi_star(c, rho, &fsym)? - dot(&half_dg, &j0)
        - modified_psi_star(c, rho, &fasym, &fsym)?;
    let g = c.grad_v(rho)?;
    let div = c.nodes().ddiv(&j0)?;
    let free_energy_loss_direct = -0.5 * dot(&g, &div);
    Ok(ThreeFaces {
        free_energy_loss,
        free_energy_loss_direct,
        asym_work,
        asym_work_direct: -dot(&fasym, &j0),
    })
}

/// `Ψ*(ρ, F(ρ))`, the rate of the ergodic-average large deviations.
pub fn fisher_information<C: CostOracle + ?Sized>(c: &C, rho: &[f64]) -> Result<f64> {
    let f = force(c, rho)?;
    psi_star(c, rho, &f)
}

#[derive(Clone, Debug, Serialize)]
pub struct Contraction {
    pub value: f64,
    pub flux: Vec<f64>,
    pub iterations: usize,
}

/// Orthonormal basis of the divergence-free fluxes (cycle space).
pub fn cycle_basis(nodes: NodeSet) -> DMatrix<f64> {
    let d = nodes.grad_matrix().transpose();
    let pinv = d.clone().pseudo_inverse(1e-12).expect("pseudo-inverse of incidence matrix");
    let m = nodes.n_edges();
    let proj = DMatrix::identity(m, m) - &pinv * &d;
    let eig = proj.symmetric_eigen();
    let cols: Vec<DVector<f64>> = (0..m)
        .filter(|&k| eig.eigenvalues[k] > 0.5)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// `inf { L(ρ, j) : −ddiv j = u }`, by Newton's method over the cycle space.
pub fn contract_cost<C: CostOracle + ?Sized>(c: &C, rho: &[f64], u: &[f64]) -> Result<Contraction> {
    let nodes = c.nodes();
    if u.len() != nodes.len() {
        return Err(Error::input("node vector of wrong length"));
    }
    let total: f64 = u.iter().sum();
    if total.abs() > 1e-10 {
        return Err(Error::input(format!("contraction needs a zero-sum vector, got sum {total:e}")));
    }
    let d = nodes.grad_matrix().transpose();
    let pinv = d.clone().pseudo_inverse(1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
    let start = zero_cost_flux(c, rho).unwrap_or_else(|_| vec![0.0; nodes.n_edges()]);
    let s = DVector::from_vec(start);
    let correction = &pinv * (DVector::from_column_slice(u) - &d * &s);
    let mut j = s + correction;
    let basis = cycle_basis(nodes);
    let mut value = c.cost(rho, j.as_slice())?;
    if !value.is_finite() {
        return Err(Error::Numerical("contraction start point has infinite cost".into()));
    }
    if basis.ncols() == 0 {
        return Ok(Contraction { value, flux: j.as_slice().to_vec(), iterations: 0 });
    }
    let mut iterations = 0;
    for _ in 0..100 {
        let g = DVector::from_vec(c.cost_gradient(rho, j.as_slice())?);
        let rg = basis.transpose() * &g;
        if rg.amax() < 1e-9 {
            break;
        }
        iterations += 1;
        let h = c.cost_hessian(rho, j.as_slice())?;
        let rh = basis.transpose() * h * &basis;
        let step = rh
            .cholesky()
            .map(|ch| ch.solve(&rg))
            .unwrap_or_else(|| rg.clone());
        let dir = -(&basis * step);
        let slope = g.dot(&dir);
        let mut t = 1.0;
        loop {
            let trial = &j + t * &dir;
            let v = c.cost(rho, trial.as_slice())?;
            if v.is_finite() && v <= value + 1e-4 * t * slope {
                j = trial;
                value = v;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Ok(Contraction { value, flux: j.as_slice().to_vec(), iterations });
            }
        }
    }
    Ok(Contraction { value, flux: j.as_slice().to_vec(), iterations })
}

/// Maximises `t ↦ φ(x + t d)` for concave `φ` by bracketing and golden section.
fn line_max(phi: &dyn Fn(&[f64]) -> f64, x: &[f64], d: &[f64]) -> (f64, Vec<f64>) {
    let at = |t: f64| -> f64 {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let v = phi(&y);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let f0 = at(0.0);
    let mut step = 1e-3;
    let (mut lo, mut hi);
    if at(step) > f0 {
        lo = 0.0;
        hi = step;
        while at(2.0 * hi) > at(hi) && hi < 1e6 {
            lo = hi;
            hi *= 2.0;
        }
        hi *= 2.0;
    } else if at(-step) > f0 {
        hi = 0.0;
        lo = -step;
        while at(2.0 * lo) > at(lo) && lo > -1e6 {
            hi = lo;
            lo *= 2.0;
        }
        lo *= 2.0;
    } else {
        step *= 1.0;
        lo = -step;
        hi = step;
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (at(a), at(b));
    for _ in 0..120 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = at(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = at(b);
        }
        if (hi - lo).abs() < 1e-13 * (1.0 + lo.abs()) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let best = at(t);
    if best >= f0 {
        (best, x.iter().zip(d).map(|(p, q)| p + t * q).collect())
    } else {
        (f0, x.to_vec())
    }
}

/// Numerical convex conjugate `sup_x ⟨ζ, x⟩ − f(x)` by repeated line searches
/// along coordinate axes and `n_random` random unit directions per cycle.
pub fn conjugate_by_line_search<R: Rng + ?Sized>(
    f: &dyn Fn(&[f64]) -> f64,
    zeta: &[f64],
    start: &[f64],
    n_random: usize,
    rng: &mut R,
) -> f64 {
    let phi = |x: &[f64]| dot(zeta, x) - f(x);
    let m = start.len();
    let mut x = start.to_vec();
    let mut best = phi(&x);
    for _ in 0..60 {
        let before = best;
        let mut dirs: Vec<Vec<f64>> = (0..m)
            .map(|k| (0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..n_random {
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dot(&v, &v).sqrt().max(1e-12);
            dirs.push(v.iter().map(|t| t / norm).collect());
        }
        for d in &dirs {
            let (v, y) = line_max(&phi, &x, d);
            if v > best {
                best = v;
                x = y;
            }
        }
        if best - before < 1e-14 * (1.0 + best.abs()) {
            break;
        }
    }
    best
}

/// Largest Legendre mismatch of `(L, H)` and `(Ψ, Ψ*)` over `samples` random
/// `(ρ, ζ, j)` triples.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualityCheck {
    pub cost_vs_hamiltonian: f64,
    pub psi_vs_psi_star: f64,
}

pub fn check_duality<C: CostOracle + ?Sized, R: Rng + ?Sized>(
    c: &C,
    samples: usize,
    rng: &mut R,
) -> Result<DualityCheck> {
    let nodes = c.nodes();
    let m = nodes.n_edges();
    let mut out = DualityCheck { cost_vs_hamiltonian: 0.0, psi_vs_psi_star: 0.0 };
    for _ in 0..samples {
        let rho = random_state(rng, nodes.len());
        let zeta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let start = zero_cost_flux(c, &rho).unwrap_or_else(|_| vec![0.0; m]);
        let lcost = |j: &[f64]| c.cost(&rho, j).unwrap_or(f64::INFINITY);
        let sup = conjugate_by_line_search(&lcost, &zeta, &start, 10, rng);
        let h = c.hamiltonian(&rho, &zeta)?;
        out.cost_vs_hamiltonian = out.cost_vs_hamiltonian.max((sup - h).abs());
        if c.capabilities().psi {
            let j: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ps = |z: &[f64]| psi_star(c, &rho, z).unwrap_or(f64::INFINITY);
            let sup = conjugate_by_line_search(&ps, &j, &vec![0.0; m], 10, rng);
            let psi = c.analytic_psi(&rho, &j)?;
            out.psi_vs_psi_star = out.psi_vs_psi_star.max((sup - psi).abs());
        }
    }
    Ok(out)
}

/// A cost oracle whose duality was spot-checked on construction.
pub struct CheckedCost<C> {
    inner: C,
    pub check: DualityCheck,
}

impl<C: CostOracle> CheckedCost<C> {
    pub fn new<R: Rng + ?Sized>(inner: C, rng: &mut R) -> Result<Self> {
        let check = check_duality(&inner, 5, rng)?;
        if !(check.cost_vs_hamiltonian < 1e-5 && check.psi_vs_psi_star < 1e-5) {
            return Err(Error::Numerical(format!(
                "cost and Hamiltonian are not convex duals (mismatch {:e}, {:e})",
                check.cost_vs_hamiltonian, check.psi_vs_psi_star
            )));
        }
        Ok(CheckedCost { inner, check })
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: CostOracle> CostOracle for CheckedCost<C> {
    fn nodes(&self) -> NodeSet {
        self.inner.nodes()
    }
    fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.inner.cost(rho, j)
    }
    fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.inner.hamiltonian(rho, zeta)
    }
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn analytic_force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.inner.analytic_force(rho)
    }
    fn analytic_psi(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.inner.analytic_psi(rho, j)
    }
    fn analytic_psi_star(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.inner.analytic_psi_star(rho, zeta)
    }
    fn grad_v(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.inner.grad_v(rho)
    }
    fn analytic_zero_cost_flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.inner.analytic_zero_cost_flux(rho)
    }
    fn cost_gradient(&self, rho: &[f64], j: &[f64]) -> Result<Vec<f64>> {
        self.inner.cost_gradient(rho, j)
    }
    fn cost_hessian(&self, rho: &[f64], j: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.cost_hessian(rho, j)
    }
}

/// Exposes only `L` and `H` of a model, forcing every other quantity through
/// the generic numerical routes.
pub struct CostOnly<'a, C: ?Sized>(pub &'a C);

impl<C: CostOracle + ?Sized> CostOracle for CostOnly<'_, C> {
    fn nodes(&self) -> NodeSet {
        self.0.nodes()
    }
    fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
        self.0.cost(rho, j)
    }
    fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
        self.0.hamiltonian(rho, zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::Eta;
    use crate::sweep::{random_db_model, random_model};
    use crate::zero_range::reference::{m3, m3_cyc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Zero-range cost plus a hard constraint `j_0 = 0.1`.
    struct Constrained(ZeroRangeModel);

    impl CostOracle for Constrained {
        fn nodes(&self) -> NodeSet {
            self.0.nodes()
        }
        fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
            if (j[0] - 0.1).abs() > 0.0 {
                return Ok(f64::INFINITY);
            }
            self.0.cost(rho, j)
        }
        fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
            self.0.hamiltonian(rho, zeta)
        }
    }

    /// Zero-range cost plus `|j_0|`: finite but not differentiable at 0.
    struct Kinked(ZeroRangeModel);

    impl CostOracle for Kinked {
        fn nodes(&self) -> NodeSet {
            self.0.nodes()
        }
        fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
            Ok(self.0.cost(rho, j)? + j[0].abs())
        }
        fn hamiltonian(&self, rho: &[f64], zeta: &[f64]) -> Result<f64> {
            self.0.hamiltonian(rho, zeta)
        }
    }

    #[test]
    fn force_from_cost_matches_closed_form() {
        let m = m3_cyc();
        let f = force_from_cost(&m, m.pi()).unwrap();
        let h = 0.5 * 2f64.ln();
        for (a, b) in f.iter().zip([h, -h, h]) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let db = m3();
        assert!(force_from_cost(&db, db.pi()).unwrap().iter().all(|v| v.abs() < 1e-6));
        let rho = [0.2, 0.5, 0.3];
        let fa = m.force(&rho).unwrap();
        for (a, b) in force_from_cost(&m, &rho).unwrap().iter().zip(&fa) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_costs_have_no_force() {
        let c = Constrained(m3());
        assert!(matches!(force_from_cost(&c, &[0.2, 0.5, 0.3]), Err(Error::ForceUndefined(_))));
        let k = Kinked(m3());
        assert!(matches!(force_from_cost(&k, &[0.2, 0.5, 0.3]), Err(Error::ForceUndefined(_))));
        // Smooth but sharply curved near the boundary is still fine.
        let m = m3();
        let rho = [1e-4, 0.5, 0.5 - 1e-4];
        let fd = force_from_cost(&m, &rho).unwrap();
        for (a, b) in fd.iter().zip(&m.force(&rho).unwrap()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn time_reversal_split_matches_antisymmetric_force() {
        // ½(F − F←) with F← the force of the reversed cost.
        let m = m3_cyc();
        let rho = [0.5, 0.3, 0.2];
        let rev = |r: &[f64], j: &[f64]| time_reverse_cost(&m, |x| m.grad_v(x), r, j);
        let mut frev = Vec::new();
        let h = 1e-5;
        for k in 0..3 {
            let mut e = vec![0.0; 3];
            e[k] = h;
            let lp = rev(&rho, &e).unwrap();
            e[k] = -h;
            let lm = rev(&rho, &e).unwrap();
            frev.push(-(lp - lm) / (2.0 * h));
        }
        let f = m.force(&rho).unwrap();
        let fasym = m.antisymmetric_force().unwrap();
        for k in 0..3 {
            assert!((0.5 * (f[k] - frev[k]) - fasym[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn psi_star_through_hamiltonian() {
        let m = m3_cyc();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 3);
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = psi_star_from_h(&m, &rho, &z).unwrap();
            assert!((a - m.psi_star(&rho, &z).unwrap()).abs() < 1e-8);
            assert_eq!(psi_star_from_h(&m, &rho, &[0.0; 3]).unwrap(), 0.0);
            let f = m.force(&rho).unwrap();
            let two_f: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
            let direct = m.hamiltonian(&rho, &f).unwrap() - m.hamiltonian(&rho, &neg(&f)).unwrap();
            assert!((psi_star_from_h(&m, &rho, &two_f).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn hje_examples() {
        let m = m3_cyc();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 3);
            assert!(hje_residual(&m, |r| m.grad_v(r), &rho).unwrap().abs() < 1e-12);
            assert_eq!(hje_residual(&m, |_| Ok(vec![0.0; 3]), &rho).unwrap(), 0.0);
        }
        // Relative entropy against the wrong reference weights.
        let skew = ZeroRangeModel::with_uniform_eta(
            crate::zero_range::reference::m3_cyc_rates(),
            None,
            Eta::Identity,
        )
        .unwrap();
        let wrong_pi = [0.5, 0.3, 0.2];
        let wrong = |r: &[f64]| -> Result<Vec<f64>> {
            Ok(r.iter().zip(&wrong_pi).map(|(a, p)| (a / p).ln()).collect())
        };
        let worst = (0..10)
            .map(|_| hje_residual(&skew, wrong, &random_state(&mut rng, 3)).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
    }

    #[test]
    fn time_reversed_cost_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let db = random_db_model(&mut rng, 4, Eta::power(1.5).unwrap());
        for _ in 0..10 {
            let rho = random_state(&mut rng, 4);
            let j: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rev = time_reverse_cost(&db, |r| db.grad_v(r), &rho, &j).unwrap();
            assert!((rev - db.cost(&rho, &j).unwrap()).abs() < 1e-8);
            assert_eq!(time_reverse_cost(&db, |r| db.grad_v(r), &rho, &[0.0; 6]).unwrap(), db.cost(&rho, &[0.0; 6]).unwrap());
        }
        let m = m3_cyc();
        let pi = m.pi().to_vec();
        let j0 = m.zero_cost_flux(&pi).unwrap();
        assert!(time_reverse_cost(&m, |r| m.grad_v(r), &pi, &j0).unwrap() >= 0.0);
        let reversed = neg(&j0);
        assert!(time_reverse_cost(&m, |r| m.grad_v(r), &pi, &reversed).unwrap().abs() < 1e-14);
    }

    #[test]
    fn orthogonality_and_splitting() {
        let m = m3_cyc();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let rho = random_state(&mut rng, 3);
            let (fs, fa) = m.force_split(&rho).unwrap();
            assert!(theta_pairing(&m, &rho, &fs, &fa).unwrap().abs() < 1e-10);
            assert!(theta_pairing(&m, &rho, &fa, &fs).unwrap().abs() < 1e-10);
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let zt: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(theta_pairing(&m, &rho, &z, &[0.0; 3]).unwrap().abs() < 1e-15);
            let lhs = psi_star(&m, &rho, &add(&z, &zt)).unwrap();
            let rhs = modified_psi_star(&m, &rho, &z, &zt).unwrap()
                + theta_pairing(&m, &rho, &z, &zt).unwrap()
                + psi_star(&m, &rho, &zt).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
            assert_eq!(psi_star(&m, &rho, &z).unwrap(), psi_star(&m, &rho, &neg(&z)).unwrap());
        }
    }

    #[test]
    fn tilts() {
        let m = m3();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = 0.7;
        let cyclic = [g, -g, g];
        let straight = [g, 0.0, 0.0];
        let mut worst_straight: f64 = 0.0;
        for _ in 0..20 {
            let rho = random_state(&mut rng, 3);
            let f = m.force(&rho).unwrap();
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hf = tilted_h(&m, &rho, &f, &z).unwrap();
            assert!((hf - m.hamiltonian(&rho, &z).unwrap()).abs() < 1e-12);
            let dgv = m.nodes().dgrad(&m.grad_v(&rho).unwrap()).unwrap();
            let tilt = add(&f, &cyclic);
            assert!(tilted_h(&m, &rho, &tilt, &dgv).unwrap().abs() < 1e-10);
            let tilt = add(&f, &straight);
            worst_straight = worst_straight.max(tilted_h(&m, &rho, &tilt, &dgv).unwrap().abs());
            // The tilted typical flux is ∂_ζΨ*(ρ, G).
            let fd = fd_gradient(&|x: &[f64]| tilted_h(&m, &rho, &cyclic, x), &[0.0; 3], 1e-5).unwrap();
            let exact = m.psi_star_gradient(&rho, &cyclic).unwrap();
            for (a, b) in fd.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        assert!(worst_straight > 1e-3);
    }

    #[test]
    fn decompositions_and_fir() {
        let m = m3_cyc();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let rho = random_state(&mut rng, 3);
            let j: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = decompose_cost(&m, &rho, &j).unwrap();
            assert!(d.max_residual() < 1e-8);
            assert!(fir_gap(&m, &rho, &j).unwrap().gap >= -1e-10);
            // Antisymmetric flux: ∂_ζΨ*(ρ, F^asym).
            let fa = m.antisymmetric_force().unwrap();
            let ja = m.psi_star_gradient(&rho, &fa).unwrap();
            let d = decompose_cost(&m, &rho, &ja).unwrap();
            assert!(d.first[..3].iter().sum::<f64>().abs() < 1e-10);
            assert!(fir_gap(&m, &rho, &ja).unwrap().gap.abs() < 1e-8);
            let j0 = m.zero_cost_flux(&rho).unwrap();
            let expect = m.psi(&rho, &j0).unwrap() + m.psi_star(&rho, &fa).unwrap() - dot(&fa, &j0);
            assert!((fir_gap(&m, &rho, &j0).unwrap().gap - expect).abs() < 1e-10);
            assert!(expect >= 0.0);
        }
        let db = m3();
        let rho = [0.6, 0.3, 0.1];
        let d = decompose_cost(&db, &rho, &[0.2, -0.1, 0.4]).unwrap();
        assert!(d.second[3].abs() < 1e-15 && d.second[4].abs() < 1e-15);
    }

    #[test]
    fn three_faces_examples() {
        let m = m3_cyc();
        let t = three_faces(&m, m.pi()).unwrap();
        assert!(t.free_energy_loss.abs() < 1e-12);
        let db = m3();
        let t = three_faces(&db, &[0.5, 0.2, 0.3]).unwrap();
        assert!(t.asym_work.abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let rho = random_state(&mut rng, 3);
            let t = three_faces(&m, &rho).unwrap();
            assert!(t.free_energy_loss <= 1e-10 && t.asym_work <= 1e-10);
            assert!((t.free_energy_loss - t.free_energy_loss_direct).abs() < 1e-10);
            assert!((t.asym_work - t.asym_work_direct).abs() < 1e-10);
        }
    }

    #[test]
    fn fisher_information_examples() {
        let m = m3_cyc();
        assert!((fisher_information(&m, m.pi()).unwrap() - 0.1715728752538096).abs() < 1e-12);
        let db = m3();
        assert_eq!(fisher_information(&db, db.pi()).unwrap(), 0.0);
        let mut prev = -1.0;
        for k in 0..10 {
            let s = k as f64 / 10.0;
            let t = 1.0 / 3.0;
            let rho = [t + s * (1.0 - t), t - s * t, t - s * t];
            let v = fisher_information(&db, &rho).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn contraction_examples() {
        let m = m3_cyc();
        let rho = [0.5, 0.3, 0.2];
        let j0 = m.zero_cost_flux(&rho).unwrap();
        let u = neg(&m.nodes().ddiv(&j0).unwrap());
        assert!(contract_cost(&m, &rho, &u).unwrap().value.abs() < 1e-12);
        let two = ZeroRangeModel::with_uniform_eta(
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0]),
            None,
            Eta::Identity,
        )
        .unwrap();
        let r2 = [0.4, 0.6];
        let c = contract_cost(&two, &r2, &[-0.3, 0.3]).unwrap();
        assert_eq!(c.value, two.cost(&r2, &[0.3]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = [0.2, -0.5, 0.3];
        let c = contract_cost(&m, &rho, &u).unwrap();
        let fiber_point = c.flux.clone();
        for _ in 0..20 {
            let t = rng.gen_range(-1.0..1.0);
            let j = add(&fiber_point, &[t, -t, t]);
            assert!(c.value <= m.cost(&rho, &j).unwrap() + 1e-12);
        }
        assert!(contract_cost(&m, &rho, &[0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn duality_checks_and_checked_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let m = random_model(&mut rng, 4, Eta::power(0.5).unwrap());
        let c = CheckedCost::new(m, &mut rng).unwrap();
        assert!(c.check.cost_vs_hamiltonian < 1e-5 && c.check.psi_vs_psi_star < 1e-5);
        // A cost whose Hamiltonian is off by a factor is rejected.
        struct Wrong(ZeroRangeModel);
        impl CostOracle for Wrong {
            fn nodes(&self) -> NodeSet {
                self.0.nodes()
            }
            fn cost(&self, rho: &[f64], j: &[f64]) -> Result<f64> {
                self.0.cost(rho, j)
            }
            fn hamiltonian(&self, rho: &[f64], z: &[f64]) -> Result<f64> {
                Ok(2.0 * self.0.hamiltonian(rho, z)?)
            }
        }
        assert!(CheckedCost::new(Wrong(m3()), &mut rng).is_err());
    }

    #[test]
    fn generic_routes_match_closed_forms() {
        let m = m3_cyc();
        let generic = CostOnly(&m);
        let rho = [0.45, 0.35, 0.2];
        let z = [0.3, -0.8, 0.5];
        let a = psi_star(&generic, &rho, &z).unwrap();
        assert!((a - m.psi_star(&rho, &z).unwrap()).abs() < 1e-8);
        let fi = fisher_information(&generic, m.pi()).unwrap();
        assert!((fi - 0.1715728752538096).abs() < 1e-8);
        let c = contract_cost(&generic, &rho, &[0.1, -0.3, 0.2]).unwrap();
        let exact = contract_cost(&m, &rho, &[0.1, -0.3, 0.2]).unwrap();
        assert!((c.value - exact.value).abs() < 1e-8);
    }
}
