//! Full, symmetric and antisymmetric flows `ρ̇ = −ddiv ∂_ζΨ*(ρ, F_kind(ρ))`,
//! their monitors, and CSV export.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{check_state, NodeSet};
use crate::ode::{integrate, OdeOptions};
use crate::zero_range::ZeroRangeModel;

/// Integration stops once a density drops below this.
pub const BOUNDARY_MIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Full,
    Symmetric,
    Antisymmetric,
}

impl FromStr for FlowKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FlowKind::Full),
            "symmetric" | "sym" => Ok(FlowKind::Symmetric),
            "antisymmetric" | "asym" => Ok(FlowKind::Antisymmetric),
            other => Err(Error::input(format!("unknown flow kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlowKind::Full => "full",
            FlowKind::Symmetric => "symmetric",
            FlowKind::Antisymmetric => "antisymmetric",
        })
    }
}

/// A model whose force splits into symmetric and antisymmetric parts.
pub trait FlowModel: Sync {
    fn nodes(&self) -> NodeSet;
    /// `∂_ζΨ*(ρ, F_kind(ρ))` for any positive density (mass not enforced).
    fn kind_flux(&self, kind: FlowKind, rho: &[f64]) -> Result<Vec<f64>>;
    /// Quasipotential, for the Lyapunov monitor.
    fn free_energy(&self, rho: &[f64]) -> Result<f64>;

    fn velocity(&self, kind: FlowKind, rho: &[f64]) -> Result<Vec<f64>> {
        let j = self.kind_flux(kind, rho)?;
        let d = self.nodes().ddiv(&j)?;
        Ok(d.into_iter().map(|v| -v).collect())
    }
}

impl FlowModel for ZeroRangeModel {
    fn nodes(&self) -> NodeSet {
        ZeroRangeModel::nodes(self)
    }

    fn kind_flux(&self, kind: FlowKind, rho: &[f64]) -> Result<Vec<f64>> {
        let eta = self.eta_values(rho)?;
        let (p, q) = self.edge_weights();
        Ok(self
            .nodes()
            .edges()
            .enumerate()
            .map(|(k, (x, y))| match kind {
                // 2c sinh F = a − b
                FlowKind::Full => p[k] * eta[x] - q[k] * eta[y],
                // 2c sinh F^sym = √(pq) (η_x − η_y)
                FlowKind::Symmetric => (p[k] * q[k]).sqrt() * (eta[x] - eta[y]),
                // 2c sinh F^asym = √(η_x η_y) (p − q)
                FlowKind::Antisymmetric => (eta[x] * eta[y]).sqrt() * (p[k] - q[k]),
            })
            .collect())
    }

    fn free_energy(&self, rho: &[f64]) -> Result<f64> {
        Ok(self.quasipotential_raw(rho))
    }
}

/// `ρ̇_x = Σ_y A_xy √(π_xη_x π_yη_y)` with the skew matrix
/// `A_xy = Q_yx √(π_y/π_x) − Q_xy √(π_x/π_y)`.
pub fn zr_antisymmetric_field(m: &ZeroRangeModel, rho: &[f64]) -> Result<Vec<f64>> {
    let a = skew_rates(m);
    let s = weighted_eta(m, rho)?;
    let n = m.n();
    Ok((0..n)
        .map(|x| (0..n).filter(|&y| y != x).map(|y| a[x][y] * (s[x] * s[y]).sqrt()).sum())
        .collect())
}

/// The skew matrix `A` of the antisymmetric zero-range dynamics.
pub fn skew_rates(m: &ZeroRangeModel) -> Vec<Vec<f64>> {
    let n = m.n();
    let q = m.rates();
    let pi = m.pi();
    (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    if x == y {
                        0.0
                    } else {
                        q[(y, x)] * (pi[y] / pi[x]).sqrt() - q[(x, y)] * (pi[x] / pi[y]).sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

/// `s_x = π_x η_x(ρ_x/π_x)`.
pub fn weighted_eta(m: &ZeroRangeModel, rho: &[f64]) -> Result<Vec<f64>> {
    let eta = m.eta_values(rho)?;
    Ok(eta.iter().zip(m.pi()).map(|(e, p)| e * p).collect())
}

#[derive(Clone, Debug, Default)]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// Record exactly these times instead of every accepted step.
    pub t_eval: Option<Vec<f64>>,
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions { ode: OdeOptions::with_tol(tol), t_eval: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowResult {
    pub kind: FlowKind,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub free_energy: Vec<f64>,
    /// Energy of the attached Hamiltonian structure; total mass unless
    /// replaced with [`FlowResult::set_energy`].
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
}

impl FlowResult {
    pub fn set_energy<E: Fn(&[f64]) -> Result<f64>>(&mut self, e: E) -> Result<()> {
        self.energy = self.states.iter().map(|r| e(r)).collect::<Result<_>>()?;
        Ok(())
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// CSV with columns `t, rho_0.., V, E, mass`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map(|s| s.len()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|x| format!("rho_{x}")));
        header.extend(["V", "E", "mass"].map(String::from));
        w.write_record(&header).map_err(io_err)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt17(*t)];
            row.extend(self.states[k].iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.free_energy[k]));
            row.push(fmt17(self.energy[k]));
            row.push(fmt17(self.mass[k]));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv write failed: {e}"))
}

/// Round-trip float formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn integrate_flow<M: FlowModel + ?Sized>(
    m: &M,
    kind: FlowKind,
    rho0: &[f64],
    t_end: f64,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    let mut start = rho0.to_vec();
    if start.len() != m.nodes().len() {
        return Err(Error::input("initial state has the wrong length"));
    }
    check_state(&mut start)?;
    if start.iter().any(|&r| r < BOUNDARY_MIN) {
        return Err(Error::Boundary("initial state must be interior".into()));
    }
    let guard = |y: &[f64]| -> Result<()> {
        match y.iter().position(|&r| r < BOUNDARY_MIN) {
            Some(x) => Err(Error::Boundary(format!("density at node {x} fell below {BOUNDARY_MIN:e}"))),
            None => Ok(()),
        }
    };
    let sol = integrate(|y| m.velocity(kind, y), &start, t_end, &opts.ode, opts.t_eval.as_deref(), guard)?;
    let free_energy = sol.states.iter().map(|r| m.free_energy(r)).collect::<Result<Vec<_>>>()?;
    let mass: Vec<f64> = sol.states.iter().map(|r| r.iter().sum()).collect();
    Ok(FlowResult {
        kind,
        times: sol.times,
        states: sol.states,
        free_energy,
        energy: mass.clone(),
        mass,
    })
}

/// `max_t |E(ρ(t)) − E(ρ(0))|`.
pub fn conserve_monitor<E: Fn(&[f64]) -> Result<f64>>(flow: &FlowResult, e: E) -> Result<f64> {
    let Some(first) = flow.states.first() else {
        return Ok(0.0);
    };
    let e0 = e(first)?;
    let mut worst: f64 = 0.0;
    for s in &flow.states {
        worst = worst.max((e(s)? - e0).abs());
    }
    Ok(worst)
}

/// Largest increase of `V` between consecutive samples (≤ 0 when monotone).
pub fn lyapunov_monitor<V: Fn(&[f64]) -> Result<f64>>(flow: &FlowResult, v: V) -> Result<f64> {
    let vals = flow.states.iter().map(|s| v(s)).collect::<Result<Vec<_>>>()?;
    Ok(vals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::Eta;
    use crate::sweep::{random_db_model, random_model, random_state};
    use crate::zero_range::reference::{m3, m3_cyc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn m3_relaxation_matches_closed_form() {
        let m = m3();
        let eps = 1e-3;
        let rho0 = [1.0 - 2.0 * eps, eps, eps];
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let opts = FlowOptions { t_eval: Some(grid.clone()), ..Default::default() };
        let flow = integrate_flow(&m, FlowKind::Full, &rho0, 2.0, &opts).unwrap();
        for (t, s) in flow.times.iter().zip(&flow.states) {
            for x in 0..3 {
                let exact = 1.0 / 3.0 + (rho0[x] - 1.0 / 3.0) * (-3.0 * t).exp();
                assert!((s[x] - exact).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn symmetric_equals_full_under_detailed_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_db_model(&mut rng, 4, Eta::power(1.5).unwrap());
        let rho0 = [0.4, 0.3, 0.2, 0.1];
        let a = integrate_flow(&m, FlowKind::Full, &rho0, 3.0, &FlowOptions::default()).unwrap();
        let b = integrate_flow(&m, FlowKind::Symmetric, &rho0, 3.0, &FlowOptions::default()).unwrap();
        for (x, y) in a.final_state().iter().zip(b.final_state()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn antisymmetric_field_examples() {
        let c = m3_cyc();
        let v = zr_antisymmetric_field(&c, &[0.5, 0.3, 0.2]).unwrap();
        assert!((v[0] - (0.1f64.sqrt() - 0.15f64.sqrt())).abs() < 1e-15);
        assert!((v[0] + 0.07107056860390376).abs() < 1e-12);
        assert!(v.iter().sum::<f64>().abs() < 1e-15);
        assert!(zr_antisymmetric_field(&c, c.pi()).unwrap().iter().all(|x| x.abs() < 1e-15));
        let db = m3();
        assert!(zr_antisymmetric_field(&db, &[0.5, 0.3, 0.2]).unwrap().iter().all(|x| *x == 0.0));
        // Agreement with the dissipation-potential form.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 3..6 {
            let m = random_model(&mut rng, n, Eta::power(0.7).unwrap());
            let fa = m.antisymmetric_force().unwrap();
            for _ in 0..10 {
                let rho = random_state(&mut rng, n);
                let j = m.psi_star_gradient(&rho, &fa).unwrap();
                let via_psi: Vec<f64> = m.nodes().ddiv(&j).unwrap().iter().map(|v| -v).collect();
                let direct = zr_antisymmetric_field(&m, &rho).unwrap();
                let closed = m.velocity(FlowKind::Antisymmetric, &rho).unwrap();
                for x in 0..n {
                    assert!((via_psi[x] - direct[x]).abs() < 1e-12);
                    assert!((closed[x] - direct[x]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kind_fluxes_match_psi_star_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng, 4, Eta::power(2.0).unwrap());
        for _ in 0..10 {
            let rho = random_state(&mut rng, 4);
            let (fs, fa) = m.force_split(&rho).unwrap();
            let f: Vec<f64> = fs.iter().zip(&fa).map(|(a, b)| a + b).collect();
            for (kind, force) in [(FlowKind::Full, f), (FlowKind::Symmetric, fs.clone()), (FlowKind::Antisymmetric, fa.clone())] {
                let a = m.kind_flux(kind, &rho).unwrap();
                let b = m.psi_star_gradient(&rho, &force).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn monitors_on_m3_cyc() {
        let c = m3_cyc();
        let rho0 = [0.5, 0.3, 0.2];
        let flow = integrate_flow(&c, FlowKind::Antisymmetric, &rho0, 10.0, &FlowOptions::default()).unwrap();
        let mass = conserve_monitor(&flow, |r| Ok(r.iter().sum())).unwrap();
        assert!(mass < 1e-10);
        let e1 = conserve_monitor(&flow, |r| Ok(2.0 * r.iter().map(|x| x.sqrt()).sum::<f64>())).unwrap();
        assert!(e1 < 1e-7, "E1 drift {e1}");
        let full = integrate_flow(&c, FlowKind::Full, &rho0, 10.0, &FlowOptions::default()).unwrap();
        assert!(lyapunov_monitor(&full, |r| c.free_energy(r)).unwrap() < 1e-9);
    }

    #[test]
    fn symmetric_flow_decays_on_spectral_time_scale() {
        let db = m3();
        let rho0 = [0.7, 0.2, 0.1];
        let t_end = (1e6f64).ln() / db.spectral_gap();
        let flow = integrate_flow(&db, FlowKind::Symmetric, &rho0, t_end, &FlowOptions::default()).unwrap();
        let v0 = flow.free_energy[0];
        assert!(*flow.free_energy.last().unwrap() < 1e-6 * v0);
        assert!(lyapunov_monitor(&flow, |r| db.free_energy(r)).unwrap() <= 1e-9);
    }

    #[test]
    fn boundary_and_input_errors() {
        let m = m3();
        let r = integrate_flow(&m, FlowKind::Full, &[1.0, 0.0, 0.0], 1.0, &FlowOptions::default());
        assert!(matches!(r, Err(Error::Boundary(_))));
        let r = integrate_flow(&m, FlowKind::Full, &[1.2, -0.1, -0.1], 1.0, &FlowOptions::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        assert_eq!("asym".parse::<FlowKind>().unwrap(), FlowKind::Antisymmetric);
        assert!("sideways".parse::<FlowKind>().is_err());
    }

    #[test]
    fn csv_export_round_trips() {
        let m = m3_cyc();
        let flow = integrate_flow(&m, FlowKind::Full, &[0.5, 0.3, 0.2], 1.0, &FlowOptions::default()).unwrap();
        let mut buf = Vec::new();
        flow.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,rho_0,rho_1,rho_2,V,E,mass");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row[1], flow.states[0][0]);
        assert_eq!(row[4], flow.free_energy[0]);
    }
}
