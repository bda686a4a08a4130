//! Exact event-driven simulation of the zero-range particle system, Kurtz-limit
//! gaps, ergodic averages and the exact microstate stationary law.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{fmt17, integrate_flow, FlowKind, FlowOptions};
use crate::zero_range::{stationary_weights, ZeroRangeModel};

/// Largest microstate space the exact oracle will enumerate.
pub const MAX_MICROSTATES: usize = 10_000;

/// Seeded generator for replica `stream` of experiment `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Piecewise-constant path of particle counts and integer net edge fluxes.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub particles: u64,
    pub n_nodes: usize,
    pub seed: u64,
    pub stream: u64,
    pub t_end: f64,
    /// `times[0] = 0`; one entry per event after that.
    pub times: Vec<f64>,
    /// Row-major, `n_nodes` per entry of `times`.
    counts: Vec<i64>,
    /// Row-major, one net-flux count per edge per entry of `times`.
    flux: Vec<i64>,
}

impl Trajectory {
    pub fn n_events(&self) -> usize {
        self.times.len() - 1
    }

    fn n_edges(&self) -> usize {
        self.n_nodes * (self.n_nodes - 1) / 2
    }

    pub fn counts_at_event(&self, k: usize) -> &[i64] {
        &self.counts[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn flux_at_event(&self, k: usize) -> &[i64] {
        let e = self.n_edges();
        &self.flux[k * e..(k + 1) * e]
    }

    /// Index of the last event at or before `t`.
    fn event_before(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn density_at(&self, t: f64) -> Vec<f64> {
        let n = self.particles as f64;
        self.counts_at_event(self.event_before(t)).iter().map(|&c| c as f64 / n).collect()
    }

    /// Cumulative net flux in mass units.
    pub fn flux_at(&self, t: f64) -> Vec<f64> {
        let n = self.particles as f64;
        self.flux_at_event(self.event_before(t)).iter().map(|&w| w as f64 / n).collect()
    }

    /// Number of events at which `counts ≠ counts(0) − ddiv w` or a count is
    /// negative; integer arithmetic, so any mismatch is a real one.
    pub fn continuity_violations(&self) -> usize {
        let n = self.n_nodes;
        let c0 = self.counts_at_event(0).to_vec();
        let mut bad = 0;
        for k in 0..self.times.len() {
            let w = self.flux_at_event(k);
            let mut expect = c0.clone();
            let mut e = 0;
            for x in 0..n {
                for y in x + 1..n {
                    expect[x] -= w[e];
                    expect[y] += w[e];
                    e += 1;
                }
            }
            let c = self.counts_at_event(k);
            if c != expect.as_slice() || c.iter().any(|&v| v < 0) {
                bad += 1;
            }
        }
        bad
    }

    /// `T⁻¹ ∫₀ᵀ ρ(t) dt`, exact for the piecewise-constant path.
    pub fn ergodic_average(&self) -> Vec<f64> {
        if self.t_end == 0.0 {
            return self.density_at(0.0);
        }
        let mut acc = vec![0.0; self.n_nodes];
        for k in 0..self.times.len() {
            let next = self.times.get(k + 1).copied().unwrap_or(self.t_end);
            let dt = next - self.times[k];
            for (a, &c) in acc.iter_mut().zip(self.counts_at_event(k)) {
                *a += dt * c as f64;
            }
        }
        let scale = self.t_end * self.particles as f64;
        acc.iter().map(|a| a / scale).collect()
    }

    /// Fraction of `[0, T]` spent in each microstate.
    pub fn occupation(&self) -> BTreeMap<Vec<i64>, f64> {
        let mut occ = BTreeMap::new();
        if self.t_end == 0.0 {
            occ.insert(self.counts_at_event(0).to_vec(), 1.0);
            return occ;
        }
        for k in 0..self.times.len() {
            let next = self.times.get(k + 1).copied().unwrap_or(self.t_end);
            *occ.entry(self.counts_at_event(k).to_vec()).or_insert(0.0) += (next - self.times[k]) / self.t_end;
        }
        occ
    }

    /// CSV with columns `t, n_0.., w_01..`; counts are integers.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let fail = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n_nodes).map(|x| format!("n_{x}")));
        for x in 0..self.n_nodes {
            for y in x + 1..self.n_nodes {
                header.push(format!("w_{x}_{y}"));
            }
        }
        w.write_record(&header).map_err(fail)?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.counts_at_event(k).iter().map(|c| c.to_string()));
            row.extend(self.flux_at_event(k).iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// Jump rate `n π_x Q_xy η_x(c_x / (n π_x))` of every ordered pair.
fn jump_rates(m: &ZeroRangeModel, particles: f64, counts: &[i64], out: &mut [f64]) {
    let n = m.n();
    let q = m.rates();
    let pi = m.pi();
    let mut k = 0;
    for x in 0..n {
        let out_x = if counts[x] == 0 { 0.0 } else { particles * pi[x] * m.eta()[x].eval(counts[x] as f64 / (particles * pi[x])) };
        for y in 0..n {
            if y != x {
                out[k] = out_x * q[(x, y)];
                k += 1;
            }
        }
    }
}

/// Splits `rho0` into `particles` counts by largest remainders.
pub fn counts_from_density(rho0: &[f64], particles: u64) -> Result<Vec<u64>> {
    if rho0.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::input("initial density must be finite and nonnegative"));
    }
    let total: f64 = rho0.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("initial density has mass {total}")));
    }
    let exact: Vec<f64> = rho0.iter().map(|r| r * particles as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|v| v.floor() as u64).collect();
    let mut rest = particles - counts.iter().sum::<u64>().min(particles);
    let mut order: Vec<usize> = (0..rho0.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &x in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[x] += 1;
        rest -= 1;
    }
    Ok(counts)
}

/// Exact simulation by the total-rate method on stream `stream` of `seed`.
pub fn ssa_run(m: &ZeroRangeModel, counts0: &[u64], t_end: f64, seed: u64, stream: u64) -> Result<Trajectory> {
    let n = m.n();
    if counts0.len() != n {
        return Err(Error::input(format!("expected {n} initial counts, got {}", counts0.len())));
    }
    let particles: u64 = counts0.iter().sum();
    if particles == 0 {
        return Err(Error::input("particle number must be positive"));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::input(format!("horizon {t_end} must be finite and >= 0")));
    }
    let edges = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (x, y))).collect();
    let edge_of = |x: usize, y: usize| {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        a * n - a * (a + 1) / 2 + (b - a - 1)
    };
    let mut rng = replica_rng(seed, stream);
    let mut counts: Vec<i64> = counts0.iter().map(|&c| c as i64).collect();
    let mut flux = vec![0i64; edges];
    let mut traj = Trajectory {
        particles,
        n_nodes: n,
        seed,
        stream,
        t_end,
        times: vec![0.0],
        counts: counts.clone(),
        flux: flux.clone(),
    };
    let mut rates = vec![0.0; pairs.len()];
    let nf = particles as f64;
    let mut t = 0.0;
    loop {
        jump_rates(m, nf, &counts, &mut rates);
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let wait: f64 = rng.sample(Exp1);
        t += wait / total;
        if t > t_end {
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = rates.len() - 1;
        for (k, r) in rates.iter().enumerate() {
            if u < *r {
                pick = k;
                break;
            }
            u -= r;
        }
        // Rounding in the subtraction could land on a zero-rate pair.
        while rates[pick] == 0.0 {
            pick -= 1;
        }
        let (x, y) = pairs[pick];
        counts[x] -= 1;
        counts[y] += 1;
        flux[edge_of(x, y)] += if x < y { 1 } else { -1 };
        traj.times.push(t);
        traj.counts.extend_from_slice(&counts);
        traj.flux.extend_from_slice(&flux);
    }
    Ok(traj)
}

/// `replicas` independent runs on streams `0..replicas`, in parallel.
pub fn ssa_replicas(m: &ZeroRangeModel, counts0: &[u64], t_end: f64, seed: u64, replicas: u64) -> Result<Vec<Trajectory>> {
    (0..replicas).into_par_iter().map(|r| ssa_run(m, counts0, t_end, seed, r)).collect()
}

/// Points of the uniform grid on which Kurtz gaps are measured.
pub const KURTZ_GRID: usize = 4000;

#[derive(Clone, Debug, Serialize)]
pub struct KurtzRow {
    pub particles: u64,
    pub median_gap: f64,
    pub gaps: Vec<f64>,
}

/// `sup_t ‖ρⁿ(t) − ρ(t)‖∞` against the full flow, on a uniform grid.
pub fn sup_gap(traj: &Trajectory, grid: &[f64], ode_states: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, s) in grid.iter().zip(ode_states) {
        for (a, b) in traj.density_at(*t).iter().zip(s) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Median sup-norm gap between simulated and limiting densities per
/// particle number, each over `replicas` seeded runs.
pub fn kurtz_gap(
    m: &ZeroRangeModel,
    particle_numbers: &[u64],
    rho0: &[f64],
    t_end: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<KurtzRow>> {
    if replicas == 0 {
        return Err(Error::input("need at least one replica"));
    }
    if !(t_end > 0.0) {
        return Err(Error::input("horizon must be positive"));
    }
    let grid: Vec<f64> = (0..KURTZ_GRID).map(|k| t_end * k as f64 / (KURTZ_GRID - 1) as f64).collect();
    let mut rows = Vec::new();
    for (i, &particles) in particle_numbers.iter().enumerate() {
        let counts = counts_from_density(rho0, particles)?;
        let start: Vec<f64> = counts.iter().map(|&c| c as f64 / particles as f64).collect();
        let opts = FlowOptions { t_eval: Some(grid.clone()), ..Default::default() };
        let flow = integrate_flow(m, FlowKind::Full, &start, t_end, &opts)?;
        let run_seed = seed.wrapping_add(i as u64);
        let mut gaps: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| ssa_run(m, &counts, t_end, run_seed, r).map(|tr| sup_gap(&tr, &grid, &flow.states)))
            .collect::<Result<_>>()?;
        let mut sorted = gaps.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
        gaps.shrink_to_fit();
        rows.push(KurtzRow { particles, median_gap: median, gaps });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryLaw {
    pub particles: u64,
    pub states: Vec<Vec<i64>>,
    pub probabilities: Vec<f64>,
    /// `‖Lᵀp‖∞` for the microstate generator `L`.
    pub residual: f64,
}

impl StationaryLaw {
    pub fn probability(&self, counts: &[i64]) -> f64 {
        self.states.iter().position(|s| s.as_slice() == counts).map(|k| self.probabilities[k]).unwrap_or(0.0)
    }

    /// Total-variation distance to an occupation measure.
    pub fn tv_distance(&self, occ: &BTreeMap<Vec<i64>, f64>) -> f64 {
        let mut d = 0.0;
        for (s, p) in self.states.iter().zip(&self.probabilities) {
            d += (p - occ.get(s).copied().unwrap_or(0.0)).abs();
        }
        for (s, q) in occ {
            if !self.states.contains(s) {
                d += q;
            }
        }
        0.5 * d
    }
}

fn compositions(total: i64, parts: usize, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Number of ways to place `particles` on `n_nodes` nodes, if it fits in `u64`.
pub fn microstate_count(n_nodes: usize, particles: u64) -> Option<u64> {
    if n_nodes == 0 {
        return Some(0);
    }
    binomial(particles + n_nodes as u64 - 1, n_nodes as u64 - 1)
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Exact stationary law of the `particles`-particle chain by enumerating all
/// count vectors and solving the dense balance equations.
pub fn stationary_oracle(m: &ZeroRangeModel, particles: u64) -> Result<StationaryLaw> {
    if particles == 0 {
        return Err(Error::input("particle number must be positive"));
    }
    let n = m.n();
    let size = microstate_count(n, particles).unwrap_or(u64::MAX);
    if size > MAX_MICROSTATES as u64 {
        return Err(Error::input(format!("{size} microstates exceed the cap of {MAX_MICROSTATES}")));
    }
    let mut states = Vec::with_capacity(size as usize);
    compositions(particles as i64, n, &mut Vec::new(), &mut states);
    let index: BTreeMap<Vec<i64>, usize> = states.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
    let s = states.len();
    let mut gen = DMatrix::zeros(s, s);
    let mut rates = vec![0.0; n * (n - 1)];
    let nf = particles as f64;
    for (i, c) in states.iter().enumerate() {
        jump_rates(m, nf, c, &mut rates);
        let mut k = 0;
        for x in 0..n {
            for y in 0..n {
                if y == x {
                    continue;
                }
                if rates[k] > 0.0 {
                    let mut d = c.clone();
                    d[x] -= 1;
                    d[y] += 1;
                    gen[(i, index[&d])] += rates[k];
                }
                k += 1;
            }
        }
    }
    let probabilities = stationary_weights(&gen)?;
    let mut full = gen.clone();
    for i in 0..s {
        let out: f64 = gen.row(i).iter().sum();
        full[(i, i)] = -out;
    }
    let p = nalgebra::DVector::from_column_slice(&probabilities);
    let residual = (full.transpose() * p).amax();
    Ok(StationaryLaw { particles, states, probabilities, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::Eta;
    use crate::sweep::random_model;
    use crate::zero_range::reference::{m3, m3_cyc};

    fn two_node(q12: f64, q21: f64) -> ZeroRangeModel {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, q12, q21, 0.0]);
        ZeroRangeModel::with_uniform_eta(q, None, Eta::Identity).unwrap()
    }

    #[test]
    fn continuity_holds_at_every_event() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..6 {
            let m = random_model(&mut rng, n, Eta::power(1.5).unwrap());
            let mut counts = vec![0u64; n];
            counts[0] = 40;
            let tr = ssa_run(&m, &counts, 3.0, 11, n as u64).unwrap();
            assert!(tr.n_events() > 10);
            assert_eq!(tr.continuity_violations(), 0);
            for k in 0..tr.times.len() {
                assert_eq!(tr.counts_at_event(k).iter().sum::<i64>(), 40);
            }
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let m = m3_cyc();
        let a = ssa_run(&m, &[10, 5, 5], 2.0, 42, 0).unwrap();
        let b = ssa_run(&m, &[10, 5, 5], 2.0, 42, 0).unwrap();
        let c = ssa_run(&m, &[10, 5, 5], 2.0, 42, 1).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.counts, b.counts);
        assert_ne!(a.times, c.times);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn empty_node_never_emits() {
        let m = m3();
        let tr = ssa_run(&m, &[1, 0, 0], 5.0, 1, 0).unwrap();
        for k in 0..tr.times.len() {
            assert!(tr.counts_at_event(k).iter().all(|&c| c >= 0));
        }
        assert!(ssa_run(&m, &[0, 0, 0], 1.0, 1, 0).is_err());
        assert!(ssa_run(&m, &[1, 0, 0], -1.0, 1, 0).is_err());
    }

    #[test]
    fn telegraph_jump_count() {
        let m = two_node(1.0, 1.0);
        let t = 2.0;
        let seeds = 10_000u64;
        let total: usize = (0..seeds).map(|s| ssa_run(&m, &[1, 0], t, 77, s).unwrap().n_events()).sum();
        let mean = total as f64 / seeds as f64;
        let sigma = (t / seeds as f64).sqrt();
        assert!((mean - t).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn oracle_small_cases() {
        let law = stationary_oracle(&two_node(1.0, 1.0), 2).unwrap();
        assert!((law.probability(&[2, 0]) - 0.25).abs() < 1e-12);
        assert!((law.probability(&[1, 1]) - 0.5).abs() < 1e-12);
        assert!((law.probability(&[0, 2]) - 0.25).abs() < 1e-12);
        assert!(law.residual < 1e-12);
        let c = m3_cyc();
        let one = stationary_oracle(&c, 1).unwrap();
        for x in 0..3 {
            let mut s = vec![0; 3];
            s[x] = 1;
            assert!((one.probability(&s) - c.pi()[x]).abs() < 1e-12);
        }
        let chain = two_node(2.0, 1.0);
        let one = stationary_oracle(&chain, 1).unwrap();
        assert!((one.probability(&[1, 0]) - 1.0 / 3.0).abs() < 1e-12);
        assert!(stationary_oracle(&c, 200).is_err());
    }

    #[test]
    fn ergodic_average_of_constant_path() {
        let m = m3();
        let tr = ssa_run(&m, &[1, 0, 0], 0.0, 1, 0).unwrap();
        assert_eq!(tr.ergodic_average(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn counts_split_by_largest_remainder() {
        assert_eq!(counts_from_density(&[0.5, 0.25, 0.25], 10).unwrap(), vec![5, 3, 2]);
        assert_eq!(counts_from_density(&[1.0 / 3.0; 3], 100).unwrap().iter().sum::<u64>(), 100);
        assert!(counts_from_density(&[0.5, 0.6, -0.1], 10).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn split_counts_stay_within_one_particle(
            w in proptest::collection::vec(0.0f64..1.0, 2..7),
            particles in 1u64..5_000,
        ) {
            let total: f64 = w.iter().sum();
            proptest::prop_assume!(total > 1e-6);
            let rho: Vec<f64> = w.iter().map(|v| v / total).collect();
            let counts = counts_from_density(&rho, particles).unwrap();
            proptest::prop_assert_eq!(counts.iter().sum::<u64>(), particles);
            for (c, r) in counts.iter().zip(&rho) {
                proptest::prop_assert!((*c as f64 - r * particles as f64).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn short_runs_conserve_particles(seed in 0u64..1_000, n in 2usize..6, particles in 1u64..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, n, Eta::power(0.7).unwrap());
            let mut counts = vec![0u64; n];
            counts[n - 1] = particles;
            let tr = ssa_run(&m, &counts, 2.0, seed, 1).unwrap();
            proptest::prop_assert_eq!(tr.continuity_violations(), 0);
            for k in 0..tr.n_events() {
                proptest::prop_assert_eq!(tr.counts_at_event(k).iter().sum::<i64>(), particles as i64);
            }
        }
    }
}
