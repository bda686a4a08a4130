use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use mftlab_core::drift::{maneric_verify, pre_generic_verify, DriftedModel, ManericReport, PreGenericReport};
use mftlab_core::flows::{integrate_flow, FlowKind, FlowOptions};
use mftlab_core::hamiltonian::three_node_structures;
use mftlab_core::mft::{self, CostOracle, ThreeFaces};
use mftlab_core::quadratise::{
    contracted_quasi_generic, identity_residual, k_operator, m_operator, m_structure_degeneration,
    m_structure_hje_diagnostic, DegenerationSeries, QuasiGenericReport, Quadratisation,
};
use mftlab_core::sim::{
    counts_from_density, microstate_count, ssa_replicas, stationary_oracle, sup_gap, Trajectory, KURTZ_GRID,
};
use mftlab_core::sweep::{random_state, sobol_simplex};
use mftlab_core::{Error, ZeroRangeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, Loaded};
use crate::{DriftArgs, Failure, FlowArgs, QuadratiseArgs, ReportArgs, SimArgs};

/// Largest microstate space for which simulations are compared with the exact law.
const ORACLE_LIMIT: u64 = 500;
const SWEEP_SEED: u32 = 0x5eed;

#[derive(Serialize)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn meta(command: &'static str, loaded: &Loaded, seed: Option<u64>) -> Meta {
    Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: loaded.sha256.clone(),
        seed,
    }
}

fn io_fail(e: std::io::Error, what: &Path) -> Failure {
    Failure::Usage(anyhow!(e).context(format!("writing {}", what.display())))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).context("serialising report").map_err(Failure::Usage)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| io_fail(e, p)),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_fail(e, Path::new("stdout"))),
            _ => Ok(()),
        },
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Explicit density, a quasi-random sweep, or the stationary density.
fn evaluation_points(base: &ZeroRangeModel, rho: Option<Vec<f64>>, sweep: Option<usize>) -> Result<Vec<Vec<f64>>, Failure> {
    match (rho, sweep) {
        (Some(r), _) => Ok(vec![r]),
        (None, Some(0)) => Err(Failure::Usage(anyhow!("--sweep needs at least one point"))),
        (None, Some(k)) => Ok(sobol_simplex(base.n(), k, SWEEP_SEED)),
        (None, None) => Ok(vec![base.pi().to_vec()]),
    }
}

pub fn validate(path: &Path) -> Result<(), Failure> {
    let loaded = config::load(path)?;
    let cfg = &loaded.config;
    let report = cfg.validation()?;
    println!("nodes: {}", report.n_nodes);
    println!("irreducible: {}", yes_no(report.irreducible));
    if !report.passed() {
        for p in &report.problems {
            println!("problem: {p}");
        }
        return Err(Failure::Core(Error::ModelInvalid(report.problems.join("; "))));
    }
    println!("stationary weights: {:?}", report.pi);
    println!("stationarity residual: {:.3e}", report.stationarity_residual);
    println!("detailed balance: {}", yes_no(report.detailed_balance));
    println!("detailed balance residual: {:.3e}", report.detailed_balance_residual);
    let model = cfg.base_model()?;
    println!("spectral gap: {:.6}", model.spectral_gap());
    if let Some(d) = &cfg.drift {
        DriftedModel::new(model, d.lambda)?;
        println!("drift: lambda = {}", d.lambda);
    }
    Ok(())
}

pub fn flow(a: FlowArgs) -> Result<(), Failure> {
    let loaded = config::load(&a.config)?;
    let model = loaded.config.model()?;
    let n = model.base().n();
    let rho0 = a.rho0.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    if !(a.tol > 0.0) {
        return Err(Failure::Usage(anyhow!("--tol must be positive")));
    }
    let mut res = integrate_flow(model.flow_model(), a.kind, &rho0, a.t_end, &FlowOptions::with_tol(a.tol))?;
    let energy_name = match &model {
        config::Model::Plain(m) if n == 3 => {
            let (first, _) = three_node_structures(m)?;
            res.set_energy(|r| first.energy(r))?;
            "three-node invariant"
        }
        _ => "mass",
    };
    let drift_of = |v: &[f64]| v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max);
    let v_rise = res.free_energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let lines = [
        format!("kind: {}", a.kind),
        format!("steps recorded: {}", res.times.len()),
        format!("final state: {:?}", res.final_state()),
        format!("max V increase: {:.3e}", v_rise.max(0.0)),
        format!("max E drift ({energy_name}): {:.3e}", drift_of(&res.energy)),
        format!("max mass drift: {:.3e}", drift_of(&res.mass)),
    ];
    match &a.out {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_fail(e, p))?;
            res.write_csv(BufWriter::new(f))?;
            for l in &lines {
                println!("{l}");
            }
        }
        None => {
            let mut buf = Vec::new();
            res.write_csv(&mut buf)?;
            if let Err(e) = std::io::stdout().lock().write_all(&buf) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(io_fail(e, Path::new("stdout")));
                }
            }
            for l in &lines {
                eprintln!("{l}");
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PointReport {
    rho: Vec<f64>,
    force: Vec<f64>,
    force_sym: Vec<f64>,
    force_asym: Vec<f64>,
    quasipotential: f64,
    hje_residual: f64,
    theta_sym_asym: f64,
    theta_asym_sym: f64,
    decomposition_residual: f64,
    fir_gap_at_zero_cost_flux: f64,
    three_faces: ThreeFaces,
    fisher_information: f64,
}

fn point_report(c: &dyn CostOracle, base: &ZeroRangeModel, rho: &[f64]) -> mftlab_core::Result<PointReport> {
    let (fs, fa) = mft::force_split(c, rho)?;
    let j0 = c.analytic_zero_cost_flux(rho)?;
    Ok(PointReport {
        rho: rho.to_vec(),
        force: fs.iter().zip(&fa).map(|(a, b)| a + b).collect(),
        quasipotential: base.quasipotential(rho)?,
        hje_residual: mft::hje_residual(c, |r| c.grad_v(r), rho)?,
        theta_sym_asym: mft::theta_pairing(c, rho, &fs, &fa)?,
        theta_asym_sym: mft::theta_pairing(c, rho, &fa, &fs)?,
        decomposition_residual: mft::decompose_cost(c, rho, &j0)?.max_residual(),
        fir_gap_at_zero_cost_flux: mft::fir_gap(c, rho, &j0)?.gap,
        three_faces: mft::three_faces(c, rho)?,
        fisher_information: mft::fisher_information(c, rho)?,
        force_sym: fs,
        force_asym: fa,
    })
}

#[derive(Serialize)]
struct ReportSweep {
    points: usize,
    max_abs_hje_residual: f64,
    max_abs_theta: f64,
    max_decomposition_residual: f64,
    min_fir_gap_at_zero_cost_flux: f64,
    max_free_energy_loss: f64,
    max_asym_work: f64,
    max_fisher_information: f64,
}

#[derive(Serialize)]
struct MftReport {
    meta: Meta,
    drift_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<PointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<ReportSweep>,
}

pub fn mft_report(a: ReportArgs) -> Result<(), Failure> {
    let loaded = config::load(&a.config)?;
    let model = loaded.config.model()?;
    let base = model.base();
    let single = a.sweep.is_none();
    let points = evaluation_points(base, a.rho, a.sweep)?;
    let c = model.oracle();
    let reports: Vec<PointReport> =
        points.par_iter().map(|r| point_report(c, base, r)).collect::<mftlab_core::Result<_>>()?;
    let sweep = (!single).then(|| {
        let fold = |f: &dyn Fn(&PointReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        ReportSweep {
            points: reports.len(),
            max_abs_hje_residual: fold(&|p| p.hje_residual.abs()),
            max_abs_theta: fold(&|p| p.theta_sym_asym.abs().max(p.theta_asym_sym.abs())),
            max_decomposition_residual: fold(&|p| p.decomposition_residual),
            min_fir_gap_at_zero_cost_flux: -fold(&|p| -p.fir_gap_at_zero_cost_flux),
            max_free_energy_loss: fold(&|p| p.three_faces.free_energy_loss),
            max_asym_work: fold(&|p| p.three_faces.asym_work),
            max_fisher_information: fold(&|p| p.fisher_information),
        }
    });
    let report = MftReport {
        meta: meta("mft-report", &loaded, None),
        drift_lambda: loaded.config.drift.as_ref().map(|d| d.lambda),
        note: loaded.config.drift.as_ref().map(|_| {
            "with drift the dissipation potential is not even, so theta and the decomposition residuals need not vanish"
        }),
        point: if single { reports.into_iter().next() } else { None },
        sweep,
    };
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct QuadPoint {
    rho: Vec<f64>,
    k: Vec<f64>,
    m: Vec<f64>,
    k_identity_residual: f64,
    m_identity_residual: f64,
    m_structure_diagnostic: f64,
}

#[derive(Serialize)]
struct QuadSweep {
    points: usize,
    max_k_identity_residual: f64,
    max_m_identity_residual: f64,
    max_abs_m_structure_diagnostic: f64,
}

#[derive(Serialize)]
struct Degeneration {
    /// Every point with `α < 0.1` has a strictly negative diagnostic.
    negative_below_tenth: bool,
    series: DegenerationSeries,
}

#[derive(Serialize)]
struct QuadReport {
    meta: Meta,
    detailed_balance: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<QuadPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<QuadSweep>,
    quasi_generic: QuasiGenericReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    degeneration: Option<Degeneration>,
}

fn quad_point(m: &ZeroRangeModel, rho: &[f64]) -> mftlab_core::Result<QuadPoint> {
    Ok(QuadPoint {
        rho: rho.to_vec(),
        k: k_operator(m, rho)?,
        m: m_operator(m, rho)?,
        k_identity_residual: identity_residual(m, rho, Quadratisation::K)?,
        m_identity_residual: identity_residual(m, rho, Quadratisation::M)?,
        m_structure_diagnostic: m_structure_hje_diagnostic(m, rho)?,
    })
}

pub fn quadratise(a: QuadratiseArgs) -> Result<(), Failure> {
    let loaded = config::load(&a.config)?;
    if loaded.config.drift.is_some() {
        eprintln!("note: quadratisation uses the model without its drift");
    }
    let m = loaded.config.base_model()?;
    let single = a.sweep.is_none();
    let points = evaluation_points(&m, a.rho, a.sweep)?;
    let rows: Vec<QuadPoint> = points.par_iter().map(|r| quad_point(&m, r)).collect::<mftlab_core::Result<_>>()?;
    let quasi_generic = contracted_quasi_generic(&m, &points)?;
    let degeneration = match a.degeneration.as_deref() {
        Some(&[x, y]) => {
            let mut alphas = vec![0.5, 0.2];
            alphas.extend((1..=9).map(|k| 10f64.powi(-k)));
            let series = m_structure_degeneration(&m, x, y, &alphas)?;
            if let Some(p) = &a.csv {
                let f = File::create(p).map_err(|e| io_fail(e, p))?;
                series.write_csv(BufWriter::new(f))?;
            }
            let negative_below_tenth = series.points.iter().filter(|p| p.alpha < 0.1).all(|p| p.raw < 0.0);
            Some(Degeneration { negative_below_tenth, series })
        }
        Some(_) => unreachable!("clap enforces two values"),
        None => None,
    };
    let sweep = (!single).then(|| {
        let fold = |f: &dyn Fn(&QuadPoint) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        QuadSweep {
            points: rows.len(),
            max_k_identity_residual: fold(&|p| p.k_identity_residual),
            max_m_identity_residual: fold(&|p| p.m_identity_residual),
            max_abs_m_structure_diagnostic: fold(&|p| p.m_structure_diagnostic.abs()),
        }
    });
    let report = QuadReport {
        meta: meta("quadratise", &loaded, None),
        detailed_balance: m.is_detailed_balance(),
        point: if single { rows.into_iter().next() } else { None },
        sweep,
        quasi_generic,
        degeneration,
    };
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct DriftReport {
    meta: Meta,
    lambda: f64,
    samples: usize,
    pre_generic: PreGenericReport,
    maneric: ManericReport,
    /// Every reported quantity at `λ = 0` equals the model without drift, bit for bit.
    zero_drift_regression: bool,
    passed: bool,
}

fn zero_drift_matches(base: &ZeroRangeModel, samples: &[(Vec<f64>, Vec<f64>)]) -> mftlab_core::Result<bool> {
    let dm = DriftedModel::new(base.clone(), 0.0)?;
    let mut ok = true;
    for (rho, j) in samples {
        ok &= dm.force(rho)? == base.force(rho)?;
        ok &= dm.zero_cost_flux(rho)? == base.zero_cost_flux(rho)?;
        ok &= dm.combined_cost(rho, j)? == base.cost(rho, j)?;
        ok &= dm.psi_star_mft(rho, j)? == base.psi_star(rho, j)?;
        ok &= dm.psi_mft(rho, j)? == base.psi(rho, j)?;
    }
    Ok(ok)
}

pub fn drift_demo(a: DriftArgs) -> Result<(), Failure> {
    let loaded = config::load(&a.config)?;
    let lambda = a
        .lambda
        .or(loaded.config.drift.as_ref().map(|d| d.lambda))
        .ok_or_else(|| Failure::Usage(anyhow!("no drift strength: pass --lambda or add a [drift] section")))?;
    if a.samples == 0 {
        return Err(Failure::Usage(anyhow!("--samples must be positive")));
    }
    let seed = resolve_seed(a.seed);
    let base = loaded.config.base_model()?;
    let dm = DriftedModel::new(base.clone(), lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..a.samples)
        .map(|_| (random_state(&mut rng, 3), (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let pre_generic = pre_generic_verify(&dm, &samples)?;
    let maneric = maneric_verify(&dm, &samples)?;
    let zero_drift_regression = zero_drift_matches(&base, &samples)?;
    let passed = pre_generic.passed && maneric.passed && zero_drift_regression;
    let report = DriftReport {
        meta: meta("drift-demo", &loaded, Some(seed)),
        lambda,
        samples: a.samples,
        pre_generic,
        maneric,
        zero_drift_regression,
        passed,
    };
    emit_json(&report, a.out.as_deref())?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification("drifted-model checks did not all pass; see report".into()))
    }
}

/// Shared set-up of `simulate` and `ergodic`.
struct SimRun {
    loaded: Loaded,
    model: ZeroRangeModel,
    seed: u64,
    counts: Vec<u64>,
    runs: Vec<Trajectory>,
}

fn run_replicas(a: &SimArgs) -> Result<SimRun, Failure> {
    let loaded = config::load(&a.config)?;
    if loaded.config.drift.is_some() {
        return Err(Failure::Usage(anyhow!(
            "the particle simulation covers the zero-range process only; remove the [drift] section"
        )));
    }
    let model = loaded.config.base_model()?;
    if a.n == 0 {
        return Err(Failure::Usage(anyhow!("--n must be positive")));
    }
    if !(a.t_end > 0.0 && a.t_end.is_finite()) {
        return Err(Failure::Usage(anyhow!("--T must be positive and finite")));
    }
    if a.replicas == 0 {
        return Err(Failure::Usage(anyhow!("--replicas must be positive")));
    }
    let seed = resolve_seed(a.seed);
    let rho0 = a.rho0.clone().unwrap_or_else(|| model.pi().to_vec());
    if rho0.len() != model.n() {
        return Err(Failure::Usage(anyhow!("--rho0 has {} entries for {} nodes", rho0.len(), model.n())));
    }
    let counts = counts_from_density(&rho0, a.n)?;
    let runs = ssa_replicas(&model, &counts, a.t_end, seed, a.replicas)?;
    Ok(SimRun { loaded, model, seed, counts, runs })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

/// Total-variation distance of each run's occupation to the exact law, when
/// the microstate space is small.
fn oracle_tv(run: &SimRun) -> Result<Option<(Vec<f64>, f64)>, Failure> {
    let size = microstate_count(run.model.n(), run.counts.iter().sum()).unwrap_or(u64::MAX);
    if size > ORACLE_LIMIT {
        return Ok(None);
    }
    let law = stationary_oracle(&run.model, run.counts.iter().sum())?;
    Ok(Some((run.runs.iter().map(|tr| law.tv_distance(&tr.occupation())).collect(), law.residual)))
}

#[derive(Serialize)]
struct ReplicaSummary {
    stream: u64,
    events: usize,
    final_density: Vec<f64>,
    ergodic_average: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kurtz_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv_to_stationary: Option<f64>,
}

#[derive(Serialize)]
struct SimSummary {
    meta: Meta,
    particles: u64,
    t_end: f64,
    replicas: u64,
    initial_counts: Vec<u64>,
    runs: Vec<ReplicaSummary>,
    /// Median over replicas of `sup_t ‖ρⁿ(t) − ρ(t)‖∞` against the full flow.
    median_kurtz_gap: Option<f64>,
    median_tv_to_stationary: Option<f64>,
    oracle_residual: Option<f64>,
}

pub fn simulate(a: SimArgs) -> Result<(), Failure> {
    let run = run_replicas(&a)?;
    let start: Vec<f64> = run.counts.iter().map(|&c| c as f64 / a.n as f64).collect();
    let grid: Vec<f64> = (0..KURTZ_GRID).map(|k| a.t_end * k as f64 / (KURTZ_GRID - 1) as f64).collect();
    let opts = FlowOptions { t_eval: Some(grid.clone()), ..Default::default() };
    // The limit flow needs an interior start; boundary starts skip the gap.
    let ode = if start.iter().all(|&r| r > 0.0) {
        Some(integrate_flow(&run.model, FlowKind::Full, &start, a.t_end, &opts)?)
    } else {
        eprintln!("note: initial density touches the boundary; Kurtz gap not computed");
        None
    };
    let gaps: Option<Vec<f64>> =
        ode.as_ref().map(|o| run.runs.par_iter().map(|tr| sup_gap(tr, &grid, &o.states)).collect());
    let tv = oracle_tv(&run)?;
    let runs = run
        .runs
        .iter()
        .enumerate()
        .map(|(k, tr)| ReplicaSummary {
            stream: tr.stream,
            events: tr.n_events(),
            final_density: tr.density_at(a.t_end),
            ergodic_average: tr.ergodic_average(),
            kurtz_gap: gaps.as_ref().map(|g| g[k]),
            tv_to_stationary: tv.as_ref().map(|(d, _)| d[k]),
        })
        .collect();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| io_fail(e, dir))?;
        for tr in &run.runs {
            let p = dir.join(format!("trajectory_{}.csv", tr.stream));
            let mut w = BufWriter::new(File::create(&p).map_err(|e| io_fail(e, &p))?);
            tr.write_csv(&mut w)?;
            w.flush().map_err(|e| io_fail(e, &p))?;
        }
    }
    let summary = SimSummary {
        meta: meta("simulate", &run.loaded, Some(run.seed)),
        particles: a.n,
        t_end: a.t_end,
        replicas: a.replicas,
        initial_counts: run.counts.clone(),
        runs,
        median_kurtz_gap: gaps.and_then(median),
        median_tv_to_stationary: tv.as_ref().and_then(|(d, _)| median(d.clone())),
        oracle_residual: tv.map(|(_, r)| r),
    };
    let target = a.out.as_ref().map(|d| d.join("summary.json"));
    emit_json(&summary, target.as_deref())?;
    if let Some(t) = target {
        println!("wrote {} trajectories and {}", run.runs.len(), t.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct ErgodicReplica {
    stream: u64,
    average: Vec<f64>,
    distance_to_stationary: f64,
    /// `Ψ*(ρ̄, F(ρ̄))`; absent when the average touches the boundary.
    fisher_information: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv_to_stationary: Option<f64>,
}

#[derive(Serialize)]
struct ErgodicReport {
    meta: Meta,
    particles: u64,
    t_end: f64,
    stationary: Vec<f64>,
    mean_average: Vec<f64>,
    max_distance_to_stationary: f64,
    fisher_information_at_stationary: f64,
    replicas: Vec<ErgodicReplica>,
    median_tv_to_stationary: Option<f64>,
}

pub fn ergodic(a: SimArgs) -> Result<(), Failure> {
    let run = run_replicas(&a)?;
    let pi = run.model.pi().to_vec();
    let tv = oracle_tv(&run)?;
    let replicas: Vec<ErgodicReplica> = run
        .runs
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            let avg = tr.ergodic_average();
            let dist = max_abs(&avg.iter().zip(&pi).map(|(a, p)| a - p).collect::<Vec<_>>());
            ErgodicReplica {
                stream: tr.stream,
                fisher_information: run.model.fisher_information(&avg).ok(),
                average: avg,
                distance_to_stationary: dist,
                tv_to_stationary: tv.as_ref().map(|(d, _)| d[k]),
            }
        })
        .collect();
    let r = replicas.len() as f64;
    let mean_average: Vec<f64> =
        (0..pi.len()).map(|x| replicas.iter().map(|e| e.average[x]).sum::<f64>() / r).collect();
    let report = ErgodicReport {
        meta: meta("ergodic", &run.loaded, Some(run.seed)),
        particles: a.n,
        t_end: a.t_end,
        max_distance_to_stationary: replicas.iter().map(|e| e.distance_to_stationary).fold(0.0, f64::max),
        fisher_information_at_stationary: run.model.fisher_information(&pi)?,
        stationary: pi,
        mean_average,
        median_tv_to_stationary: tv.and_then(|(d, _)| median(d)),
        replicas,
    };
    emit_json(&report, a.out.as_deref())
}
