//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems whose
//! right-hand side can fail (boundary of the state space).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Defaults to `t_end / 100`.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { atol: 1e-9, rtol: 1e-9, max_step: None, max_steps: 5_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { atol: tol, rtol: tol, ..Default::default() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrates `y' = f(y)` on `[0, t_end]`.
///
/// With `t_eval = None` every accepted step is recorded; otherwise exactly the
/// requested times (sorted, within `[0, t_end]`) are recorded, and steps are
/// shortened to land on them. `guard` is called on every accepted state and
/// stops the integration with its error.
pub fn integrate<F, G>(
    f: F,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    t_eval: Option<&[f64]>,
    guard: G,
) -> Result<OdeSolution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    G: Fn(&[f64]) -> Result<()>,
{
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::input(format!("integration horizon {t_end} must be finite and >= 0")));
    }
    if let Some(te) = t_eval {
        if te.windows(2).any(|w| !(w[1] > w[0])) || te.iter().any(|&t| t < 0.0 || t > t_end) {
            return Err(Error::input("output times must be increasing and inside [0, T]"));
        }
    }
    guard(y0)?;
    let n = y0.len();
    let mut sol = OdeSolution::default();
    let mut targets: Vec<f64> = t_eval.map(|t| t.to_vec()).unwrap_or_default();
    targets.reverse();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let record_all = t_eval.is_none();
    let record = |t: f64, y: &[f64], sol: &mut OdeSolution, targets: &mut Vec<f64>| {
        if record_all {
            sol.times.push(t);
            sol.states.push(y.to_vec());
        } else {
            while let Some(&next) = targets.last() {
                if next <= t {
                    sol.times.push(t);
                    sol.states.push(y.to_vec());
                    targets.pop();
                } else {
                    break;
                }
            }
        }
    };
    record(t, &y, &mut sol, &mut targets);
    if t_end == 0.0 {
        return Ok(sol);
    }
    let h_max = opts.max_step.unwrap_or(t_end / 100.0).min(t_end);
    let mut k1 = f(&y)?;
    if !finite(&k1) {
        return Err(Error::Numerical("non-finite derivative at the initial state".into()));
    }
    let scale0: f64 = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).fold(f64::INFINITY, f64::min);
    let speed = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = if speed > 0.0 { (0.01 * scale0.powf(0.2) / speed).min(h_max) } else { h_max };
    h = h.max(1e-12 * t_end);
    let mut ks: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    while t < t_end {
        if sol.accepted + sol.rejected >= opts.max_steps {
            return Err(Error::Numerical(format!("step limit reached at t = {t}")));
        }
        let mut step_end = t_end;
        if let Some(&next) = targets.last() {
            step_end = step_end.min(next);
        }
        let mut hh = h.min(h_max);
        let landing = t + hh >= step_end - 1e-12 * t_end;
        if landing {
            hh = step_end - t;
        }
        ks[0].clone_from(&k1);
        let mut stage_failed = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (r, kr) in ks.iter().take(s).enumerate() {
                    acc += A[s][r] * kr[i];
                }
                stage[i] = y[i] + hh * acc;
            }
            match f(&stage) {
                Ok(k) if finite(&k) => ks[s] = k,
                _ => {
                    stage_failed = true;
                    break;
                }
            }
        }
        if stage_failed {
            sol.rejected += 1;
            h = 0.25 * hh;
            if h < 1e-14 * t_end.max(1.0) {
                return Err(Error::Numerical(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        // The last stage is evaluated at the fifth-order solution (FSAL).
        let y_new = stage.clone();
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * ks[s][i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (hh * e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if err <= 1.0 {
            t = if landing { step_end } else { t + hh };
            y = y_new;
            k1 = ks[6].clone();
            sol.accepted += 1;
            guard(&y)?;
            record(t, &y, &mut sol, &mut targets);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let next = hh * fac;
            // A step shortened only to land on an output time says little
            // about the admissible step size.
            h = if landing && hh < h { h.max(next) } else { next };
        } else {
            sol.rejected += 1;
            h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = integrate(|y| Ok(vec![-y[0]]), &[1.0], 5.0, &OdeOptions::default(), None, |_| Ok(()))
            .unwrap();
        assert_eq!(*sol.times.last().unwrap(), 5.0);
        assert!((sol.states.last().unwrap()[0] - (-5f64).exp()).abs() < 1e-9);
        assert!(sol.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn harmonic_oscillator_on_grid() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let sol = integrate(
            |y| Ok(vec![y[1], -y[0]]),
            &[1.0, 0.0],
            10.0,
            &OdeOptions::with_tol(1e-10),
            Some(&grid),
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(sol.times, grid);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn guard_stops_integration() {
        let r = integrate(
            |_| Ok(vec![-1.0]),
            &[1.0],
            2.0,
            &OdeOptions::default(),
            None,
            |y| if y[0] < 0.5 { Err(Error::Boundary("hit".into())) } else { Ok(()) },
        );
        assert!(matches!(r, Err(Error::Boundary(_))));
        let r = integrate(|_| Ok(vec![f64::NAN]), &[1.0], 1.0, &OdeOptions::default(), None, |_| Ok(()));
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
