//! Per-node interaction functions `η` of the zero-range process.

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Eta {
    Identity,
    Power { gamma: f64 },
    Tabulated(Tabulated),
}

impl Eta {
    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::ModelInvalid(format!("power exponent must be > 0, got {gamma}")));
        }
        Ok(Eta::Power { gamma })
    }

    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        Tabulated::new(points).map(Eta::Tabulated)
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Eta::Identity => z,
            Eta::Power { gamma } => z.powf(*gamma),
            Eta::Tabulated(t) => t.eval(z),
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Eta::Identity => 1.0,
            Eta::Power { gamma } => gamma * z.powf(gamma - 1.0),
            Eta::Tabulated(t) => t.deriv(z),
        }
    }

    /// `log η(z)`, computed without forming `η` where a closed form exists.
    pub fn log_eval(&self, z: f64) -> f64 {
        match self {
            Eta::Identity => z.ln(),
            Eta::Power { gamma } => gamma * z.ln(),
            Eta::Tabulated(t) => t.eval(z).ln(),
        }
    }

    /// `∫₀^ρ log η(a/π) da`.
    pub fn log_antiderivative(&self, rho: f64, pi: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        match self {
            Eta::Identity => rho * ((rho / pi).ln() - 1.0),
            Eta::Power { gamma } => gamma * rho * ((rho / pi).ln() - 1.0),
            Eta::Tabulated(t) => pi * t.log_integral(rho / pi),
        }
    }

    /// A primitive of `a ↦ (π η(a/π))^{-1/2}`. Closed forms are anchored at 0;
    /// when the integral from 0 diverges or needs quadrature it is anchored at
    /// `π`. Only its derivative enters the Hamiltonian structures.
    pub fn sqrt_coordinate(&self, rho: f64, pi: f64) -> f64 {
        match self {
            Eta::Identity => 2.0 * rho.sqrt(),
            Eta::Power { gamma } if *gamma < 2.0 => {
                let e = 1.0 - 0.5 * gamma;
                pi.powf(0.5 * (gamma - 1.0)) * rho.powf(e) / e
            }
            _ => {
                let f = |a: f64| 1.0 / (pi * self.eval(a / pi)).sqrt();
                let (lo, hi, sign) = if rho >= pi { (pi, rho, 1.0) } else { (rho, pi, -1.0) };
                sign * adaptive_simpson(&f, lo, hi, QUAD_TOL)
            }
        }
    }

    /// Checks the standing assumptions on a grid: `η(0)=0`, `η(1)=1`, strictly
    /// increasing, and `∫ log η` finite near 0.
    pub fn check(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::ModelInvalid("eta(0) must be 0".into()));
        }
        if (self.eval(1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::ModelInvalid(format!("eta(1) = {}, expected 1", self.eval(1.0))));
        }
        let mut prev = 0.0;
        for k in 1..=400 {
            let z = k as f64 / 100.0;
            let v = self.eval(z);
            if !(v > prev) {
                return Err(Error::ModelInvalid(format!("eta not strictly increasing near z={z}")));
            }
            prev = v;
        }
        let lam = self.log_antiderivative(1e-8, 1.0);
        if !lam.is_finite() {
            return Err(Error::ModelInvalid("log eta not integrable near 0".into()));
        }
        Ok(())
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes) through
/// `(z_k, η_k)`, extended linearly beyond the last knot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulated {
    z: Vec<f64>,
    v: Vec<f64>,
    slope: Vec<f64>,
    /// `∫₀^{z_k} log η` at each knot.
    cumulative: Vec<f64>,
}

impl Tabulated {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::ModelInvalid("tabulated eta needs at least 2 points".into()));
        }
        let z: Vec<f64> = points.iter().map(|p| p.0).collect();
        let v: Vec<f64> = points.iter().map(|p| p.1).collect();
        if z[0] != 0.0 || v[0] != 0.0 {
            return Err(Error::ModelInvalid("tabulated eta must start at (0, 0)".into()));
        }
        for k in 1..z.len() {
            if !(z[k] > z[k - 1]) || !(v[k] > v[k - 1]) || !z[k].is_finite() || !v[k].is_finite() {
                return Err(Error::ModelInvalid(
                    "tabulated eta points must be finite and strictly increasing".into(),
                ));
            }
        }
        let slope = pchip_slopes(&z, &v);
        let mut t = Tabulated { z, v, slope, cumulative: Vec::new() };
        let mut cumulative = vec![0.0];
        for k in 1..t.z.len() {
            let piece = t.log_integral_between(t.z[k - 1], t.z[k]);
            cumulative.push(cumulative[k - 1] + piece);
        }
        t.cumulative = cumulative;
        Eta::Tabulated(t.clone()).check()?;
        Ok(t)
    }

    fn segment(&self, z: f64) -> usize {
        match self.z.partition_point(|&k| k <= z) {
            0 => 0,
            p => (p - 1).min(self.z.len() - 2),
        }
    }

    fn end_slope(&self) -> f64 {
        let n = self.z.len();
        let d = self.slope[n - 1];
        if d > 0.0 {
            d
        } else {
            (self.v[n - 1] - self.v[n - 2]) / (self.z[n - 1] - self.z[n - 2])
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z >= self.z[n - 1] {
            return self.v[n - 1] + self.end_slope() * (z - self.z[n - 1]);
        }
        let k = self.segment(z);
        let h = self.z[k + 1] - self.z[k];
        let t = (z - self.z[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.v[k] + h10 * h * self.slope[k] + h01 * self.v[k + 1] + h11 * h * self.slope[k + 1]
    }

    pub fn deriv(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z >= self.z[n - 1] {
            return self.end_slope();
        }
        let k = self.segment(z);
        let h = self.z[k + 1] - self.z[k];
        let t = (z - self.z[k]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.v[k] + d10 * self.slope[k] + d01 * self.v[k + 1] + d11 * self.slope[k + 1]
    }

    fn log_integral_between(&self, lo: f64, hi: f64) -> f64 {
        if lo == 0.0 {
            // z = w² removes the logarithmic singularity at the origin.
            let f = |w: f64| {
                if w == 0.0 {
                    0.0
                } else {
                    2.0 * w * self.eval(w * w).ln()
                }
            };
            adaptive_simpson(&f, 0.0, hi.sqrt(), QUAD_TOL)
        } else {
            adaptive_simpson(&|z: f64| self.eval(z).ln(), lo, hi, QUAD_TOL)
        }
    }

    /// `∫₀^Z log η(z) dz`.
    pub fn log_integral(&self, big_z: f64) -> f64 {
        if big_z <= 0.0 {
            return 0.0;
        }
        let n = self.z.len();
        let k = if big_z >= self.z[n - 1] { n - 1 } else { self.segment(big_z) };
        self.cumulative[k] + self.log_integral_between(self.z[k], big_z)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = edge_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> Eta {
        // Samples of z ↦ z(1+z)/2 on [0, 2].
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|k| {
                let z = k as f64 * 0.05;
                (z, 0.5 * z * (1.0 + z))
            })
            .collect();
        Eta::tabulated(&pts).unwrap()
    }

    #[test]
    fn closed_forms_pass_checks() {
        Eta::Identity.check().unwrap();
        Eta::power(2.0).unwrap().check().unwrap();
        Eta::power(0.5).unwrap().check().unwrap();
        assert!(Eta::power(-1.0).is_err());
    }

    #[test]
    fn log_antiderivative_matches_quadrature() {
        for eta in [Eta::Identity, Eta::power(2.0).unwrap(), Eta::power(0.5).unwrap()] {
            for (rho, pi) in [(0.5f64, 1.0 / 3.0), (0.1, 0.25), (0.9, 0.6)] {
                let f = |w: f64| if w == 0.0 { 0.0 } else { 2.0 * w * eta.log_eval(w * w / pi) };
                let q = adaptive_simpson(&f, 0.0, rho.sqrt(), 1e-13);
                assert!((q - eta.log_antiderivative(rho, pi)).abs() < 1e-9, "{eta:?}");
            }
        }
    }

    #[test]
    fn tabulated_reproduces_smooth_function() {
        let eta = sample_table();
        eta.check().unwrap();
        for z in [0.01, 0.3, 0.77, 1.0, 1.9] {
            let exact = 0.5 * z * (1.0 + z);
            assert!((eta.eval(z) - exact).abs() < 1e-4, "z={z}");
            assert!((eta.deriv(z) - (0.5 + z)).abs() < 5e-3, "z={z}");
        }
        // ∫₀^Z log(z(1+z)/2) dz in closed form.
        let exact = |z: f64| {
            z * z.ln() - z + (1.0 + z) * (1.0 + z).ln() - (1.0 + z) + 1.0 - z * 2f64.ln()
        };
        for z in [0.2, 1.0, 1.5] {
            if let Eta::Tabulated(t) = &eta {
                assert!((t.log_integral(z) - exact(z)).abs() < 1e-4);
            }
        }
        // Linear continuation past the last knot stays increasing.
        assert!(eta.eval(2.5) > eta.eval(2.0));
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(Eta::tabulated(&[(0.0, 0.0)]).is_err());
        assert!(Eta::tabulated(&[(0.0, 0.1), (1.0, 1.0)]).is_err());
        assert!(Eta::tabulated(&[(0.0, 0.0), (0.5, 0.6), (1.0, 0.5)]).is_err());
        assert!(Eta::tabulated(&[(0.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(Eta::tabulated(&[(0.0, 0.0), (1.0, 1.0)]).is_ok());
    }

    #[test]
    fn sqrt_coordinate_derivative() {
        let cases = [
            Eta::Identity,
            Eta::power(0.5).unwrap(),
            Eta::power(3.0).unwrap(),
            sample_table(),
        ];
        for eta in cases {
            for (rho, pi) in [(0.3, 0.25), (0.05, 0.5)] {
                let h = 1e-5;
                let fd = (eta.sqrt_coordinate(rho + h, pi) - eta.sqrt_coordinate(rho - h, pi))
                    / (2.0 * h);
                let exact = 1.0 / (pi * eta.eval(rho / pi)).sqrt();
                assert!((fd - exact).abs() < 1e-5 * exact.max(1.0), "{eta:?} {fd} {exact}");
            }
        }
    }
}
