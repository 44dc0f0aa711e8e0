//! Stationary and transient densities of the fundamental price modulo one.
//!
//! The rescaled density f(θ,·) solves the periodic problem
//!
//! ```text
//!   ½ f'' − ((μ̄0 + θ μ̄1) f)' = 0,   f(0) = f(1),   ∫ f/σ̄² = 1
//! ```
//!
//! and ψ = f(0,·)/σ̄², χ = f(θ,·)/σ̄² are the stationary laws of the price
//! position without and during a meta-order. With M = ∫ 2(μ̄0 + θμ̄1) the
//! general solution is f = e^M (C₂ + C₁ ∫ e^{−M}); the two constants follow
//! from periodicity and normalization.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fp::{Drift, SgOperator};
use crate::model::{validate_assumptions, ModelParams};
use crate::numerics::{cond2x2, norm_cdf_diff, solve_tridiagonal, trapezoid};

/// What a [`Density`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    Psi,
    Chi,
    F,
    Transient {
        t: f64,
    },
    /// θ-derivative of f at θ = 0 (integrates to zero, may be negative).
    DThetaF,
}

/// Nodal values on the uniform grid x_i = i/n, i = 0..=n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    pub kind: DensityKind,
    pub theta: f64,
    pub values: Vec<f64>,
}

impl Density {
    pub fn new(kind: DensityKind, theta: f64, values: Vec<f64>) -> Self {
        Self { kind, theta, values }
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.n()).map(|i| self.x(i)).collect()
    }

    /// Trapezoid integral over [0,1].
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.h())
    }

    /// Linear interpolation at x in [0,1].
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.n();
        let s = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Value at 1⁻ by quadratic extrapolation from the last three interior nodes.
    pub fn wing(&self) -> f64 {
        let v = &self.values;
        let n = self.n();
        3.0 * v[n - 1] - 3.0 * v[n - 2] + v[n - 3]
    }

    /// Value at 0⁺ by quadratic extrapolation from the first three interior nodes.
    pub fn wing_left(&self) -> f64 {
        let v = &self.values;
        3.0 * v[1] - 3.0 * v[2] + v[3]
    }

    /// Rescales to unit trapezoid integral.
    pub fn normalized(mut self) -> Self {
        let m = self.integral();
        for v in &mut self.values {
            *v /= m;
        }
        self
    }

    /// Mean of the density over each of `k` equal bins (trapezoid on the
    /// sub-grid, linear interpolation at bin edges).
    pub fn bin_averages(&self, k: usize) -> Vec<f64> {
        let n = self.n();
        (0..k)
            .map(|b| {
                let lo = b as f64 / k as f64;
                let hi = (b + 1) as f64 / k as f64;
                let mut pts = vec![lo];
                let first = (lo * n as f64).floor() as usize + 1;
                let mut i = first;
                while i <= n && self.x(i) < hi {
                    pts.push(self.x(i));
                    i += 1;
                }
                pts.push(hi);
                let mut acc = 0.0;
                for w in pts.windows(2) {
                    acc += 0.5 * (self.value_at(w[0]) + self.value_at(w[1])) * (w[1] - w[0]);
                }
                acc * k as f64
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.x(i), v)?;
        }
        Ok(())
    }

    pub fn to_json(&self, meta: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "density": self.kind,
            "theta": self.theta,
            "grid": self.grid(),
            "values": self.values,
            "metadata": meta,
        })
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < 16 {
        return Err(Error::param("n", format!("grid needs at least 16 cells, got {n}")));
    }
    Ok(())
}

fn check_unit_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::param("theta", format!("must lie in [0, 1], got {theta}")))
    }
}

/// Stationary f(θ,·) by the first-integral quadrature (composite Simpson for
/// M and ∫e^{−M}, trapezoid for the normalization).
pub fn solve_stationary_f(p: &ModelParams, theta: f64, n: usize) -> Result<Density> {
    check_unit_theta(theta)?;
    check_grid(n)?;
    let h = 1.0 / n as f64;
    let mbar = |y: f64| {
        let (b0, b1, _) = p.bar_cell(y);
        2.0 * (b0 + theta * b1)
    };

    // M at nodes and cell midpoints
    let mut m_node = vec![0.0; n + 1];
    let mut m_mid = vec![0.0; n];
    for i in 0..n {
        let x = i as f64 * h;
        let (a, q, b, c) = (mbar(x), mbar(x + 0.25 * h), mbar(x + 0.5 * h), mbar(x + h));
        let q3 = mbar(x + 0.75 * h);
        m_mid[i] = m_node[i] + (0.5 * h) / 6.0 * (a + 4.0 * q + b);
        m_node[i + 1] = m_mid[i] + (0.5 * h) / 6.0 * (b + 4.0 * q3 + c);
    }
    let hi = m_node.iter().chain(&m_mid).cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = m_node.iter().chain(&m_mid).cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = m_node.iter().map(|m| (m - hi).exp()).collect();

    // J = ∫ e^{−(M − lo)}
    let mut j = vec![0.0; n + 1];
    for i in 0..n {
        let a = (-(m_node[i] - lo)).exp();
        let b = (-(m_mid[i] - lo)).exp();
        let c = (-(m_node[i + 1] - lo)).exp();
        j[i + 1] = j[i] + h / 6.0 * (a + 4.0 * b + c);
    }

    let inv_sb2: Vec<f64> = (0..=n).map(|i| 1.0 / p.bar_cell(i as f64 * h).2).collect();
    let ew: Vec<f64> = (0..=n).map(|i| e[i] * inv_sb2[i]).collect();
    let ejw: Vec<f64> = (0..=n).map(|i| e[i] * j[i] * inv_sb2[i]).collect();
    let a_int = trapezoid(&ew, h);
    let b_int = trapezoid(&ejw, h);

    // [E(1)J(1), E(1) − E(0)] · [c1, c2] = 0 ;  [B, A] · [c1, c2] = 1
    let mat = [[e[n] * j[n], e[n] - e[0]], [b_int, a_int]];
    let cond = cond2x2(mat);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Degenerate(format!(
            "stationary constants: 2x2 system has condition number {cond:e}"
        )));
    }
    let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
    let c1 = -mat[0][1] / det;
    let c2 = mat[0][0] / det;
    let values: Vec<f64> = (0..=n).map(|i| e[i] * (c2 + c1 * j[i])).collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Degenerate(
            "stationary density is not finite and nonnegative".into(),
        ));
    }
    Ok(Density::new(DensityKind::F, theta, values))
}

/// Closed form of f(θ,·) for uniform F on [−a,a] and σ̄ ≡ 1 (ρ = 1):
///
/// ```text
///   z(x) = r p(x)/(1−θ),  p(x) = 2x(1−θ) + 2θa − 1,  r = √(α(1−θ)/(2a−1))
///   u(x) = e^{z²/2} [ e^{z1²/2} (Φ(z1) − Φ(z)) + e^{z0²/2} (Φ(z) − Φ(z0)) ]
/// ```
///
/// with z0 = z(0), z1 = z(1), normalized to unit integral.
pub fn closed_form_uniform(a: f64, alpha: f64, theta: f64, n: usize) -> Result<Density> {
    check_grid(n)?;
    if !(a > 1.0) {
        return Err(Error::param("a", format!("closed form needs a > 1, got {a}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::param("alpha", format!("must be nonnegative, got {alpha}")));
    }
    if theta == 1.0 {
        return Err(Error::Unsupported(
            "closed form divides by 1 - theta; use the numeric solver at theta = 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param("theta", format!("must lie in [0, 1), got {theta}")));
    }
    let h = 1.0 / n as f64;
    if alpha == 0.0 {
        return Ok(Density::new(DensityKind::F, theta, vec![1.0; n + 1]));
    }
    let r = (alpha * (1.0 - theta) / (2.0 * a - 1.0)).sqrt();
    let z = |x: f64| r * (2.0 * x * (1.0 - theta) + 2.0 * theta * a - 1.0) / (1.0 - theta);
    let (z0, z1) = (z(0.0), z(1.0));
    // everything scaled by e^{−z1²}, which cancels in the normalization
    let values: Vec<f64> = (0..=n)
        .map(|i| {
            let zi = z(i as f64 * h);
            ((zi * zi - z1 * z1) / 2.0).exp() * norm_cdf_diff(zi, z1)
                + ((zi * zi + z0 * z0 - 2.0 * z1 * z1) / 2.0).exp() * norm_cdf_diff(z0, zi)
        })
        .collect();
    let d = Density::new(DensityKind::F, theta, values);
    let m = d.integral();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Degenerate(format!(
            "closed form underflows for alpha = {alpha}, theta = {theta}"
        )));
    }
    Ok(d.normalized())
}

fn divide_by_sigma_bar2(p: &ModelParams, f: Density, kind: DensityKind) -> Density {
    let n = f.n();
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v / p.bar_cell(i as f64 / n as f64).2)
        .collect();
    Density::new(kind, f.theta, values).normalized()
}

/// Stationary density without a meta-order, ψ = f(0,·)/σ̄².
pub fn psi(p: &ModelParams, n: usize) -> Result<Density> {
    let f = solve_stationary_f(p, 0.0, n)?;
    Ok(divide_by_sigma_bar2(p, f, DensityKind::Psi))
}

/// Stationary density during a meta-order at participation θ, χ = f(θ,·)/σ̄².
pub fn chi(p: &ModelParams, theta: f64, n: usize) -> Result<Density> {
    let f = solve_stationary_f(p, theta, n)?;
    Ok(divide_by_sigma_bar2(p, f, DensityKind::Chi))
}

/// Value at 1⁻ by quadratic extrapolation; see [`Density::wing`].
pub fn wing(d: &Density) -> f64 {
    d.wing()
}

/// Converts a grid density to periodic node values (drops the duplicate x = 1 node).
pub(crate) fn periodic_nodes(d: &Density) -> Vec<f64> {
    d.values[..d.n()].to_vec()
}

pub(crate) fn from_periodic(kind: DensityKind, theta: f64, u: &[f64]) -> Density {
    let mut values = u.to_vec();
    values.push(u[0]);
    Density::new(kind, theta, values)
}

/// Forward Fokker–Planck evolution of a density under the meta-order dynamics
/// (drift μ̂1, volatility σ̂ at participation θ), reported at each of `times`.
///
/// `dt = None` picks the largest stable step. Steps are shortened to land
/// exactly on the requested times.
pub fn transient_fp(
    p: &ModelParams,
    theta: f64,
    initial: &Density,
    times: &[f64],
    dt: Option<f64>,
) -> Result<Vec<Density>> {
    evolve(p, theta, Drift::Meta, initial, times, dt)
}

pub(crate) fn evolve(
    p: &ModelParams,
    theta: f64,
    drift: Drift,
    initial: &Density,
    times: &[f64],
    dt: Option<f64>,
) -> Result<Vec<Density>> {
    check_times(times)?;
    let op = SgOperator::new(p, theta, drift, initial.n())?;
    let dt = dt.unwrap_or(op.max_dt());
    op.check_dt(dt)?;
    let mut u = periodic_nodes(initial);
    let mut scratch = vec![0.0; u.len()];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let (k, step) = SgOperator::subdivide(target - t, dt);
        for _ in 0..k {
            op.forward_step(&u, step, &mut scratch);
            std::mem::swap(&mut u, &mut scratch);
        }
        t = target;
        out.push(from_periodic(DensityKind::Transient { t }, theta, &u));
    }
    Ok(out)
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::param("times", "must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("times", "must be nondecreasing"));
    }
    Ok(())
}

/// θ-derivative of f at θ = 0 and its source term.
#[derive(Debug, Clone, Serialize)]
pub struct DThetaProfile {
    pub g: Density,
    /// g(0,1)
    pub g_at_one: f64,
    /// (μ̄1 f(0,·))' at the grid nodes
    pub source: Vec<f64>,
}

/// Solves ½g'' − (μ̄0 g)' = (μ̄1 f(0,·))' with g(0) = g(1) and ∫g/σ̄² = 0 by
/// central differences: two Dirichlet solves (boundary value 0 with the
/// source, boundary value 1 without) combined to satisfy the integral
/// constraint.
pub fn dtheta_f_at_zero(p: &ModelParams, n: usize) -> Result<DThetaProfile> {
    let report = validate_assumptions(p);
    if !report.all_passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        return Err(Error::param(
            "params",
            format!("assumptions fail: {}", failed.join(", ")),
        ));
    }
    let f0 = solve_stationary_f(p, 0.0, n)?;
    let h = 1.0 / n as f64;
    let bars: Vec<(f64, f64, f64)> = (0..=n).map(|i| p.bar_cell(i as f64 * h)).collect();
    let q: Vec<f64> = (0..=n).map(|i| bars[i].1 * f0.values[i]).collect();

    let mut source = vec![0.0; n + 1];
    for i in 1..n {
        source[i] = (q[i + 1] - q[i - 1]) / (2.0 * h);
    }
    source[0] = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h);
    source[n] = (3.0 * q[n] - 4.0 * q[n - 1] + q[n - 2]) / (2.0 * h);

    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs_p = vec![0.0; m];
    let mut rhs_h = vec![0.0; m];
    let c2 = 0.5 / (h * h);
    for k in 0..m {
        let i = k + 1;
        lower[k] = c2 + bars[i - 1].0 / (2.0 * h);
        diag[k] = -2.0 * c2;
        upper[k] = c2 - bars[i + 1].0 / (2.0 * h);
        rhs_p[k] = source[i];
    }
    rhs_h[0] -= lower[0];
    rhs_h[m - 1] -= upper[m - 1];
    let singular = || Error::Degenerate("g equation: singular tridiagonal system".into());
    let gp = solve_tridiagonal(&lower, &diag, &upper, &rhs_p).ok_or_else(singular)?;
    let gh = solve_tridiagonal(&lower, &diag, &upper, &rhs_h).ok_or_else(singular)?;

    let mut vp = vec![0.0; n + 1];
    let mut vh = vec![1.0; n + 1];
    vp[1..n].copy_from_slice(&gp);
    vh[1..n].copy_from_slice(&gh);
    let wp: Vec<f64> = (0..=n).map(|i| vp[i] / bars[i].2).collect();
    let wh: Vec<f64> = (0..=n).map(|i| vh[i] / bars[i].2).collect();
    let ip = trapezoid(&wp, h);
    let ih = trapezoid(&wh, h);
    let scale = wh.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(ih.abs() > 1e-12 * scale) {
        return Err(Error::Degenerate(
            "g equation: integral constraint is degenerate".into(),
        ));
    }
    let s = -ip / ih;
    let values: Vec<f64> = (0..=n).map(|i| vp[i] + s * vh[i]).collect();
    let g_at_one = values[n];
    Ok(DThetaProfile {
        g: Density::new(DensityKind::DThetaF, 0.0, values),
        g_at_one,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn numeric_matches_closed_form() {
        let p = reference();
        for &theta in &[0.0, 0.2, 0.4, 0.6] {
            let num = solve_stationary_f(&p, theta, 1000).unwrap();
            let cf = closed_form_uniform(1.2, 10.0, theta, 1000).unwrap();
            let err = num
                .values
                .iter()
                .zip(&cf.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "theta {theta}: sup error {err:e}");
        }
    }

    #[test]
    fn zero_drift_gives_flat_density() {
        let p = ModelParams::uniform(1.2, 0.0, 1.0, 0.2, 1.7).unwrap();
        let f = solve_stationary_f(&p, 0.3, 64).unwrap();
        // σ̄ ≡ ρ so ∫ f/ρ² = 1 gives f ≡ ρ²
        for v in &f.values {
            assert!((v - 1.7 * 1.7).abs() < 1e-12);
        }
        let ps = psi(&p, 64).unwrap();
        for v in &ps.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((ps.wing() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_is_symmetric_and_normalized() {
        let ps = psi(&reference(), 1000).unwrap();
        let n = ps.n();
        for i in 0..=n {
            assert!((ps.values[i] - ps.values[n - i]).abs() < 1e-8);
        }
        assert!((ps.integral() - 1.0).abs() < 1e-12);
        assert!(ps.wing() > 1.0);
        assert!((ps.wing() - ps.wing_left()).abs() < 1e-9);
    }

    #[test]
    fn closed_form_rejects_theta_one() {
        assert!(matches!(
            closed_form_uniform(1.2, 10.0, 1.0, 100),
            Err(Error::Unsupported(_))
        ));
        assert!(closed_form_uniform(0.9, 10.0, 0.0, 100).is_err());
    }

    #[test]
    fn bin_averages_integrate_to_one() {
        let ps = psi(&reference(), 1000).unwrap();
        let b = ps.bin_averages(10);
        let s: f64 = b.iter().sum::<f64>() / 10.0;
        assert!((s - 1.0).abs() < 1e-9);
        // the first bin averages the steep wing so lies between ψ(0.1) and ψ(0)
        assert!(b[0] < ps.values[0] && b[0] > ps.value_at(0.1));
    }

    #[test]
    fn theta_out_of_range() {
        assert!(solve_stationary_f(&reference(), 1.5, 100).is_err());
        assert!(solve_stationary_f(&reference(), 0.2, 8).is_err());
    }
}
