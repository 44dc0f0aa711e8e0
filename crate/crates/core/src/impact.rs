//! Expected impact, marginal impact and resilience curves.
//!
//! For a meta-order executing volume Q at participation θ,
//!
//! ```text
//!   I(Q,θ) = ∫ E⌈Ŷ_Q(x)⌉ ψ(x) dx − 1
//! ```
//!
//! where Ŷ runs with drift μ̂1 and volatility σ̂ on the meta-order volume clock.
//! u(t,x) = E⌈Ŷ_{Q−t}(x)⌉ solves the backward equation u_t + μ̂1 u_x + ½σ̂² u_xx = 0
//! with u(Q,·) = ⌈·⌉. Since the coefficients have period one and
//! ⌈x+1⌉ = ⌈x⌉ + 1, u(t,x+1) = u(t,x) + 1, so a single cell with that
//! identification is exact. The equation is time-homogeneous, so one backward
//! sweep from the largest Q yields every smaller Q along the way.
//!
//! Discretization: the generator is the transpose of the forward operator in
//! [`crate::fp`]. The terminal value at the integer node is the cell average
//! ½ of the jump, and the baseline subtracted is the trapezoid integral of
//! ⌈x⌉ψ(x) on the same grid, so I(0) = 0 exactly and the error is O(h²).

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fp::{Drift, SgOperator};
use crate::model::{reduce, ModelParams};
use crate::sim::{path_rng, sample_from_density};
use crate::stationary::{chi, evolve, periodic_nodes, psi, Density};
use rand_distr::{Distribution, StandardNormal, Uniform};

/// How a curve was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Pde,
    Mc,
    FiniteSample { window: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactCurve {
    pub theta: f64,
    pub method: Method,
    pub q: Vec<f64>,
    pub impact: Vec<f64>,
    /// Standard errors for Monte Carlo curves.
    pub se: Option<Vec<f64>>,
}

impl ImpactCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.se {
            None => {
                writeln!(w, "q,impact")?;
                for (q, v) in self.q.iter().zip(&self.impact) {
                    writeln!(w, "{q},{v}")?;
                }
            }
            Some(se) => {
                writeln!(w, "q,impact,se")?;
                for ((q, v), s) in self.q.iter().zip(&self.impact).zip(se) {
                    writeln!(w, "{q},{v},{s}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResilienceCurve {
    pub theta: f64,
    pub vbar: Vec<f64>,
    pub resilience: Vec<f64>,
}

impl ResilienceCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vbar,resilience")?;
        for (v, r) in self.vbar.iter().zip(&self.resilience) {
            writeln!(w, "{v},{r}")?;
        }
        Ok(())
    }
}

/// Marginal impact ∂_Q I along a Q grid, computed two ways from the forward
/// evolution of the mixture density u(Q,·) started at ψ:
/// `wing_rate` = α·u(Q,1⁻) and `flux_rate` = net probability flux of u(Q,·)
/// through the integer price. The flux rate is the exact derivative of the
/// discrete impact curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalCurve {
    pub theta: f64,
    pub q: Vec<f64>,
    pub wing_rate: Vec<f64>,
    pub flux_rate: Vec<f64>,
    /// α ψ(1⁻)
    pub alpha_psi_wing: f64,
    /// α χ(1⁻)
    pub alpha_chi_wing: f64,
}

impl MarginalCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "q,wing_rate,flux_rate,alpha_psi_wing,alpha_chi_wing")?;
        for i in 0..self.q.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.q[i], self.wing_rate[i], self.flux_rate[i], self.alpha_psi_wing, self.alpha_chi_wing
            )?;
        }
        Ok(())
    }
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param(name, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param(name, "grid values must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(name, "grid must be strictly increasing"));
    }
    Ok(())
}

/// ∫ E⌈Z_t(x)⌉ w(x) dx − 1 along `grid`, where Z runs the `drift` dynamics
/// at participation `theta` and w is a density on the cell. One backward sweep.
pub fn ceiling_functional(
    p: &ModelParams,
    theta: f64,
    drift: Drift,
    weight: &Density,
    grid: &[f64],
    dt: Option<f64>,
) -> Result<Vec<f64>> {
    check_grid("grid", grid)?;
    let op = SgOperator::new(p, theta, drift, weight.n())?;
    let dt = dt.unwrap_or(op.max_dt());
    op.check_dt(dt)?;
    let w = periodic_nodes(weight);
    let h = weight.h();
    let pair = |phi: &[f64]| h * phi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let mut phi = terminal_ceiling(weight.n());
    // equals 1 − h·w_0/2 up to rounding; using the discrete value keeps the curve at exactly 0 for Q = 0
    let baseline = pair(&phi);
    let functional = |phi: &[f64]| pair(phi) - baseline;
    let mut scratch = vec![0.0; phi.len()];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        let (k, step) = SgOperator::subdivide(target - t, dt);
        for _ in 0..k {
            op.backward_step(&phi, step, &mut scratch);
            std::mem::swap(&mut phi, &mut scratch);
        }
        t = target;
        out.push(functional(&phi));
    }
    Ok(out)
}

fn terminal_ceiling(n: usize) -> Vec<f64> {
    let mut phi = vec![1.0; n];
    phi[0] = 0.5;
    phi
}

/// u(0,x) = E⌈Ŷ_Q(x)⌉ on the grid x_i = i/n, i = 0..=n.
pub fn solve_expected_ceiling(p: &ModelParams, theta: f64, q: f64, n: usize, dt: Option<f64>) -> Result<Vec<f64>> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::param("Q", format!("must be finite and nonnegative, got {q}")));
    }
    let op = SgOperator::new(p, theta, Drift::Meta, n)?;
    let dt = dt.unwrap_or(op.max_dt());
    op.check_dt(dt)?;
    let mut phi = terminal_ceiling(n);
    let mut scratch = vec![0.0; n];
    let (k, step) = SgOperator::subdivide(q, dt);
    for _ in 0..k {
        op.backward_step(&phi, step, &mut scratch);
        std::mem::swap(&mut phi, &mut scratch);
    }
    let first = phi[0];
    phi.push(first + 1.0);
    Ok(phi)
}

/// Expected impact I(Q,θ) along `qgrid` by the backward equation.
pub fn impact_curve(p: &ModelParams, theta: f64, qgrid: &[f64], n: usize, dt: Option<f64>) -> Result<ImpactCurve> {
    let ps = psi(p, n)?;
    let impact = ceiling_functional(p, theta, Drift::Meta, &ps, qgrid, dt)?;
    Ok(ImpactCurve {
        theta,
        method: Method::Pde,
        q: qgrid.to_vec(),
        impact,
        se: None,
    })
}

/// Richardson combination (4 I_{2n} − I_n)/3 of two grid levels, each at its
/// own largest stable step. Removes the leading O(h²) error.
pub fn impact_curve_richardson(p: &ModelParams, theta: f64, qgrid: &[f64], n: usize) -> Result<ImpactCurve> {
    let coarse = impact_curve(p, theta, qgrid, n, None)?;
    let fine = impact_curve(p, theta, qgrid, 2 * n, None)?;
    let impact = coarse
        .impact
        .iter()
        .zip(&fine.impact)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    Ok(ImpactCurve { impact, ..fine })
}

/// Marginal impact along `qgrid` from the forward evolution of ψ.
pub fn marginal_impact_curve(
    p: &ModelParams,
    theta: f64,
    qgrid: &[f64],
    n: usize,
    dt: Option<f64>,
) -> Result<MarginalCurve> {
    check_grid("Q", qgrid)?;
    let ps = psi(p, n)?;
    let ch = chi(p, theta, n)?;
    let op = SgOperator::new(p, theta, Drift::Meta, n)?;
    let states = evolve(p, theta, Drift::Meta, &ps, qgrid, dt)?;
    let alpha = p.alpha();
    let wing_rate = states.iter().map(|d| alpha * d.wing()).collect();
    let flux_rate = states.iter().map(|d| op.integer_flux(&periodic_nodes(d))).collect();
    Ok(MarginalCurve {
        theta,
        q: qgrid.to_vec(),
        wing_rate,
        flux_rate,
        alpha_psi_wing: alpha * ps.wing(),
        alpha_chi_wing: alpha * ch.wing(),
    })
}

/// Net upward probability flux of χ through the integer price under the
/// meta-order dynamics: the long-run slope of the impact curve.
pub fn stationary_impact_rate(p: &ModelParams, theta: f64, n: usize) -> Result<f64> {
    let ch = chi(p, theta, n)?;
    let op = SgOperator::new(p, theta, Drift::Meta, n)?;
    Ok(op.integer_flux(&periodic_nodes(&ch)))
}

/// Price resilience after the meta-order ends:
/// R(V̄,θ) = ∫ E⌈Y̌_V̄(x)⌉ χ(x) dx − 1, with Y̌ the market dynamics on the
/// total-volume clock (drift μ̂0 and volatility σ̂ at participation one),
/// started from the meta-order stationary law χ.
pub fn resilience_curve(
    p: &ModelParams,
    theta: f64,
    vgrid: &[f64],
    n: usize,
    dt: Option<f64>,
) -> Result<ResilienceCurve> {
    let ch = chi(p, theta, n)?;
    let resilience = ceiling_functional(p, 1.0, Drift::Market, &ch, vgrid, dt)?;
    Ok(ResilienceCurve {
        theta,
        vbar: vgrid.to_vec(),
        resilience,
    })
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McOptions {
    /// Euler–Maruyama step on the volume clock.
    pub dq: f64,
    /// Grid used to tabulate ψ for sampling starting points.
    pub n_density: usize,
    /// Starting price of X̂ for the finite-window estimator.
    pub x0: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            dq: 1e-4,
            n_density: 1000,
            x0: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub npaths: usize,
}

/// Monte Carlo impact at a single Q. See [`mc_impact_curve`].
pub fn mc_impact(
    p: &ModelParams,
    theta: f64,
    q: f64,
    npaths: usize,
    window: Option<f64>,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    let c = mc_impact_curve(p, theta, &[q], npaths, window, seed, opts)?;
    Ok(McEstimate {
        mean: c.impact[0],
        se: c.se.as_ref().map(|s| s[0]).unwrap_or(0.0),
        npaths,
    })
}

/// Monte Carlo impact along `qgrid`, harvesting all grid values from each path.
///
/// With `window = None` each path starts from a draw of ψ and scores
/// ⌈Ŷ_Q⌉ − 1. With `window = Some(L)` the path first runs X̂ from `opts.x0`
/// for a uniform volume η ∈ [0,L], then Ŷ from X̂_η, and scores
/// ⌈Ŷ_Q⌉ − ⌈X̂_η⌉. Each path uses its own RNG stream, so results do not depend
/// on the thread count.
pub fn mc_impact_curve(
    p: &ModelParams,
    theta: f64,
    qgrid: &[f64],
    npaths: usize,
    window: Option<f64>,
    seed: u64,
    opts: &McOptions,
) -> Result<ImpactCurve> {
    check_grid("Q", qgrid)?;
    if npaths < 100 {
        return Err(Error::param("npaths", format!("need at least 100 paths, got {npaths}")));
    }
    if !(opts.dq > 0.0) {
        return Err(Error::param("dq", "must be positive"));
    }
    if let Some(l) = window {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param("L", format!("window must be positive, got {l}")));
        }
    }
    let pt = p.with_theta(theta)?;
    let ps = psi(p, opts.n_density)?;
    let dq = opts.dq;
    let sqdq = dq.sqrt();

    let scores: Vec<Vec<f64>> = (0..npaths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let (start, base) = match window {
                None => {
                    let x = sample_from_density(&ps, &mut rng);
                    (x, 1.0)
                }
                Some(l) => {
                    let eta = Uniform::new(0.0, l).expect("valid window").sample(&mut rng);
                    let mut x = opts.x0;
                    let mut t = 0.0;
                    while t < eta {
                        let step = dq.min(eta - t);
                        let (m0, _, s2) = pt.hat_cell(theta, reduce(x));
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x += m0 * step + (s2 * step).sqrt() * z;
                        t += step;
                    }
                    (x, x.ceil())
                }
            };
            let mut y = start;
            let mut t = 0.0;
            let mut out = Vec::with_capacity(qgrid.len());
            for &target in qgrid {
                while target - t > 1e-12 * target.max(1.0) {
                    let step = if target - t < dq { target - t } else { dq };
                    let (_, m1, s2) = pt.hat_cell(theta, reduce(y));
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let diff = if step == dq {
                        s2.sqrt() * sqdq
                    } else {
                        (s2 * step).sqrt()
                    };
                    y += m1 * step + diff * z;
                    t += step;
                }
                out.push(y.ceil() - base);
            }
            out
        })
        .collect();

    let m = npaths as f64;
    let mut mean = vec![0.0; qgrid.len()];
    let mut sq = vec![0.0; qgrid.len()];
    for s in &scores {
        for (k, v) in s.iter().enumerate() {
            mean[k] += v;
            sq[k] += v * v;
        }
    }
    let mut se = vec![0.0; qgrid.len()];
    for k in 0..qgrid.len() {
        mean[k] /= m;
        let var = (sq[k] / m - mean[k] * mean[k]).max(0.0) * m / (m - 1.0);
        se[k] = (var / m).sqrt();
    }
    Ok(ImpactCurve {
        theta,
        method: match window {
            None => Method::Mc,
            Some(l) => Method::FiniteSample { window: l },
        },
        q: qgrid.to_vec(),
        impact: mean,
        se: Some(se),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impact_is_zero_at_zero_volume() {
        let p = ModelParams::reference();
        let c = impact_curve(&p, 0.2, &[0.0, 0.01], 200, None).unwrap();
        assert_eq!(c.impact[0], 0.0);
        assert!(c.impact[1] > 0.0);
    }

    #[test]
    fn expected_ceiling_is_quasi_periodic_and_tends_to_terminal() {
        let p = ModelParams::reference();
        let u = solve_expected_ceiling(&p, 0.2, 1e-6, 200, None).unwrap();
        assert!((u[200] - u[0] - 1.0).abs() < 1e-15);
        for (i, &v) in u.iter().enumerate().take(180).skip(20) {
            assert!((v - 1.0).abs() < 1e-6, "node {i}: {v}");
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let p = ModelParams::reference();
        assert!(impact_curve(&p, 0.2, &[0.1, 0.05], 100, None).is_err());
        assert!(impact_curve(&p, 0.2, &[], 100, None).is_err());
        assert!(mc_impact(&p, 0.2, 0.1, 10, None, 1, &McOptions::default()).is_err());
    }

    #[test]
    fn oversized_step_is_reported() {
        let p = ModelParams::reference();
        let err = impact_curve(&p, 0.2, &[0.1], 200, Some(1.0)).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn resilience_starts_at_zero() {
        let p = ModelParams::reference();
        let r = resilience_curve(&p, 0.2, &[0.0, 0.1], 200, None).unwrap();
        assert_eq!(r.resilience[0], 0.0);
        assert!(r.resilience[1] < 0.0);
    }
}
