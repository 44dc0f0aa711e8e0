//! Verification suites: numerical and statistical checks of the model
//! properties, each returning measured statistics and a pass/fail verdict.
//!
//! Budgets (grid sizes, path counts) are fixed so that every suite runs on a
//! single core in at most a couple of minutes.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{filter_events, BinAccumulator, EstimatorKind, Session};
use crate::impact::{
    impact_curve, impact_curve_richardson, marginal_impact_curve, mc_impact_curve, resilience_curve,
    stationary_impact_rate, McOptions,
};
use crate::model::{reduce, ModelParams};
use crate::sim::{
    em_advance, path_rng, sample_from_density, simulate_finite_stream, simulate_multi_agent_stream, synth_lob_visit,
    time_changed_value, DiffusionKind, FiniteOptions, SyntheticLobConfig,
};
use crate::stationary::{closed_form_uniform, dtheta_f_at_zero, psi, solve_stationary_f};
use crate::stats::{ks_distance, stratified_homogeneity};

/// Outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// Documented as unattainable with this model reading; see the README.
    pub known_failure: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Wall time, kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Criterion {
    fn new(id: u8, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: true,
            known_failure: false,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn metric(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    /// Records a sub-check; any failing sub-check fails the criterion.
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.passed = false;
            self.notes.push(format!("FAILED: {what}"));
        } else {
            self.notes.push(format!("ok: {what}"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    ClosedForm,
    Density,
    Concavity,
    Marginal,
    Shape,
    MonteCarlo,
    Convergence,
    Multiagent,
    Estimators,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::ClosedForm,
        Suite::Density,
        Suite::Concavity,
        Suite::Marginal,
        Suite::Shape,
        Suite::MonteCarlo,
        Suite::Convergence,
        Suite::Multiagent,
        Suite::Estimators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ClosedForm => "closed-form",
            Suite::Density => "density",
            Suite::Concavity => "concavity",
            Suite::Marginal => "marginal",
            Suite::Shape => "shape",
            Suite::MonteCarlo => "monte-carlo",
            Suite::Convergence => "convergence",
            Suite::Multiagent => "multiagent",
            Suite::Estimators => "estimators",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Grid size for PDE-based checks.
    pub n: usize,
    /// Monte Carlo path count for the PDE-vs-MC and convergence checks.
    pub paths: usize,
    /// Trades per sample for the multi-agent check.
    pub trades: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20240611,
            n: 1000,
            paths: 10_000,
            trades: 100_000,
        }
    }
}

pub fn run_suite(suite: Suite, p: &ModelParams, opts: &VerifyOptions) -> Result<SuiteReport> {
    let criteria = match suite {
        Suite::ClosedForm => vec![timed(|| closed_form(p, opts))?],
        Suite::Density => vec![timed(|| density_shape(p, opts))?],
        Suite::Concavity => vec![timed(|| concavity(p, opts))?],
        Suite::Marginal => {
            let (a, b) = marginal(p, opts)?;
            vec![a, b]
        }
        Suite::Shape => vec![timed(|| impact_shape(p, opts))?, timed(|| resilience_shape(p, opts))?],
        Suite::MonteCarlo => vec![timed(|| pde_vs_mc(p, opts))?],
        Suite::Convergence => vec![timed(|| convergence(p, opts))?],
        Suite::Multiagent => vec![timed(|| multiagent(p, opts))?],
        Suite::Estimators => vec![timed(|| estimators(p, opts))?],
    };
    Ok(SuiteReport {
        suite,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

fn timed(f: impl FnOnce() -> Result<Criterion>) -> Result<Criterion> {
    let t0 = Instant::now();
    let mut c = f()?;
    c.elapsed = t0.elapsed();
    Ok(c)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn require_uniform(p: &ModelParams, what: &str) -> Result<f64> {
    match (p.uniform_half_width(), p.rho()) {
        (Some(a), Some(1.0)) => Ok(a),
        _ => Err(Error::Unsupported(format!(
            "{what} needs a uniform F and sigma.kind = assumption1 with rho = 1"
        ))),
    }
}

/// Closed form against the quadrature solver for θ ∈ {0, 0.2, 0.4, 0.6}.
pub fn closed_form(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(1, "closed form vs numeric stationary solver");
    let a = require_uniform(p, "the closed-form check")?;
    let mut worst = 0.0f64;
    for theta in [0.0, 0.2, 0.4, 0.6] {
        let num = solve_stationary_f(p, theta, opts.n)?;
        let cf = closed_form_uniform(a, p.alpha(), theta, opts.n)?;
        let d = num
            .values
            .iter()
            .zip(&cf.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        c.metric(format!("sup_diff_theta_{theta}"), d);
        worst = worst.max(d);
    }
    c.metric("sup_diff", worst);
    c.require(worst < 1e-6, format!("sup-norm difference {worst:.3e} < 1e-6"));
    Ok(c)
}

/// Shape of ψ = f(0,·): symmetric, equal endpoints, unique minimum at ½, U-shaped.
pub fn density_shape(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(2, "theta = 0 density shape");
    let f = solve_stationary_f(p, 0.0, opts.n)?;
    let v = &f.values;
    let n = f.n();
    let sym = (0..=n).map(|i| (v[i] - v[n - i]).abs()).fold(0.0, f64::max);
    let ends = (v[0] - v[n]).abs();
    let imin = (0..=n).min_by(|&i, &j| v[i].total_cmp(&v[j])).expect("nonempty");
    let x_min = f.x(imin);
    let decreasing = (1..=imin).all(|i| v[i] < v[i - 1]);
    let increasing = (imin + 1..=n).all(|i| v[i] > v[i - 1]);
    let mid = f.value_at(0.5);
    c.metric("symmetry_error", sym);
    c.metric("endpoint_gap", ends);
    c.metric("argmin_x", x_min);
    c.metric("value_at_0", v[0]);
    c.metric("value_at_half", mid);
    c.require(sym < 1e-8, format!("symmetry error {sym:.3e} < 1e-8"));
    c.require(ends < 1e-8, format!("endpoint gap {ends:.3e} < 1e-8"));
    c.require((x_min - 0.5).abs() <= f.h() + 1e-12, format!("minimum at x = {x_min}"));
    c.require(decreasing && increasing, "strictly decreasing then strictly increasing");
    c.require(v[0] > mid && v[n] > mid, "wings exceed the centre value");
    Ok(c)
}

/// f(θ,1) decreases from θ = 0 and the θ-derivative at 0 matches a difference quotient.
pub fn concavity(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(3, "asymptotic concavity");
    let f_at_one = |theta: f64| -> Result<f64> {
        let f = solve_stationary_f(p, theta, opts.n)?;
        Ok(f.values[f.n()])
    };
    let f0 = f_at_one(0.0)?;
    c.metric("f_0", f0);
    for theta in [0.05, 0.1, 0.2] {
        let ft = f_at_one(theta)?;
        c.metric(format!("f_{theta}"), ft);
        c.require(ft < f0, format!("f({theta},1) = {ft:.6} < f(0,1) = {f0:.6}"));
    }
    let g = dtheta_f_at_zero(p, opts.n)?;
    let eps = 1e-3;
    let fd = (f_at_one(eps)? - f0) / eps;
    let err = rel(fd, g.g_at_one);
    c.metric("g_at_one", g.g_at_one);
    c.metric("difference_quotient", fd);
    c.metric("relative_error", err);
    c.metric("source_max", g.source.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    c.require(g.g_at_one < 0.0, format!("g(0,1) = {:.6} < 0", g.g_at_one));
    c.require(err < 0.05, format!("|g − difference quotient|/|g| = {err:.4} < 0.05"));
    Ok(c)
}

/// Marginal impact: small-Q slope against αψ(1⁻) and large-Q transient wing
/// rate against αχ(1⁻).
pub fn marginal(p: &ModelParams, opts: &VerifyOptions) -> Result<(Criterion, Criterion)> {
    let theta = p.theta();
    let t0 = Instant::now();
    let mut small = Criterion::new(4, "marginal impact at small Q");
    small.known_failure = true;
    let n = opts.n / 2;
    let qgrid: Vec<f64> = (1..=10).map(|k| k as f64 * 1e-3).collect();
    let curve = impact_curve_richardson(p, theta, &qgrid, n)?;
    let target = p.alpha() * psi(p, opts.n)?.wing();
    let slopes: Vec<f64> = curve.impact.windows(2).map(|w| (w[1] - w[0]) / 1e-3).collect();
    let worst = slopes.iter().map(|s| rel(*s, target)).fold(0.0, f64::max);
    let chord = (curve.impact[9] - curve.impact[0]) / 9e-3;
    small.metric("alpha_psi_wing", target);
    small.metric("slope_first", slopes[0]);
    small.metric("slope_last", slopes[slopes.len() - 1]);
    small.metric("slope_chord", chord);
    small.metric("max_relative_error", worst);
    small.require(
        worst < 0.05,
        format!("finite-difference slopes within 5% of αψ(1⁻) = {target:.4} (worst {worst:.3})"),
    );
    // The slope approaches αψ(1⁻) like s0 − c√Q, so [1e-3, 1e-2] sits well
    // outside the limit regime. Report the limit seen at much smaller Q.
    let tiny = [0.0, 1e-6, 2e-6, 1e-5, 2e-5];
    let fine = impact_curve(p, theta, &tiny, 4 * n, None)?;
    let s6 = (fine.impact[2] - fine.impact[1]) / 1e-6;
    let s5 = (fine.impact[4] - fine.impact[3]) / 1e-5;
    let r = 10f64.sqrt();
    let limit = (r * s6 - s5) / (r - 1.0);
    small.metric("slope_at_1e-6", s6);
    small.metric("slope_at_1e-5", s5);
    small.metric("extrapolated_limit", limit);
    small.metric("extrapolated_limit_relative_error", rel(limit, target));
    small.elapsed = t0.elapsed();

    let t1 = Instant::now();
    let mut large = Criterion::new(4, "marginal impact at large Q");
    let qs: Vec<f64> = (0..12).map(|k| 0.01 * 2f64.powi(k)).collect();
    let mut settled = None;
    // extend the doubling ladder one rung at a time; stop once it settles
    for m in 2..=qs.len() {
        let mc = marginal_impact_curve(p, theta, &qs[..m], n, None)?;
        let (a, b) = (mc.wing_rate[m - 2], mc.wing_rate[m - 1]);
        if rel(b, a) < 0.005 {
            settled = Some((qs[m - 1], b, mc.flux_rate[m - 1], mc.alpha_chi_wing));
            break;
        }
    }
    match settled {
        None => large.require(false, "wing rate settles under doubling of Q"),
        Some((q, rate, flux, target)) => {
            let err = rel(rate, target);
            large.metric("q_settled", q);
            large.metric("wing_rate", rate);
            large.metric("alpha_chi_wing", target);
            large.metric("flux_rate", flux);
            large.metric("relative_error", err);
            large.require(
                err < 0.05,
                format!("αχ-wing rate {rate:.4} within 5% of αχ(1⁻) = {target:.4}"),
            );
        }
    }
    large.elapsed = t1.elapsed();
    Ok((small, large))
}

fn second_differences(v: &[f64]) -> Vec<f64> {
    v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()
}

/// I(Q,θ): nondecreasing, concave, asymptotically linear.
pub fn impact_shape(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(5, "impact curve shape");
    // On the reference parameters the slope dips about 10% below its
    // asymptote near Q = 0.02 and then recovers, leaving a convex stretch;
    // only asymptotic concavity is guaranteed by the model.
    c.known_failure = true;
    let theta = p.theta();
    let n = opts.n / 2;
    let dq = 0.02;
    let qgrid: Vec<f64> = (0..=100).map(|k| k as f64 * dq).collect();
    let curve = impact_curve(p, theta, &qgrid, n, None)?;
    let i = &curve.impact;
    let scale = i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_step = i.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let max_d2 = second_differences(i).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let slopes: Vec<f64> = i.windows(2).map(|w| (w[1] - w[0]) / dq).collect();
    let k = slopes.len();
    let drift = rel(slopes[k - 1], slopes[k - 11]);
    let rate = stationary_impact_rate(p, theta, n)?;
    let (kmin, smin) = slopes
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |m, (k, &v)| if v < m.1 { (k, v) } else { m });
    c.metric("impact_at_q_max", i[i.len() - 1]);
    c.metric("min_slope", smin);
    c.metric("min_slope_at_q", qgrid[kmin] + 0.5 * dq);
    c.metric("min_increment", min_step);
    c.metric("max_second_difference", max_d2);
    c.metric("tolerance", 1e-4 * scale);
    c.metric("final_slope", slopes[k - 1]);
    c.metric("slope_change_last_tenth", drift);
    c.metric("stationary_rate", rate);
    c.require(min_step >= 0.0, "nondecreasing");
    c.require(
        max_d2 <= 1e-4 * scale,
        format!("second differences ≤ {:.2e}", 1e-4 * scale),
    );
    c.require(
        drift < 1e-3,
        format!("slope changes {drift:.2e} over the last tenth of the grid"),
    );
    c.require(
        rel(slopes[k - 1], rate) < 0.01,
        "final slope within 1% of the stationary flux rate",
    );
    Ok(c)
}

/// R(V̄,θ): zero at zero, nonincreasing, convex, negative plateau.
pub fn resilience_shape(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(6, "resilience shape");
    let theta = p.theta();
    let vgrid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
    let curve = resilience_curve(p, theta, &vgrid, opts.n / 2, None)?;
    let r = &curve.resilience;
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_step = r.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_d2 = second_differences(r).into_iter().fold(f64::INFINITY, f64::min);
    let last = r[r.len() - 1];
    let change = (last - r[r.len() - 11]).abs() / last.abs();
    c.metric("r_at_zero", r[0]);
    c.metric("max_increment", max_step);
    c.metric("min_second_difference", min_d2);
    c.metric("plateau", last);
    c.metric("plateau_change_last_tenth", change);
    c.require(r[0] == 0.0, "R(0) = 0");
    c.require(max_step <= 0.0, "nonincreasing");
    c.require(
        min_d2 >= -1e-4 * scale,
        format!("second differences ≥ {:.2e}", -1e-4 * scale),
    );
    c.require(
        change < 1e-3,
        format!("plateau reached (last-tenth change {change:.2e})"),
    );
    c.require(last < 0.0, format!("plateau {last:.5} < 0"));
    Ok(c)
}

/// PDE impact against Monte Carlo on Ŷ at five probe volumes.
pub fn pde_vs_mc(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(7, "PDE vs Monte Carlo impact");
    let theta = p.theta();
    let probes = [0.01, 0.02, 0.05, 0.1, 0.2];
    let pde = impact_curve_richardson(p, theta, &probes, opts.n / 2)?;
    let mc = mc_impact_curve(p, theta, &probes, opts.paths, None, opts.seed, &McOptions::default())?;
    let se = mc.se.as_ref().expect("Monte Carlo curve has standard errors");
    for k in 0..probes.len() {
        let z = (pde.impact[k] - mc.impact[k]).abs() / se[k];
        c.metric(format!("pde_{}", probes[k]), pde.impact[k]);
        c.metric(format!("mc_{}", probes[k]), mc.impact[k]);
        c.metric(format!("z_{}", probes[k]), z);
        c.require(z < 3.0, format!("Q = {}: |I_pde − I_mc| = {z:.2} SE", probes[k]));
    }
    Ok(c)
}

/// Time-changed finite-activity marginals approach the diffusion marginal.
///
/// Agent one trades at rate θλ and provides the clock; the comparison is at
/// business time v = ½ from x0 = ½ with γ = 4, which shortens the wall-clock
/// horizon needed to accumulate that volume.
pub fn convergence(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(8, "weak convergence of time-changed marginals");
    let theta = p.theta();
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", "convergence check needs 0 < theta < 1"));
    }
    let q = ModelParams::new(p.alpha(), 4.0, theta, p.cdf().clone(), p.sigma_spec().clone())?;
    let (v, x0) = (0.5, 0.5);
    let reference: Vec<f64> = (0..10 * opts.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(opts.seed ^ 0xD1FF, i);
            em_advance(&q, DiffusionKind::X, x0, v, 1e-3, &mut rng)
        })
        .collect();
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut last = f64::NAN;
    for (k, lambda) in [1e2, 1e3, 1e4].into_iter().enumerate() {
        let lambdas = [theta * lambda, (1.0 - theta) * lambda];
        let sample: Vec<f64> = (0..opts.paths as u64)
            .into_par_iter()
            .map(|i| time_changed_value(&q, &lambdas, 0, v, x0, opts.seed.wrapping_add(k as u64), i))
            .collect::<Result<_>>()?;
        let d = ks_distance(&sample, &reference)?;
        c.metric(format!("ks_lambda_{lambda:e}"), d);
        monotone &= d < prev;
        prev = d;
        last = d;
    }
    c.require(monotone, "KS distance decreases with λ");
    c.require(last < 0.03, format!("KS at λ = 1e4 is {last:.4} < 0.03"));
    Ok(c)
}

fn direction_counts(path: &crate::sim::FinitePath, bins: usize, table: &mut [[f64; 2]]) -> usize {
    let mut trades = 0;
    for k in 0..path.len() {
        let side = path.side[k];
        if !side.is_trade() {
            continue;
        }
        let b = crate::estimators::bin_of(reduce(path.x_pre(k)), bins);
        table[b][if side.sign() > 0.0 { 0 } else { 1 }] += 1.0;
        trades += 1;
    }
    trades
}

/// Direction given imbalance bin: multi-agent (K = 3) against single flow.
pub fn multiagent(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(9, "multi-agent equivalence");
    let lambda = 1e3;
    let bins = 10;
    let o = FiniteOptions {
        dt_max: None,
        record_idle: false,
    };
    // trade probability is at least the minimum activity over the cell
    let s_min = (0..=200)
        .map(|i| p.activity_cell(i as f64 / 200.0))
        .fold(f64::INFINITY, f64::min);
    let horizon = 1.05 * opts.trades as f64 / (lambda * s_min);
    let mut single = vec![[0.0; 2]; bins];
    let mut multi = vec![[0.0; 2]; bins];
    let sp = simulate_finite_stream(p, lambda, horizon, 0.5, opts.seed, 0, &o)?;
    let mp = simulate_multi_agent_stream(
        p,
        &[0.2 * lambda, 0.3 * lambda, 0.5 * lambda],
        horizon,
        0.5,
        opts.seed,
        1,
        &o,
    )?;
    let ns = direction_counts(&sp, bins, &mut single);
    let nm = direction_counts(&mp.path, bins, &mut multi);
    let strata: Vec<Vec<Vec<f64>>> = (0..bins).map(|b| vec![single[b].to_vec(), multi[b].to_vec()]).collect();
    let test = stratified_homogeneity(&strata)?;
    let per_agent: Vec<f64> = (0..3)
        .map(|j| {
            (0..mp.path.len())
                .filter(|&k| mp.path.agent[k] as usize == j && mp.path.side[k].is_trade())
                .count() as f64
        })
        .collect();
    c.metric("trades_single", ns as f64);
    c.metric("trades_multi", nm as f64);
    c.metric("chi_square", test.statistic);
    c.metric("df", test.df);
    c.metric("p_value", test.p_value);
    for (j, n) in per_agent.iter().enumerate() {
        c.metric(format!("agent_{j}_share"), n / nm as f64);
    }
    c.require(
        ns >= opts.trades && nm >= opts.trades,
        format!("at least {} trades per sample", opts.trades),
    );
    c.require(
        test.p_value > 0.01,
        format!("homogeneity p = {:.4} > 0.01", test.p_value),
    );
    Ok(c)
}

/// Options for the synthetic estimator stream.
const SYNTH_LAMBDA: f64 = 1e4;
const SYNTH_CHUNKS: u64 = 64;
const SYNTH_HORIZON: f64 = 20.0;

/// Estimator invariants and recovery of ψ from a synthetic event stream.
pub fn estimators(p: &ModelParams, opts: &VerifyOptions) -> Result<Criterion> {
    let mut c = Criterion::new(10, "estimator suite");
    let k = 10;
    let kinds = [
        EstimatorKind::Continuous,
        EstimatorKind::Weighted { w: 0.0 },
        EstimatorKind::Weighted { w: 0.5 },
        EstimatorKind::Weighted { w: 1.0 },
        EstimatorKind::WeightedUniform { w: 0.5 },
    ];
    let ps = psi(p, opts.n)?;
    let cfg = SyntheticLobConfig::default();
    let session = Session {
        open_ns: cfg.session_open_ns,
        close_ns: cfg.session_close_ns,
    };
    struct Shard {
        acc: Vec<BinAccumulator>,
        worst_conservation: f64,
        events: usize,
        kept: usize,
    }
    let shards: Vec<Shard> = (0..SYNTH_CHUNKS)
        .into_par_iter()
        .map(|chunk| -> Result<Shard> {
            let mut rng = path_rng(opts.seed ^ 0xE571, chunk);
            let x0 = sample_from_density(&ps, &mut rng);
            let path = simulate_finite_stream(
                p,
                SYNTH_LAMBDA,
                SYNTH_HORIZON,
                x0,
                opts.seed,
                chunk,
                &FiniteOptions {
                    dt_max: None,
                    record_idle: false,
                },
            )?;
            let mut events = Vec::new();
            synth_lob_visit(&path, &cfg, opts.seed.wrapping_add(chunk), |e| events.push(e))?;
            let (kept, _) = filter_events(&events, session);
            let mut acc: Vec<BinAccumulator> = kinds
                .iter()
                .map(|&kind| BinAccumulator::new(kind, k))
                .collect::<Result<_>>()?;
            let mut worst = 0.0f64;
            for e in &kept {
                for a in acc.iter_mut() {
                    a.add(e);
                }
                if let Some(r) = crate::estimators::continuous_bin_masses(e, k) {
                    worst = worst.max(rel(r.iter().sum(), e.size));
                }
            }
            Ok(Shard {
                acc,
                worst_conservation: worst,
                events: events.len(),
                kept: kept.len(),
            })
        })
        .collect::<Result<_>>()?;

    let mut total: Vec<BinAccumulator> = kinds
        .iter()
        .map(|&kind| BinAccumulator::new(kind, k))
        .collect::<Result<_>>()?;
    let mut worst_conservation = 0.0f64;
    let (mut events, mut kept) = (0, 0);
    for s in &shards {
        for (t, a) in total.iter_mut().zip(&s.acc) {
            t.merge(a);
        }
        worst_conservation = worst_conservation.max(s.worst_conservation);
        events += s.events;
        kept += s.kept;
    }
    let est: Vec<_> = total.iter().map(|a| a.finish()).collect::<Result<_>>()?;
    let oracle = ps.bin_averages(k);
    c.metric("events", events as f64);
    c.metric("events_kept", kept as f64);
    c.metric("conservation_error", worst_conservation);
    c.require(events >= 100_000, format!("{events} synthetic trades ≥ 1e5"));
    c.require(
        worst_conservation <= 1e-12,
        format!("per-event bin mass conservation {worst_conservation:.2e}"),
    );

    let names = [
        "continuous",
        "weighted_w0",
        "weighted_w0.5",
        "weighted_w1",
        "weighted_uniform_w0.5",
    ];
    for (name, d) in names.iter().zip(&est) {
        let norm = (d.values.iter().sum::<f64>() / k as f64 - 1.0).abs();
        let l1 = d.l1_distance(&oracle);
        c.metric(format!("{name}_normalization_error"), norm);
        c.metric(format!("{name}_l1_to_psi"), l1);
        c.metric(format!("{name}_wing_low"), d.values[0]);
        c.metric(format!("{name}_wing_high"), d.values[k - 1]);
        c.require(norm <= 1e-10, format!("{name} normalizes to 1 ({norm:.2e})"));
    }
    // the three estimators at w = 1/2
    for &i in &[0usize, 2, 4] {
        let l1 = est[i].l1_distance(&oracle);
        c.require(l1 < 0.1, format!("{} within L1 0.1 of ψ ({l1:.4})", names[i]));
    }
    for (i, j) in [(0usize, 2usize), (0, 4), (2, 4)] {
        let d = est[i].l1_distance(&est[j].values);
        c.metric(format!("l1_{}_vs_{}", names[i], names[j]), d);
        c.require(
            d < 0.15,
            format!("{} vs {} pairwise L1 {d:.4} < 0.15", names[i], names[j]),
        );
    }
    let mid = est[0].values[k / 2];
    c.require(
        est[0].values[0] > mid && est[0].values[k - 1] > mid,
        "continuous estimator is U-shaped",
    );
    let (w0, w5, w1) = (&est[1].values, &est[2].values, &est[3].values);
    c.require(
        w0[0] >= w5[0] && w5[0] >= w1[0] && w0[k - 1] >= w5[k - 1] && w5[k - 1] >= w1[k - 1],
        "weighted wing values nonincreasing in w",
    );
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
        assert_eq!(Suite::parse("nope"), None);
    }

    #[test]
    fn closed_form_needs_uniform_unit_rho() {
        let p = ModelParams::uniform(1.2, 10.0, 1.0, 0.2, 2.0).unwrap();
        assert!(matches!(
            closed_form(&p, &VerifyOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn density_check_passes_on_reference() {
        let c = density_shape(&ModelParams::reference(), &VerifyOptions::default()).unwrap();
        assert!(c.passed, "{:?}", c.notes);
    }
}
