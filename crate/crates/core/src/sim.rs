//! Path simulation: the finite-activity market, its multi-agent decomposition,
//! the diffusion limits X̂ and Ŷ, the business-clock time change and synthetic
//! order-book event streams.
//!
//! In the finite market, traders arrive at Poisson rate λ, each with a signal
//! ξ ~ F. An arrival buys δ = γ/λ units if ξ ≥ β⁺(X̃−), sells if ξ ≤ β⁻(X̃−)
//! and otherwise does nothing. A buy moves X̃ up by αδ and a sell moves it down
//! by αδ. Between arrivals X̃ diffuses with volatility σ(X̃):
//!
//! ```text
//!   X̃_t = X_0 + αδ (N⁺_t − N⁻_t) + ∫ σ(X̃_u) dB_u
//! ```
//!
//! Paths stay on the real line; reduction mod 1 is only used to evaluate
//! coefficients. Every path draws from its own ChaCha stream, keyed by
//! (seed, path index), so results do not depend on thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::Serialize;

use crate::error::{require_finite, require_positive, Error, Result};
use crate::estimators::LobEvent;
use crate::model::{beta_minus, beta_plus, reduce, ModelParams};
use crate::stationary::Density;

/// Independent RNG stream for path `stream` under `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws from a nodal density on [0,1], treated as piecewise linear.
pub fn sample_from_density<R: Rng + ?Sized>(d: &Density, rng: &mut R) -> f64 {
    let h = d.h();
    let v = &d.values;
    let total = d.integral();
    let mut r = rng.random::<f64>() * total;
    for i in 0..d.n() {
        let (a, b) = (v[i], v[i + 1]);
        let mass = 0.5 * h * (a + b);
        if r <= mass || i + 1 == d.n() {
            // solve a s + (b − a) s² / (2h) = r for s in [0,h]
            let s = if (b - a).abs() < 1e-14 * (a + b) {
                r / a.max(f64::MIN_POSITIVE)
            } else {
                let k = (b - a) / h;
                (-a + (a * a + 2.0 * k * r).max(0.0).sqrt()) / k
            };
            return (i as f64 * h + s.clamp(0.0, h)).min(1.0 - f64::EPSILON);
        }
        r -= mass;
    }
    1.0 - f64::EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
    None,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
            Side::None => "none",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
            Side::None => 0.0,
        }
    }

    pub fn is_trade(self) -> bool {
        self != Side::None
    }
}

/// Marked arrivals of the finite market. `x[k]` is X̃ right after event k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitePath {
    pub lambda: f64,
    /// Trade size δ = γ/λ.
    pub delta: f64,
    /// Price move per trade, αδ.
    pub jump: f64,
    pub horizon: f64,
    pub x0: f64,
    /// X̃ at the horizon.
    pub x_end: f64,
    /// Number of arrivals, including those not recorded.
    pub arrivals: u64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub side: Vec<Side>,
    /// Total traded volume Ṽ after event k.
    pub cum_volume: Vec<f64>,
    /// Agent index per event (multi-agent runs only).
    pub agent: Vec<u16>,
}

impl FinitePath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// X̃ just before event k.
    pub fn x_pre(&self, k: usize) -> f64 {
        self.x[k] - self.jump * self.side[k].sign()
    }

    pub fn trade_count(&self) -> usize {
        self.side.iter().filter(|s| s.is_trade()).count()
    }

    /// Signed traded volume δ(N⁺ − N⁻) at the horizon.
    pub fn signed_volume(&self) -> f64 {
        self.side.iter().map(|s| s.sign()).sum::<f64>() * self.delta
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,side,size,cum_volume")?;
        for k in 0..self.len() {
            let size = if self.side[k].is_trade() { self.delta } else { 0.0 };
            writeln!(
                w,
                "{},{},{},{},{}",
                self.t[k],
                self.x[k],
                self.side[k].as_str(),
                size,
                self.cum_volume[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteOptions {
    /// Largest Euler–Maruyama sub-step between arrivals; default 1e-3 (1/λ + 1).
    pub dt_max: Option<f64>,
    /// Keep arrivals that did not trade.
    pub record_idle: bool,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        Self {
            dt_max: None,
            record_idle: true,
        }
    }
}

fn diffuse<R: Rng>(p: &ModelParams, x: &mut f64, span: f64, dt_max: f64, rng: &mut R) {
    if span <= 0.0 {
        return;
    }
    let k = (span / dt_max).ceil().max(1.0);
    let step = span / k;
    let sq = step.sqrt();
    for _ in 0..k as usize {
        let z: f64 = StandardNormal.sample(rng);
        *x += p.sigma(*x) * sq * z;
    }
}

fn check_sim_inputs(lambda: f64, horizon: f64, x0: f64) -> Result<()> {
    require_positive("lambda", lambda)?;
    require_positive("T", horizon)?;
    require_finite("x0", x0)
}

/// Single-flow finite market with default options.
pub fn simulate_finite(p: &ModelParams, lambda: f64, horizon: f64, x0: f64, seed: u64) -> Result<FinitePath> {
    simulate_finite_with(p, lambda, horizon, x0, seed, &FiniteOptions::default())
}

pub fn simulate_finite_with(
    p: &ModelParams,
    lambda: f64,
    horizon: f64,
    x0: f64,
    seed: u64,
    opts: &FiniteOptions,
) -> Result<FinitePath> {
    simulate_finite_stream(p, lambda, horizon, x0, seed, 0, opts)
}

/// As [`simulate_finite_with`] on an explicit RNG stream, for parallel batches.
pub fn simulate_finite_stream(
    p: &ModelParams,
    lambda: f64,
    horizon: f64,
    x0: f64,
    seed: u64,
    stream: u64,
    opts: &FiniteOptions,
) -> Result<FinitePath> {
    check_sim_inputs(lambda, horizon, x0)?;
    let dt_max = opts.dt_max.unwrap_or(1e-3 * (1.0 / lambda + 1.0));
    require_positive("dt_max", dt_max)?;
    let mut rng = path_rng(seed, stream);
    let arrivals = Exp::new(lambda).map_err(|e| Error::param("lambda", e.to_string()))?;
    let delta = p.gamma() / lambda;
    let jump = p.alpha() * delta;
    let mut path = empty_path(lambda, delta, jump, horizon, x0);
    let (mut t, mut x, mut vol) = (0.0, x0, 0.0);
    loop {
        let tau: f64 = arrivals.sample(&mut rng);
        if t + tau > horizon {
            diffuse(p, &mut x, horizon - t, dt_max, &mut rng);
            break;
        }
        diffuse(p, &mut x, tau, dt_max, &mut rng);
        t += tau;
        path.arrivals += 1;
        let u: f64 = rng.random();
        let side = if u >= p.cdf().cdf(beta_plus(x)) {
            Side::Buy
        } else if u <= p.cdf().cdf(beta_minus(x)) {
            Side::Sell
        } else {
            Side::None
        };
        if side.is_trade() {
            x += jump * side.sign();
            vol += delta;
        }
        if side.is_trade() || opts.record_idle {
            path.t.push(t);
            path.x.push(x);
            path.side.push(side);
            path.cum_volume.push(vol);
        }
    }
    path.x_end = x;
    Ok(path)
}

fn empty_path(lambda: f64, delta: f64, jump: f64, horizon: f64, x0: f64) -> FinitePath {
    FinitePath {
        lambda,
        delta,
        jump,
        horizon,
        x0,
        x_end: x0,
        arrivals: 0,
        t: Vec::new(),
        x: Vec::new(),
        side: Vec::new(),
        cum_volume: Vec::new(),
        agent: Vec::new(),
    }
}

/// Aggregate path of a multi-agent run; `path.agent[k]` names the agent of event k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiAgentPath {
    pub lambdas: Vec<f64>,
    pub path: FinitePath,
}

impl MultiAgentPath {
    /// Events of agent j, with X̃ values of the aggregate price and Ṽ^j as volume.
    pub fn agent_path(&self, j: usize) -> FinitePath {
        let src = &self.path;
        let mut out = empty_path(self.lambdas[j], src.delta, src.jump, src.horizon, src.x0);
        out.x_end = src.x_end;
        let mut vol = 0.0;
        for k in 0..src.len() {
            if src.agent[k] as usize != j {
                continue;
            }
            out.arrivals += 1;
            if src.side[k].is_trade() {
                vol += src.delta;
            }
            out.t.push(src.t[k]);
            out.x.push(src.x[k]);
            out.side.push(src.side[k]);
            out.cum_volume.push(vol);
            out.agent.push(j as u16);
        }
        out
    }
}

/// K independent agent flows with rates `lambdas` (λ = Σλ^j, δ = γ/λ).
///
/// Agent j arrives at rate λ^j; an arrival trades iff ξ ∉ (β⁻, β⁺), which has
/// probability F(−β⁺) + F(β⁻), and its direction ζ^j is drawn only then, with
/// P(ζ^j = +1) = F(−β⁺)/(F(−β⁺) + F(β⁻)).
pub fn simulate_multi_agent(
    p: &ModelParams,
    lambdas: &[f64],
    horizon: f64,
    x0: f64,
    seed: u64,
) -> Result<MultiAgentPath> {
    simulate_multi_agent_stream(p, lambdas, horizon, x0, seed, 0, &FiniteOptions::default())
}

pub fn simulate_multi_agent_stream(
    p: &ModelParams,
    lambdas: &[f64],
    horizon: f64,
    x0: f64,
    seed: u64,
    stream: u64,
    opts: &FiniteOptions,
) -> Result<MultiAgentPath> {
    let lambda = check_lambdas(lambdas)?;
    check_sim_inputs(lambda, horizon, x0)?;
    let dt_max = opts.dt_max.unwrap_or(1e-3 * (1.0 / lambda + 1.0));
    require_positive("dt_max", dt_max)?;
    let mut rng = path_rng(seed, stream);
    let delta = p.gamma() / lambda;
    let jump = p.alpha() * delta;
    let mut path = empty_path(lambda, delta, jump, horizon, x0);
    let mut vol = 0.0;
    let (_, x_end) = multi_agent_engine(p, lambdas, horizon, x0, dt_max, &mut rng, |t, x, side, j| {
        path.arrivals += 1;
        if side.is_trade() {
            vol += delta;
        }
        if side.is_trade() || opts.record_idle {
            path.t.push(t);
            path.x.push(x);
            path.side.push(side);
            path.cum_volume.push(vol);
            path.agent.push(j as u16);
        }
        true
    });
    path.x_end = x_end;
    Ok(MultiAgentPath {
        lambdas: lambdas.to_vec(),
        path,
    })
}

fn check_lambdas(lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::param("lambdas", "need at least one agent"));
    }
    if lambdas.len() > u16::MAX as usize {
        return Err(Error::param("lambdas", "too many agents"));
    }
    for &l in lambdas {
        require_positive("lambdas", l)?;
    }
    Ok(lambdas.iter().sum())
}

/// Runs the superposed agent flows until `horizon` or until `on_event`
/// returns false. `on_event(t, x, side, agent)` sees the price after the
/// event. Returns the final time and price.
fn multi_agent_engine<R: Rng>(
    p: &ModelParams,
    lambdas: &[f64],
    horizon: f64,
    x0: f64,
    dt_max: f64,
    rng: &mut R,
    mut on_event: impl FnMut(f64, f64, Side, usize) -> bool,
) -> (f64, f64) {
    let lambda: f64 = lambdas.iter().sum();
    let jump = p.alpha() * p.gamma() / lambda;
    let clocks: Vec<Exp<f64>> = lambdas.iter().map(|&l| Exp::new(l).expect("positive rate")).collect();
    let mut next: Vec<f64> = clocks.iter().map(|c| c.sample(rng)).collect();
    let (mut t, mut x) = (0.0, x0);
    loop {
        let (j, &tj) = next
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if tj > horizon {
            diffuse(p, &mut x, horizon - t, dt_max, rng);
            return (horizon, x);
        }
        diffuse(p, &mut x, tj - t, dt_max, rng);
        t = tj;
        next[j] = t + clocks[j].sample(rng);
        let up = p.cdf().cdf(-beta_plus(x));
        let down = p.cdf().cdf(beta_minus(x));
        let trades = rng.random::<f64>() < up + down;
        let side = if !trades {
            Side::None
        } else if rng.random::<f64>() < up / (up + down) {
            Side::Buy
        } else {
            Side::Sell
        };
        if side.is_trade() {
            x += jump * side.sign();
        }
        if !on_event(t, x, side, j) {
            return (t, x);
        }
    }
}

/// X̄_v = X̃ at the first time the volume traded by agent `clock` exceeds v,
/// simulated only as far as needed. Equivalent in law to
/// [`business_clock`] on that agent's path.
pub fn time_changed_value(
    p: &ModelParams,
    lambdas: &[f64],
    clock: usize,
    v: f64,
    x0: f64,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    let lambda = check_lambdas(lambdas)?;
    require_finite("x0", x0)?;
    if clock >= lambdas.len() {
        return Err(Error::param("clock", format!("agent {clock} does not exist")));
    }
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param("v", format!("must be finite and nonnegative, got {v}")));
    }
    let delta = p.gamma() / lambda;
    let dt_max = 1e-3 * (1.0 / lambda + 1.0);
    let mut rng = path_rng(seed, stream);
    let mut vol = 0.0;
    let (_, x) = multi_agent_engine(p, lambdas, f64::INFINITY, x0, dt_max, &mut rng, |_, _, side, j| {
        if j == clock && side.is_trade() {
            vol += delta;
        }
        vol <= v
    });
    Ok(x)
}

/// X̃ at the first-passage times T(Z,h) = inf{t : Z_t > h} of the path's
/// volume process Z above each target h.
pub fn business_clock(path: &FinitePath, targets: &[f64]) -> Result<Vec<f64>> {
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("targets", "must be nondecreasing"));
    }
    let available = path.cum_volume.last().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(targets.len());
    let mut k = 0;
    for &h in targets {
        if !(h >= 0.0) {
            return Err(Error::param("targets", format!("must be nonnegative, got {h}")));
        }
        while k < path.len() && path.cum_volume[k] <= h {
            k += 1;
        }
        if k == path.len() {
            return Err(Error::OutOfRange { target: h, available });
        }
        out.push(path.x[k]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// X̂: drift μ̂0, the market without the meta-order.
    X,
    /// Ŷ: drift μ̂1, the market during the meta-order.
    Y,
}

/// Euler–Maruyama path on the volume clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub kind: DiffusionKind,
    pub theta: f64,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

impl DiffusionPath {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "v,x")?;
        for (v, x) in self.v.iter().zip(&self.x) {
            writeln!(w, "{v},{x}")?;
        }
        Ok(())
    }
}

/// One Euler–Maruyama step of X̂ or Ŷ.
#[inline]
pub fn em_step<R: Rng>(p: &ModelParams, kind: DiffusionKind, x: f64, step: f64, rng: &mut R) -> f64 {
    let (m0, m1, s2) = p.hat_cell(p.theta(), reduce(x));
    let mu = match kind {
        DiffusionKind::X => m0,
        DiffusionKind::Y => m1,
    };
    let z: f64 = StandardNormal.sample(rng);
    x + mu * step + (s2 * step).sqrt() * z
}

/// Advances X̂ or Ŷ over a volume span with steps no larger than `dv`.
pub fn em_advance<R: Rng>(p: &ModelParams, kind: DiffusionKind, mut x: f64, span: f64, dv: f64, rng: &mut R) -> f64 {
    let k = (span / dv).ceil().max(0.0) as usize;
    if k == 0 {
        return x;
    }
    let step = span / k as f64;
    for _ in 0..k {
        x = em_step(p, kind, x, step, rng);
    }
    x
}

fn simulate_diffusion(
    p: &ModelParams,
    kind: DiffusionKind,
    x0: f64,
    horizon: f64,
    dv: f64,
    seed: u64,
) -> Result<DiffusionPath> {
    require_finite("x0", x0)?;
    require_positive("V", horizon)?;
    require_positive("dv", dv)?;
    let mut rng = path_rng(seed, 0);
    let k = (horizon / dv).ceil() as usize;
    let step = horizon / k as f64;
    let mut v = Vec::with_capacity(k + 1);
    let mut xs = Vec::with_capacity(k + 1);
    let mut x = x0;
    v.push(0.0);
    xs.push(x);
    for i in 1..=k {
        x = em_step(p, kind, x, step, &mut rng);
        v.push(i as f64 * step);
        xs.push(x);
    }
    Ok(DiffusionPath {
        kind,
        theta: p.theta(),
        v,
        x: xs,
    })
}

/// X̂ at participation `p.theta()` from x0 over volume V with step dv.
pub fn simulate_diffusion_x(p: &ModelParams, x0: f64, volume: f64, dv: f64, seed: u64) -> Result<DiffusionPath> {
    simulate_diffusion(p, DiffusionKind::X, x0, volume, dv, seed)
}

/// Ŷ at participation `p.theta()` from x0 over executed volume Q with step dq.
pub fn simulate_diffusion_y(p: &ModelParams, x0: f64, q: f64, dq: f64, seed: u64) -> Result<DiffusionPath> {
    simulate_diffusion(p, DiffusionKind::Y, x0, q, dq, seed)
}

/// Total book depth model for synthetic events.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthModel {
    Constant { shares: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticLobConfig {
    pub depth: DepthModel,
    /// Price increment recorded in each event.
    pub tick: f64,
    pub session_open_ns: i64,
    pub session_close_ns: i64,
    /// Shares per unit of model volume; a trade of δ becomes δ·shares_per_volume shares.
    pub shares_per_volume: f64,
    /// Depth redraws before a too-large trade is skipped (lognormal depth only).
    pub max_retries: u32,
}

impl Default for SyntheticLobConfig {
    fn default() -> Self {
        Self {
            depth: DepthModel::Constant { shares: 1000.0 },
            tick: 0.01,
            session_open_ns: 34_200_000_000_000,
            session_close_ns: 57_600_000_000_000,
            shares_per_volume: 1e4,
            max_retries: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SynthReport {
    pub trades: usize,
    pub emitted: usize,
    pub skipped_depth: usize,
    pub retries: usize,
}

/// Turns the trades of a finite path into order-book events whose pre-trade
/// imbalance V^b/(V^b + V^a) equals X̃− mod 1.
pub fn synth_lob_events(
    path: &FinitePath,
    cfg: &SyntheticLobConfig,
    seed: u64,
) -> Result<(Vec<LobEvent>, SynthReport)> {
    let mut events = Vec::new();
    let report = synth_lob_visit(path, cfg, seed, |e| events.push(e))?;
    Ok((events, report))
}

/// Streaming form of [`synth_lob_events`].
pub fn synth_lob_visit(
    path: &FinitePath,
    cfg: &SyntheticLobConfig,
    seed: u64,
    mut sink: impl FnMut(LobEvent),
) -> Result<SynthReport> {
    require_positive("shares_per_volume", cfg.shares_per_volume)?;
    require_positive("tick", cfg.tick)?;
    if cfg.session_close_ns <= cfg.session_open_ns {
        return Err(Error::param("session", "close must be after open"));
    }
    let size = path.delta * cfg.shares_per_volume;
    let lognormal = match cfg.depth {
        DepthModel::Constant { shares } => {
            if !(shares > size) {
                return Err(Error::param(
                    "depth",
                    format!("depth {shares} must exceed trade size {size}"),
                ));
            }
            None
        }
        DepthModel::Lognormal { mu, sigma } => {
            Some(LogNormal::new(mu, sigma).map_err(|e| Error::param("depth", e.to_string()))?)
        }
    };
    let mut rng = path_rng(seed, u64::MAX);
    let span = (cfg.session_close_ns - cfg.session_open_ns) as f64;
    let mut report = SynthReport::default();
    for k in 0..path.len() {
        let side = path.side[k];
        if !side.is_trade() {
            continue;
        }
        report.trades += 1;
        let x_pre = path.x_pre(k);
        let imb = reduce(x_pre);
        let mut attempt = 0;
        let (vb, va) = loop {
            let depth = match (&cfg.depth, &lognormal) {
                (DepthModel::Constant { shares }, _) => *shares,
                (_, Some(ln)) => ln.sample(&mut rng),
                _ => unreachable!(),
            };
            let vb = imb * depth;
            let va = depth - vb;
            let hit = if side == Side::Buy { va } else { vb };
            if size <= hit || lognormal.is_none() || attempt >= cfg.max_retries {
                break (vb, va);
            }
            attempt += 1;
            report.retries += 1;
        };
        let hit = if side == Side::Buy { va } else { vb };
        if size > hit {
            report.skipped_depth += 1;
            continue;
        }
        let bid = x_pre.floor() as i64;
        let ask = bid + 1;
        let (mut vb_post, mut va_post) = (vb, va);
        let (mut bid_post, mut ask_post) = (bid, ask);
        if side == Side::Buy {
            va_post = va - size;
            if va_post <= 0.0 {
                va_post = 0.0;
                ask_post = ask + 1;
            }
        } else {
            vb_post = vb - size;
            if vb_post <= 0.0 {
                vb_post = 0.0;
                bid_post = bid - 1;
            }
        }
        let ts = cfg.session_open_ns + ((path.t[k] / path.horizon) * span).round() as i64;
        sink(LobEvent {
            ts_ns: ts,
            side: if side == Side::Buy {
                crate::estimators::TradeSide::Buy
            } else {
                crate::estimators::TradeSide::Sell
            },
            size,
            bid_px_pre: bid,
            ask_px_pre: ask,
            vb_pre: vb,
            va_pre: va,
            bid_px_post: bid_post,
            ask_px_post: ask_post,
            vb_post,
            va_post,
            tick: cfg.tick,
        });
        report.emitted += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_path() {
        let p = ModelParams::reference();
        let a = simulate_finite(&p, 1e3, 1.0, 0.3, 7).unwrap();
        let b = simulate_finite(&p, 1e3, 1.0, 0.3, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_finite(&p, 1e3, 1.0, 0.3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jumps_match_marks() {
        let p = ModelParams::reference();
        let opts = FiniteOptions {
            dt_max: None,
            record_idle: true,
        };
        // zero volatility isolates the jumps
        let p0 = ModelParams::new(
            p.alpha(),
            p.gamma(),
            p.theta(),
            p.cdf().clone(),
            crate::model::SigmaSpec::tabulated(vec![0.0, 1.0], vec![1e-300, 1e-300]).unwrap(),
        )
        .unwrap();
        let path = simulate_finite_with(&p0, 500.0, 1.0, 0.5, 3, &opts).unwrap();
        let mut prev = 0.5;
        let mut vol_prev = 0.0;
        for k in 0..path.len() {
            let dx = path.x[k] - prev;
            assert!((dx - path.jump * path.side[k].sign()).abs() < 1e-12);
            let dv = path.cum_volume[k] - vol_prev;
            assert!(dv == 0.0 || (dv - path.delta).abs() < 1e-15);
            prev = path.x[k];
            vol_prev = path.cum_volume[k];
        }
    }

    #[test]
    fn business_clock_uses_strict_first_passage() {
        let path = FinitePath {
            lambda: 1.0,
            delta: 1.0,
            jump: 0.0,
            horizon: 4.0,
            x0: 0.0,
            x_end: 3.0,
            arrivals: 3,
            t: vec![1.0, 2.0, 3.0],
            x: vec![10.0, 20.0, 30.0],
            side: vec![Side::Buy; 3],
            cum_volume: vec![1.0, 2.0, 3.0],
            agent: vec![],
        };
        assert_eq!(business_clock(&path, &[1.5]).unwrap(), vec![20.0]);
        assert_eq!(business_clock(&path, &[0.0]).unwrap(), vec![10.0]);
        assert_eq!(business_clock(&path, &[1.0]).unwrap(), vec![20.0]);
        assert!(matches!(business_clock(&path, &[3.0]), Err(Error::OutOfRange { .. })));
        assert!(business_clock(&path, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn density_sampler_hits_uniform_moments() {
        let d = Density::new(crate::stationary::DensityKind::Psi, 0.0, vec![1.0; 11]);
        let mut rng = path_rng(1, 0);
        let n = 20000;
        let m: f64 = (0..n).map(|_| sample_from_density(&d, &mut rng)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 3.0 * (1.0 / 12.0f64 / n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::reference();
        assert!(simulate_finite(&p, 0.0, 1.0, 0.5, 1).is_err());
        assert!(simulate_finite(&p, 10.0, 0.0, 0.5, 1).is_err());
        assert!(simulate_multi_agent(&p, &[], 1.0, 0.5, 1).is_err());
        assert!(simulate_diffusion_x(&p, f64::NAN, 1.0, 0.01, 1).is_err());
    }
}
