//! Model parameters and the drift/diffusion coefficients of the fundamental price.
//!
//! The fundamental price X lives on the real line in tick units. Its position
//! inside the current tick, y = X mod 1, drives everything:
//!
//! ```text
//!   β⁺(x) = ⌈x⌉ − x            β⁻(x) = ⌊x⌋ − x
//!   S(y)  = F(y−1) + F(−y)     (probability that an arrival trades)
//!
//!   μ̂0(θ,y) = α (F(y−1) − F(−y)) / (θ S)
//!   μ̂1(θ,y) = α (2θ F(−y) + F(y−1) − F(−y)) / (θ S)
//!   σ̂(θ,y)  = σ(y) / √(θ γ S)
//!
//!   μ̄0(y) = αγ (F(y−1) − F(−y)) / σ²    μ̄1(y) = 2αγ F(−y) / σ²
//!   σ̄(y)  = σ(y) / √(γ S)
//! ```
//!
//! The coefficients jump across integer prices. Functions taking a price
//! reduce it to [0,1) and evaluate y = 0 as the limit from the right. The
//! `*_cell` variants take an unreduced y in [0,1], so that y = 1 is the limit
//! from the left; the grid solvers use those.

use serde::Serialize;

use crate::error::{require_finite, require_positive, Error, Result};
use crate::interp::Pchip;

/// ⌈x⌉ − x, in [0,1).
pub fn beta_plus(x: f64) -> f64 {
    x.ceil() - x
}

/// ⌊x⌋ − x, in (−1,0].
pub fn beta_minus(x: f64) -> f64 {
    x.floor() - x
}

/// Reduces a price to its position in the tick, in [0,1).
pub fn reduce(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Distribution of the private signal ξ of an arriving trader.
#[derive(Debug, Clone, PartialEq)]
pub enum CdfSpec {
    /// Uniform on [−a, a].
    Uniform { a: f64 },
    /// Monotone cubic through nodes on [−1,1].
    Tabulated(Pchip),
}

impl CdfSpec {
    pub fn uniform(a: f64) -> Result<Self> {
        require_positive("F.a", a)?;
        Ok(CdfSpec::Uniform { a })
    }

    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_cdf_table(&nodes, &values)?;
        Ok(CdfSpec::Tabulated(Pchip::new(nodes, values)?))
    }

    pub fn tabulated_with_derivatives(nodes: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        check_cdf_table(&nodes, &values)?;
        Ok(CdfSpec::Tabulated(Pchip::with_derivatives(nodes, values, derivs)?))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CdfSpec::Uniform { a } => ((x + a) / (2.0 * a)).clamp(0.0, 1.0),
            CdfSpec::Tabulated(p) => p.eval(x).clamp(0.0, 1.0),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            CdfSpec::Uniform { a } => {
                if x.abs() <= *a {
                    0.5 / a
                } else {
                    0.0
                }
            }
            CdfSpec::Tabulated(p) => p.eval_with_derivative(x).1,
        }
    }
}

fn check_cdf_table(nodes: &[f64], values: &[f64]) -> Result<()> {
    if nodes.first().is_some_and(|&x| x > -1.0) || nodes.last().is_some_and(|&x| x < 1.0) {
        return Err(Error::param("F.table", "nodes must cover [-1, 1]"));
    }
    if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::param("F.table", "CDF values must lie in [0, 1]"));
    }
    Ok(())
}

/// Volatility of the fundamental price as a function of its position in the tick.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    /// σ(y) = ρ √(γ S(y)).
    Assumption1 { rho: f64 },
    /// Positive profile on [0,1], extended periodically.
    Tabulated(Pchip),
}

impl SigmaSpec {
    pub fn assumption1(rho: f64) -> Result<Self> {
        require_positive("sigma.rho", rho)?;
        Ok(SigmaSpec::Assumption1 { rho })
    }

    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.first().is_some_and(|&x| x > 0.0) || nodes.last().is_some_and(|&x| x < 1.0) {
            return Err(Error::param("sigma.table", "nodes must cover [0, 1]"));
        }
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::param("sigma.table", "volatility must be strictly positive"));
        }
        Ok(SigmaSpec::Tabulated(Pchip::new(nodes, values)?))
    }
}

/// Full parameter set. Construction checks positivity and θ ∈ (0,1]; the
/// modelling assumptions are reported separately by [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    alpha: f64,
    gamma: f64,
    theta: f64,
    cdf: CdfSpec,
    sigma: SigmaSpec,
}

impl ModelParams {
    pub fn new(alpha: f64, gamma: f64, theta: f64, cdf: CdfSpec, sigma: SigmaSpec) -> Result<Self> {
        require_finite("alpha", alpha)?;
        if alpha < 0.0 {
            return Err(Error::param("alpha", format!("must be nonnegative, got {alpha}")));
        }
        require_positive("gamma", gamma)?;
        check_theta(theta)?;
        Ok(Self {
            alpha,
            gamma,
            theta,
            cdf,
            sigma,
        })
    }

    /// Uniform signal on [−a,a] with σ from Assumption 1.
    pub fn uniform(a: f64, alpha: f64, gamma: f64, theta: f64, rho: f64) -> Result<Self> {
        Self::new(alpha, gamma, theta, CdfSpec::uniform(a)?, SigmaSpec::assumption1(rho)?)
    }

    /// The reference parameter set used throughout the docs and tests:
    /// a = 1.2, α = 10, γ = 1, θ = 0.2, ρ = 1.
    pub fn reference() -> Self {
        Self::uniform(1.2, 10.0, 1.0, 0.2, 1.0).expect("reference parameters are valid")
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, ..self.clone() })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.gamma, self.theta, self.cdf.clone(), self.sigma.clone())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn cdf(&self) -> &CdfSpec {
        &self.cdf
    }
    pub fn sigma_spec(&self) -> &SigmaSpec {
        &self.sigma
    }

    /// Half-width a when F is uniform.
    pub fn uniform_half_width(&self) -> Option<f64> {
        match self.cdf {
            CdfSpec::Uniform { a } => Some(a),
            CdfSpec::Tabulated(_) => None,
        }
    }

    /// ρ when σ follows Assumption 1.
    pub fn rho(&self) -> Option<f64> {
        match self.sigma {
            SigmaSpec::Assumption1 { rho } => Some(rho),
            SigmaSpec::Tabulated(_) => None,
        }
    }

    /// S(y) = F(y−1) + F(−y) for y in [0,1].
    pub fn activity_cell(&self, y: f64) -> f64 {
        self.cdf.cdf(y - 1.0) + self.cdf.cdf(-y)
    }

    /// σ² at a cell position y in [0,1].
    pub fn sigma2_cell(&self, y: f64) -> f64 {
        match &self.sigma {
            SigmaSpec::Assumption1 { rho } => rho * rho * self.gamma * self.activity_cell(y),
            SigmaSpec::Tabulated(p) => {
                let s = p.eval(y);
                s * s
            }
        }
    }

    /// σ(x) for any real price.
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma2_cell(reduce(x)).sqrt()
    }

    /// (μ̂0, μ̂1, σ̂²) at a cell position y in [0,1]; θ must be positive.
    pub fn hat_cell(&self, theta: f64, y: f64) -> (f64, f64, f64) {
        let up = self.cdf.cdf(y - 1.0);
        let down = self.cdf.cdf(-y);
        let s = up + down;
        let mu0 = self.alpha * (up - down) / (theta * s);
        let mu1 = self.alpha * (2.0 * theta * down + up - down) / (theta * s);
        let sig2 = self.sigma2_cell(y) / (theta * self.gamma * s);
        (mu0, mu1, sig2)
    }

    /// (μ̄0, μ̄1, σ̄²) at a cell position y in [0,1].
    pub fn bar_cell(&self, y: f64) -> (f64, f64, f64) {
        let up = self.cdf.cdf(y - 1.0);
        let down = self.cdf.cdf(-y);
        let sig2 = self.sigma2_cell(y);
        let ag = self.alpha * self.gamma;
        (
            ag * (up - down) / sig2,
            2.0 * ag * down / sig2,
            sig2 / (self.gamma * (up + down)),
        )
    }

    pub fn mu0_hat(&self, x: f64) -> f64 {
        self.hat_cell(self.theta, reduce(x)).0
    }
    pub fn mu1_hat(&self, x: f64) -> f64 {
        self.hat_cell(self.theta, reduce(x)).1
    }
    pub fn sigma_hat(&self, x: f64) -> f64 {
        self.hat_cell(self.theta, reduce(x)).2.sqrt()
    }

    /// μ̂0 at an explicit participation rate.
    pub fn mu0_hat_at(&self, theta: f64, x: f64) -> Result<f64> {
        check_hat_theta(theta)?;
        Ok(self.hat_cell(theta, reduce(x)).0)
    }
    pub fn mu1_hat_at(&self, theta: f64, x: f64) -> Result<f64> {
        check_hat_theta(theta)?;
        Ok(self.hat_cell(theta, reduce(x)).1)
    }
    pub fn sigma_hat_at(&self, theta: f64, x: f64) -> Result<f64> {
        check_hat_theta(theta)?;
        Ok(self.hat_cell(theta, reduce(x)).2.sqrt())
    }

    pub fn mu_bar0(&self, x: f64) -> f64 {
        self.bar_cell(reduce(x)).0
    }
    pub fn mu_bar1(&self, x: f64) -> f64 {
        self.bar_cell(reduce(x)).1
    }
    pub fn sigma_bar(&self, x: f64) -> f64 {
        self.bar_cell(reduce(x)).2.sqrt()
    }

    /// Probability that an arrival at price x is a buy: P(ξ ≥ β⁺(x)).
    pub fn buy_probability(&self, x: f64) -> f64 {
        1.0 - self.cdf.cdf(beta_plus(x))
    }

    /// Probability that an arrival at price x is a sell: P(ξ ≤ β⁻(x)).
    pub fn sell_probability(&self, x: f64) -> f64 {
        self.cdf.cdf(beta_minus(x))
    }

    /// JSON description of the parameters, including tables, for output metadata.
    pub fn describe(&self) -> serde_json::Value {
        let cdf = match &self.cdf {
            CdfSpec::Uniform { a } => serde_json::json!({ "kind": "uniform", "a": a }),
            CdfSpec::Tabulated(p) => serde_json::json!({
                "kind": "tabulated",
                "nodes": p.nodes(),
                "values": p.values(),
                "derivatives": p.derivatives(),
            }),
        };
        let sigma = match &self.sigma {
            SigmaSpec::Assumption1 { rho } => serde_json::json!({ "kind": "assumption1", "rho": rho }),
            SigmaSpec::Tabulated(p) => serde_json::json!({
                "kind": "tabulated",
                "nodes": p.nodes(),
                "values": p.values(),
            }),
        };
        serde_json::json!({
            "alpha": self.alpha,
            "gamma": self.gamma,
            "theta": self.theta,
            "F": cdf,
            "sigma": sigma,
        })
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("theta", format!("must lie in (0, 1], got {theta}")))
    }
}

fn check_hat_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::param("theta", format!("must be positive, got {theta}")))
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Grid point of the worst violation (or of the tightest margin when passing).
    pub worst_x: Option<f64>,
    /// Size of the worst violation; nonpositive when passing.
    pub violation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid_points: usize,
    pub tolerance: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Standing assumptions only (everything except Assumptions 1 and 2).
    pub fn standing_passed(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| !c.name.starts_with("assumption"))
            .all(|c| c.passed)
    }
}

/// Checks the standing assumptions and Assumptions 1–2 on a 2001-point grid
/// with tolerance 1e-9.
pub fn validate_assumptions(p: &ModelParams) -> ValidationReport {
    validate_assumptions_with(p, 2001, 1e-9)
}

pub fn validate_assumptions_with(p: &ModelParams, grid_points: usize, tol: f64) -> ValidationReport {
    let m = grid_points.max(3);
    let grid = |lo: f64, hi: f64| -> Vec<f64> { (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect() };
    let sym = grid(-1.0, 1.0);
    let unit = grid(0.0, 1.0);
    let left = grid(-1.0, 0.0);
    let f = |x: f64| p.cdf.cdf(x);
    let mut checks = Vec::new();

    if let CdfSpec::Uniform { a } = p.cdf {
        checks.push(Check {
            name: "cdf.uniform_half_width",
            passed: a > 1.0,
            worst_x: None,
            violation: 1.0 - a,
            detail: format!("uniform signal needs a > 1, got a = {a}"),
        });
    }

    // the worst (largest) violation over a grid
    let worst = |xs: &[f64], viol: &dyn Fn(usize, f64) -> f64| -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, xs[0]);
        for (i, &x) in xs.iter().enumerate() {
            let v = viol(i, x);
            if v > best.0 || v.is_nan() {
                best = (v, x);
            }
        }
        best
    };
    let mut push = |name: &'static str, (v, x): (f64, f64), detail: &str| {
        checks.push(Check {
            name,
            passed: v <= tol,
            worst_x: Some(x),
            violation: v,
            detail: detail.to_string(),
        });
    };

    push(
        "cdf.monotone",
        worst(&sym, &|i, x| {
            if i == 0 {
                f64::NEG_INFINITY
            } else {
                f(sym[i - 1]) - f(x)
            }
        }),
        "F nondecreasing on [-1,1]",
    );
    push(
        "cdf.symmetry",
        worst(&sym, &|_, x| (f(x) + f(-x) - 1.0).abs()),
        "F(x) + F(-x) = 1 on [-1,1]",
    );
    push(
        "cdf.trading_activity",
        worst(&unit, &|_, y| -p.activity_cell(y)),
        "inf over [0,1] of F(y-1) + F(-y) > 0",
    );
    push(
        "sigma.positive",
        worst(&unit, &|_, y| -p.sigma2_cell(y)),
        "sigma strictly positive",
    );
    push(
        "sigma.periodic",
        ((p.sigma2_cell(0.0).sqrt() - p.sigma2_cell(1.0).sqrt()).abs(), 0.0),
        "sigma(0) = sigma(1)",
    );
    push(
        "sigma.symmetric",
        worst(&unit, &|_, y| {
            (p.sigma2_cell(y).sqrt() - p.sigma2_cell(1.0 - y).sqrt()).abs()
        }),
        "sigma(y) = sigma(1-y)",
    );

    // Assumption 1: σ/√(γS) is a constant ρ ≥ 1
    let ratio: Vec<f64> = unit
        .iter()
        .map(|&y| (p.sigma2_cell(y) / (p.gamma * p.activity_cell(y))).sqrt())
        .collect();
    let rmin = ratio.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let imin = ratio.iter().position(|&r| r == rmin).unwrap_or(0);
    push(
        "assumption1",
        ((rmax - rmin).max(1.0 - rmin), unit[imin]),
        "sigma = rho sqrt(gamma S) with constant rho >= 1",
    );

    // Assumption 2: F log-concave and F' nondecreasing on [-1,0]
    let logf: Vec<f64> = left.iter().map(|&x| f(x).ln()).collect();
    push(
        "assumption2.log_concave",
        worst(&left, &|i, _| {
            if i == 0 || i + 1 == m {
                f64::NEG_INFINITY
            } else {
                let d2 = logf[i + 1] - 2.0 * logf[i] + logf[i - 1];
                if d2.is_nan() {
                    f64::INFINITY
                } else {
                    d2
                }
            }
        }),
        "second differences of log F nonpositive on [-1,0]",
    );
    push(
        "assumption2.density_monotone",
        worst(&left, &|i, x| {
            if i == 0 {
                f64::NEG_INFINITY
            } else {
                p.cdf.density(left[i - 1]) - p.cdf.density(x)
            }
        }),
        "F' nondecreasing on [-1,0]",
    );

    ValidationReport {
        grid_points: m,
        tolerance: tol,
        checks,
    }
}
