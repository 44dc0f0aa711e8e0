use impactlab::model::{validate_assumptions, ModelParams};
use impactlab::sim::{em_advance, path_rng, DiffusionKind};
use impactlab::stationary::{
    chi, closed_form_uniform, dtheta_f_at_zero, psi, solve_stationary_f, transient_fp, DensityKind,
};
use impactlab::Error;
use rayon::prelude::*;

fn reference() -> ModelParams {
    ModelParams::reference()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn numeric_solver_matches_closed_form_on_fig1_thetas() {
    let p = reference();
    for theta in [0.0, 0.2, 0.4, 0.6] {
        let num = solve_stationary_f(&p, theta, 1000).unwrap();
        let cf = closed_form_uniform(1.2, 10.0, theta, 1000).unwrap();
        assert!(sup(&num.values, &cf.values) < 1e-6, "theta {theta}");
    }
}

#[test]
fn zero_alpha_gives_flat_densities() {
    let p = ModelParams::uniform(1.2, 0.0, 1.0, 0.2, 1.5).unwrap();
    let f = solve_stationary_f(&p, 0.3, 200).unwrap();
    // f ≡ ρ² because ∫f/σ̄² = 1 with σ̄ ≡ ρ
    assert!(f.values.iter().all(|v| (v - 2.25).abs() < 1e-12));
    let ps = psi(&p, 200).unwrap();
    assert!(ps.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!((ps.wing() - 1.0).abs() < 1e-12);
    let cf = closed_form_uniform(1.2, 0.0, 0.3, 200).unwrap();
    assert!(cf.values.iter().all(|v| *v == 1.0));
}

#[test]
fn theta_zero_density_is_symmetric_u_shape() {
    let f = solve_stationary_f(&reference(), 0.0, 1000).unwrap();
    let n = f.n();
    for i in 0..=n {
        assert!((f.values[i] - f.values[n - i]).abs() < 1e-8);
    }
    let imin = (0..=n).min_by(|&i, &j| f.values[i].total_cmp(&f.values[j])).unwrap();
    assert_eq!(imin, 500);
    assert!(f.values[0] > 1.0 && f.values[0] > f.values[500]);
}

#[test]
fn meta_order_skews_density_left_and_lowers_right_wing() {
    let f0 = closed_form_uniform(1.2, 10.0, 0.0, 1000).unwrap();
    let f2 = closed_form_uniform(1.2, 10.0, 0.2, 1000).unwrap();
    assert!(f2.values[1000] < f0.values[1000]);
    let left: f64 = f2.values[..500].iter().sum();
    let right: f64 = f2.values[501..].iter().sum();
    assert!(left > right);
}

#[test]
fn closed_form_rejects_theta_one() {
    assert!(matches!(
        closed_form_uniform(1.2, 10.0, 1.0, 100),
        Err(Error::Unsupported(_))
    ));
    assert!(closed_form_uniform(1.0, 10.0, 0.0, 100).is_err());
    // the numeric solver handles θ = 1
    assert!(solve_stationary_f(&reference(), 1.0, 100).is_ok());
}

#[test]
fn psi_equals_f_when_sigma_bar_is_one() {
    let p = reference();
    let f = solve_stationary_f(&p, 0.0, 500).unwrap();
    let ps = psi(&p, 500).unwrap();
    assert_eq!(ps.kind, DensityKind::Psi);
    assert!(sup(&f.values, &ps.values) < 1e-12);
    let ch = chi(&p, 0.2, 500).unwrap();
    assert!((ch.integral() - 1.0).abs() < 1e-8);
}

#[test]
fn wing_is_above_one_and_matches_left_endpoint() {
    let ps = psi(&reference(), 1000).unwrap();
    assert!(ps.wing() > 1.0);
    assert!((ps.wing() - ps.wing_left()).abs() < 1e-6);
    // extrapolation error against the nodal value is O(h³ ψ''')
    assert!((ps.wing() - ps.values[1000]).abs() < 1e-5 * ps.values[1000]);
}

/// ½ d/dx(σ̂²ψ) − μ̂0ψ is the same at every interior node.
#[test]
fn stationary_flux_is_constant() {
    let p = reference();
    let n = 1000;
    let ps = psi(&p, n).unwrap();
    let h = ps.h();
    let s2 = |x: f64| p.hat_cell(1.0, x).2;
    let flux: Vec<f64> = (1..n)
        .map(|i| {
            let x = ps.x(i);
            let d = (s2(x + h) * ps.values[i + 1] - s2(x - h) * ps.values[i - 1]) / (2.0 * h);
            0.5 * d - p.hat_cell(1.0, x).0 * ps.values[i]
        })
        .collect();
    let scale = (1..n)
        .map(|i| (p.hat_cell(1.0, ps.x(i)).0 * ps.values[i]).abs())
        .fold(0.0, f64::max);
    let spread =
        flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - flux.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-4 * scale, "spread {spread:e}, scale {scale}");
}

/// Euler–Maruyama occupation of X̂ mod 1 near the integer against the
/// closed-form mass of the same boundary bins.
#[test]
fn em_histogram_reproduces_the_wing() {
    let p = reference().with_theta(1.0).unwrap();
    let cf = closed_form_uniform(1.2, 10.0, 0.0, 2000).unwrap();
    // EM overshoots the drift discontinuity at the integer, so the step has
    // to be well below the bin width
    let width = 0.05;
    // closed-form mass of [0, w) ∪ [1−w, 1) by trapezoid on the fine grid
    let k = (width * 2000.0) as usize;
    let h = cf.h();
    let edge = |lo: usize| -> f64 { (lo..lo + k).map(|i| 0.5 * h * (cf.values[i] + cf.values[i + 1])).sum() };
    let expected = edge(0) + edge(2000 - k);

    let paths = 800u64;
    let (burn, span, dv) = (1.0, 0.01, 5e-5);
    let samples_per_path = 300;
    let hits: Vec<(u64, u64)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(99, i);
            let mut x = em_advance(&p, DiffusionKind::X, 0.5, burn, dv, &mut rng);
            let mut inside = 0;
            for _ in 0..samples_per_path {
                x = em_advance(&p, DiffusionKind::X, x, span, dv, &mut rng);
                let y = x - x.floor();
                if y < width || y >= 1.0 - width {
                    inside += 1;
                }
            }
            (inside, samples_per_path as u64)
        })
        .collect();
    let (inside, total) = hits.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let observed = inside as f64 / total as f64;
    let err = (observed - expected).abs() / expected;
    assert!(err < 0.02, "observed {observed}, closed form {expected}, rel {err}");

    // and the three computations of the wing value agree
    let num = solve_stationary_f(&reference(), 0.0, 2000).unwrap();
    assert!((num.values[2000] - cf.values[2000]).abs() < 1e-6);
}

#[test]
fn transient_keeps_chi_and_conserves_mass() {
    let p = reference();
    let ch = chi(&p, 0.2, 400).unwrap();
    let out = transient_fp(&p, 0.2, &ch, &[0.05, 0.2], None).unwrap();
    for d in &out {
        assert!((d.integral() - 1.0).abs() < 1e-10);
        assert!(sup(&d.values, &ch.values) < 1e-4 * ch.values.iter().cloned().fold(0.0, f64::max) * 10.0);
    }
}

#[test]
fn transient_from_psi_converges_to_chi() {
    let p = reference();
    let n = 400;
    let ps = psi(&p, n).unwrap();
    let ch = chi(&p, 0.2, n).unwrap();
    let t = 50.0 / p.alpha();
    let out = transient_fp(&p, 0.2, &ps, &[t], None).unwrap();
    let d = &out[0];
    assert!((d.integral() - 1.0).abs() < 1e-10);
    let l1: f64 = d.values.iter().zip(&ch.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * d.h();
    assert!(l1 < 1e-3, "L1 = {l1:e}");
}

#[test]
fn transient_rejects_oversized_step() {
    let p = reference();
    let ps = psi(&p, 200).unwrap();
    let err = transient_fp(&p, 0.2, &ps, &[0.1], Some(0.1)).unwrap_err();
    assert!(matches!(err, Error::Cfl { max_dt, .. } if max_dt < 0.1));
}

#[test]
fn dtheta_at_zero_is_negative_and_matches_difference_quotient() {
    let p = reference();
    let g = dtheta_f_at_zero(&p, 1000).unwrap();
    assert!(g.g_at_one < 0.0);
    let f0 = solve_stationary_f(&p, 0.0, 1000).unwrap();
    let f1 = solve_stationary_f(&p, 1e-3, 1000).unwrap();
    let fd = (f1.values[1000] - f0.values[1000]) / 1e-3;
    assert!(
        (fd - g.g_at_one).abs() < 0.05 * g.g_at_one.abs(),
        "fd {fd}, g {}",
        g.g_at_one
    );
    // the weighted integral of g vanishes
    assert!(g.g.integral().abs() < 1e-6);
}

/// The source (μ̄1 f)' at x = 1 equals f(1)(μ̄1' + 2μ̄1μ̄0) at 1 because the
/// θ = 0 density has zero flux, f' = 2μ̄0 f. For the reference market this
/// is positive, so the source is not nonpositive on the whole cell.
#[test]
fn dtheta_source_at_one_matches_zero_flux_identity() {
    let p = reference();
    let g = dtheta_f_at_zero(&p, 2000).unwrap();
    let f = closed_form_uniform(1.2, 10.0, 0.0, 2000).unwrap();
    let (b0, b1, _) = p.bar_cell(1.0);
    let db1 = -2.0 * 10.0 / 1.4;
    let want = f.values[2000] * (db1 + 2.0 * b1 * b0);
    let got = g.source[2000];
    assert!((got - want).abs() < 1e-2 * want.abs(), "{got} vs {want}");
    assert!(want > 0.0);
    assert!(g.source[1] < 0.0);
}

#[test]
fn reference_parameters_satisfy_assumptions() {
    let r = validate_assumptions(&reference());
    assert!(r.all_passed(), "{:#?}", r.checks);
}

#[test]
fn density_csv_has_header_and_all_nodes() {
    let ps = psi(&reference(), 16).unwrap();
    let mut buf = Vec::new();
    ps.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,value");
    assert_eq!(lines.len(), 18);
    assert!(lines[17].starts_with("1,"));
}

#[test]
fn tabulated_uniform_cdf_reproduces_uniform_density() {
    use impactlab::{CdfSpec, SigmaSpec};
    let nodes: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
    let values: Vec<f64> = nodes.iter().map(|x| (x + 1.2) / 2.4).collect();
    let cdf = CdfSpec::tabulated(nodes, values).unwrap();
    let p = ModelParams::new(10.0, 1.0, 0.2, cdf, SigmaSpec::assumption1(1.0).unwrap()).unwrap();
    let tab = solve_stationary_f(&p, 0.2, 500).unwrap();
    let cf = closed_form_uniform(1.2, 10.0, 0.2, 500).unwrap();
    assert!(sup(&tab.values, &cf.values) < 1e-6);
}
