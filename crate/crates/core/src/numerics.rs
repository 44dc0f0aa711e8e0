//! Small numerical kernels shared by the solvers.

use libm::erfc;

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated without cancellation in either tail.
pub fn norm_cdf_diff(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * erfc(-a / s) - 0.5 * erfc(b / s)
    }
}

/// Composite trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Bernoulli function B(z) = z / (e^z − 1), with B(0) = 1.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Solves a tridiagonal system by the Thomas algorithm.
///
/// `lower[i]` multiplies x[i-1] in row i (lower[0] unused), `upper[i]`
/// multiplies x[i+1] (last entry unused). Returns None on a zero pivot.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return None;
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// 2-norm condition number of a 2×2 matrix after scaling each row to unit max-norm.
pub fn cond2x2(m: [[f64; 2]; 2]) -> f64 {
    let mut r = m;
    for row in r.iter_mut() {
        let s = row[0].abs().max(row[1].abs());
        if s > 0.0 {
            row[0] /= s;
            row[1] /= s;
        }
    }
    let [[a, b], [c, d]] = r;
    let det = (a * d - b * c).abs();
    let fro2 = a * a + b * b + c * c + d * d;
    if det == 0.0 {
        return f64::INFINITY;
    }
    // singular values satisfy s1^2 + s2^2 = fro2 and s1 s2 = det
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((norm_cdf(-1.0) - 0.15865525393145707).abs() < 1e-15);
    }

    #[test]
    fn tail_difference_keeps_precision() {
        let d = norm_cdf_diff(9.0, 10.0);
        // Φ̄(9) − Φ̄(10) = 1.1285122074235907e-19
        assert!((d / 1.1285122074235907e-19 - 1.0).abs() < 1e-13);
        assert!((norm_cdf_diff(-1.0, 1.0) - 0.6826894921370859).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let h = 0.01;
        let v: Vec<f64> = (0..=100).map(|i| 3.0 * i as f64 * h).collect();
        assert!((trapezoid(&v, h) - 1.5).abs() < 1e-13);
    }

    #[test]
    fn bernoulli_identity() {
        for &z in &[-3.0, -1e-9, 0.0, 1e-9, 0.5, 7.0] {
            // B(-z) = B(z) + z
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let lower = [0.0, 1.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [1.0, 1.0, 1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i]
                    + if i > 0 { lower[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { upper[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let got = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn condition_number_of_identity_and_singular() {
        assert!((cond2x2([[1.0, 0.0], [0.0, 1.0]]) - 1.0).abs() < 1e-12);
        assert!(cond2x2([[1.0, 2.0], [2.0, 4.0]]).is_infinite());
    }
}
