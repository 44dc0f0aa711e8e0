//! Two-sample tests used by the verification suites.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sample Kolmogorov–Smirnov distance sup |F_a − F_b|.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("KS distance needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::param("sample", "contains NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        // step past every copy of the smaller value in both samples
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

fn upper_tail(statistic: f64, df: f64) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| Error::param("df", e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Pearson homogeneity test for an r × c table of counts (rows are samples).
/// Columns that are empty in every row are dropped.
pub fn chi_square_homogeneity(table: &[Vec<f64>]) -> Result<ChiSquareTest> {
    let (statistic, df) = homogeneity_statistic(table)?;
    Ok(ChiSquareTest {
        statistic,
        df,
        p_value: upper_tail(statistic, df)?,
    })
}

fn homogeneity_statistic(table: &[Vec<f64>]) -> Result<(f64, f64)> {
    let r = table.len();
    if r < 2 {
        return Err(Error::param("table", "need at least two rows"));
    }
    let c = table[0].len();
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::param("table", "rows differ in length"));
    }
    let row_tot: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    if row_tot.iter().any(|&t| t <= 0.0) {
        return Err(Error::EmptySample("a row of the contingency table is empty".into()));
    }
    let live: Vec<usize> = (0..c).filter(|&j| col_tot[j] > 0.0).collect();
    if live.len() < 2 {
        return Ok((0.0, 0.0));
    }
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for &j in &live {
            let e = row_tot[i] * col_tot[j] / total;
            stat += (row[j] - e).powi(2) / e;
        }
    }
    Ok((stat, ((r - 1) * (live.len() - 1)) as f64))
}

/// Sum of independent homogeneity statistics over strata, compared with the
/// chi-square law whose degrees of freedom are the sum over strata.
pub fn stratified_homogeneity(strata: &[Vec<Vec<f64>>]) -> Result<ChiSquareTest> {
    let mut statistic = 0.0;
    let mut df = 0.0;
    for t in strata {
        match homogeneity_statistic(t) {
            Ok((s, d)) => {
                statistic += s;
                df += d;
            }
            // a stratum with no observations in some row carries no information
            Err(Error::EmptySample(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if df == 0.0 {
        return Err(Error::EmptySample("no stratum has observations in every row".into()));
    }
    Ok(ChiSquareTest {
        statistic,
        df,
        p_value: upper_tail(statistic, df)?,
    })
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_disjoint_and_identical_samples() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        // F_a jumps to 1/2 at 0 while F_b is still 0
        assert_eq!(ks_distance(&[0.0, 1.0], &[0.5, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        let d = ks_distance(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_textbook_table() {
        let t = vec![vec![20.0, 30.0], vec![30.0, 20.0]];
        let r = chi_square_homogeneity(&t).unwrap();
        // expected 25 everywhere: 4 · 25/25 = 4
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 1.0);
        assert!((r.p_value - 0.04550026389635842).abs() < 1e-9);
    }

    #[test]
    fn identical_rows_have_p_one() {
        let t = vec![vec![5.0, 7.0, 0.0], vec![5.0, 7.0, 0.0]];
        let r = chi_square_homogeneity(&t).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 1.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strata_add_up() {
        let a = vec![vec![20.0, 30.0], vec![30.0, 20.0]];
        let s = stratified_homogeneity(&[a.clone(), a]).unwrap();
        assert!((s.statistic - 8.0).abs() < 1e-12);
        assert_eq!(s.df, 2.0);
    }
}
