//! Small shared statistics helpers: midranks, order statistics, rank-sum and
//! chi-square tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Group-comparison p-value. `Degenerate` flags tables or samples with no
/// usable variation (e.g. every value tied); `Unavailable` means the test
/// could not be formed at all (e.g. one class empty).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", content = "p", rename_all = "snake_case")]
pub enum PValue {
    Value(f64),
    Degenerate,
    Unavailable,
}

impl PValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            PValue::Value(p) => Some(*p),
            _ => None,
        }
    }
}

/// Midranks (1-based, ties averaged) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the averaged rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Linear-interpolation (inclusive) quantile over a sorted slice, the R
/// type-7 rule: q(p) sits at fractional index (n-1)p.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Median and interquartile range `(q1, median, q3)`.
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Some((
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    ))
}

/// Standard normal survival-based two-sided p-value for a z statistic.
pub fn two_sided_normal_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test with normal approximation
/// and tie correction.
pub fn rank_sum_test(xs: &[f64], ys: &[f64]) -> PValue {
    if xs.is_empty() || ys.is_empty() {
        return PValue::Unavailable;
    }
    let m = xs.len() as f64;
    let n = ys.len() as f64;
    let total = m + n;
    let mut combined: Vec<f64> = Vec::with_capacity(xs.len() + ys.len());
    combined.extend_from_slice(xs);
    combined.extend_from_slice(ys);
    let ranks = midranks(&combined);
    let rank_sum_x: f64 = ranks[..xs.len()].iter().sum();
    let u = rank_sum_x - m * (m + 1.0) / 2.0;
    let mean = m * n / 2.0;

    // tie correction over combined sample
    let mut sorted = combined.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = m * n / 12.0 * (total + 1.0 - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return PValue::Degenerate;
    }
    let z = (u - mean) / var.sqrt();
    PValue::Value(two_sided_normal_p(z))
}

/// Chi-square test of independence for an r x c count table given as
/// `rows[i][j]`. Rows or columns with zero total are ignored.
pub fn chi_square_test(rows: &[Vec<u64>]) -> PValue {
    if rows.is_empty() {
        return PValue::Unavailable;
    }
    let n_cols = rows[0].len();
    let row_totals: Vec<u64> = rows.iter().map(|r| r.iter().sum()).collect();
    let mut col_totals = vec![0u64; n_cols];
    for r in rows {
        for (j, v) in r.iter().enumerate() {
            col_totals[j] += v;
        }
    }
    let grand: u64 = row_totals.iter().sum();
    if grand == 0 {
        return PValue::Unavailable;
    }
    let live_rows: Vec<usize> = (0..rows.len()).filter(|&i| row_totals[i] > 0).collect();
    let live_cols: Vec<usize> = (0..n_cols).filter(|&j| col_totals[j] > 0).collect();
    if live_rows.len() < 2 || live_cols.len() < 2 {
        return PValue::Degenerate;
    }
    let df = (live_rows.len() - 1) * (live_cols.len() - 1);
    let mut stat = 0.0;
    for &i in &live_rows {
        for &j in &live_cols {
            let expected = row_totals[i] as f64 * col_totals[j] as f64 / grand as f64;
            let observed = rows[i][j] as f64;
            stat += (observed - expected) * (observed - expected) / expected;
        }
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    PValue::Value((1.0 - dist.cdf(stat)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn midranks_handle_ties() {
        let r = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn quartiles_match_hand_computation() {
        // spec-style worked example: {1..5} -> median 3, IQR (2, 4)
        let (q1, med, q3) = median_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((q1, med, q3), (2.0, 3.0, 4.0));

        let (q1, med, q3) = median_iqr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(q1, 1.75);
        assert_relative_eq!(med, 2.5);
        assert_relative_eq!(q3, 3.25);
    }

    #[test]
    fn rank_sum_detects_shift() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..40).map(|i| i as f64 + 30.0).collect();
        match rank_sum_test(&xs, &ys) {
            PValue::Value(p) => assert!(p < 0.001, "p = {p}"),
            other => panic!("expected p-value, got {other:?}"),
        }
    }

    #[test]
    fn rank_sum_all_ties_is_degenerate() {
        let xs = vec![1.0; 10];
        let ys = vec![1.0; 10];
        assert_eq!(rank_sum_test(&xs, &ys), PValue::Degenerate);
    }

    #[test]
    fn chi_square_no_association() {
        // identical distributions across classes -> high p
        let table = vec![vec![50, 50], vec![50, 50]];
        match chi_square_test(&table) {
            PValue::Value(p) => assert!(p > 0.99),
            other => panic!("expected p-value, got {other:?}"),
        }
    }

    #[test]
    fn chi_square_single_category_degenerate() {
        let table = vec![vec![50, 0], vec![80, 0]];
        assert_eq!(chi_square_test(&table), PValue::Degenerate);
    }
}
