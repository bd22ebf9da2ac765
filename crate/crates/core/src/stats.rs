//! Goodness-of-fit statistics for empirical sample frequencies.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Total variation distance between empirical `counts` and `probs`.
///
/// Mass observed outside `probs` (an index the caller could not place) is
/// passed as `unmatched` and counts fully toward the distance.
pub fn tvd(counts: &[u64], unmatched: u64, probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let total = (counts.iter().sum::<u64>() + unmatched) as f64;
    let l1: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / total - p).abs())
        .sum::<f64>()
        + unmatched as f64 / total;
    0.5 * l1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Pearson goodness-of-fit test.
///
/// Categories with expected count below 5 are pooled into one bin; if the
/// pooled bin is still below 5 it is merged into the smallest regular bin.
/// Observations in a zero-probability category make the statistic infinite.
pub fn chi_square_gof(counts: &[u64], unmatched: u64, probs: &[f64]) -> ChiSquareTest {
    assert_eq!(counts.len(), probs.len());
    let total = (counts.iter().sum::<u64>() + unmatched) as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    let mut impossible = unmatched;
    for (&c, &p) in counts.iter().zip(probs) {
        let expected = p * total;
        if p <= 0.0 {
            impossible += c;
        } else if expected < 5.0 {
            pooled.0 += c as f64;
            pooled.1 += expected;
        } else {
            bins.push((c as f64, expected));
        }
    }
    if impossible > 0 {
        return ChiSquareTest {
            statistic: f64::INFINITY,
            dof: bins.len().max(1),
            p_value: 0.0,
        };
    }
    if pooled.1 > 0.0 {
        if pooled.1 >= 5.0 || bins.is_empty() {
            bins.push(pooled);
        } else {
            let smallest = bins
                .iter_mut()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            smallest.0 += pooled.0;
            smallest.1 += pooled.1;
        }
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive dof").sf(statistic)
    };
    ChiSquareTest {
        statistic,
        dof,
        p_value,
    }
}

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tvd_examples() {
        assert_eq!(tvd(&[50, 50], 0, &[0.5, 0.5]), 0.0);
        assert!((tvd(&[100, 0], 0, &[0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((tvd(&[50, 0], 50, &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi_square_accepts_exact_and_rejects_skewed() {
        let probs = [0.25; 4];
        let fit = chi_square_gof(&[2500, 2500, 2500, 2500], 0, &probs);
        assert_eq!(fit.statistic, 0.0);
        assert_eq!(fit.dof, 3);
        assert!(!fit.rejects_at(0.001));

        let skew = chi_square_gof(&[3000, 2400, 2300, 2300], 0, &probs);
        assert!(skew.rejects_at(0.001));

        assert!(chi_square_gof(&[10, 1], 0, &[1.0, 0.0]).rejects_at(0.001));
    }

    #[test]
    fn chi_square_p_value_matches_table() {
        // 3 dof, statistic 7.815 is the 95th percentile
        let d = ChiSquared::new(3.0).unwrap();
        assert!((d.sf(7.815) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let noisy = linear_fit(&xs, &[1.0, 0.0, 1.0, 0.0]);
        assert!(noisy.r_squared < 0.5);
    }
}
