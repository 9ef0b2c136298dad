//! Fairness and summary statistics.

/// Jain's index `(sum x)^2 / (n sum x^2)`; `None` when every rate is zero
/// or the list is empty.
pub fn jain_index(rates: &[f64]) -> Option<f64> {
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|x| x * x).sum();
    if rates.is_empty() || sq <= 0.0 {
        return None;
    }
    Some(sum * sum / (rates.len() as f64 * sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRatio {
    pub ratio: Option<f64>,
    pub used: usize,
    /// Windows dropped because either rate was zero.
    pub excluded: usize,
}

/// Geometric mean of `r1 / r2` over windows; flow 1 is the established
/// flow.
pub fn geo_mean_ratio(samples: &[(f64, f64)]) -> GeoRatio {
    let mut log_sum = 0.0;
    let mut used = 0;
    for &(a, b) in samples {
        if a > 0.0 && b > 0.0 {
            log_sum += (a / b).ln();
            used += 1;
        }
    }
    GeoRatio {
        ratio: (used > 0).then(|| (log_sum / used as f64).exp()),
        used,
        excluded: samples.len() - used,
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if m == 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some(var.sqrt() / m)
}

/// Nearest-rank percentile of `xs` (sorted in place), `p` in `[0, 100]`.
pub fn percentile(xs: &mut [f64], p: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * xs.len() as f64).ceil() as usize;
    Some(xs[rank.clamp(1, xs.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[100.0, 100.0]), Some(1.0));
        assert_eq!(jain_index(&[100.0, 0.0]), Some(0.5));
        assert!((jain_index(&[150.0, 50.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(jain_index(&[0.0, 0.0]), None);
        assert_eq!(jain_index(&[]), None);
    }

    #[test]
    fn geo_examples() {
        assert_eq!(geo_mean_ratio(&[(5.0, 5.0), (3.0, 3.0)]).ratio, Some(1.0));
        let two = geo_mean_ratio(&[(2.0, 1.0), (4.0, 2.0)]).ratio.unwrap();
        assert!((two - 2.0).abs() < 1e-12);
        // Inversions cancel.
        let alt = geo_mean_ratio(&[(2.0, 1.0), (1.0, 2.0), (2.0, 1.0), (1.0, 2.0)]);
        assert!((alt.ratio.unwrap() - 1.0).abs() < 1e-12);
        let z = geo_mean_ratio(&[(1.0, 0.0), (2.0, 1.0)]);
        assert_eq!((z.used, z.excluded), (1, 1));
        assert_eq!(geo_mean_ratio(&[(0.0, 1.0)]).ratio, None);
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut xs: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&mut xs, 99.0), Some(99.0));
        assert_eq!(percentile(&mut xs, 100.0), Some(100.0));
        assert_eq!(percentile(&mut xs, 0.0), Some(1.0));
        assert_eq!(percentile(&mut [], 50.0), None);
    }

    #[test]
    fn cov() {
        assert_eq!(coefficient_of_variation(&[3.0, 3.0, 3.0]), Some(0.0));
        let c = coefficient_of_variation(&[1.0, 3.0]).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jain_bounds_and_scale(rates in prop::collection::vec(0.0f64..1e9, 1..8), k in 1e-3f64..1e3) {
                prop_assume!(rates.iter().any(|&r| r > 1e-3));
                let j = jain_index(&rates).unwrap();
                let n = rates.len() as f64;
                prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
                let scaled: Vec<f64> = rates.iter().map(|r| r * k).collect();
                prop_assert!((jain_index(&scaled).unwrap() - j).abs() < 1e-9);
            }
        }
    }
}
