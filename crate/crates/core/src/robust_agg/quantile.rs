use crate::{Error, Result};

/// `sum_i |x_i - q| + (2p - 1)(x_i - q)`, twice the pinball loss.
pub fn pinball_objective(values: &[f64], p: f64, q: f64) -> f64 {
    values
        .iter()
        .map(|&x| (x - q).abs() + (2.0 * p - 1.0) * (x - q))
        .sum()
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

// 1-based rank of the smallest minimizer: ceil(p n), at least 1. The slack
// absorbs products such as 0.7 * 10 = 7.000000000000001.
fn quantile_rank(p: f64, n: usize) -> usize {
    let pn = p * n as f64;
    let slack = 4.0 * f64::EPSILON * (n as f64).max(1.0);
    ((pn - slack).ceil() as usize).clamp(1, n)
}

/// The `p`-th sample quantile: smallest minimizer of [`pinball_objective`].
///
/// The minimizer set is an interval whose finite endpoints are data values;
/// the left endpoint is the order statistic `x_(ceil(p n))`. At most `p n`
/// values lie strictly below it. For `p = 0` the set is unbounded below and
/// the minimum value is returned.
pub fn sample_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("sample quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in [0, 1], got {p}"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in quantile input".into()));
    }
    let v = sorted(values);
    Ok(v[quantile_rank(p, v.len()) - 1])
}

/// Geometric-median error bound `inf_{p in (1/2, 1]} 2p/(2p-1) Q(p; errors)`.
///
/// `Q(p)` equals `x_(j)` on `p in ((j-1)/n, j/n]` and the prefactor decreases
/// in `p`, so the infimum is attained at a breakpoint `p = j/n` with
/// `j > n/2`: `min_j 2j/(2j-n) x_(j)`.
pub fn gm_error_bound(errors: &[f64]) -> f64 {
    approx_gm_error_bound(errors, 0.0)
}

/// Error bound for a `(1+gamma)`-approximate geometric median:
/// `inf_p 2p/(2p-1) Q(p) + gamma sum_i e_i / ((2p-1) n)`.
pub fn approx_gm_error_bound(errors: &[f64], gamma: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let v = sorted(errors);
    let n = v.len();
    let total: f64 = v.iter().sum();
    (n / 2 + 1..=n)
        .map(|j| {
            let excess = (2 * j - n) as f64;
            let quantile_term = 2.0 * j as f64 / excess * v[j - 1];
            if gamma == 0.0 {
                quantile_term
            } else {
                quantile_term + gamma * total / excess
            }
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(sample_quantile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(sample_quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert_eq!(sample_quantile(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(sample_quantile(&[5.0], p).unwrap(), 5.0);
        }
        // p n = 7 exactly: the minimizer interval is [x_(7), x_(8)].
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(sample_quantile(&v, 0.7).unwrap(), 7.0);
    }

    #[test]
    fn errors() {
        assert!(sample_quantile(&[], 0.5).is_err());
        assert!(sample_quantile(&[1.0], -0.1).is_err());
        assert!(sample_quantile(&[1.0], 1.1).is_err());
    }

    #[test]
    fn at_most_pn_strictly_below() {
        let v = [4.0, 1.0, 1.0, 9.0, 2.0, 7.0, 7.0];
        for j in 0..=20 {
            let p = j as f64 / 20.0;
            let q = sample_quantile(&v, p).unwrap();
            let below = v.iter().filter(|&&x| x < q).count() as f64;
            assert!(below <= p * v.len() as f64 + 1e-12);
        }
    }

    #[test]
    fn bound_edge_cases() {
        assert_eq!(gm_error_bound(&[0.0; 5]), 0.0);
        for m in [1.0, 1e6, 1e300] {
            assert_eq!(gm_error_bound(&[0.0, 0.0, 0.0, m]), 0.0);
        }
        // n = 1: only p = 1, factor 2.
        assert_eq!(gm_error_bound(&[0.5]), 1.0);
        assert!(approx_gm_error_bound(&[1.0, 2.0], 0.1) > gm_error_bound(&[1.0, 2.0]));
    }
}
