use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GM_DEFAULT_TOL: f64 = 1e-10;
pub const GM_DEFAULT_MAX_ITERS: usize = 1000;
/// Distance under which an iterate is treated as sitting on a data point.
pub const GM_COINCIDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMResult {
    pub point: Vec<f64>,
    pub iters: usize,
    pub final_step: f64,
    /// The output is exactly one of the input points.
    pub anchored: bool,
}

/// `sum_i ||y - x_i||`.
pub fn gm_objective(points: &[Vec<f64>], y: &[f64]) -> f64 {
    points.iter().map(|x| dist(x, y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn coordinate_median(points: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut column = Vec::with_capacity(points.len());
    (0..dim)
        .map(|d| {
            column.clear();
            column.extend(points.iter().map(|p| p[d]));
            column.sort_by(f64::total_cmp);
            let n = column.len();
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect()
}

/// Geometric median with the default tolerance and iteration cap.
pub fn geometric_median(points: &[Vec<f64>]) -> Result<GMResult> {
    geometric_median_with(points, GM_DEFAULT_TOL, GM_DEFAULT_MAX_ITERS)
}

/// Weiszfeld iteration started at the coordinate-wise median.
///
/// When the iterate lands on data points (multiplicity `m`), the pull `R` of
/// the remaining points decides: `||R|| <= m` means the point is optimal and
/// the iteration stops there; otherwise the modified step
/// `(1 - m/||R||) T + (m/||R||) y` moves off it. Stops once a step is at most
/// `tol`.
pub fn geometric_median_with(points: &[Vec<f64>], tol: f64, max_iters: usize) -> Result<GMResult> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("geometric median of no points".into()))?;
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: format!("points of length {dim}"),
            actual: "ragged points".into(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }

    let mut y = coordinate_median(points, dim);
    let mut last_obj = gm_objective(points, &y);
    let mut final_step = f64::INFINITY;
    let mut iters = 0;
    let mut weighted = vec![0.0; dim];
    let mut pull = vec![0.0; dim];

    while iters < max_iters {
        iters += 1;
        weighted.fill(0.0);
        pull.fill(0.0);
        let mut weight_sum = 0.0;
        let mut multiplicity = 0usize;
        let mut anchor = None;
        for (i, x) in points.iter().enumerate() {
            let d = dist(x, &y);
            if d <= GM_COINCIDENCE_TOL {
                multiplicity += 1;
                anchor.get_or_insert(i);
                continue;
            }
            let w = 1.0 / d;
            weight_sum += w;
            for k in 0..dim {
                weighted[k] += w * x[k];
                pull[k] += w * (x[k] - y[k]);
            }
        }

        let next: Vec<f64> = match anchor {
            Some(i) => {
                let pull_norm = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
                if pull_norm <= multiplicity as f64 {
                    // First-order optimality holds at the data point.
                    let snapped = points[i].clone();
                    final_step = dist(&snapped, &y);
                    return Ok(GMResult {
                        point: snapped,
                        iters,
                        final_step,
                        anchored: true,
                    });
                }
                let lambda = multiplicity as f64 / pull_norm;
                (0..dim)
                    .map(|k| (1.0 - lambda) * weighted[k] / weight_sum + lambda * y[k])
                    .collect()
            }
            None => weighted.iter().map(|w| w / weight_sum).collect(),
        };

        final_step = dist(&next, &y);
        let obj = gm_objective(points, &next);
        debug_assert!(
            obj <= last_obj * (1.0 + 1e-12) + 1e-300,
            "Weiszfeld objective increased from {last_obj} to {obj}"
        );
        last_obj = obj;
        y = next;
        if final_step <= tol {
            break;
        }
    }

    let anchored = points.iter().any(|p| p == &y);
    Ok(GMResult {
        point: y,
        iters,
        final_step,
        anchored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_returned_exactly() {
        let x = vec![0.3, -1.7, 2.2];
        let gm = geometric_median(&[x.clone()]).unwrap();
        assert_eq!(gm.point, x);
        assert!(gm.anchored);
    }

    #[test]
    fn equilateral_triangle_center() {
        let s = 3f64.sqrt() / 2.0;
        let pts = vec![vec![1.0, 0.0], vec![-0.5, s], vec![-0.5, -s]];
        let gm = geometric_median(&pts).unwrap();
        assert!(gm.point.iter().all(|v| v.abs() < 1e-8), "{:?}", gm.point);
    }

    #[test]
    fn strict_majority_pins_the_median() {
        let z = vec![1.0, 2.0, 3.0];
        let mut pts = vec![z.clone(); 4];
        pts.extend([vec![100.0, 0.0, 0.0], vec![0.0, -50.0, 9.0], vec![7.0, 7.0, 7.0]]);
        let gm = geometric_median(&pts).unwrap();
        assert_eq!(gm.point, z);
        assert!(gm.anchored);
    }

    #[test]
    fn steps_off_a_non_optimal_data_point() {
        // The coordinate median (0, 0) is a data point but not the median.
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.1], vec![2.0, -0.1], vec![2.1, 0.0], vec![-0.1, 5.0]];
        let gm = geometric_median(&pts).unwrap();
        let obj = gm_objective(&pts, &gm.point);
        assert!(obj < gm_objective(&pts, &[0.0, 0.0]));
        for delta in [[1e-4, 0.0], [0.0, 1e-4], [-1e-4, 0.0], [0.0, -1e-4]] {
            let moved = [gm.point[0] + delta[0], gm.point[1] + delta[1]];
            assert!(obj <= gm_objective(&pts, &moved) + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(geometric_median(&[]).is_err());
        assert!(geometric_median(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(geometric_median_with(&[vec![1.0]], 0.0, 10).is_err());
    }
}
