//! Lawson–Hanson active-set nonnegative least squares on the normal equations.

use nalgebra::{DMatrix, DVector};

/// Solves `min ‖E·x − b‖₂ s.t. x ≥ 0` given `gram = EᵀE` and `etb = Eᵀb`.
///
/// At most `max_iter` outer iterations are run; the best feasible iterate is
/// returned either way.
pub fn nnls_normal(gram: &DMatrix<f64>, etb: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let n = etb.len();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = etb.amax().max(gram.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    for _ in 0..max_iter {
        let w = etb - gram * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .fold(None::<usize>, |best, j| match best {
                Some(b) if w[b] >= w[j] => Some(b),
                _ => Some(j),
            });
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = solve_subset(gram, etb, &idx);
            let Some(z) = z else {
                // Dependent column; drop the newest entry.
                passive[j] = false;
                break;
            };
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[i] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn solve_subset(gram: &DMatrix<f64>, etb: &DVector<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let g = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(k, |r, _| etb[idx[r]]);
    let sol = g.lu().solve(&rhs)?;
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}
