//! L1-regularized logistic regression fit by proximal coordinate descent.

/// Result of a lasso-logistic fit.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Minimizes `(1/n) sum log(1 + exp(-y~ (w.x + b))) + l1 * ||w||_1` with an
/// unpenalized bias. Each coordinate takes a majorized Newton step followed
/// by soft-thresholding; the curvature bound `sum x_j^2 / (4n)` guarantees
/// descent.
pub fn fit_logistic_l1(
    rows: &[Vec<f64>],
    labels: &[u8],
    l1_strength: f64,
    tol: f64,
    max_sweeps: usize,
) -> LinearFit {
    let n = rows.len();
    let d = rows[0].len();
    let nf = n as f64;

    let mut curvature = vec![0.0; d];
    for row in rows {
        for (h, &x) in curvature.iter_mut().zip(row) {
            *h += x * x;
        }
    }
    for h in &mut curvature {
        *h /= 4.0 * nf;
    }

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut margins = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            if curvature[j] <= 0.0 {
                continue;
            }
            let mut grad = 0.0;
            for (row, (&m, &y)) in rows.iter().zip(margins.iter().zip(labels)) {
                grad += (sigmoid(m) - y as f64) * row[j];
            }
            grad /= nf;
            let raw = weights[j] - grad / curvature[j];
            let new = soft_threshold(raw, l1_strength / curvature[j]);
            let delta = new - weights[j];
            if delta != 0.0 {
                weights[j] = new;
                for (m, row) in margins.iter_mut().zip(rows) {
                    *m += delta * row[j];
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        let mut grad_b = 0.0;
        for (&m, &y) in margins.iter().zip(labels) {
            grad_b += sigmoid(m) - y as f64;
        }
        grad_b /= nf;
        let delta_b = -grad_b / 0.25;
        if delta_b != 0.0 {
            bias += delta_b;
            for m in &mut margins {
                *m += delta_b;
            }
            max_delta = max_delta.max(delta_b.abs());
        }
        if max_delta < tol {
            break;
        }
    }
    LinearFit {
        weights,
        bias,
        iterations: sweeps,
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Clamped sigmoid probability of class 1.
pub fn predict_proba_linear(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    sigmoid(z).clamp(1e-9, 1.0 - 1e-9)
}
