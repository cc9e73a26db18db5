//! Local linear surrogates: weighted least squares on the model's
//! after-probability over Gaussian perturbations around an anchor.

use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::models::TimeModel;
use crate::seed;

/// A fitted local surrogate around one anchor point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalSurrogate {
    pub anchor: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Model value at the anchor under the surrogate (the fit is centered
    /// on the anchor, so the intercept is the local prediction).
    pub intercept: f64,
    pub kernel_width: f64,
    pub n_samples: usize,
    pub fit_r2: f64,
    /// True when the normal equations needed a ridge jitter to solve.
    pub ridged: bool,
}

/// Fits a weighted linear surrogate of `m`'s p(after) around `anchor`.
///
/// Perturbations are Gaussian per feature with standard deviation
/// `sigma * feature_stds[j]`; weights decay as `exp(-d^2 / kernel_width^2)`
/// in the anchor's L2 neighborhood.
pub fn local_surrogate(
    m: &TimeModel,
    anchor: &[f64],
    feature_stds: &[f64],
    n_samples: usize,
    sigma: f64,
    kernel_width: f64,
    seed_value: u64,
) -> Result<LocalSurrogate> {
    if !m.is_classifier() {
        return Err(DriftError::WrongModelKind(
            "local_surrogate needs a classifier",
        ));
    }
    if !(sigma > 0.0) {
        return Err(DriftError::DomainError("sigma"));
    }
    if !(kernel_width > 0.0) {
        return Err(DriftError::DomainError("kernel_width"));
    }
    let d = anchor.len();
    if feature_stds.len() != d {
        return Err(DriftError::DimensionMismatch {
            expected: d,
            got: feature_stds.len(),
        });
    }
    if n_samples < d + 2 {
        return Err(DriftError::TooFewSamples {
            needed: d + 2,
            got: n_samples,
        });
    }

    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seed::rng_for(seed_value, seed::STREAM_SURROGATE);

    // Offsets from the anchor; the fit runs in centered coordinates so the
    // intercept is the surrogate's value at the anchor itself.
    let mut offsets = Vec::with_capacity(n_samples);
    let mut values = Vec::with_capacity(n_samples);
    let mut weights = Vec::with_capacity(n_samples);
    let mut x = vec![0.0; d];
    for _ in 0..n_samples {
        let mut dist2 = 0.0;
        let mut offset = Vec::with_capacity(d);
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let o = z * sigma * feature_stds[j];
            offset.push(o);
            dist2 += o * o;
            x[j] = anchor[j] + o;
        }
        values.push(m.p_after(&x)?);
        weights.push((-dist2 / (kernel_width * kernel_width)).exp());
        offsets.push(offset);
    }

    // Normal equations over [1, offset] with weights.
    let dim = d + 1;
    let mut ata = vec![vec![0.0; dim]; dim];
    let mut atb = vec![0.0; dim];
    for i in 0..n_samples {
        let w = weights[i];
        let mut row = Vec::with_capacity(dim);
        row.push(1.0);
        row.extend_from_slice(&offsets[i]);
        for a in 0..dim {
            let wa = w * row[a];
            atb[a] += wa * values[i];
            for b in a..dim {
                ata[a][b] += wa * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            ata[a][b] = ata[b][a];
        }
    }

    let (solution, ridged) = solve_with_jitter(ata, &atb)?;
    let intercept = solution[0];
    let coefficients = solution[1..].to_vec();

    // weighted R^2
    let w_total: f64 = weights.iter().sum();
    let y_bar: f64 = weights.iter().zip(&values).map(|(w, y)| w * y).sum::<f64>() / w_total;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n_samples {
        let fitted = intercept
            + coefficients
                .iter()
                .zip(&offsets[i])
                .map(|(c, o)| c * o)
                .sum::<f64>();
        ss_res += weights[i] * (values[i] - fitted) * (values[i] - fitted);
        ss_tot += weights[i] * (values[i] - y_bar) * (values[i] - y_bar);
    }
    let fit_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    Ok(LocalSurrogate {
        anchor: anchor.to_vec(),
        coefficients,
        intercept,
        kernel_width,
        n_samples,
        fit_r2,
        ridged,
    })
}

/// Cholesky solve with escalating ridge jitter on failure.
fn solve_with_jitter(mut a: Vec<Vec<f64>>, b: &[f64]) -> Result<(Vec<f64>, bool)> {
    if let Some(x) = cholesky_solve(&a, b) {
        return Ok((x, false));
    }
    let dim = a.len();
    let scale: f64 = (0..dim).map(|i| a[i][i]).sum::<f64>() / dim as f64;
    let mut jitter = (scale.max(1e-300)) * 1e-10;
    for _ in 0..12 {
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += jitter;
        }
        if let Some(x) = cholesky_solve(&a, b) {
            return Ok((x, true));
        }
        jitter *= 10.0;
    }
    Err(DriftError::DomainError("surrogate normal equations"))
}

/// Plain Cholesky decomposition solve for SPD systems; `None` if the matrix
/// is not positive definite.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}
