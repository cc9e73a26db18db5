//! Synthetic sensor-fault monitoring stream: correlated daily-periodic
//! sensor signals where selected sensors fail (stick and slowly ramp) at
//! given times.

use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::seed;

use super::{time_grid, LabeledStream, Provenance};

/// Generates `n_sensors` correlated periodic signals over `n` samples.
///
/// Every sensor reads `gain * demand(t) + noise` with a shared sinusoidal
/// demand of period `period_samples`. From each fault time onward the named
/// sensor is replaced by its last healthy value plus a slow linear ramp.
pub fn gen_sensor_fault(
    n_sensors: usize,
    n: usize,
    fault_times: &[f64],
    fault_sensors: &[usize],
    period_samples: usize,
    seed_value: u64,
) -> Result<LabeledStream> {
    if n == 0 || n_sensors == 0 {
        return Err(DriftError::EmptyDataset);
    }
    if fault_times.len() != fault_sensors.len() {
        return Err(DriftError::DimensionMismatch {
            expected: fault_times.len(),
            got: fault_sensors.len(),
        });
    }
    for &s in fault_sensors {
        if s >= n_sensors {
            return Err(DriftError::IndexOutOfRange {
                index: s,
                len: n_sensors,
            });
        }
    }
    for &t in fault_times {
        if !(t > 0.0 && t < 1.0) {
            return Err(DriftError::DomainError("fault time"));
        }
    }

    let mut rng = seed::rng_for(seed_value, seed::STREAM_GEN);
    use rand::Rng;
    let gains: Vec<f64> = (0..n_sensors).map(|_| rng.random_range(0.5..1.5)).collect();
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let times = time_grid(n);
    let period = period_samples as f64 / (n.max(2) - 1) as f64;

    // per-sensor fault schedule: earliest fault time, if any
    let mut fault_at = vec![f64::INFINITY; n_sensors];
    for (&t, &s) in fault_times.iter().zip(fault_sensors) {
        fault_at[s] = fault_at[s].min(t);
    }
    let mut stuck_value = vec![f64::NAN; n_sensors];

    let ramp_slope = 0.8;
    let mut rows = Vec::with_capacity(n);
    for &t in &times {
        let demand = 1.0 + 0.5 * (std::f64::consts::TAU * t / period + phase).sin();
        let mut row = Vec::with_capacity(n_sensors);
        for s in 0..n_sensors {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let healthy = gains[s] * demand + 0.05 * noise;
            if t >= fault_at[s] {
                if stuck_value[s].is_nan() {
                    stuck_value[s] = healthy;
                }
                let drift_noise: f64 = StandardNormal.sample(&mut rng);
                row.push(stuck_value[s] + ramp_slope * (t - fault_at[s]) + 0.01 * drift_noise);
            } else {
                row.push(healthy);
            }
        }
        rows.push(row);
    }

    let names: Vec<String> = (0..n_sensors).map(|i| format!("s{i}")).collect();
    let dataset = Dataset::from_normalized(rows, times, names)?;
    let mut drifting = vec![false; n_sensors];
    for &s in fault_sensors {
        drifting[s] = true;
    }
    let mut provenance = Provenance::new("sensor_fault", seed_value);
    provenance.detail.insert(
        "faults".to_string(),
        fault_times
            .iter()
            .zip(fault_sensors)
            .map(|(t, s)| format!("s{s}@{t}"))
            .collect::<Vec<_>>()
            .join(";"),
    );
    provenance
        .detail
        .insert("period_samples".to_string(), period_samples.to_string());
    Ok(LabeledStream {
        dataset,
        drifting_features: drifting,
        change_point: None,
        shallow_drifting: None,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_faults_is_a_null_stream() {
        let stream = gen_sensor_fault(4, 600, &[], &[], 200, 3).unwrap();
        assert!(stream.drifting_features.iter().all(|&b| !b));
        // no fault: all sensors keep tracking the shared demand; their
        // pairwise correlation stays high over the whole stream
        let a = stream.dataset.column(0);
        let b = stream.dataset.column(1);
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        assert!(cov / (va.sqrt() * vb.sqrt()) > 0.9);
    }

    #[test]
    fn faulted_sensor_stops_tracking_demand() {
        let stream = gen_sensor_fault(4, 800, &[0.5], &[2], 200, 5).unwrap();
        assert_eq!(stream.drifting_features, vec![false, false, true, false]);
        let faulty = stream.dataset.column(2);
        let healthy = stream.dataset.column(0);
        let times = stream.dataset.times();
        // post-fault, the faulty sensor's correlation with a healthy sensor
        // collapses while pre-fault it was strong
        let slice = |from: f64, to: f64, v: &[f64]| -> Vec<f64> {
            times
                .iter()
                .zip(v)
                .filter(|(&t, _)| t >= from && t < to)
                .map(|(_, &x)| x)
                .collect()
        };
        let corr = |x: &[f64], y: &[f64]| {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
            cov / (vx.sqrt() * vy.sqrt())
        };
        let pre = corr(&slice(0.0, 0.5, &faulty), &slice(0.0, 0.5, &healthy));
        let post = corr(&slice(0.5, 1.01, &faulty), &slice(0.5, 1.01, &healthy));
        assert!(pre > 0.9, "pre-fault correlation {pre}");
        assert!(post.abs() < 0.5, "post-fault correlation {post}");
    }

    #[test]
    fn bad_fault_spec_rejected() {
        assert!(gen_sensor_fault(3, 100, &[0.5], &[7], 50, 1).is_err());
        assert!(gen_sensor_fault(3, 100, &[1.5], &[1], 50, 1).is_err());
        assert!(gen_sensor_fault(3, 100, &[0.5, 0.6], &[1], 50, 1).is_err());
    }
}
