//! Training-set-restricted counterfactuals: the nearest dataset sample in
//! the opposite drift region.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::localization::{LocusReport, Region};
use crate::prototypes::DistanceMatrix;

/// A counterfactual pair of dataset samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterfactual {
    pub original_index: usize,
    pub counterfactual_index: usize,
    pub distance: f64,
    pub original_region: Region,
    pub target_region: Region,
}

/// Distance used for the counterfactual scan.
pub enum CounterfactualMetric<'a> {
    Euclidean,
    /// Precomputed full-dataset matrix (e.g. a drift-aware geodesic).
    Precomputed(&'a DistanceMatrix),
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Returns the closest sample whose drift region is opposite to the
/// original's; ties break to the lowest index.
pub fn nearest_counterfactual(
    ds: &Dataset,
    report: &LocusReport,
    original_index: usize,
    metric: &CounterfactualMetric,
) -> Result<Counterfactual> {
    if original_index >= ds.len() {
        return Err(DriftError::IndexOutOfRange {
            index: original_index,
            len: ds.len(),
        });
    }
    if report.len() != ds.len() {
        return Err(DriftError::MismatchedDataset {
            expected: report.len(),
            got: ds.len(),
        });
    }
    let original_region = report.region[original_index];
    let target_region = match original_region {
        Region::Before => Region::After,
        Region::After => Region::Before,
        Region::NotDrifting => return Err(DriftError::OriginalNotDrifting(original_index)),
    };

    let origin = &ds.samples()[original_index].features;
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in ds.samples().iter().enumerate() {
        if i == original_index || report.region[i] != target_region {
            continue;
        }
        let d = match metric {
            CounterfactualMetric::Euclidean => l2(origin, &s.features),
            CounterfactualMetric::Precomputed(m) => m.get(original_index, i),
        };
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    let (distance, counterfactual_index) = best.ok_or(DriftError::NoTargetSamples)?;
    Ok(Counterfactual {
        original_index,
        counterfactual_index,
        distance,
        original_region,
        target_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with_regions(regions: Vec<Region>) -> LocusReport {
        let n = regions.len();
        LocusReport {
            change_point: 0.5,
            prior: 0.5,
            theta: 0.0,
            kl_scores: vec![1.0; n],
            p_after: regions
                .iter()
                .map(|r| match r {
                    Region::Before => 0.1,
                    Region::After => 0.9,
                    Region::NotDrifting => 0.5,
                })
                .collect(),
            in_locus: regions.iter().map(|r| *r != Region::NotDrifting).collect(),
            region: regions,
        }
    }

    fn tiny_dataset(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect();
        Dataset::from_normalized(rows, times, vec!["x".into()]).unwrap()
    }

    #[test]
    fn three_point_brute_force() {
        let ds = tiny_dataset(vec![vec![0.0], vec![2.0], vec![5.0]]);
        let report = report_with_regions(vec![Region::Before, Region::After, Region::After]);
        let cf = nearest_counterfactual(&ds, &report, 0, &CounterfactualMetric::Euclidean).unwrap();
        // independent scan
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, s) in ds.samples().iter().enumerate() {
            if report.region[i] == Region::After {
                let d = (s.features[0] - 0.0).abs();
                if d < best.0 {
                    best = (d, i);
                }
            }
        }
        assert_eq!(cf.counterfactual_index, best.1);
        assert_eq!(cf.counterfactual_index, 1);
        assert_eq!(cf.distance, 2.0);
    }

    #[test]
    fn same_region_neighbor_skipped() {
        // nearest overall neighbor of sample 0 shares its region; the
        // nearest opposite-region sample must win instead
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1], vec![3.0]]);
        let report = report_with_regions(vec![Region::Before, Region::Before, Region::After]);
        let cf = nearest_counterfactual(&ds, &report, 0, &CounterfactualMetric::Euclidean).unwrap();
        assert_eq!(cf.counterfactual_index, 2);
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let ds = tiny_dataset(vec![vec![0.0], vec![1.0], vec![-1.0]]);
        let report = report_with_regions(vec![Region::Before, Region::After, Region::After]);
        let cf = nearest_counterfactual(&ds, &report, 0, &CounterfactualMetric::Euclidean).unwrap();
        assert_eq!(cf.counterfactual_index, 1);
    }

    #[test]
    fn not_drifting_original_rejected() {
        let ds = tiny_dataset(vec![vec![0.0], vec![1.0]]);
        let report = report_with_regions(vec![Region::NotDrifting, Region::After]);
        let err =
            nearest_counterfactual(&ds, &report, 0, &CounterfactualMetric::Euclidean).unwrap_err();
        assert!(matches!(err, DriftError::OriginalNotDrifting(0)));
    }

    #[test]
    fn missing_targets_rejected() {
        let ds = tiny_dataset(vec![vec![0.0], vec![1.0]]);
        let report = report_with_regions(vec![Region::Before, Region::Before]);
        let err =
            nearest_counterfactual(&ds, &report, 0, &CounterfactualMetric::Euclidean).unwrap_err();
        assert!(matches!(err, DriftError::NoTargetSamples));
    }
}
