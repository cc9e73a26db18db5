//! Windowed streaming protocol: periodic model refits on a sliding window
//! with incremental permutation importance updates in between. This stands
//! in for incremental tree learners; the window and refit cadence are
//! configurable.

use serde::{Deserialize, Serialize};

use crate::data::{embed_time, Dataset, TimeEmbedding};
use crate::error::Result;
use crate::explainers::ipfi::{IpfiState, IpfiTarget};
use crate::models::{fit_moment_forest, fit_moment_tree, FitConfig, TimeModel};
use crate::seed;

/// Moment-model family used for windowed refits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamModelKind {
    Tree,
    Forest,
}

/// Streaming protocol parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamProtocol {
    pub embedding: TimeEmbedding,
    pub model: StreamModelKind,
    /// Sliding-window size for refits.
    pub window: usize,
    /// Refit cadence in samples (also the warm-up before the first fit).
    pub refit_every: usize,
    /// FIFO reservoir capacity for replacement draws.
    pub reservoir_capacity: usize,
    /// Importance decay; 1.0 disables decay (running mean).
    pub gamma: f64,
    /// Emit an accumulator snapshot every this many samples (0 = never).
    pub trace_every: usize,
}

impl StreamProtocol {
    pub fn new(embedding: TimeEmbedding) -> Self {
        StreamProtocol {
            embedding,
            model: StreamModelKind::Forest,
            window: 500,
            refit_every: 100,
            reservoir_capacity: 200,
            gamma: 0.99,
            trace_every: 0,
        }
    }
}

/// Accumulator snapshot along the stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePoint {
    /// Number of samples consumed when the snapshot was taken.
    pub at: usize,
    pub scores: Vec<f64>,
}

/// Result of a full streaming pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamResult {
    /// Sum of loss differences over the whole stream, per feature.
    pub stream_sums: Vec<f64>,
    /// Final decayed scores.
    pub final_scores: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub refits: usize,
    pub updates: u64,
}

/// Runs the windowed-refit + incremental-importance protocol over a stream
/// in time order.
pub fn run_ipfi_stream(
    ds: &Dataset,
    cfg: &FitConfig,
    proto: &StreamProtocol,
) -> Result<StreamResult> {
    let n = ds.len();
    let d = ds.n_features();
    let mut state = IpfiState::new(
        d,
        proto.reservoir_capacity,
        proto.gamma,
        seed::mix(cfg.seed, seed::STREAM_IPFI),
    )?;
    let mut model: Option<TimeModel> = None;
    let mut refits = 0usize;
    let mut trace = Vec::new();

    for i in 0..n {
        if i >= proto.refit_every && i % proto.refit_every == 0 {
            let start = i.saturating_sub(proto.window);
            if i - start >= 2 * cfg.min_leaf {
                let indices: Vec<usize> = (start..i).collect();
                let window_ds = ds.subset(&indices)?;
                let window_cfg = cfg
                    .clone()
                    .with_seed(seed::mix(cfg.seed, refits as u64 + 1));
                let fitted = match proto.model {
                    StreamModelKind::Tree => {
                        fit_moment_tree(&window_ds, &proto.embedding, &window_cfg)?
                    }
                    StreamModelKind::Forest => {
                        fit_moment_forest(&window_ds, &proto.embedding, &window_cfg)?
                    }
                };
                model = Some(fitted);
                refits += 1;
            }
        }
        let sample = &ds.samples()[i];
        if let Some(m) = &model {
            let target = embed_time(sample.time, &proto.embedding);
            state.update(m, &sample.features, &IpfiTarget::Moments(&target))?;
        } else {
            // warm-up: keep feeding the reservoir so early refits have
            // replacement values available
            state.feed_reservoir(&sample.features);
        }
        if proto.trace_every > 0 && (i + 1) % proto.trace_every == 0 {
            trace.push(TracePoint {
                at: i + 1,
                scores: state.scores().to_vec(),
            });
        }
    }

    Ok(StreamResult {
        stream_sums: state.stream_sums().to_vec(),
        final_scores: state.scores().to_vec(),
        trace,
        refits,
        updates: state.updates(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_stream_sums_stay_small() {
        let mut rng = crate::seed::rng_for(61, 0);
        use rand::Rng;
        let n = 600;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = crate::data::Dataset::from_normalized(rows, times, vec!["a".into(), "b".into()])
            .unwrap();
        let cfg = FitConfig {
            n_trees: 10,
            seed: 4,
            ..FitConfig::default()
        };
        let proto = StreamProtocol {
            window: 200,
            refit_every: 100,
            ..StreamProtocol::new(TimeEmbedding::Polynomial { degree: 2 })
        };
        let result = run_ipfi_stream(&ds, &cfg, &proto).unwrap();
        assert!(result.refits >= 4);
        assert!(result.updates > 400);
        let mean0 = result.stream_sums[0] / result.updates as f64;
        let mean1 = result.stream_sums[1] / result.updates as f64;
        assert!(mean0.abs() < 0.05, "mean0 {mean0}");
        assert!(mean1.abs() < 0.05, "mean1 {mean1}");
    }

    #[test]
    fn drifting_feature_dominates() {
        let mut rng = crate::seed::rng_for(62, 0);
        use rand::Rng;
        let n = 800;
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let drifting = if t >= 0.5 { 4.0 } else { 0.0 } + rng.random::<f64>();
            rows.push(vec![drifting, rng.random::<f64>()]);
            times.push(t);
        }
        let ds = crate::data::Dataset::from_normalized(
            rows,
            times,
            vec!["drift".into(), "noise".into()],
        )
        .unwrap();
        let cfg = FitConfig {
            n_trees: 10,
            seed: 5,
            ..FitConfig::default()
        };
        let mut proto = StreamProtocol::new(TimeEmbedding::Fourier {
            degree: 2,
            period: 1.0,
        });
        proto.window = 300;
        proto.trace_every = 200;
        let result = run_ipfi_stream(&ds, &cfg, &proto).unwrap();
        assert!(
            result.stream_sums[0] > 10.0
                && result.stream_sums[0] > 2.0 * result.stream_sums[1].abs(),
            "sums {:?}",
            result.stream_sums
        );
        assert_eq!(result.trace.len(), 4);
    }
}
