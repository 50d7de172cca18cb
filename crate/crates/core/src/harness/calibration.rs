//! Reliability binning of the belief's top probability at commit time.

use serde::{Deserialize, Serialize};

use super::EpisodeLog;

pub const DEFAULT_BIN_WIDTH: f64 = 0.2;

/// Episodes whose commit-time confidence fell in `[lo, hi)`; the last bin
/// is closed at 1. Empty bins carry `None` for both means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

impl CalibrationBin {
    /// `|accuracy − mean confidence|`, if the bin is populated.
    pub fn gap(&self) -> Option<f64> {
        Some((self.accuracy? - self.mean_confidence?).abs())
    }
}

/// Bins completed episodes by the largest final belief probability and
/// reports how often that argmax hypothesis was the true one. Failed
/// episodes are skipped.
pub fn calibration_report(logs: &[EpisodeLog], bin_width: f64) -> Vec<CalibrationBin> {
    let width = if bin_width.is_finite() && bin_width > 0.0 && bin_width <= 1.0 { bin_width } else { DEFAULT_BIN_WIDTH };
    let n_bins = (1.0 / width - 1e-9).ceil() as usize;
    let mut conf: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    let mut hits = vec![0usize; n_bins];
    for log in logs.iter().filter(|l| !l.failed()) {
        let p = log.final_belief.max_prob.clamp(0.0, 1.0);
        let bin = ((p / width) as usize).min(n_bins - 1);
        conf[bin].push(p);
        if log.final_belief.max_id == log.truth.id {
            hits[bin] += 1;
        }
    }
    conf.into_iter()
        .zip(hits)
        .enumerate()
        .map(|(i, (mut c, h))| {
            let count = c.len();
            c.sort_by(f64::total_cmp);
            CalibrationBin {
                lo: i as f64 * width,
                hi: ((i + 1) as f64 * width).min(1.0),
                count,
                mean_confidence: (count > 0).then(|| c.iter().sum::<f64>() / count as f64),
                accuracy: (count > 0).then(|| h as f64 / count as f64),
            }
        })
        .collect()
}
