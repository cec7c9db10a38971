//! Noisy single-shot readout, on/off classification and phase-space
//! visualisation of conditional gate fields.

mod wigner;

pub use wigner::{displacement_elements, wigner, wigner_grid, PhasePoint};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    pub efficiency: f64,
    pub added_noise_photons: f64,
    pub baseline_sigma_photons: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            efficiency: 0.5,
            added_noise_photons: 2.0,
            baseline_sigma_photons: 1.0,
        }
    }
}

impl DetectionModel {
    /// Unit efficiency and no noise.
    pub fn noiseless() -> Self {
        Self {
            efficiency: 1.0,
            added_noise_photons: 0.0,
            baseline_sigma_photons: 0.0,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invariant(
                format!("{prefix}.efficiency"),
                format!("must lie in (0, 1], got {}", self.efficiency),
            ));
        }
        for (name, v) in [
            ("added_noise_photons", self.added_noise_photons),
            ("baseline_sigma_photons", self.baseline_sigma_photons),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invariant(
                    format!("{prefix}.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn mean_reading(&self, true_photons: f64) -> f64 {
        self.efficiency * true_photons
    }

    pub fn reading_sigma(&self, true_photons: f64) -> f64 {
        (self.baseline_sigma_photons.powi(2)
            + self.added_noise_photons * self.efficiency * true_photons.max(0.0))
        .sqrt()
    }
}

/// One noisy integrated reading of `true_photons` transmitted photons.
/// Readings are not clipped and can be negative.
pub fn detect<R: Rng + ?Sized>(true_photons: f64, m: &DetectionModel, rng: &mut R) -> f64 {
    let mean = m.mean_reading(true_photons);
    let sigma = m.reading_sigma(true_photons);
    if sigma == 0.0 {
        return mean;
    }
    Normal::new(mean, sigma)
        .expect("sigma is finite and positive")
        .sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    On,
    Off,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::On => "on",
            Label::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub threshold: f64,
    pub low_center: f64,
    pub high_center: f64,
    pub iterations: usize,
}

impl Clustering {
    pub fn classify(&self, reading: f64) -> Label {
        if reading >= self.threshold {
            Label::On
        } else {
            Label::Off
        }
    }

    pub fn label_all(&self, readings: &[f64]) -> (Vec<Label>, LabelCounts) {
        let labels: Vec<Label> = readings.iter().map(|&r| self.classify(r)).collect();
        let counts = LabelCounts::tally(&labels);
        (labels, counts)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub on: usize,
    pub off: usize,
}

impl LabelCounts {
    pub fn tally(labels: &[Label]) -> Self {
        let on = labels.iter().filter(|&&l| l == Label::On).count();
        Self {
            on,
            off: labels.len() - on,
        }
    }

    pub fn total(&self) -> usize {
        self.on + self.off
    }

    pub fn off_fraction(&self) -> f64 {
        self.off as f64 / self.total().max(1) as f64
    }
}

const KMEANS_MAX_ITER: usize = 10_000;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-cluster Lloyd iteration on the real line with centers seeded at the
/// 10th and 90th percentiles. A reading at or above the threshold is "on".
pub fn kmeans_threshold(readings: &[f64]) -> Result<Clustering> {
    if readings.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("readings contain non-finite values".into()));
    }
    let mut sorted = readings.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (min, max) = match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => {
            return Err(Error::Degenerate(
                "k-means needs at least two distinct readings".into(),
            ))
        }
    };
    let range = max - min;
    let (mut lo, mut hi) = (percentile(&sorted, 0.1), percentile(&sorted, 0.9));
    if hi <= lo {
        lo = min;
        hi = max;
    }
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let split = 0.5 * (lo + hi);
        // sorted input: the low cluster is a prefix
        let k = sorted.partition_point(|&r| r < split);
        let (low, high) = sorted.split_at(k);
        let new_lo = if low.is_empty() { lo } else { low.iter().sum::<f64>() / low.len() as f64 };
        let new_hi = if high.is_empty() { hi } else { high.iter().sum::<f64>() / high.len() as f64 };
        let moved = (new_lo - lo).abs().max((new_hi - hi).abs());
        lo = new_lo;
        hi = new_hi;
        if moved < 1e-9 * range {
            break;
        }
    }
    Ok(Clustering {
        threshold: 0.5 * (lo + hi),
        low_center: lo,
        high_center: hi,
        iterations,
    })
}

/// Threshold, per-reading labels and label counts.
pub fn kmeans_1d(readings: &[f64]) -> Result<(f64, Vec<Label>, LabelCounts)> {
    let cl = kmeans_threshold(readings)?;
    let (labels, counts) = cl.label_all(readings);
    Ok((cl.threshold, labels, counts))
}

/// Uniform histogram over `[min, max]` as `(bin_center, count)` pairs. The
/// maximum falls in the last bin. A zero-width range is widened to ±0.5.
pub fn histogram(readings: &[f64], bins: usize) -> Result<Vec<(f64, usize)>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if readings.is_empty() {
        return Ok(Vec::new());
    }
    let mut min = readings.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max = readings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidArgument("readings contain non-finite values".into()));
    }
    if max == min {
        min -= 0.5;
        max += 0.5;
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &r in readings {
        let i = (((r - min) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| (min + (i as f64 + 0.5) * width, n))
        .collect())
}
