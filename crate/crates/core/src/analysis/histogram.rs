use std::io::Write;

use crate::error::{Error, Result};
use crate::sim::{push_number, Trajectory};

/// Fixed-width histogram with bins `[edge_k, edge_k + width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// Left edges followed by the right edge of the last bin.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins are anchored at `floor(min / width) * width`.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("histogram needs at least one sample"));
        }
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::invalid("bin width must be positive"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("histogram samples must be finite"));
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let anchor_index = (lo / bin_width).floor();
        let anchor = anchor_index * bin_width;
        let bin_of = |v: f64| ((v / bin_width).floor() - anchor_index).max(0.0) as usize;
        let n_bins = bin_of(hi) + 1;
        let mut counts = vec![0u64; n_bins];
        for v in samples {
            counts[bin_of(*v)] += 1;
        }
        let bin_edges = (0..=n_bins).map(|k| anchor + k as f64 * bin_width).collect();
        Ok(Self {
            bin_width,
            bin_edges,
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of bins holding at least one sample.
    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    /// CSV `bin_left,bin_right,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        let mut line = String::new();
        for (k, c) in self.counts.iter().enumerate() {
            line.clear();
            push_number(&mut line, self.bin_edges[k]);
            line.push(',');
            push_number(&mut line, self.bin_edges[k + 1]);
            writeln!(w, "{line},{c}")?;
        }
        Ok(())
    }
}

/// Values of `channel` at `T_end - tail + k * period`, `k = 0..=tail/period`.
///
/// Each sample time must coincide with a recorded time.
pub fn tail_samples(traj: &Trajectory, channel: &str, tail_seconds: f64, sample_period: f64) -> Result<Vec<f64>> {
    if !(tail_seconds >= 0.0 && sample_period > 0.0) {
        return Err(Error::invalid("tail must be >= 0 and the sample period positive"));
    }
    if traj.diverged() {
        return Err(Error::Integration("cannot sample the tail of a diverged run".into()));
    }
    let values = traj
        .channel(channel)
        .ok_or_else(|| Error::invalid(format!("trajectory has no channel `{channel}`")))?;
    let end = traj.final_time();
    let start = end - tail_seconds;
    if start < traj.times[0] - 1e-9 {
        return Err(Error::invalid(format!(
            "trajectory spans {} s, shorter than the {tail_seconds} s tail",
            end - traj.times[0]
        )));
    }
    let n = (tail_seconds / sample_period + 1e-9).floor() as usize;
    let tol = 1e-6 * (1.0 + end.abs());
    (0..=n)
        .map(|k| {
            let t = start + k as f64 * sample_period;
            let i = traj.nearest_index(t);
            if (traj.times[i] - t).abs() > tol {
                return Err(Error::invalid(format!(
                    "no recorded step at t = {t}; record at least every {sample_period} s"
                )));
            }
            Ok(values[i])
        })
        .collect()
}

/// Pool tail samples of `channel` across runs and bin them.
pub fn price_histogram(
    trajectories: &[Trajectory],
    channel: &str,
    tail_seconds: f64,
    sample_period: f64,
    bin_width: f64,
) -> Result<Histogram> {
    let mut pooled = Vec::new();
    for t in trajectories {
        pooled.extend(tail_samples(t, channel, tail_seconds, sample_period)?);
    }
    Histogram::from_samples(&pooled, bin_width)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
}

pub fn sample_stats(samples: &[f64]) -> Result<SampleStats> {
    if samples.is_empty() {
        return Err(Error::invalid("statistics of an empty sample"));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(SampleStats {
        n,
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Channel;
    use proptest::prelude::*;

    fn constant_run(value: f64, horizon: usize) -> Trajectory {
        let times: Vec<f64> = (0..=horizon).map(|k| k as f64).collect();
        Trajectory {
            state_names: vec!["x".into()],
            states: times.iter().map(|_| vec![value]).collect(),
            channels: vec![Channel {
                name: "price".into(),
                values: vec![value; times.len()],
            }],
            times,
            diverged_at: None,
        }
    }

    #[test]
    fn constant_tail_lands_in_one_bin() {
        let h = price_histogram(&[constant_run(43.32, 1000)], "price", 250.0, 1.0, 0.05).unwrap();
        assert_eq!(h.counts, vec![251]);
        assert!(h.bin_edges[0] <= 43.32 && 43.32 < h.bin_edges[1]);
    }

    #[test]
    fn binning_definition() {
        let h = Histogram::from_samples(&[0.00, 0.04, 0.06], 0.05).unwrap();
        assert_eq!(h.counts, vec![2, 1]);
        assert_eq!(h.bin_edges, vec![0.0, 0.05, 0.1]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("bin_left,bin_right,count"));
        assert!(text.lines().nth(1).unwrap().ends_with(",2"));
    }

    #[test]
    fn negative_values_anchor_below() {
        let h = Histogram::from_samples(&[-0.07, -0.01, 0.02], 0.05).unwrap();
        assert!((h.bin_edges[0] + 0.1).abs() < 1e-12);
        assert_eq!(h.counts, vec![1, 1, 1]);
    }

    #[test]
    fn pooled_counts() {
        let runs: Vec<Trajectory> = (0..200).map(|i| constant_run(43.0 + 0.01 * i as f64, 1000)).collect();
        let h = price_histogram(&runs, "price", 250.0, 1.0, 0.05).unwrap();
        assert_eq!(h.total(), 200 * 251);
    }

    #[test]
    fn errors() {
        assert!(Histogram::from_samples(&[], 0.05).is_err());
        assert!(Histogram::from_samples(&[1.0], 0.0).is_err());
        let short = constant_run(1.0, 100);
        assert!(tail_samples(&short, "price", 250.0, 1.0).is_err());
        assert!(tail_samples(&short, "nope", 50.0, 1.0).is_err());
        // half-second sampling is not resolved by a 1 s record stride
        assert!(tail_samples(&short, "price", 50.0, 0.5).is_err());
        let mut diverged = constant_run(1.0, 500);
        diverged.diverged_at = Some(500.5);
        assert!(tail_samples(&diverged, "price", 250.0, 1.0).is_err());
    }

    #[test]
    fn stats() {
        let s = sample_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(sample_stats(&[]).is_err());
    }

    proptest! {
        #[test]
        fn counts_cover_every_sample(samples in prop::collection::vec(-100.0..100.0f64, 1..300),
                                     width in 0.01..5.0f64) {
            let h = Histogram::from_samples(&samples, width).unwrap();
            prop_assert_eq!(h.total(), samples.len() as u64);
            prop_assert_eq!(h.bin_edges.len(), h.counts.len() + 1);
            for w in h.bin_edges.windows(2) {
                prop_assert!(((w[1] - w[0]) - width).abs() <= 1e-9 * (1.0 + w[1].abs()));
            }
            prop_assert!(h.bin_edges[0] <= samples.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
}
