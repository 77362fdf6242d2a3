use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DemandMatrix;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(*r > 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split ratios must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Stride-1 sliding windows over a `T × n` series: sample `s` reads rows
/// `s..s+M` as input and `s+M..s+M+H` as target. Samples are assigned to
/// splits by start index, in contiguous time order.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    series: Vec<f64>,
    t: usize,
    n: usize,
    input_steps: usize,
    horizon: usize,
    train_end: usize,
    val_end: usize,
}

pub fn make_windows(
    demand: &DemandMatrix,
    input_steps: usize,
    horizon: usize,
    ratios: SplitRatios,
) -> Result<WindowedDataset> {
    WindowedDataset::new(demand.values().to_vec(), demand.t(), demand.n(), input_steps, horizon, ratios)
}

impl WindowedDataset {
    pub fn new(
        series: Vec<f64>,
        t: usize,
        n: usize,
        input_steps: usize,
        horizon: usize,
        ratios: SplitRatios,
    ) -> Result<Self> {
        if input_steps == 0 || horizon == 0 {
            return Err(Error::Validation(format!(
                "input steps ({input_steps}) and horizon ({horizon}) must be at least 1"
            )));
        }
        ratios.validate()?;
        if series.len() != t * n {
            return Err(Error::Validation(format!("series has {} values, expected {t}×{n}", series.len())));
        }
        if t < input_steps + horizon {
            return Err(Error::InsufficientData {
                required: input_steps + horizon,
                got: t,
            });
        }
        let s = t - input_steps - horizon + 1;
        let cut = |r: f64| ((s as f64) * r + 1e-9).floor() as usize;
        let train_end = cut(ratios.train).max(1).min(s);
        let val_end = cut(ratios.train + ratios.val).clamp(train_end, s);
        Ok(WindowedDataset {
            series,
            t,
            n,
            input_steps,
            horizon,
            train_end,
            val_end,
        })
    }

    /// Number of samples, `T − M − H + 1`.
    pub fn len(&self) -> usize {
        self.t - self.input_steps - self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn input_steps(&self) -> usize {
        self.input_steps
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    pub fn indices(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Val => self.train_end..self.val_end,
            Split::Test => self.val_end..self.len(),
        }
    }

    pub fn split_of(&self, sample: usize) -> Split {
        if sample < self.train_end {
            Split::Train
        } else if sample < self.val_end {
            Split::Val
        } else {
            Split::Test
        }
    }

    /// Rows touched by any training window (inputs and targets).
    pub fn train_rows(&self) -> Range<usize> {
        0..self.train_end + self.input_steps + self.horizon - 1
    }

    /// `M × n` input block of sample `s`.
    pub fn input(&self, s: usize) -> &[f64] {
        &self.series[s * self.n..(s + self.input_steps) * self.n]
    }

    /// `H × n` target block of sample `s`.
    pub fn target(&self, s: usize) -> &[f64] {
        let start = s + self.input_steps;
        &self.series[start * self.n..(start + self.horizon) * self.n]
    }

    /// Stacks samples into `[B, M, n]` inputs and `[B, H, n]` targets.
    pub fn batch(&self, samples: &[usize]) -> (Tensor, Tensor) {
        let b = samples.len();
        let mut x = Vec::with_capacity(b * self.input_steps * self.n);
        let mut y = Vec::with_capacity(b * self.horizon * self.n);
        for &s in samples {
            x.extend_from_slice(self.input(s));
            y.extend_from_slice(self.target(s));
        }
        (
            Tensor::new(vec![b, self.input_steps, self.n], x).expect("batch shape"),
            Tensor::new(vec![b, self.horizon, self.n], y).expect("batch shape"),
        )
    }

    /// Same windows over a transformed copy of the series.
    pub fn map_series(&self, f: impl FnOnce(&mut [f64])) -> WindowedDataset {
        let mut out = self.clone();
        f(&mut out.series);
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    ZscorePerNode,
    ZscoreGlobal,
}

pub const MIN_STD: f64 = 1e-8;

/// Z-score normaliser fitted on a row range of a `T × n` series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    /// One entry per node, or a single entry in global mode.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(series: &[f64], n: usize, rows: Range<usize>, mode: NormMode) -> Result<Self> {
        if rows.is_empty() || rows.end * n > series.len() {
            return Err(Error::Validation(format!(
                "cannot fit normaliser on rows {rows:?} of a {}-row series",
                series.len() / n.max(1)
            )));
        }
        let data = &series[rows.start * n..rows.end * n];
        let (mean, std) = match mode {
            NormMode::ZscoreGlobal => {
                let (m, s) = mean_std(data.iter().copied());
                (vec![m], vec![s])
            }
            NormMode::ZscorePerNode => (0..n)
                .map(|c| mean_std(data.iter().skip(c).step_by(n).copied()))
                .unzip(),
        };
        Ok(Normalizer { mode, mean, std })
    }

    fn stats(&self, node: usize) -> (f64, f64) {
        match self.mode {
            NormMode::ZscoreGlobal => (self.mean[0], self.std[0]),
            NormMode::ZscorePerNode => (self.mean[node], self.std[node]),
        }
    }

    /// Number of nodes this normaliser was fitted for (`None` in global mode).
    pub fn nodes(&self) -> Option<usize> {
        match self.mode {
            NormMode::ZscoreGlobal => None,
            NormMode::ZscorePerNode => Some(self.mean.len()),
        }
    }

    /// `(x − μ) / σ` over a row-major buffer with `n` columns.
    pub fn apply(&self, values: &mut [f64], n: usize) {
        for (i, v) in values.iter_mut().enumerate() {
            let (m, s) = self.stats(i % n);
            *v = (*v - m) / s;
        }
    }

    /// `x · σ + μ`.
    pub fn invert(&self, values: &mut [f64], n: usize) {
        for (i, v) in values.iter_mut().enumerate() {
            let (m, s) = self.stats(i % n);
            *v = *v * s + m;
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    (mean, var.sqrt().max(MIN_STD))
}

/// Windows a demand matrix, fits the normaliser on the training rows and
/// returns windows over the normalised series.
pub fn prepare_windows(
    demand: &DemandMatrix,
    input_steps: usize,
    horizon: usize,
    ratios: SplitRatios,
    mode: NormMode,
) -> Result<(WindowedDataset, Normalizer)> {
    let raw = make_windows(demand, input_steps, horizon, ratios)?;
    let norm = Normalizer::fit(raw.series(), raw.n(), raw.train_rows(), mode)?;
    let n = raw.n();
    let ds = raw.map_series(|s| norm.apply(s, n));
    Ok((ds, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(t: usize, m: usize, h: usize) -> Result<WindowedDataset> {
        WindowedDataset::new((0..t).map(|v| v as f64).collect(), t, 1, m, h, SplitRatios::default())
    }

    #[test]
    fn window_counts_and_minimum() {
        let d = ds(20, 12, 3).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d.indices(Split::Train), 0..3);
        assert_eq!(d.indices(Split::Val), 3..4);
        assert_eq!(d.indices(Split::Test), 4..6);

        let d = ds(15, 12, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.indices(Split::Train), 0..1);
        assert!(d.indices(Split::Val).is_empty() && d.indices(Split::Test).is_empty());

        match ds(14, 12, 3) {
            Err(Error::InsufficientData { required: 15, got: 14 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn windows_read_consecutive_rows() {
        let d = ds(20, 12, 3).unwrap();
        assert_eq!(d.input(2), &(2..14).map(|v| v as f64).collect::<Vec<_>>()[..]);
        assert_eq!(d.target(2), &[14.0, 15.0, 16.0]);
        let (x, y) = d.batch(&[0, 5]);
        assert_eq!(x.shape(), &[2, 12, 1]);
        assert_eq!(y.data(), &[12.0, 13.0, 14.0, 17.0, 18.0, 19.0]);
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios { train: 0.5, val: 0.5, test: 0.0 };
        assert!(WindowedDataset::new(vec![0.0; 20], 20, 1, 2, 1, r).is_err());
        let r = SplitRatios { train: 0.5, val: 0.3, test: 0.3 };
        assert!(WindowedDataset::new(vec![0.0; 20], 20, 1, 2, 1, r).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_samples(t in 2usize..400, m in 1usize..20, h in 1usize..6) {
            prop_assume!(t >= m + h);
            let d = ds(t, m, h).unwrap();
            prop_assert_eq!(d.len(), t - m - h + 1);
            let (a, b, c) = (d.indices(Split::Train), d.indices(Split::Val), d.indices(Split::Test));
            prop_assert_eq!(a.start, 0);
            prop_assert_eq!(a.end, b.start);
            prop_assert_eq!(b.end, c.start);
            prop_assert_eq!(c.end, d.len());
            prop_assert!(!a.is_empty());
            for s in 0..d.len() {
                prop_assert!(d.indices(d.split_of(s)).contains(&s));
            }
        }

        #[test]
        fn normaliser_roundtrip(values in proptest::collection::vec(-1e3f64..1e3, 12..60), global in any::<bool>()) {
            let n = 3;
            let rows = values.len() / n;
            let series = &values[..rows * n];
            let mode = if global { NormMode::ZscoreGlobal } else { NormMode::ZscorePerNode };
            let norm = Normalizer::fit(series, n, 0..rows, mode).unwrap();
            let mut v = series.to_vec();
            norm.apply(&mut v, n);
            norm.invert(&mut v, n);
            for (a, b) in v.iter().zip(series) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn constant_column_normalises_to_zero() {
        let series = vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0];
        let norm = Normalizer::fit(&series, 2, 0..3, NormMode::ZscorePerNode).unwrap();
        assert_eq!(norm.std[0], MIN_STD);
        let mut v = series.clone();
        norm.apply(&mut v, 2);
        assert_eq!([v[0], v[2], v[4]], [0.0; 3]);
    }

    #[test]
    fn fitted_stats_match_direct_computation() {
        let series: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64 * 0.7 - 3.0).collect();
        let n = 4;
        let norm = Normalizer::fit(&series, n, 2..8, NormMode::ZscorePerNode).unwrap();
        for c in 0..n {
            let col: Vec<f64> = (2..8).map(|r| series[r * n + c]).collect();
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!((norm.mean[c] - mean).abs() < 1e-12);
            assert!((norm.std[c] - var.sqrt()).abs() < 1e-12);
        }
        let g = Normalizer::fit(&series, n, 0..10, NormMode::ZscoreGlobal).unwrap();
        let mean = series.iter().sum::<f64>() / 40.0;
        assert!((g.mean[0] - mean).abs() < 1e-12);
    }
}
