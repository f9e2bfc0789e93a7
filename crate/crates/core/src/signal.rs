//! Multi-channel signals sampled on the elements of a geometric modality.

use crate::error::{Error, Result};

/// An `N x P` array of reals stored row-major: one row per element, one
/// column per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    rows: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(rows: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::value("a signal needs at least one channel"));
        }
        if values.len() != rows * channels {
            return Err(Error::Shape {
                expected: rows * channels,
                actual: values.len(),
            });
        }
        Ok(Signal {
            rows,
            channels,
            values,
        })
    }

    pub fn zeros(rows: usize, channels: usize) -> Self {
        Signal {
            rows,
            channels: channels.max(1),
            values: vec![0.0; rows * channels.max(1)],
        }
    }

    pub fn constant(rows: usize, value: f64) -> Self {
        Signal {
            rows,
            channels: 1,
            values: vec![value; rows],
        }
    }

    /// Single-channel signal from a column of values.
    pub fn from_column(values: Vec<f64>) -> Self {
        Signal {
            rows: values.len(),
            channels: 1,
            values,
        }
    }

    /// Indicator of element `index` (value 1 there, 0 elsewhere).
    pub fn dirac(rows: usize, index: usize) -> Result<Self> {
        if index >= rows {
            return Err(Error::value(format!(
                "dirac index {index} out of range for {rows} elements"
            )));
        }
        let mut s = Signal::zeros(rows, 1);
        s.values[index] = 1.0;
        Ok(s)
    }

    /// Builds a signal from a list of columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let channels = columns.len();
        if channels == 0 {
            return Err(Error::value("a signal needs at least one channel"));
        }
        let rows = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::Shape {
                expected: rows,
                actual: bad.len(),
            });
        }
        let mut values = Vec::with_capacity(rows * channels);
        for i in 0..rows {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Ok(Signal {
            rows,
            channels,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, channel: usize) -> f64 {
        self.values[row * self.channels + channel]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.channels..(row + 1) * self.channels]
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Multiplies every row `i` by `weights[i]`.
    pub fn scale_rows(&mut self, weights: &[f64]) {
        debug_assert_eq!(weights.len(), self.rows);
        for (row, w) in self.values.chunks_mut(self.channels).zip(weights) {
            row.iter_mut().for_each(|v| *v *= w);
        }
    }

    /// Mass `<1, f>_M = sum_i m_i f_i` of each channel.
    pub fn mass(&self, masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        for (row, m) in self.values.chunks(self.channels).zip(masses) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += m * v;
            }
        }
        out
    }

    /// Smallest entry over all channels.
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn expect_rows(&self, rows: usize) -> Result<()> {
        if self.rows != rows {
            return Err(Error::Shape {
                expected: rows,
                actual: self.rows,
            });
        }
        Ok(())
    }
}
