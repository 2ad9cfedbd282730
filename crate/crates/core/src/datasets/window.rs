use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fixed-length multichannel segment, stored time-major
/// (`data[t * channels + c]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalWindow {
    pub data: Vec<f64>,
    pub len: usize,
    pub channels: usize,
    pub subject: u32,
    pub label: u32,
}

impl SignalWindow {
    pub fn new(data: Vec<f64>, len: usize, channels: usize, subject: u32, label: u32) -> Result<Self> {
        if len == 0 || channels == 0 {
            return Err(Error::Shape("window needs at least one step and one channel".into()));
        }
        if data.len() != len * channels {
            return Err(Error::Shape(format!(
                "window data has {} values, expected {len} x {channels}",
                data.len()
            )));
        }
        Ok(SignalWindow {
            data,
            len,
            channels,
            subject,
            label,
        })
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.channels).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
