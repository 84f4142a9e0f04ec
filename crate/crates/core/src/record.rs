use crate::error::{ensure_positive, Error, Result};

/// Synchronised top/bottom magnetometer time series (tesla).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoChannelRecord {
    pub sample_rate_hz: f64,
    pub top_t: Vec<f64>,
    pub bottom_t: Vec<f64>,
}

impl TwoChannelRecord {
    pub fn new(sample_rate_hz: f64, top_t: Vec<f64>, bottom_t: Vec<f64>) -> Result<Self> {
        ensure_positive("sample_rate_hz", sample_rate_hz)?;
        if top_t.len() != bottom_t.len() {
            return Err(Error::Shape(format!(
                "top has {} samples, bottom has {}",
                top_t.len(),
                bottom_t.len()
            )));
        }
        if top_t.is_empty() {
            return Err(Error::InsufficientData("record is empty".into()));
        }
        if top_t.iter().chain(&bottom_t).any(|v| !v.is_finite()) {
            return Err(Error::data("record contains non-finite samples"));
        }
        Ok(Self {
            sample_rate_hz,
            top_t,
            bottom_t,
        })
    }

    pub fn len(&self) -> usize {
        self.top_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.top_t.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn time_s(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate_hz
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            sample_rate_hz: self.sample_rate_hz,
            top_t: self.top_t.iter().map(|v| v * a).collect(),
            bottom_t: self.bottom_t.iter().map(|v| v * a).collect(),
        }
    }
}
