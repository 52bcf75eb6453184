use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, TRAIN_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Weight { fan_in: usize },
    Bias,
}

/// A contiguous slice of the flat parameter array owned by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
    pub kind: SegmentKind,
}

/// Flat parameter storage with a gradient array of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamStore {
    pub(crate) fn zeros(segments: Vec<Segment>) -> Self {
        let n = segments.last().map_or(0, |s| s.offset + s.len);
        Self {
            values: vec![0.0; n],
            grads: vec![0.0; n],
            segments,
        }
    }

    /// Weights uniform on `±1/sqrt(fan_in)`, biases zero.
    pub(crate) fn init(segments: Vec<Segment>, seed: u64) -> Self {
        let mut store = Self::zeros(segments);
        let mut rng = stream_rng(seed, TRAIN_INIT);
        for seg in &store.segments {
            if let SegmentKind::Weight { fan_in } = seg.kind {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in &mut store.values[seg.offset..seg.offset + seg.len] {
                    *v = bound * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
        store
    }

    /// Replaces the values (for checkpoints), keeping the layout.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "{} parameters for a layout of {}",
                values.len(),
                self.values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}
