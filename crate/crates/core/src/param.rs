//! Flat model-parameter vectors and their segment layout.
//!
//! Every client model, cluster centroid and client representation in this
//! crate is a [`ParamVector`]: a flat `Vec<f64>` plus a [`Layout`] that maps
//! contiguous segments onto the model's tensors (per-layer weights and
//! biases). Keeping everything flat makes aggregation, distance computation
//! and serialization uniform across model kinds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named contiguous segment of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub len: usize,
}

/// Maps segments to model tensors. Equality of layouts is the compatibility
/// check used by all vector ops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    pub fn new(segments: Vec<(&str, usize)>) -> Self {
        Layout {
            segments: segments
                .into_iter()
                .map(|(name, len)| Segment {
                    name: name.to_string(),
                    len,
                })
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Byte range of a named segment within the flat vector.
    pub fn range_of(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for seg in &self.segments {
            if seg.name == name {
                return Some(start..start + seg.len);
            }
            start += seg.len;
        }
        None
    }
}

/// Flat real-valued parameter vector with a layout descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::shape(format!(
                "param vector has {} values but layout expects {}",
                values.len(),
                layout.total_len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        let n = layout.total_len();
        ParamVector {
            values: vec![0.0; n],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.range_of(name).map(|r| &self.values[r])
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape("param vectors have different layouts"));
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance_sq(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        Ok(self.distance_sq(other)?.sqrt())
    }
}

/// Which segments of the full parameter vector form the client
/// representation used for clustering. `Full` is the default; `Segments`
/// restricts the representation to named layers (e.g. the output head).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepMask {
    Full,
    Segments(Vec<String>),
}

impl RepMask {
    /// Extract the masked representation. `Full` borrows nothing new and
    /// clones the whole vector; a segment mask concatenates the named
    /// segments in mask order.
    pub fn extract(&self, params: &ParamVector) -> Result<ParamVector> {
        match self {
            RepMask::Full => Ok(params.clone()),
            RepMask::Segments(names) => {
                let mut values = Vec::new();
                let mut segs = Vec::new();
                for name in names {
                    let slice = params.segment(name).ok_or_else(|| {
                        Error::shape(format!("layout has no segment named {name:?}"))
                    })?;
                    values.extend_from_slice(slice);
                    segs.push((name.as_str(), slice.len()));
                }
                ParamVector::new(values, Layout::new(segs))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout2() -> Layout {
        Layout::new(vec![("w", 4), ("b", 2)])
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(ParamVector::new(vec![0.0; 5], layout2()).is_err());
    }

    #[test]
    fn norm_and_distance() {
        let a = ParamVector::new(vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0], layout2()).unwrap();
        let b = ParamVector::zeros(layout2());
        assert_eq!(a.l2_norm(), 5.0);
        assert_eq!(a.distance_sq(&b).unwrap(), 25.0);
        assert_eq!(a.distance(&b).unwrap(), 5.0);
    }

    #[test]
    fn add_scaled_requires_same_layout() {
        let mut a = ParamVector::zeros(layout2());
        let b = ParamVector::zeros(Layout::new(vec![("w", 6)]));
        assert!(a.add_scaled(&b, 1.0).is_err());
    }

    #[test]
    fn segment_mask_extracts_named_layers() {
        let v = ParamVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], layout2()).unwrap();
        let head = RepMask::Segments(vec!["b".into()]).extract(&v).unwrap();
        assert_eq!(head.values(), &[5.0, 6.0]);
        let full = RepMask::Full.extract(&v).unwrap();
        assert_eq!(full, v);
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let v = ParamVector::zeros(layout2());
        assert!(RepMask::Segments(vec!["nope".into()]).extract(&v).is_err());
    }
}
