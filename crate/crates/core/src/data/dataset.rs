use crate::error::{Error, Result};
use crate::nn::TensorBuffer;

/// Images scaled to `[0, 1]` in `(N, H, W, C)` layout with one class label
/// per image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub id: String,
    pub images: TensorBuffer,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        id: String,
        images: TensorBuffer,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if images.shape().len() != 4 || images.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "dataset images vs labels".into(),
                expected: vec![labels.len(), 0, 0, 0],
                found: images.shape().to_vec(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidLabel { label, class_count });
        }
        Ok(Self {
            id,
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(height, width, channels)`.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn label(&self, record: usize) -> Result<usize> {
        self.labels
            .get(record)
            .copied()
            .ok_or(Error::RecordOutOfRange {
                record,
                len: self.len(),
            })
    }

    /// Copies the listed records into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(TensorBuffer, Vec<usize>)> {
        let (h, w, c) = self.image_shape();
        let row = h * w * c;
        let mut values = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            labels.push(self.label(i)?);
            values.extend_from_slice(self.images.row(i));
        }
        if indices.is_empty() {
            return Err(Error::InvalidConfig("cannot gather an empty batch".into()));
        }
        Ok((TensorBuffer::new(vec![indices.len(), h, w, c], values)?, labels))
    }
}
