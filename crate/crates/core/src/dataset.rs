//! In-memory labelled image sets.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{Model, NUM_CLASSES};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Domain(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::Domain(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Vec<&Tensor>, Vec<usize>) {
        indices
            .iter()
            .map(|&i| (&self.images[i], self.labels[i]))
            .unzip()
    }

    /// Fraction of samples `model` misclassifies.
    pub fn error_rate(&self, model: &Model) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
        }
        let wrong: usize = self
            .images
            .par_iter()
            .zip(self.labels.par_iter())
            .map(|(img, &label)| model.predict(img).map(|p| usize::from(p != label)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(wrong as f64 / self.len() as f64)
    }
}
