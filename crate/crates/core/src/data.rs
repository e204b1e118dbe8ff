use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::one_hot;
use crate::numerics::Tensor;

/// Inputs (`n × width`) with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rank() != 2 || x.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("inputs {:?} for {} labels", x.shape(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self { x, labels, classes })
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let classes = self.classes.max(other.classes);
        let x = Tensor::concat_rows(&[&self.x, &other.x])?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(x, labels, classes)
    }

    pub fn one_hot(&self) -> Result<Tensor> {
        one_hot(&self.labels, self.classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_and_split_keep_pairs_together() {
        let x = Tensor::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let d = Dataset::new(x, vec![0, 1, 1, 0], 2).unwrap();
        let s = d.subset(&[3, 1]);
        assert_eq!(s.x().data(), &[3.0, 1.0]);
        assert_eq!(s.labels(), &[0, 1]);
        let (a, b) = d.split_at(1);
        assert_eq!((a.len(), b.len()), (1, 3));
        assert_eq!(a.concat(&b).unwrap(), d);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x, vec![0], 2).is_err());
    }
}
