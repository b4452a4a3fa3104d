use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Labelled feature matrix: row `i` of `features` has class `labels[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} feature rows but {} labels", features.rows(), labels.len()),
            ));
        }
        if classes == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one class".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self { features, labels, classes })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
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

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows whose label is in `keep`, in original order. Labels are not remapped.
    pub fn filter_classes(&self, keep: &[usize]) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&self.labels[i])).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// `(features, labels)` for the given rows.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_and_filtering() {
        let x = Matrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        assert!(Dataset::new(x.clone(), vec![0, 1, 2], 3).is_err());
        assert!(Dataset::new(x.clone(), vec![0, 1, 2, 3], 3).is_err());
        let d = Dataset::new(x, vec![0, 1, 2, 1], 3).unwrap();
        let odd = d.filter_classes(&[1]);
        assert_eq!(odd.labels(), &[1, 1]);
        assert_eq!(odd.features().row(1), &[6.0, 7.0]);
        assert_eq!(odd.classes(), 3);
    }
}
