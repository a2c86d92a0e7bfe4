use crate::error::{Error, Result};

/// A vector of primal values with one tangent per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    pub primal: Vec<f64>,
    pub tangent: Vec<f64>,
}

impl DualVector {
    pub fn new(primal: Vec<f64>, tangent: Vec<f64>) -> Result<Self> {
        if primal.len() != tangent.len() {
            return Err(Error::invalid(format!(
                "tangent length {} differs from primal length {}",
                tangent.len(),
                primal.len()
            )));
        }
        Ok(Self { primal, tangent })
    }

    /// Primal `x` with zero tangent.
    pub fn constant(primal: Vec<f64>) -> Self {
        let tangent = vec![0.0; primal.len()];
        Self { primal, tangent }
    }

    pub fn len(&self) -> usize {
        self.primal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primal.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_mismatch_rejected() {
        assert!(DualVector::new(vec![1.0], vec![]).is_err());
        assert_eq!(DualVector::constant(vec![1.0, 2.0]).tangent, vec![0.0, 0.0]);
    }
}
