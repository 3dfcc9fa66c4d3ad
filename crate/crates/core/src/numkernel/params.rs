use crate::error::{Error, Result};

/// A named, shaped block of trainable values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamArray {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        ParamArray { name: name.into(), shape, values: vec![0.0; len] }
    }

    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{name}: shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(ParamArray { name, shape, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows of a 2-D array (or the length of a vector).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }
}

/// Ordered collection of uniquely named arrays. Gradients and optimizer
/// moments use the same type so they line up with parameters by position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub arrays: Vec<ParamArray>,
}

impl ParamSet {
    pub fn new(arrays: Vec<ParamArray>) -> Result<Self> {
        for (i, a) in arrays.iter().enumerate() {
            if arrays[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidArgument(format!("duplicate array name {}", a.name)));
            }
        }
        Ok(ParamSet { arrays })
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            arrays: self.arrays.iter().map(|a| ParamArray::zeros(a.name.clone(), a.shape.clone())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.arrays.iter_mut().find(|a| a.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.arrays.iter().map(ParamArray::len).sum()
    }

    pub fn fill(&mut self, v: f64) {
        for a in &mut self.arrays {
            a.values.iter_mut().for_each(|x| *x = v);
        }
    }

    /// Names of arrays whose name or shape differ from `other`, position by position.
    pub fn layout_mismatches(&self, other: &ParamSet) -> Vec<String> {
        let mut bad = Vec::new();
        let n = self.arrays.len().max(other.arrays.len());
        for i in 0..n {
            match (self.arrays.get(i), other.arrays.get(i)) {
                (Some(a), Some(b)) if a.name == b.name && a.shape == b.shape => {}
                (Some(a), Some(b)) => bad.push(format!(
                    "{} {:?} vs {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )),
                (Some(a), None) => bad.push(format!("{} (missing)", a.name)),
                (None, Some(b)) => bad.push(format!("{} (unexpected)", b.name)),
                (None, None) => unreachable!(),
            }
        }
        bad
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.arrays {
            a.values.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.arrays
            .iter()
            .flat_map(|a| a.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales in place so the global L2 norm is at most `max_norm`; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}
