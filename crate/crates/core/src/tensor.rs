use std::fmt;

/// Row-major tensor over any scalar type.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S> Tensor<S> {
    /// Panics if the shape and payload length disagree or a dimension is zero.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        Self::try_new(shape, data).expect("tensor shape matches payload")
    }

    pub fn try_new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, String> {
        if shape.iter().any(|&d| d == 0) {
            return Err(format!("shape {shape:?} has an empty dimension"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(format!("shape {shape:?} needs {n} elements, got {}", data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same payload under a new shape with the same element count.
    pub fn reshaped(self, shape: Vec<usize>) -> Result<Self, String> {
        Self::try_new(shape, self.data)
    }

    pub fn map<T>(&self, f: impl FnMut(&S) -> T) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(f).collect() }
    }
}

impl<S: fmt::Debug> fmt::Display for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax_by<S>(xs: &[S], mut cmp: impl FnMut(&S, &S) -> std::cmp::Ordering) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in xs.iter().enumerate() {
        match best {
            Some(b) if cmp(x, &xs[b]) != std::cmp::Ordering::Greater => {}
            _ => best = Some(i),
        }
    }
    best
}

/// [`argmax_by`] over binary64 values.
pub fn argmax_f64(xs: &[f64]) -> Option<usize> {
    argmax_by(xs, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Less))
}
