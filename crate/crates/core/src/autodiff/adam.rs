use super::{AutodiffError, Scalar, Tensor};

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Param { name: name.into(), tensor: tensor.with_grad() }
    }
}

/// Adam with bias correction. Moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter and zeroes the gradients.
    ///
    /// Fails without touching anything when a parameter has no gradient.
    pub fn step<T: Scalar>(&mut self, params: &mut [Param<T>]) -> Result<(), AutodiffError> {
        if let Some(p) = params.iter().find(|p| p.tensor.grad().is_none()) {
            return Err(AutodiffError::MissingGrad(p.name.clone()));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(AutodiffError::StateMismatch(params.first().map(|p| p.name.clone()).unwrap_or_default()));
        }
        if let Some(p) = params.iter().zip(&self.first).find(|(p, m)| p.tensor.numel() != m.len()) {
            return Err(AutodiffError::StateMismatch(p.0.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad: Vec<f64> = p.tensor.grad().expect("checked above").iter().map(|g| g.widen()).collect();
            for (((w, g), m), v) in p.tensor.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                *w = T::lit(w.widen() - update);
            }
            p.tensor.zero_grad();
        }
        Ok(())
    }
}
