use super::Tensor;

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            velocity,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// SGD with momentum and weight decay.
///
/// Update rule: `v <- mu*v - lr*(g + wd*theta); theta <- theta + v`.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl Default for Sgd {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

impl Sgd {
    pub fn step(&self, param: &mut Param) {
        let theta = param.value.data_mut();
        let grad = param.grad.data();
        let vel = param.velocity.data_mut();
        for i in 0..theta.len() {
            vel[i] = self.momentum * vel[i] - self.lr * (grad[i] + self.weight_decay * theta[i]);
            theta[i] += vel[i];
        }
    }
}
