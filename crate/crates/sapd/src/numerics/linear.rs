use super::{Param, Tensor};

/// y = W x + b with W of shape [out, in].
pub fn linear_forward(weight: &Tensor, bias: &Tensor, input: &[f32]) -> Vec<f32> {
    let (out_dim, in_dim) = (weight.shape()[0], weight.shape()[1]);
    assert_eq!(input.len(), in_dim, "linear input length mismatch");
    let w = weight.data();
    let mut out = bias.data().to_vec();
    for (o, out_v) in out.iter_mut().enumerate().take(out_dim) {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0f32;
        for (wv, xv) in row.iter().zip(input) {
            acc += wv * xv;
        }
        *out_v += acc;
    }
    out
}

/// Gradients of a linear layer: returns (grad_input, grad_weight, grad_bias).
pub fn linear_backward(
    weight: &Tensor,
    input: &[f32],
    grad_out: &[f32],
) -> (Vec<f32>, Tensor, Tensor) {
    let (out_dim, in_dim) = (weight.shape()[0], weight.shape()[1]);
    let w = weight.data();
    let mut grad_in = vec![0.0f32; in_dim];
    let mut grad_w = Tensor::zeros(weight.shape());
    let gw = grad_w.data_mut();
    for o in 0..out_dim {
        let g = grad_out[o];
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            grad_in[i] += g * row[i];
            grow[i] += g * input[i];
        }
    }
    let grad_b = Tensor::from_vec(&[out_dim], grad_out.to_vec());
    (grad_in, grad_w, grad_b)
}

/// Fully-connected layer owning its parameters.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Self {
        assert_eq!(weight.shape().len(), 2);
        assert_eq!(bias.numel(), weight.shape()[0]);
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        linear_forward(&self.weight.value, &self.bias.value, input)
    }

    pub fn backward(&mut self, input: &[f32], grad_out: &[f32]) -> Vec<f32> {
        let (gx, gw, gb) = linear_backward(&self.weight.value, input, grad_out);
        for (acc, v) in self.weight.grad.data_mut().iter_mut().zip(gw.data()) {
            *acc += v;
        }
        for (acc, v) in self.bias.grad.data_mut().iter_mut().zip(gb.data()) {
            *acc += v;
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_oracle, gradient_mismatch, SplitMix64};

    #[test]
    fn forward_matches_hand_computation() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let b = Tensor::from_vec(&[2], vec![0.1, -0.2]);
        let y = linear_forward(&w, &b, &[1.0, 1.0, 2.0]);
        assert!((y[0] - 9.1).abs() < 1e-6);
        assert!((y[1] + 0.7).abs() < 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(5);
        let mut w = Tensor::zeros(&[3, 4]);
        for v in w.data_mut() {
            *v = rng.range_f32(-1.0, 1.0);
        }
        let b = Tensor::from_vec(&[3], vec![0.3, -0.1, 0.7]);
        let x: Vec<f32> = (0..4).map(|_| rng.range_f32(-1.0, 1.0)).collect();
        let gout = [0.7f32, -1.3, 0.4];

        let loss = |w_d: &Tensor, b_d: &Tensor, x_d: &[f32]| -> f64 {
            linear_forward(w_d, b_d, x_d)
                .iter()
                .zip(gout.iter())
                .map(|(&y, &g)| y as f64 * g as f64)
                .sum()
        };

        let (gx, gw, gb) = linear_backward(&w, &x, &gout);
        let fd_x = finite_difference_oracle(|p| loss(&w, &b, p), &x, 1e-3);
        for (a, n) in gx.iter().zip(fd_x.iter()) {
            assert!(gradient_mismatch(*a as f64, *n, 1e-2) < 1e-3);
        }
        let fd_w = finite_difference_oracle(
            |p| loss(&Tensor::from_vec(w.shape(), p.to_vec()), &b, &x),
            w.data(),
            1e-3,
        );
        for (a, n) in gw.data().iter().zip(fd_w.iter()) {
            assert!(gradient_mismatch(*a as f64, *n, 1e-2) < 1e-3);
        }
        let fd_b = finite_difference_oracle(
            |p| loss(&w, &Tensor::from_vec(b.shape(), p.to_vec()), &x),
            b.data(),
            1e-3,
        );
        for (a, n) in gb.data().iter().zip(fd_b.iter()) {
            assert!(gradient_mismatch(*a as f64, *n, 1e-2) < 1e-3);
        }
    }
}
