use super::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Backward of ReLU given the layer input and upstream gradient.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    assert_eq!(input.shape(), grad_out.shape());
    let mut gx = grad_out.clone();
    for (g, &x) in gx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn sigmoid_f64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax over a flat slice.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Backward of softmax: given probabilities `p` and upstream gradient `g`,
/// returns `p .* (g - <g, p>)`.
pub fn softmax_backward(probs: &[f32], grad_out: &[f32]) -> Vec<f32> {
    let dot: f32 = probs.iter().zip(grad_out).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(grad_out)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}
