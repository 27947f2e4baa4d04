use super::{Param, Tensor};
use crate::{Error, Result};

/// Output spatial size of a convolution along one axis.
pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

fn check_shapes(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<()> {
    if input.shape().len() != 3 || kernel.shape().len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects CHW input and OIHW kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    if input.shape()[0] != kernel.shape()[1] {
        return Err(Error::Shape(format!(
            "conv2d input channels {} do not match kernel input channels {}",
            input.shape()[0],
            kernel.shape()[1]
        )));
    }
    if bias.numel() != kernel.shape()[0] {
        return Err(Error::Shape(format!(
            "conv2d bias length {} does not match kernel output channels {}",
            bias.numel(),
            kernel.shape()[0]
        )));
    }
    Ok(())
}

/// Cross-correlation of a CHW input with an OIHW kernel.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    check_shapes(input, kernel, bias)?;
    let (in_c, in_h, in_w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (out_c, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let out_h = conv2d_output_size(in_h, kh, stride, padding);
    let out_w = conv2d_output_size(in_w, kw, stride, padding);

    let mut out = Tensor::zeros(&[out_c, out_h, out_w]);
    let x = input.data();
    let w = kernel.data();
    let b = bias.data();
    let y = out.data_mut();

    for oc in 0..out_c {
        let plane = &mut y[oc * out_h * out_w..(oc + 1) * out_h * out_w];
        plane.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..in_c {
            let x_plane = &x[ic * in_h * in_w..(ic + 1) * in_h * in_w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[((oc * in_c + ic) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..out_h {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        let row = &x_plane[iy as usize * in_w..(iy as usize + 1) * in_w];
                        let out_row = &mut plane[oy * out_w..(oy + 1) * out_w];
                        for ox in 0..out_w {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            out_row[ox] += wv * row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a conv2d with respect to input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (in_c, in_h, in_w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (out_c, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let (g_c, out_h, out_w) = (grad_out.shape()[0], grad_out.shape()[1], grad_out.shape()[2]);
    if g_c != out_c {
        return Err(Error::Shape(format!(
            "grad_out channels {g_c} do not match kernel output channels {out_c}"
        )));
    }

    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(kernel.shape());
    let mut grad_b = Tensor::zeros(&[out_c]);

    let x = input.data();
    let w = kernel.data();
    let g = grad_out.data();
    let gx = grad_in.data_mut();
    let gw = grad_w.data_mut();
    let gb = grad_b.data_mut();

    for oc in 0..out_c {
        let g_plane = &g[oc * out_h * out_w..(oc + 1) * out_h * out_w];
        gb[oc] += g_plane.iter().sum::<f32>();
        for ic in 0..in_c {
            let x_base = ic * in_h * in_w;
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((oc * in_c + ic) * kh + ky) * kw + kx;
                    let wv = w[widx];
                    let mut wacc = 0.0f32;
                    for oy in 0..out_h {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        let row_base = x_base + iy as usize * in_w;
                        let g_row = &g_plane[oy * out_w..(oy + 1) * out_w];
                        for ox in 0..out_w {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            let gv = g_row[ox];
                            wacc += gv * x[row_base + ix as usize];
                            gx[row_base + ix as usize] += gv * wv;
                        }
                    }
                    gw[widx] += wacc;
                }
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Convolution layer owning its kernel and bias parameters.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Self {
        assert_eq!(weight.shape().len(), 4, "conv kernel must be OIHW");
        assert_eq!(bias.numel(), weight.shape()[0]);
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride,
            padding,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d_forward(
            input,
            &self.weight.value,
            &self.bias.value,
            self.stride,
            self.padding,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (gx, gw, gb) =
            conv2d_backward(input, &self.weight.value, grad_out, self.stride, self.padding)?;
        for (acc, v) in self.weight.grad.data_mut().iter_mut().zip(gw.data()) {
            *acc += v;
        }
        for (acc, v) in self.bias.grad.data_mut().iter_mut().zip(gb.data()) {
            *acc += v;
        }
        Ok(gx)
    }
}
