use std::io::{Read, Write};

use crate::{Error, Result};

/// Magic prefix of the flat tensor serialization format.
pub const TENSOR_MAGIC: &[u8; 8] = b"SAPDTNSR";
const TENSOR_VERSION: u8 = 1;

/// Dense row-major f32 tensor.
///
/// Shapes are plain dimension lists; the element count always equals the
/// product of the dimensions. Feature maps use CHW layout, convolution
/// kernels use OIHW.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "element count {} does not match shape {:?}",
            data.len(),
            shape
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f32) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Linear offset of element `(c, y, x)` in a CHW tensor.
    #[inline]
    pub fn off3(&self, c: usize, y: usize, x: usize) -> usize {
        let (h, w) = (self.shape[1], self.shape[2]);
        (c * h + y) * w + x
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.off3(c, y, x)]
    }

    /// Channel `c` of a CHW tensor as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn scale(&mut self, factor: f32) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Writes the tensor in the flat binary format: magic, version byte,
    /// rank byte, little-endian u64 dims, raw little-endian f32 data.
    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<()> {
        writer.write_all(TENSOR_MAGIC)?;
        writer.write_all(&[TENSOR_VERSION])?;
        writer.write_all(&[self.shape.len() as u8])?;
        for &dim in &self.shape {
            writer.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one tensor record written by [`Tensor::write_to`].
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Data(format!(
                "bad tensor magic {:?}, expected {:?}",
                magic, TENSOR_MAGIC
            )));
        }
        let mut header = [0u8; 2];
        reader.read_exact(&mut header)?;
        if header[0] != TENSOR_VERSION {
            return Err(Error::Data(format!(
                "unsupported tensor format version {}",
                header[0]
            )));
        }
        let rank = header[1] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut dim_buf = [0u8; 8];
        for _ in 0..rank {
            reader.read_exact(&mut dim_buf)?;
            shape.push(u64::from_le_bytes(dim_buf) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0.0f32; n];
        let mut val_buf = [0u8; 4];
        for v in data.iter_mut() {
            reader.read_exact(&mut val_buf)?;
            *v = f32::from_le_bytes(val_buf);
        }
        Ok(Self { shape, data })
    }
}
