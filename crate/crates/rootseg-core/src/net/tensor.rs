//! Minimal dense tensor used by the network.

use num_traits::Float;

/// Scalar type for network math; f32 for training, f64 for gradient checks.
pub trait Scalar: Float + num_traits::FromPrimitive + std::fmt::Debug + Default + 'static {
    fn from_f32_exact(v: f32) -> Self;
    fn to_f32_lossy(self) -> f32;
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn from_f32_exact(v: f32) -> Self {
        v
    }
    fn to_f32_lossy(self) -> f32 {
        self
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f32_exact(v: f32) -> Self {
        v as f64
    }
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match dims {dims:?}"
        );
        Tensor {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// (channels, height, width) view of a rank-3 tensor.
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.dims.len(), 3, "expected rank-3 tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1], self.dims[2])
    }

    /// Contiguous (height * width) slice of one channel of a rank-3 tensor.
    pub fn channel(&self, c: usize) -> &[T] {
        let (_, h, w) = self.chw();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let (_, h, w) = self.chw();
        &mut self.data[c * h * w..(c + 1) * h * w]
    }

    /// Precision cast.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64_lossy()).unwrap())
                .collect(),
        }
    }

    pub fn iter_mut_with(&mut self, other: &Tensor<T>, mut f: impl FnMut(&mut T, T)) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            f(a, b);
        }
    }
}

/// Center crop of a rank-3 tensor to a smaller spatial size.
pub fn center_crop<T: Scalar>(t: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let (c, h, w) = t.chw();
    assert!(out_h <= h && out_w <= w, "crop {out_h}x{out_w} larger than {h}x{w}");
    let oy = (h - out_h) / 2;
    let ox = (w - out_w) / 2;
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    for ch in 0..c {
        let src = t.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..out_h {
            let s = (y + oy) * w + ox;
            dst[y * out_w..(y + 1) * out_w].copy_from_slice(&src[s..s + out_w]);
        }
    }
    out
}

/// Adjoint of [`center_crop`]: embeds a gradient back into the larger shape.
pub fn center_pad<T: Scalar>(t: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let (c, h, w) = t.chw();
    assert!(h <= out_h && w <= out_w);
    let oy = (out_h - h) / 2;
    let ox = (out_w - w) / 2;
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    for ch in 0..c {
        let src = t.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..h {
            let d = (y + oy) * out_w + ox;
            dst[d..d + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    out
}

/// Concatenates two rank-3 tensors along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (ca, ha, wa) = a.chw();
    let (cb, hb, wb) = b.chw();
    assert_eq!((ha, wa), (hb, wb), "concat spatial mismatch");
    let mut data = Vec::with_capacity((ca + cb) * ha * wa);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, ha, wa], data)
}

/// Splits a gradient along the channel axis, undoing [`concat_channels`].
pub fn split_channels<T: Scalar>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let (c, h, w) = t.chw();
    assert!(first <= c);
    let a = Tensor::from_vec(&[first, h, w], t.data()[..first * h * w].to_vec());
    let b = Tensor::from_vec(&[c - first, h, w], t.data()[first * h * w..].to_vec());
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_pad_are_adjoint_shapes() {
        let mut t = Tensor::<f32>::zeros(&[2, 6, 8]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        let cropped = center_crop(&t, 4, 4);
        assert_eq!(cropped.dims(), &[2, 4, 4]);
        assert_eq!(cropped.data()[0], t.channel(0)[6 * 1 + 2 + 8 - 8]); // (1,2) offset
        let padded = center_pad(&cropped, 6, 8);
        assert_eq!(padded.dims(), &[2, 6, 8]);
        // pad(crop(x)) preserves the cropped window exactly
        let again = center_crop(&padded, 4, 4);
        assert_eq!(again, cropped);
    }

    #[test]
    fn concat_then_split_roundtrips() {
        let a = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f32>::from_vec(&[2, 2, 2], (0..8).map(|v| v as f32).collect());
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.dims(), &[3, 2, 2]);
        let (a2, b2) = split_channels(&cat, 1);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }
}
