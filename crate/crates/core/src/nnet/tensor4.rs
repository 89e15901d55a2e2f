//! Dense rank-4 batch buffer in NCHW order.

use super::real::Real;

/// Batch of feature maps: `n` samples, `c` channels, `h` by `w` pixels.
/// Data is row-major with w fastest, so one sample (and one channel plane
/// within it) is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Real> Tensor4<F> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 { n, c, h, w, data: vec![F::zero(); n * c * h * w] }
    }

    pub fn from_data(n: usize, c: usize, h: usize, w: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "payload does not match dims");
        Tensor4 { n, c, h, w, data }
    }

    #[inline(always)]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline(always)]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline(always)]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> F {
        self.data[self.idx(n, c, y, x)]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut F {
        let i = self.idx(n, c, y, x);
        &mut self.data[i]
    }

    pub fn sample(&self, n: usize) -> &[F] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [F] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data viewed as (n, c*h*w, 1, 1). Used at the flatten boundary;
    /// NCHW layout makes the per-sample flatten a pure relabeling.
    pub fn reshape(self, c: usize, h: usize, w: usize) -> Self {
        assert_eq!(self.sample_len(), c * h * w, "reshape changes sample size");
        Tensor4 { n: self.n, c, h, w, data: self.data }
    }
}
