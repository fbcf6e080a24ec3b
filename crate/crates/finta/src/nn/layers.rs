//! Building blocks of the autoencoder: 1D convolutions, fully connected
//! layers, nearest-neighbor upsampling and ReLU.
//!
//! Batches are folded into matrix columns. An activation matrix has one row
//! per channel and `batch * len` columns, with column `b * len + p` holding
//! position `p` of sample `b`. Convolutions are computed as one GEMM over
//! an im2col patch matrix whose row `c * kernel + j` carries kernel tap `j`
//! of input channel `c`.

use rayon::prelude::*;

use super::linalg::{gemm, Mat, Scalar};

/// 1D convolution with symmetric zero padding of `kernel / 2` on each side.
/// Stride 1 preserves the signal length, stride 2 halves it.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<F> {
    pub weight: Mat<F>,
    pub bias: Vec<F>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl<F: Scalar> Conv1d<F> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            weight: Mat::zeros(out_channels, in_channels * kernel),
            bias: vec![F::ZERO; out_channels],
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn output_len(&self, len_in: usize) -> usize {
        let pad = self.kernel / 2;
        (len_in + 2 * pad - self.kernel) / self.stride + 1
    }

    /// Expand `x` into the patch matrix consumed by the weight GEMM.
    pub fn im2col(&self, x: &Mat<F>, batch: usize, len_in: usize, cols: &mut Mat<F>) {
        let len_out = self.output_len(len_in);
        let pad = (self.kernel / 2) as isize;
        let k = self.kernel;
        let stride = self.stride;
        cols.reset(self.in_channels * k, batch * len_out);
        let width = cols.cols;
        cols.data
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(row, dst)| {
                let c = row / k;
                let j = (row % k) as isize;
                for b in 0..batch {
                    let src_base = c * (batch * len_in) + b * len_in;
                    let dst_base = b * len_out;
                    for p in 0..len_out {
                        let q = (p * stride) as isize + j - pad;
                        if q >= 0 && (q as usize) < len_in {
                            dst[dst_base + p] = x.data[src_base + q as usize];
                        }
                    }
                }
            });
    }

    /// `y = weight * cols`, bias added per output channel.
    pub fn forward(&self, cols: &Mat<F>, y: &mut Mat<F>) {
        y.reset(self.out_channels, cols.cols);
        gemm(y, F::ZERO, F::ONE, &self.weight, false, cols, false);
        let bias = &self.bias;
        y.data
            .par_chunks_mut(cols.cols)
            .enumerate()
            .for_each(|(o, row)| {
                let b = bias[o];
                for v in row.iter_mut() {
                    *v += b;
                }
            });
    }

    /// Weight/bias gradients plus, when requested, the patch-space input
    /// gradient (to be scattered back with [`Conv1d::col2im`]).
    pub fn backward(
        &self,
        dy: &Mat<F>,
        cols: &Mat<F>,
        dw: &mut Mat<F>,
        db: &mut [F],
        dcols: Option<&mut Mat<F>>,
    ) {
        gemm(dw, F::ZERO, F::ONE, dy, false, cols, true);
        db.par_iter_mut().enumerate().for_each(|(o, out)| {
            let mut acc = F::ZERO;
            for &v in dy.row(o) {
                acc += v;
            }
            *out = acc;
        });
        if let Some(dcols) = dcols {
            dcols.reset(self.in_channels * self.kernel, dy.cols);
            gemm(dcols, F::ZERO, F::ONE, &self.weight, true, dy, false);
        }
    }

    /// Scatter-add a patch-space gradient back onto the input layout.
    pub fn col2im(&self, dcols: &Mat<F>, batch: usize, len_in: usize, dx: &mut Mat<F>) {
        let len_out = self.output_len(len_in);
        let pad = (self.kernel / 2) as isize;
        let k = self.kernel;
        let stride = self.stride;
        dx.reset(self.in_channels, batch * len_in);
        let width = dx.cols;
        dx.data
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(c, dst)| {
                for j in 0..k {
                    let src_row = dcols.row(c * k + j);
                    for b in 0..batch {
                        let dst_base = b * len_in;
                        let src_base = b * len_out;
                        for p in 0..len_out {
                            let q = (p * stride) as isize + j as isize - pad;
                            if q >= 0 && (q as usize) < len_in {
                                dst[dst_base + q as usize] += src_row[src_base + p];
                            }
                        }
                    }
                }
            });
    }
}

/// Fully connected layer over column-per-sample matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Fc<F> {
    pub weight: Mat<F>,
    pub bias: Vec<F>,
    pub in_features: usize,
    pub out_features: usize,
}

impl<F: Scalar> Fc<F> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: Mat::zeros(out_features, in_features),
            bias: vec![F::ZERO; out_features],
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, x: &Mat<F>, y: &mut Mat<F>) {
        y.reset(self.out_features, x.cols);
        gemm(y, F::ZERO, F::ONE, &self.weight, false, x, false);
        let bias = &self.bias;
        y.data.par_chunks_mut(x.cols).enumerate().for_each(|(o, row)| {
            let b = bias[o];
            for v in row.iter_mut() {
                *v += b;
            }
        });
    }

    pub fn backward(
        &self,
        dy: &Mat<F>,
        x: &Mat<F>,
        dw: &mut Mat<F>,
        db: &mut [F],
        dx: Option<&mut Mat<F>>,
    ) {
        gemm(dw, F::ZERO, F::ONE, dy, false, x, true);
        db.par_iter_mut().enumerate().for_each(|(o, out)| {
            let mut acc = F::ZERO;
            for &v in dy.row(o) {
                acc += v;
            }
            *out = acc;
        });
        if let Some(dx) = dx {
            dx.reset(self.in_features, dy.cols);
            gemm(dx, F::ZERO, F::ONE, &self.weight, true, dy, false);
        }
    }
}

pub fn relu_inplace<F: Scalar>(y: &mut Mat<F>) {
    y.data.par_chunks_mut(4096).for_each(|chunk| {
        for v in chunk.iter_mut() {
            if *v < F::ZERO {
                *v = F::ZERO;
            }
        }
    });
}

/// Zero the gradient wherever the forward activation was clamped.
pub fn relu_backward<F: Scalar>(dy: &mut Mat<F>, y: &Mat<F>) {
    debug_assert_eq!(dy.data.len(), y.data.len());
    dy.data
        .par_chunks_mut(4096)
        .zip(y.data.par_chunks(4096))
        .for_each(|(dchunk, ychunk)| {
            for (d, &v) in dchunk.iter_mut().zip(ychunk) {
                if v <= F::ZERO {
                    *d = F::ZERO;
                }
            }
        });
}

/// Nearest-neighbor upsampling by a factor of two.
pub fn upsample2_forward<F: Scalar>(x: &Mat<F>, batch: usize, len_in: usize, y: &mut Mat<F>) {
    y.reset(x.rows, batch * len_in * 2);
    let width_in = x.cols;
    let width_out = y.cols;
    y.data
        .par_chunks_mut(width_out)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = &x.data[c * width_in..(c + 1) * width_in];
            for b in 0..batch {
                for p in 0..len_in {
                    let v = src[b * len_in + p];
                    dst[b * len_in * 2 + 2 * p] = v;
                    dst[b * len_in * 2 + 2 * p + 1] = v;
                }
            }
        });
}

pub fn upsample2_backward<F: Scalar>(dy: &Mat<F>, batch: usize, len_in: usize, dx: &mut Mat<F>) {
    dx.reset(dy.rows, batch * len_in);
    let width_in = dx.cols;
    let width_out = dy.cols;
    dx.data
        .par_chunks_mut(width_in)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = &dy.data[c * width_out..(c + 1) * width_out];
            for b in 0..batch {
                for p in 0..len_in {
                    dst[b * len_in + p] =
                        src[b * len_in * 2 + 2 * p] + src[b * len_in * 2 + 2 * p + 1];
                }
            }
        });
}

/// Re-pack a channel-major activation into one flattened column per sample
/// (the layout consumed by the fully connected bottleneck).
pub fn conv_to_fc<F: Scalar>(x: &Mat<F>, batch: usize, len: usize, out: &mut Mat<F>) {
    let channels = x.rows;
    out.reset(channels * len, batch);
    for c in 0..channels {
        let src = x.row(c);
        for p in 0..len {
            let row = out.row_mut(c * len + p);
            for (b, slot) in row.iter_mut().enumerate() {
                *slot = src[b * len + p];
            }
        }
    }
}

/// Inverse of [`conv_to_fc`].
pub fn fc_to_conv<F: Scalar>(x: &Mat<F>, batch: usize, len: usize, out: &mut Mat<F>) {
    let channels = x.rows / len;
    out.reset(channels, batch * len);
    for c in 0..channels {
        let dst = out.row_mut(c);
        for p in 0..len {
            let src = x.row(c * len + p);
            for (b, &v) in src.iter().enumerate() {
                dst[b * len + p] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_reference(conv: &Conv1d<f64>, x: &Mat<f64>, batch: usize, len_in: usize) -> Mat<f64> {
        let len_out = conv.output_len(len_in);
        let pad = (conv.kernel / 2) as isize;
        let mut y = Mat::zeros(conv.out_channels, batch * len_out);
        for o in 0..conv.out_channels {
            for b in 0..batch {
                for p in 0..len_out {
                    let mut acc = conv.bias[o];
                    for c in 0..conv.in_channels {
                        for j in 0..conv.kernel {
                            let q = (p * conv.stride) as isize + j as isize - pad;
                            if q >= 0 && (q as usize) < len_in {
                                acc += conv.weight.at(o, c * conv.kernel + j)
                                    * x.at(c, b * len_in + q as usize);
                            }
                        }
                    }
                    y.set(o, b * len_out + p, acc);
                }
            }
        }
        y
    }

    fn pseudo(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 33) as f64) / (u32::MAX as f64) - 0.5
    }

    #[test]
    fn conv_forward_matches_direct_convolution() {
        for stride in [1usize, 2] {
            let mut seed = 7u64;
            let mut conv = Conv1d::<f64>::new(3, 5, 3, stride);
            for v in conv.weight.data.iter_mut() {
                *v = pseudo(&mut seed);
            }
            for v in conv.bias.iter_mut() {
                *v = pseudo(&mut seed);
            }
            let batch = 2;
            let len_in = 8;
            let x = Mat::from_vec(3, batch * len_in, (0..3 * batch * len_in).map(|_| pseudo(&mut seed)).collect());
            let mut cols = Mat::zeros(1, 1);
            conv.im2col(&x, batch, len_in, &mut cols);
            let mut y = Mat::zeros(1, 1);
            conv.forward(&cols, &mut y);
            let want = conv_reference(&conv, &x, batch, len_in);
            assert_eq!(y.rows, want.rows);
            assert_eq!(y.cols, want.cols);
            for (a, b) in y.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let x = Mat::from_vec(2, 6, (0..12).map(|v| v as f64).collect());
        let mut y = Mat::zeros(1, 1);
        upsample2_forward(&x, 2, 3, &mut y);
        assert_eq!(y.cols, 12);
        assert_eq!(y.at(0, 0), x.at(0, 0));
        assert_eq!(y.at(0, 1), x.at(0, 0));
        // backward sums the pairs
        let mut dx = Mat::zeros(1, 1);
        upsample2_backward(&y, 2, 3, &mut dx);
        for c in 0..2 {
            for i in 0..6 {
                assert_eq!(dx.at(c, i), 2.0 * x.at(c, i));
            }
        }
    }

    #[test]
    fn fc_pack_unpack_are_inverse() {
        let mut seed = 3u64;
        let x = Mat::from_vec(4, 3 * 5, (0..60).map(|_| pseudo(&mut seed)).collect());
        let mut packed = Mat::zeros(1, 1);
        conv_to_fc(&x, 3, 5, &mut packed);
        assert_eq!((packed.rows, packed.cols), (20, 3));
        let mut back = Mat::zeros(1, 1);
        fc_to_conv(&packed, 3, 5, &mut back);
        assert_eq!(back.data, x.data);
    }
}
