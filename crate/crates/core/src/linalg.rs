//! Row-major dense matrices and the handful of GEMM shapes the network needs.

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Mat { rows: self.rows, cols, data }
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn col_block(&self, start: usize, width: usize) -> Mat {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Mat { rows: self.rows, cols: width, data }
    }

    pub fn relu(&self) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v.max(0.0)).collect() }
    }
}

/// `x (n x in) * w^T` with `w` stored `out x in`, plus optional bias row.
pub fn linear(x: &Mat, w: &[f64], out: usize, bias: Option<&[f64]>) -> Mat {
    let inp = x.cols;
    assert_eq!(w.len(), out * inp, "weight shape mismatch");
    let mut y = Mat::zeros(x.rows, out);
    if let Some(b) = bias {
        for r in 0..x.rows {
            y.row_mut(r).copy_from_slice(b);
        }
    }
    let beta = if bias.is_some() { 1.0 } else { 0.0 };
    if x.rows > 0 && out > 0 && inp > 0 {
        // SAFETY: strides describe the exact extents of the three buffers.
        unsafe {
            matrixmultiply::dgemm(
                x.rows, inp, out, 1.0,
                x.data.as_ptr(), inp as isize, 1,
                w.as_ptr(), 1, inp as isize,
                beta,
                y.data.as_mut_ptr(), out as isize, 1,
            );
        }
    }
    y
}

/// `dy (n x out) * w` with `w` stored `out x in`; the input-side gradient of [`linear`].
pub fn linear_backward_input(dy: &Mat, w: &[f64], inp: usize) -> Mat {
    let out = dy.cols;
    assert_eq!(w.len(), out * inp, "weight shape mismatch");
    let mut dx = Mat::zeros(dy.rows, inp);
    if dy.rows > 0 && out > 0 && inp > 0 {
        // SAFETY: see `linear`.
        unsafe {
            matrixmultiply::dgemm(
                dy.rows, out, inp, 1.0,
                dy.data.as_ptr(), out as isize, 1,
                w.as_ptr(), inp as isize, 1,
                0.0,
                dx.data.as_mut_ptr(), inp as isize, 1,
            );
        }
    }
    dx
}

/// `dw += dy^T * x`, the weight gradient of [`linear`].
pub fn accumulate_weight_grad(dw: &mut [f64], dy: &Mat, x: &Mat) {
    let out = dy.cols;
    let inp = x.cols;
    assert_eq!(dy.rows, x.rows);
    assert_eq!(dw.len(), out * inp);
    if dy.rows > 0 && out > 0 && inp > 0 {
        // SAFETY: see `linear`.
        unsafe {
            matrixmultiply::dgemm(
                out, dy.rows, inp, 1.0,
                dy.data.as_ptr(), 1, out as isize,
                x.data.as_ptr(), inp as isize, 1,
                1.0,
                dw.as_mut_ptr(), inp as isize, 1,
            );
        }
    }
}

/// `db += column sums of dy`.
pub fn accumulate_bias_grad(db: &mut [f64], dy: &Mat) {
    for r in 0..dy.rows {
        for (b, v) in db.iter_mut().zip(dy.row(r)) {
            *b += v;
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub fn relu_backward(grad: &mut Mat, pre: &Mat) {
    for (g, &p) in grad.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}
