//! im2col convolution kernels backed by a blocked GEMM.

/// Geometry of one 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub padding: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.padding == 0 && self.stride == 1
    }
}

/// `c = a·b + beta·c` with optional transposes; all matrices row-major and contiguous.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe exactly the m×k, k×n and m×n
    // row-major (or transposed) layouts of the three distinct slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(g: &ConvGeom, img: &[f64], col: &mut [f64]) {
    let p = g.out_plane();
    for ci in 0..g.c {
        let plane = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, col: &[f64], img: &mut [f64]) {
    let p = g.out_plane();
    for ci in 0..g.c {
        let plane = &mut img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let p = g.out_plane();
    let rows = g.col_rows();
    let mut out = vec![0.0; g.n * g.k * p];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * p] };
    for ni in 0..g.n {
        let img = &input[ni * g.c * g.h * g.w..(ni + 1) * g.c * g.h * g.w];
        let o = &mut out[ni * g.k * p..(ni + 1) * g.k * p];
        for (ki, chunk) in o.chunks_mut(p).enumerate() {
            chunk.fill(bias[ki]);
        }
        let b = if g.is_pointwise() {
            img
        } else {
            im2col(g, img, &mut col);
            &col
        };
        gemm(g.k, rows, p, kernel, false, b, false, 1.0, o);
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    need_input: bool,
) -> ConvGrads {
    let p = g.out_plane();
    let rows = g.col_rows();
    let in_plane = g.c * g.h * g.w;
    let mut gk = vec![0.0; g.k * rows];
    let mut gb = vec![0.0; g.k];
    let mut gin = need_input.then(|| vec![0.0; g.n * in_plane]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * p] };
    let mut dcol = vec![0.0; rows * p];
    for ni in 0..g.n {
        let img = &input[ni * in_plane..(ni + 1) * in_plane];
        let go = &grad_out[ni * g.k * p..(ni + 1) * g.k * p];
        for (ki, chunk) in go.chunks(p).enumerate() {
            gb[ki] += chunk.iter().sum::<f64>();
        }
        let b = if g.is_pointwise() {
            img
        } else {
            im2col(g, img, &mut col);
            &col
        };
        gemm(g.k, p, rows, go, false, b, true, 1.0, &mut gk);
        if let Some(gin) = gin.as_mut() {
            let dst = &mut gin[ni * in_plane..(ni + 1) * in_plane];
            if g.is_pointwise() {
                gemm(rows, g.k, p, kernel, true, go, false, 1.0, dst);
            } else {
                gemm(rows, g.k, p, kernel, true, go, false, 0.0, &mut dcol);
                col2im(g, &dcol, dst);
            }
        }
    }
    ConvGrads {
        input: gin,
        kernel: gk,
        bias: gb,
    }
}
