use super::{record_multiplies, AlgorithmVariant};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(a, e) x (e, b) -> (a, b)` with the chosen algorithm.
///
/// Direct and tiled accumulate each output in the same order, so they agree
/// bitwise. Strassen reassociates and is only close.
pub fn matmul(lhs: &Tensor, rhs: &Tensor, variant: AlgorithmVariant) -> Result<Tensor> {
    lhs.require_row_major()?;
    rhs.require_row_major()?;
    variant.validate()?;
    let (&[a, e], &[e2, b]) = (lhs.shape(), rhs.shape()) else {
        return Err(Error::Shape(format!("matmul needs rank-2 operands, got {:?} and {:?}", lhs.shape(), rhs.shape())));
    };
    if e != e2 {
        return Err(Error::Shape(format!("matmul inner dims {e} and {e2} differ")));
    }
    let (x, y) = (lhs.data(), rhs.data());
    let out = match variant {
        AlgorithmVariant::Direct => direct(x, y, a, e, b),
        AlgorithmVariant::Tiled { te, tb } => tiled(x, y, a, e, b, te, tb),
        AlgorithmVariant::Strassen { cutoff } => strassen(x, y, a, e, b, cutoff),
        AlgorithmVariant::Winograd { .. } => {
            return Err(Error::UnsupportedVariant("winograd applies to conv2d only".into()))
        }
    };
    Tensor::new(vec![a, b], out)
}

fn direct(x: &[f32], y: &[f32], a: usize, e: usize, b: usize) -> Vec<f32> {
    record_multiplies(a * e * b);
    let mut out = vec![0.0f32; a * b];
    for i in 0..a {
        let row = &mut out[i * b..][..b];
        for k in 0..e {
            let xik = x[i * e + k];
            for (c, &ykj) in row.iter_mut().zip(&y[k * b..][..b]) {
                *c += xik * ykj;
            }
        }
    }
    out
}

/// Register blocking: a `te x tb` block of the right operand, `te` left values and
/// `tb` accumulators are live per step.
fn tiled(x: &[f32], y: &[f32], a: usize, e: usize, b: usize, te: usize, tb: usize) -> Vec<f32> {
    record_multiplies(a * e * b);
    let mut out = vec![0.0f32; a * b];
    let mut block = vec![0.0f32; te * tb];
    let mut acc = vec![0.0f32; tb];
    for j0 in (0..b).step_by(tb) {
        let nb = tb.min(b - j0);
        for k0 in (0..e).step_by(te) {
            let ne = te.min(e - k0);
            for k in 0..ne {
                block[k * tb..][..nb].copy_from_slice(&y[(k0 + k) * b + j0..][..nb]);
            }
            for i in 0..a {
                let lhs = &x[i * e + k0..][..ne];
                acc[..nb].copy_from_slice(&out[i * b + j0..][..nb]);
                for (k, &xik) in lhs.iter().enumerate() {
                    for (c, &ykj) in acc[..nb].iter_mut().zip(&block[k * tb..][..nb]) {
                        *c += xik * ykj;
                    }
                }
                out[i * b + j0..][..nb].copy_from_slice(&acc[..nb]);
            }
        }
    }
    out
}

struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Block `(bi, bj)` of a 2x2 split into `r x c` quadrants, zero-padded.
    fn quadrant(&self, bi: usize, bj: usize, r: usize, c: usize) -> Mat {
        let mut q = Mat::zeros(r, c);
        let (r0, c0) = (bi * r, bj * c);
        for i in 0..r.min(self.rows.saturating_sub(r0)) {
            let n = c.min(self.cols.saturating_sub(c0));
            q.data[i * c..][..n].copy_from_slice(&self.data[(r0 + i) * self.cols + c0..][..n]);
        }
        q
    }

    fn combine(&self, other: &Mat, sign: f32) -> Mat {
        let data = self.data.iter().zip(&other.data).map(|(&p, &q)| p + sign * q).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    fn add(&self, o: &Mat) -> Mat {
        self.combine(o, 1.0)
    }

    fn sub(&self, o: &Mat) -> Mat {
        self.combine(o, -1.0)
    }
}

fn strassen(x: &[f32], y: &[f32], a: usize, e: usize, b: usize, cutoff: usize) -> Vec<f32> {
    let lhs = Mat { rows: a, cols: e, data: x.to_vec() };
    let rhs = Mat { rows: e, cols: b, data: y.to_vec() };
    strassen_rec(&lhs, &rhs, cutoff).data
}

fn strassen_rec(x: &Mat, y: &Mat, cutoff: usize) -> Mat {
    let (a, e, b) = (x.rows, x.cols, y.cols);
    if a <= cutoff || e <= cutoff || b <= cutoff {
        return Mat { rows: a, cols: b, data: direct(&x.data, &y.data, a, e, b) };
    }
    let (ha, he, hb) = (a.div_ceil(2), e.div_ceil(2), b.div_ceil(2));
    let (a11, a12, a21, a22) =
        (x.quadrant(0, 0, ha, he), x.quadrant(0, 1, ha, he), x.quadrant(1, 0, ha, he), x.quadrant(1, 1, ha, he));
    let (b11, b12, b21, b22) =
        (y.quadrant(0, 0, he, hb), y.quadrant(0, 1, he, hb), y.quadrant(1, 0, he, hb), y.quadrant(1, 1, he, hb));

    let m1 = strassen_rec(&a11.add(&a22), &b11.add(&b22), cutoff);
    let m2 = strassen_rec(&a21.add(&a22), &b11, cutoff);
    let m3 = strassen_rec(&a11, &b12.sub(&b22), cutoff);
    let m4 = strassen_rec(&a22, &b21.sub(&b11), cutoff);
    let m5 = strassen_rec(&a11.add(&a12), &b22, cutoff);
    let m6 = strassen_rec(&a21.sub(&a11), &b11.add(&b12), cutoff);
    let m7 = strassen_rec(&a12.sub(&a22), &b21.add(&b22), cutoff);

    let c11 = m1.add(&m4).sub(&m5).add(&m7);
    let c12 = m3.add(&m5);
    let c21 = m2.add(&m4);
    let c22 = m1.sub(&m2).add(&m3).add(&m6);

    let mut out = Mat::zeros(a, b);
    for (q, (bi, bj)) in [(&c11, (0, 0)), (&c12, (0, 1)), (&c21, (1, 0)), (&c22, (1, 1))] {
        let (r0, c0) = (bi * ha, bj * hb);
        for i in 0..ha.min(a.saturating_sub(r0)) {
            let n = hb.min(b.saturating_sub(c0));
            out.data[(r0 + i) * b + c0..][..n].copy_from_slice(&q.data[i * hb..][..n]);
        }
    }
    out
}
