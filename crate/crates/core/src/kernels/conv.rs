use serde::{Deserialize, Serialize};

use super::{record_multiplies, AlgorithmVariant, WinogradTransform};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sizes of a 2-D convolution `(N,C,H,W) * (O,C,kh,kw)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn from_shapes(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[n, c, h, w], &[o, c2, kh, kw]) = (input, weight) else {
            return Err(Error::Shape(format!("conv2d needs rank-4 input and weight, got {input:?} and {weight:?}")));
        };
        if c != c2 {
            return Err(Error::Shape(format!("conv2d channels {c} vs weight {c2}")));
        }
        let g = ConvGeometry { n, c, h, w, o, kh, kw, stride, pad };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        let ok_axis =
            |size: usize, k: usize| size + 2 * self.pad >= k && (size + 2 * self.pad - k).is_multiple_of(self.stride);
        if self.stride == 0 || self.kh == 0 || self.kw == 0 {
            return Err(Error::Shape("conv2d stride and kernel must be positive".into()));
        }
        if !ok_axis(self.h, self.kh) || !ok_axis(self.w, self.kw) {
            return Err(Error::Shape(format!(
                "conv2d geometry {}x{} kernel {}x{} stride {} pad {} gives a non-integral output",
                self.h, self.w, self.kh, self.kw, self.stride, self.pad
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.o, self.out_h(), self.out_w()]
    }

    pub fn winograd_ok(&self) -> bool {
        self.kh == 3 && self.kw == 3 && self.stride == 1
    }
}

/// Cross-correlation with symmetric zero padding.
pub fn conv2d(input: &Tensor, weight: &Tensor, stride: usize, pad: usize, variant: AlgorithmVariant) -> Result<Tensor> {
    input.require_row_major()?;
    weight.require_row_major()?;
    variant.validate()?;
    let g = ConvGeometry::from_shapes(input.shape(), weight.shape(), stride, pad)?;
    let out = match variant {
        AlgorithmVariant::Direct => direct(&g, input.data(), weight.data()),
        AlgorithmVariant::Winograd { m } => {
            if !g.winograd_ok() {
                return Err(Error::UnsupportedVariant(format!(
                    "winograd needs a 3x3 stride-1 kernel, got {}x{} stride {}",
                    g.kh, g.kw, g.stride
                )));
            }
            let t = WinogradTransform::new(m).ok_or_else(|| Error::UnsupportedVariant(format!("winograd F({m},3)")))?;
            winograd(&g, &t, input.data(), weight.data())
        }
        v => return Err(Error::UnsupportedVariant(format!("{v} does not apply to conv2d"))),
    };
    Tensor::new(g.out_shape(), out)
}

fn direct(g: &ConvGeometry, x: &[f32], wt: &[f32]) -> Vec<f32> {
    let (oh, ow) = (g.out_h(), g.out_w());
    record_multiplies(g.n * g.o * g.c * oh * ow * g.kh * g.kw);
    let mut out = vec![0.0f32; g.n * g.o * oh * ow];
    for n in 0..g.n {
        for o in 0..g.o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = 0.0f32;
                    for c in 0..g.c {
                        let plane = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                        let kern = &wt[(o * g.c + c) * g.kh * g.kw..][..g.kh * g.kw];
                        for ky in 0..g.kh {
                            let iy = (y * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (xo * g.stride + kx) as isize - g.pad as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                acc += plane[iy as usize * g.w + ix as usize] * kern[ky * g.kw + kx];
                            }
                        }
                    }
                    out[((n * g.o + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    out
}

fn winograd(g: &ConvGeometry, t: &WinogradTransform, x: &[f32], wt: &[f32]) -> Vec<f32> {
    let (m, tn) = (t.m, t.n);
    let (oh, ow) = (g.out_h(), g.out_w());
    let (tiles_y, tiles_x) = (oh.div_ceil(m), ow.div_ceil(m));
    let nn = tn * tn;
    record_multiplies(g.n * tiles_y * tiles_x * g.o * g.c * nn);

    let filters: Vec<Vec<f32>> = (0..g.o * g.c).map(|oc| t.filter(&wt[oc * 9..][..9])).collect();
    let mut out = vec![0.0f32; g.n * g.o * oh * ow];
    let mut patch = vec![0.0f32; nn];
    let mut tmp = vec![0.0f32; nn];
    let mut inputs = vec![0.0f32; g.c * nn];
    let mut prod = vec![0.0f32; nn];
    let mut tile_out = vec![0.0f32; m * m];
    for n in 0..g.n {
        for ty in 0..tiles_y {
            for tx in 0..tiles_x {
                let (y0, x0) = ((ty * m) as isize - g.pad as isize, (tx * m) as isize - g.pad as isize);
                for c in 0..g.c {
                    let plane = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                    for i in 0..tn {
                        for j in 0..tn {
                            let (iy, ix) = (y0 + i as isize, x0 + j as isize);
                            let inside = iy >= 0 && iy < g.h as isize && ix >= 0 && ix < g.w as isize;
                            patch[i * tn + j] = if inside { plane[iy as usize * g.w + ix as usize] } else { 0.0 };
                        }
                    }
                    t.input(&patch, &mut inputs[c * nn..][..nn], &mut tmp);
                }
                for o in 0..g.o {
                    prod.fill(0.0);
                    for c in 0..g.c {
                        let u = &filters[o * g.c + c];
                        for ((p, &a), &b) in prod.iter_mut().zip(u).zip(&inputs[c * nn..][..nn]) {
                            *p += a * b;
                        }
                    }
                    t.output(&prod, &mut tile_out);
                    for i in 0..m.min(oh - ty * m) {
                        for j in 0..m.min(ow - tx * m) {
                            out[((n * g.o + o) * oh + ty * m + i) * ow + tx * m + j] = tile_out[i * m + j];
                        }
                    }
                }
            }
        }
    }
    out
}
