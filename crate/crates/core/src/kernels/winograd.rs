//! Winograd F(m, 3) transforms from the Cook–Toom construction.
//!
//! Linear convolution of a 3-tap filter with an `m`-tap signal is evaluated at
//! `m + 1` finite points plus infinity, multiplied pointwise and interpolated back.
//! Transposing that bilinear form yields the correlation used by conv layers:
//! `y = Aᵀ [(G g) ⊙ (Bᵀ d)]`.

const TAPS: usize = 3;

/// Transform matrices for one output tile size, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradTransform {
    /// Output tile size.
    pub m: usize,
    /// Input tile size, `m + 2`.
    pub n: usize,
    /// `m x n`.
    pub at: Vec<f32>,
    /// `n x 3`.
    pub g: Vec<f32>,
    /// `n x n`.
    pub bt: Vec<f32>,
}

impl WinogradTransform {
    /// Returns `None` for tile sizes without a point set (only 2 and 6 are supported).
    pub fn new(m: usize) -> Option<Self> {
        let points: &[f64] = match m {
            2 => &[0.0, 1.0, -1.0],
            6 => &[0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5],
            _ => return None,
        };
        Some(Self::from_points(m, points))
    }

    fn from_points(m: usize, points: &[f64]) -> Self {
        let n = m + TAPS - 1;
        debug_assert_eq!(points.len(), n - 1);
        let scale: Vec<f64> =
            (0..n - 1).map(|j| (0..n - 1).filter(|&l| l != j).map(|l| points[j] - points[l]).product()).collect();

        let mut at = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n - 1 {
                at[i * n + j] = points[j].powi(i as i32) as f32;
            }
            at[i * n + n - 1] = if i == m - 1 { 1.0 } else { 0.0 };
        }

        let mut g = vec![0.0f32; n * TAPS];
        for j in 0..n - 1 {
            for k in 0..TAPS {
                g[j * TAPS + k] = (points[j].powi(k as i32) / scale[j]) as f32;
            }
        }
        g[(n - 1) * TAPS + TAPS - 1] = 1.0;

        // Row j of Bᵀ holds the coefficients of prod_{l != j}(x - a_l); the last
        // row is the full node polynomial.
        let mut bt = vec![0.0f32; n * n];
        for j in 0..n {
            let roots = points.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, &p)| p);
            for (k, c) in poly_from_roots(roots).into_iter().enumerate() {
                bt[j * n + k] = c as f32;
            }
        }
        WinogradTransform { m, n, at, g, bt }
    }

    /// `G g Gᵀ` for a 3x3 filter, `n x n`.
    pub fn filter(&self, kernel: &[f32]) -> Vec<f32> {
        let n = self.n;
        let mut tmp = vec![0.0f32; n * TAPS];
        for i in 0..n {
            for j in 0..TAPS {
                tmp[i * TAPS + j] = (0..TAPS).map(|k| self.g[i * TAPS + k] * kernel[k * TAPS + j]).sum();
            }
        }
        let mut out = vec![0.0f32; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..TAPS).map(|k| tmp[i * TAPS + k] * self.g[j * TAPS + k]).sum();
            }
        }
        out
    }

    /// `Bᵀ d B` for an `n x n` input tile.
    pub fn input(&self, tile: &[f32], out: &mut [f32], tmp: &mut [f32]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|k| self.bt[i * n + k] * tile[k * n + j]).sum();
            }
        }
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| tmp[i * n + k] * self.bt[j * n + k]).sum();
            }
        }
    }

    /// `Aᵀ M A`, `m x m`.
    pub fn output(&self, prod: &[f32], out: &mut [f32]) {
        let (m, n) = (self.m, self.n);
        let mut tmp = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|k| self.at[i * n + k] * prod[k * n + j]).sum();
            }
        }
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = (0..n).map(|k| tmp[i * n + k] * self.at[j * n + k]).sum();
            }
        }
    }
}

/// Ascending coefficients of `prod (x - r)`.
fn poly_from_roots(roots: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &v) in c.iter().enumerate() {
            next[k + 1] += v;
            next[k] -= r * v;
        }
        c = next;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlate_1d(t: &WinogradTransform, d: &[f64], g: &[f64]) -> Vec<f64> {
        let n = t.n;
        let gg: Vec<f64> = (0..n).map(|i| (0..TAPS).map(|k| t.g[i * TAPS + k] as f64 * g[k]).sum()).collect();
        let dd: Vec<f64> = (0..n).map(|i| (0..n).map(|k| t.bt[i * n + k] as f64 * d[k]).sum()).collect();
        (0..t.m).map(|i| (0..n).map(|k| t.at[i * n + k] as f64 * gg[k] * dd[k]).sum()).collect()
    }

    #[test]
    fn f23_matches_textbook_up_to_sign() {
        let t = WinogradTransform::new(2).unwrap();
        assert_eq!(t.at, vec![1.0, 1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0]);
        assert_eq!(t.bt[4..8], [0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn one_dimensional_correlation_is_exact() {
        for m in [2, 6] {
            let t = WinogradTransform::new(m).unwrap();
            let d: Vec<f64> = (0..t.n).map(|i| (i as f64 * 0.37).sin()).collect();
            let g = [0.3, -1.1, 0.7];
            let got = correlate_1d(&t, &d, &g);
            for i in 0..m {
                let want: f64 = (0..TAPS).map(|k| d[i + k] * g[k]).sum();
                assert!((got[i] - want).abs() < 1e-5, "m={m} i={i}: {} vs {want}", got[i]);
            }
        }
        assert!(WinogradTransform::new(4).is_none());
    }
}
