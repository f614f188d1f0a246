use super::{RasterOp, Region, View};
use crate::tensor::numel;

/// Fuses `consumer ∘ producer` into one raster reading the producer's source
/// directly, when the composed address map is exactly affine.
///
/// Applies only to single-region rasters whose producer writes its whole output
/// bijectively. The consumer's read offsets are decomposed into mixed-radix digits
/// of the producer's destination layout; when no digit can carry over the
/// consumer's range, each digit is an affine function of the coordinate and the
/// composition is affine too.
pub fn merge_vertical(producer: &RasterOp, consumer: &RasterOp) -> Option<RasterOp> {
    let ([p], [c]) = (producer.regions.as_slice(), consumer.regions.as_slice()) else {
        return None;
    };
    if c.src != 0 {
        return None;
    }
    let digits = full_cover_digits(p, numel(&producer.out_shape))?;
    let total = numel(&producer.out_shape) as isize;

    let off = c.src_view.offset;
    if off < 0 || off >= total {
        return None;
    }
    // Per-digit value at the origin and per-axis signed increments.
    let base: Vec<isize> = digits.iter().map(|d| (off / d.place) % d.radix).collect();
    let mut inc = vec![vec![0isize; digits.len()]; c.range.len()];
    for (k, (&s, &n)) in c.src_view.strides.iter().zip(&c.range).enumerate() {
        if n == 1 || s == 0 {
            continue;
        }
        if s.abs() >= total {
            return None;
        }
        for (j, d) in digits.iter().enumerate() {
            inc[k][j] = s.signum() * ((s.abs() / d.place) % d.radix);
        }
    }
    for (j, d) in digits.iter().enumerate() {
        let (mut lo, mut hi) = (base[j], base[j]);
        for (k, &n) in c.range.iter().enumerate() {
            let span = inc[k][j] * (n as isize - 1);
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        if lo < 0 || hi >= d.radix {
            return None;
        }
    }

    let src_offset =
        p.src_view.offset + digits.iter().zip(&base).map(|(d, &b)| p.src_view.strides[d.axis] * b).sum::<isize>();
    let src_strides =
        inc.iter().map(|row| digits.iter().zip(row).map(|(d, &m)| p.src_view.strides[d.axis] * m).sum()).collect();
    Some(RasterOp::new(
        vec![Region::new(p.src, c.range.clone(), View::new(src_offset, src_strides), c.dst_view.clone())],
        consumer.out_shape.clone(),
    ))
}

/// Two rasters over the same inputs with identical regions compute the same
/// tensor; keep one.
pub fn merge_horizontal(a: &RasterOp, b: &RasterOp) -> Option<RasterOp> {
    (a == b).then(|| a.clone())
}

struct Digit {
    axis: usize,
    place: isize,
    radix: isize,
}

/// If `r` writes every index of a `len`-element buffer exactly once, returns its
/// destination axes as mixed-radix digits, most significant first.
fn full_cover_digits(r: &Region, len: usize) -> Option<Vec<Digit>> {
    if r.dst_view.offset != 0 || r.size() != len {
        return None;
    }
    let mut digits: Vec<Digit> = r
        .range
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 1)
        .map(|(axis, &n)| Digit { axis, place: r.dst_view.strides[axis], radix: n as isize })
        .collect();
    digits.sort_by_key(|d| std::cmp::Reverse(d.place));
    let mut expect = 1isize;
    for d in digits.iter().rev() {
        if d.place != expect {
            return None;
        }
        expect *= d.radix;
    }
    Some(digits)
}
