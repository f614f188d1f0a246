use crate::error::{Error, Result};

/// Memory traffic `(e/te)(b/tb)(a·te + a·tb + te·tb)` as an exact fraction
/// `(numerator, denominator)`.
pub fn tile_objective(a: usize, e: usize, b: usize, te: usize, tb: usize) -> (u128, u128) {
    let (a, e, b, te, tb) = (a as u128, e as u128, b as u128, te as u128, tb as u128);
    (e * b * (a * te + a * tb + te * tb), te * tb)
}

/// Tile sizes minimising memory traffic subject to `te·tb + te + tb <= registers`,
/// with `1 <= te <= e` and `1 <= tb <= b`. Ties go to the smaller `te`, then `tb`.
pub fn optimize_tile(a: usize, e: usize, b: usize, registers: usize) -> Result<(usize, usize)> {
    if registers < 3 {
        return Err(Error::Infeasible(format!("{registers} registers cannot hold a 1x1 tile")));
    }
    if a == 0 || e == 0 || b == 0 {
        return Err(Error::Shape(format!("matmul sizes ({a},{e},{b})")));
    }
    let mut best = (1, 1);
    let mut best_obj = tile_objective(a, e, b, 1, 1);
    for te in 1..=e.min(registers) {
        for tb in 1..=b.min(registers) {
            if te * tb + te + tb > registers {
                break;
            }
            let obj = tile_objective(a, e, b, te, tb);
            if obj.0 * best_obj.1 < best_obj.0 * obj.1 {
                best = (te, tb);
                best_obj = obj;
            }
        }
    }
    Ok(best)
}
