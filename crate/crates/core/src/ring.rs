//! Centered residues: `Z_q` represented as integers in `(-q/2, q/2]`.

/// Reduce `x` modulo `q` into the centered interval.
pub fn center(x: i128, q: u64) -> i64 {
    let q = q as i128;
    let r = x.rem_euclid(q);
    if 2 * r > q {
        (r - q) as i64
    } else {
        r as i64
    }
}

pub fn is_centered(v: i64, q: u64) -> bool {
    let v = v as i128;
    let q = q as i128;
    -q < 2 * v && 2 * v <= q
}
