//! Parameter sampling: hypercube corners, Sobol points and uniform draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Primitive polynomials (degree bit included) and initial direction
/// numbers for dimensions 2..=32 of the Joe-Kuo construction.
const SOBOL_TABLE: [(u32, &[u32]); 31] = [
    (3, &[1]),
    (7, &[1, 3]),
    (11, &[1, 3, 1]),
    (13, &[1, 1, 1]),
    (19, &[1, 1, 3, 3]),
    (25, &[1, 3, 5, 13]),
    (37, &[1, 1, 5, 5, 17]),
    (41, &[1, 1, 5, 5, 5]),
    (47, &[1, 1, 7, 11, 19]),
    (55, &[1, 1, 5, 1, 1]),
    (59, &[1, 1, 1, 3, 11]),
    (61, &[1, 3, 5, 5, 31]),
    (67, &[1, 3, 3, 9, 7, 49]),
    (91, &[1, 1, 1, 15, 21, 21]),
    (97, &[1, 3, 1, 13, 27, 49]),
    (103, &[1, 1, 1, 15, 7, 5]),
    (109, &[1, 3, 1, 15, 13, 25]),
    (115, &[1, 1, 5, 5, 19, 61]),
    (131, &[1, 3, 7, 11, 23, 15, 103]),
    (137, &[1, 3, 7, 13, 13, 15, 69]),
    (143, &[1, 1, 3, 13, 7, 35, 63]),
    (145, &[1, 3, 5, 9, 1, 25, 53]),
    (157, &[1, 3, 1, 13, 9, 35, 107]),
    (167, &[1, 3, 1, 5, 27, 61, 31]),
    (171, &[1, 1, 5, 11, 19, 41, 61]),
    (185, &[1, 3, 5, 3, 3, 13, 69]),
    (191, &[1, 1, 7, 13, 1, 19, 1]),
    (193, &[1, 3, 7, 5, 13, 19, 59]),
    (203, &[1, 1, 3, 9, 25, 29, 41]),
    (211, &[1, 3, 5, 13, 23, 1, 55]),
    (213, &[1, 3, 7, 3, 13, 59, 17]),
];

pub const MAX_SOBOL_DIM: usize = 32;
const BITS: usize = 32;

/// Unscrambled Sobol sequence in gray-code order. The all-zero first point
/// is skipped, so the first points are `0.5, (0.75, 0.25), ...`.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::InvalidArgument(format!(
                "Sobol dimension must be in 1..={MAX_SOBOL_DIM}, got {dim}"
            )));
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (j, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - j);
        }
        directions.push(first);
        for &(poly, m) in SOBOL_TABLE.iter().take(dim - 1) {
            let s = (31 - poly.leading_zeros()) as usize;
            let mut v = [0u32; BITS];
            for j in 0..BITS {
                v[j] = if j < s {
                    m[j] << (BITS - 1 - j)
                } else {
                    let mut x = v[j - s] ^ (v[j - s] >> s);
                    for k in 1..s {
                        if (poly >> (s - k)) & 1 == 1 {
                            x ^= v[j - k];
                        }
                    }
                    x
                };
            }
            directions.push(v);
        }
        let mut seq = Sobol {
            directions,
            state: vec![0; dim],
            index: 0,
        };
        seq.advance();
        Ok(seq)
    }

    fn advance(&mut self) {
        let c = self.index.trailing_ones() as usize;
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c.min(BITS - 1)];
        }
        self.index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let p = self.state.iter().map(|s| *s as f64 / 4_294_967_296.0).collect();
        self.advance();
        p
    }
}

/// All `2^d` corners, bit `k` of the corner index selecting the upper bound
/// of dimension `k`.
pub fn corners(ranges: &[[f64; 2]]) -> Vec<Vec<f64>> {
    (0..1usize << ranges.len())
        .map(|i| {
            ranges
                .iter()
                .enumerate()
                .map(|(k, r)| r[(i >> k) & 1])
                .collect()
        })
        .collect()
}

pub fn scale(unit: &[f64], ranges: &[[f64; 2]]) -> Vec<f64> {
    unit.iter().zip(ranges).map(|(u, r)| r[0] + u * (r[1] - r[0])).collect()
}

/// Corners first, then Sobol points, `n` in total.
pub fn sobol_with_corners(ranges: &[[f64; 2]], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = corners(ranges);
    if out.len() > n {
        log::warn!("{} corners exceed the sample budget {n}; truncating", out.len());
        out.truncate(n);
        return Ok(out);
    }
    out.extend(sobol(ranges, n - out.len())?);
    Ok(out)
}

pub fn sobol(ranges: &[[f64; 2]], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut seq = Sobol::new(ranges.len())?;
    Ok((0..n).map(|_| scale(&seq.next_point(), ranges)).collect())
}

pub fn uniform(ranges: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| ranges.iter().map(|r| rng.random_range(r[0]..=r[1])).collect())
        .collect()
}
