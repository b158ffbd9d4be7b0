use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const BITS: usize = 32;

/// Joe–Kuo primitive polynomials and initial direction numbers for
/// dimensions 2..=16: (degree, coefficient bits, initial m values).
const DIRECTION_TABLE: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

pub const SOBOL_MAX_DIM: usize = DIRECTION_TABLE.len() + 1;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (s, a, m) = DIRECTION_TABLE[dim - 1];
    let s = s as usize;
    for i in 0..s {
        v[i] = m[i] << (BITS - 1 - i);
    }
    for i in s..BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// First `m` points of the Sobol sequence in `[0,1]^d`, skipping the origin.
///
/// With a scramble seed, each coordinate is XOR-ed with a random 32-bit digital
/// shift, which keeps the stratification of every dyadic block.
pub fn sobol_points(m: usize, dim: usize, scramble_seed: Option<u64>) -> Result<DMatrix<f64>> {
    if dim == 0 || dim > SOBOL_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "Sobol dimension {dim} outside 1..={SOBOL_MAX_DIM}"
        )));
    }
    let dirs: Vec<[u32; BITS]> = (0..dim).map(direction_numbers).collect();
    let shifts: Vec<u32> = match scramble_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..dim).map(|_| rng.random::<u32>()).collect()
        }
        None => vec![0; dim],
    };
    let mut state = vec![0u32; dim];
    let mut out = DMatrix::zeros(m, dim);
    let scale = 1.0 / (1u64 << BITS) as f64;
    for i in 0..m {
        // Gray-code order: flip the direction number at the lowest zero bit of i
        let c = (!i).trailing_zeros() as usize;
        for j in 0..dim {
            state[j] ^= dirs[j][c];
            out[(i, j)] = (state[j] ^ shifts[j]) as f64 * scale;
        }
    }
    Ok(out)
}
