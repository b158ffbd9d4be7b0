use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of random candidates screened by [`lhs_maximin`].
pub const LHS_CANDIDATES: usize = 100;

/// One random Latin hypercube in `[0,1]^d`: each axis stratum
/// `[k/n, (k+1)/n)` holds exactly one point.
pub fn lhs_random<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, d);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for i in 0..n {
            out[(i, j)] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

/// Minimum pairwise Euclidean distance of the rows (`inf` for fewer than two rows).
pub fn maximin_score(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for k in 0..i {
            let d2: f64 = (0..points.ncols()).map(|j| (points[(i, j)] - points[(k, j)]).powi(2)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Best of `candidates` random Latin hypercubes under the maximin criterion.
/// The first candidate is the plain `lhs_random` draw for the same seed.
pub fn lhs_maximin_with(n: usize, d: usize, seed: u64, candidates: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lhs_random(n, d, &mut rng);
    let mut best_score = maximin_score(&best);
    for _ in 1..candidates.max(1) {
        let cand = lhs_random(n, d, &mut rng);
        let score = maximin_score(&cand);
        if score > best_score {
            best = cand;
            best_score = score;
        }
    }
    best
}

pub fn lhs_maximin(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    lhs_maximin_with(n, d, seed, LHS_CANDIDATES)
}
