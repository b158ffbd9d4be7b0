//! Bounded Nelder–Mead with dimension-adaptive coefficients.

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// Stop when the simplex diameter (box-relative) falls below this.
    pub xtol: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-7,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best value after each iteration; nonincreasing.
    pub history: Vec<f64>,
    /// Whether the best value improved on the starting value.
    pub improved: bool,
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`. Trial
/// points are projected onto the box; non-finite values count as `+inf`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let clip = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };

    // adaptive coefficients (Gao & Han)
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut start = x0.to_vec();
    clip(&mut start);
    let f0 = eval(&start, &mut evaluations)?;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step * (upper[i] - lower[i]);
        v[i] += step;
        if v[i] > upper[i] {
            v[i] = start[i] - step;
        }
        clip(&mut v);
        let fv = eval(&v, &mut evaluations)?;
        simplex.push((v, fv));
    }
    sort_simplex(&mut simplex);

    let widths: Vec<f64> = (0..n).map(|i| (upper[i] - lower[i]).max(f64::MIN_POSITIVE)).collect();
    let mut history = Vec::with_capacity(opts.max_iter);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                (0..n)
                    .map(|i| ((v[i] - simplex[0].0[i]) / widths[i]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.ftol) || diameter <= opts.xtol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(v, _)| v[i]).sum::<f64>() / nf)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + t * (worst.0[i] - centroid[i])).collect();
            clip(&mut p);
            p
        };

        let xr = along(-alpha);
        let fr = eval(&xr, &mut evaluations)?;
        if fr < simplex[0].1 {
            let xe = along(-alpha * beta);
            let fe = eval(&xe, &mut evaluations)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-alpha * gamma);
                let fc = eval(&xc, &mut evaluations)?;
                (xc, fc)
            } else {
                let xc = along(gamma);
                let fc = eval(&xc, &mut evaluations)?;
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                // shrink towards the best vertex
                let best = simplex[0].0.clone();
                for vtx in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> = (0..n).map(|i| best[i] + delta * (vtx.0[i] - best[i])).collect();
                    clip(&mut p);
                    let fp = eval(&p, &mut evaluations)?;
                    *vtx = (p, fp);
                }
            }
        }
        sort_simplex(&mut simplex);
        history.push(simplex[0].1);
    }

    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        improved: value < f0,
        x,
        value,
        iterations,
        evaluations,
        history,
    })
}

fn sort_simplex(s: &mut [(Vec<f64>, f64)]) {
    // stable sort keeps the older vertex first on ties
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
}
