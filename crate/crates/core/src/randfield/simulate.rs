use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::linalg::psd_factor;

/// `R` joint draws of the posterior process at `m` discretization points.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationEnsemble {
    /// `m x d` discretization points.
    pub points: DMatrix<f64>,
    /// `R x m` realizations, one per row.
    pub values: DMatrix<f64>,
    pub seed: u64,
    pub posterior_id: String,
}

impl SimulationEnsemble {
    pub fn realizations(&self) -> usize {
        self.values.nrows()
    }
}

/// Draws `r` realizations of the posterior at `points` through a
/// semidefinite-tolerant Cholesky factor of the posterior covariance.
pub fn simulate(p: &GpPosterior, points: &DMatrix<f64>, r: usize, seed: u64) -> Result<SimulationEnsemble> {
    let m = points.nrows();
    if m == 0 || r == 0 {
        return Err(Error::InvalidArgument("simulation needs m >= 1 points and R >= 1 draws".into()));
    }
    let (mean, _) = p.predict(points)?;
    let cov = p.covariance(points)?;
    let l = psd_factor(&cov, p.kernel().variance).ok_or(Error::NotFactorizable { size: m })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: DMatrix<f64> = DMatrix::from_fn(r, m, |_, _| StandardNormal.sample(&mut rng));
    let mut values = eps * l.transpose();
    for mut row in values.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(SimulationEnsemble {
        points: points.clone(),
        values,
        seed,
        posterior_id: p.id(),
    })
}

/// JSON header stored next to the binary matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub realizations: usize,
    pub points: usize,
    pub dim: usize,
    pub seed: u64,
    pub posterior_id: String,
    /// Row-major `points x dim` coordinates.
    pub coordinates: Vec<f64>,
    /// Layout of the `.bin` file.
    pub layout: String,
}

/// Writes `<prefix>.bin` (row-major little-endian f64 values, `R x m`) and
/// `<prefix>.json` (shape, seed, posterior id, coordinates).
pub fn write_ensemble(ens: &SimulationEnsemble, prefix: &Path) -> Result<()> {
    let header = EnsembleHeader {
        realizations: ens.values.nrows(),
        points: ens.points.nrows(),
        dim: ens.points.ncols(),
        seed: ens.seed,
        posterior_id: ens.posterior_id.clone(),
        coordinates: ens.points.transpose().as_slice().to_vec(),
        layout: "row-major f64 little-endian, realizations x points".into(),
    };
    fs::write(prefix.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
    let mut f = fs::File::create(prefix.with_extension("bin"))?;
    let mut buf = Vec::with_capacity(ens.values.len() * 8);
    for i in 0..ens.values.nrows() {
        for j in 0..ens.values.ncols() {
            buf.extend_from_slice(&ens.values[(i, j)].to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_ensemble(prefix: &Path) -> Result<SimulationEnsemble> {
    let header: EnsembleHeader = serde_json::from_slice(&fs::read(prefix.with_extension("json"))?)?;
    let mut buf = Vec::new();
    fs::File::open(prefix.with_extension("bin"))?.read_to_end(&mut buf)?;
    let expected = header.realizations * header.points * 8;
    if buf.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "ensemble payload has {} bytes, header implies {expected}",
            buf.len()
        )));
    }
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(SimulationEnsemble {
        points: DMatrix::from_row_slice(header.points, header.dim, &header.coordinates),
        values: DMatrix::from_row_slice(header.realizations, header.points, &vals),
        seed: header.seed,
        posterior_id: header.posterior_id,
    })
}
