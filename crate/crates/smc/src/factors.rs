//! Refinement factors `P` (`p.mtx`) and `Q` (`q.mtx`) as dense Matrix Market
//! files, so a solve can be resumed or applied to new images.

use std::path::Path;

use smc_core::refine::FactorPair;

use crate::error::{Error, Result};
use crate::mtx;

pub fn save_factors(dir: &Path, factors: &FactorPair) -> Result<()> {
    mtx::write_dense(&dir.join("p.mtx"), &factors.p)?;
    mtx::write_dense(&dir.join("q.mtx"), &factors.q)
}

pub fn load_factors(dir: &Path) -> Result<FactorPair> {
    let p = mtx::read_dense(&dir.join("p.mtx"))?;
    let q = mtx::read_dense(&dir.join("q.mtx"))?;
    if p.ncols() != q.ncols() {
        return Err(Error::Manifest {
            path: dir.to_path_buf(),
            message: format!("p has rank {} but q has rank {}", p.ncols(), q.ncols()),
        });
    }
    Ok(FactorPair { p, q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = FactorPair::random(4, 3, 2, 7);
        save_factors(dir.path(), &f).unwrap();
        assert_eq!(load_factors(dir.path()).unwrap(), f);
    }

    #[test]
    fn rank_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let f = FactorPair::random(4, 3, 2, 7);
        save_factors(dir.path(), &f).unwrap();
        mtx::write_dense(&dir.path().join("q.mtx"), &smc_core::DMatrix::zeros(3, 1)).unwrap();
        assert!(load_factors(dir.path()).is_err());
    }
}
