use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::{GridError, PowerNetwork};

/// Off-diagonal entries of the reduced Laplacian smaller than this (relative
/// to the largest original weight) are treated as absent lines.
const PRUNE_RELATIVE: f64 = 1e-12;

impl PowerNetwork {
    /// Eliminates every bus not in `keep` by a Schur complement of the
    /// Laplacian. Kept buses retain their inertia and are renumbered in
    /// ascending order of their original index.
    pub fn kron_reduce(&self, keep: &[usize]) -> Result<PowerNetwork, GridError> {
        let n = self.n_buses();
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        if keep.is_empty() {
            return Err(GridError::EmptyKeepSet);
        }
        if let Some(&bad) = keep.iter().find(|&&i| i >= n) {
            return Err(GridError::UnknownBus(bad));
        }
        let kept: Vec<usize> = keep.iter().copied().collect();
        let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
        let inertia: Vec<f64> = kept.iter().map(|&i| self.inertia[i]).collect();
        if elim.is_empty() {
            return Ok(self.clone());
        }

        let l = self.laplacian();
        let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| l[(rows[r], cols[c])]);
        let l_kk = block(&kept, &kept);
        let l_ke = block(&kept, &elim);
        let l_ee = block(&elim, &elim);
        let lu = l_ee.lu();
        let solved = lu.solve(&l_ke.transpose()).ok_or(GridError::SingularInteriorBlock)?;
        if solved.iter().any(|v| !v.is_finite()) {
            return Err(GridError::SingularInteriorBlock);
        }
        let reduced = l_kk - l_ke * solved;

        let max_w = self.lines.iter().map(|l| l.sensitivity).fold(1.0_f64, f64::max);
        let threshold = PRUNE_RELATIVE * max_w;
        let mut lines = Vec::new();
        for i in 0..kept.len() {
            for j in (i + 1)..kept.len() {
                let w = -0.5 * (reduced[(i, j)] + reduced[(j, i)]);
                if w > threshold {
                    lines.push((i, j, w));
                }
            }
        }
        let mut out = PowerNetwork::build(inertia, lines, 1)?;
        out.baseline = self.baseline;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_to_triangle() {
        let star = PowerNetwork::new(vec![1.0; 4], [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let k3 = star.kron_reduce(&[1, 2, 3]).unwrap();
        assert_eq!(k3.n_lines(), 3);
        for l in k3.lines() {
            assert!((l.sensitivity - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn keep_all_is_identity() {
        let net = PowerNetwork::new(vec![1.0, 2.0, 3.0], [(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        assert_eq!(net.kron_reduce(&[2, 0, 1]).unwrap(), net);
    }

    #[test]
    fn empty_keep_set() {
        let net = PowerNetwork::new(vec![1.0; 2], [(0, 1, 1.0)]).unwrap();
        assert_eq!(net.kron_reduce(&[]).unwrap_err(), GridError::EmptyKeepSet);
    }

    #[test]
    fn path_reduces_to_series_line() {
        // Two lines in series: 1/(1/2 + 1/3) = 6/5.
        let net = PowerNetwork::new(vec![1.0; 3], [(0, 1, 2.0), (1, 2, 3.0)]).unwrap();
        let red = net.kron_reduce(&[0, 2]).unwrap();
        assert!((red.lines()[0].sensitivity - 1.2).abs() < 1e-14);
    }
}
