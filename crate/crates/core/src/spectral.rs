//! SVD partitioning at a threshold, the primitive behind every basis split.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Relative cutoff for pseudo-inversion: singular values at or below
/// `PINV_RELATIVE_CUTOFF * sigma_max` are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Full SVD of a matrix with the right factor partitioned at a threshold.
///
/// `singular_values` has one entry per input column (nonincreasing); when the
/// input has fewer rows than columns the tail entries are exact zeros for the
/// null directions, so the split always sees the complete right factor.
/// Columns with singular value strictly above the threshold land in
/// `right_above`, the rest (ties included) in `right_below`.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub left: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right_above: DMatrix<f64>,
    pub right_below: DMatrix<f64>,
    pub threshold: f64,
}

impl SpectralSplit {
    pub fn n_above(&self) -> usize {
        self.right_above.ncols()
    }

    pub fn n_below(&self) -> usize {
        self.right_below.ncols()
    }
}

/// Splits the column space of `m` at `threshold`.
pub fn spectral_split(m: &DMatrix<f64>, threshold: f64) -> Result<SpectralSplit> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::invalid_config(format!(
            "spectral threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_split input"));
    }
    let (nrows, ncols) = m.shape();
    if ncols == 0 {
        return Ok(SpectralSplit {
            left: DMatrix::zeros(nrows, 0),
            singular_values: DVector::zeros(0),
            right_above: DMatrix::zeros(0, 0),
            right_below: DMatrix::zeros(0, 0),
            threshold,
        });
    }

    // Thin SVD of a matrix with fewer rows than columns drops the null
    // directions from the right factor; padding with zero rows makes the
    // factor square without changing the nonzero spectrum.
    let padded;
    let work: &DMatrix<f64> = if nrows < ncols {
        padded = {
            let mut p = DMatrix::zeros(ncols, ncols);
            p.view_mut((0, 0), (nrows, ncols)).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };

    let svd = SVD::new(work.clone(), true, true);
    let u = svd.u.expect("svd requested u");
    let v = svd.v_t.expect("svd requested v_t").transpose();
    let sv = svd.singular_values;

    // nalgebra does not promise ordering; sort descending, stable in the
    // original column order on ties.
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));

    let singular_values = DVector::from_fn(sv.len(), |i, _| sv[order[i]]);
    let mut left = DMatrix::zeros(nrows, order.len());
    let mut right = DMatrix::zeros(ncols, order.len());
    for (j, &src) in order.iter().enumerate() {
        left.set_column(j, &u.column(src).rows(0, nrows).into_owned());
        right.set_column(j, &v.column(src));
    }

    let n_above = singular_values.iter().filter(|&&s| s > threshold).count();
    let right_above = right.columns(0, n_above).into_owned();
    let right_below = right.columns(n_above, ncols - n_above).into_owned();

    Ok(SpectralSplit {
        left,
        singular_values,
        right_above,
        right_below,
        threshold,
    })
}

/// Moore-Penrose pseudo-inverse with the relative cutoff
/// `PINV_RELATIVE_CUTOFF * sigma_max`.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudo_inverse input"));
    }
    let (nrows, ncols) = m.shape();
    if nrows == 0 || ncols == 0 {
        return Ok(DMatrix::zeros(ncols, nrows));
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("svd requested u");
    let v = svd.v_t.expect("svd requested v_t").transpose();
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = PINV_RELATIVE_CUTOFF * smax;
    let mut out = DMatrix::zeros(ncols, nrows);
    for i in 0..sv.len() {
        if sv[i] > cutoff {
            // out += (1/sigma) v_i u_i^T, accumulated without forming the
            // rank-1 matrix.
            let vi = v.column(i);
            let ui = u.column(i);
            let inv = 1.0 / sv[i];
            for c in 0..nrows {
                let scale = inv * ui[c];
                for r in 0..ncols {
                    out[(r, c)] += scale * vi[r];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reconstruct(split: &SpectralSplit) -> DMatrix<f64> {
        let ncols = split.singular_values.len();
        let mut right = DMatrix::zeros(split.right_above.nrows(), ncols);
        right
            .columns_mut(0, split.n_above())
            .copy_from(&split.right_above);
        right
            .columns_mut(split.n_above(), split.n_below())
            .copy_from(&split.right_below);
        let sigma = DMatrix::from_diagonal(&split.singular_values);
        &split.left * sigma * right.transpose()
    }

    #[test]
    fn diagonal_matrix_partitions_by_magnitude() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.1]));
        let s = spectral_split(&m, 0.5).unwrap();
        assert_eq!(s.n_above(), 2);
        assert_eq!(s.n_below(), 1);
        assert_relative_eq!(s.singular_values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.singular_values[2], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn zero_matrix_is_entirely_vanishing() {
        let m = DMatrix::<f64>::zeros(4, 3);
        let s = spectral_split(&m, 0.0).unwrap();
        assert_eq!(s.n_above(), 0);
        assert_eq!(s.n_below(), 3);
    }

    #[test]
    fn tie_at_threshold_goes_to_the_vanishing_side() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let probe = spectral_split(&m, 0.0).unwrap();
        let tie = probe.singular_values[1];
        let s = spectral_split(&m, tie).unwrap();
        assert_eq!(s.n_above(), 1);
        assert_eq!(s.n_below(), 1);
    }

    #[test]
    fn rank_deficient_directions_are_annihilated() {
        // Third column is the sum of the first two.
        let mut m = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let col2 = m.column(0) + m.column(1);
        m.set_column(2, &col2);
        let s = spectral_split(&m, 1e-10).unwrap();
        assert_eq!(s.n_below(), 1);
        assert!((&m * &s.right_below).norm() <= 1e-8);
        // Blocks are mutually orthogonal.
        let cross = s.right_above.transpose() * &s.right_below;
        assert!(cross.norm() <= 1e-10);
    }

    #[test]
    fn wide_matrix_exposes_the_null_space() {
        let m = DMatrix::from_fn(2, 5, |i, j| (1 + i + j) as f64);
        let s = spectral_split(&m, 1e-10).unwrap();
        assert_eq!(s.singular_values.len(), 5);
        assert!(s.n_below() >= 3);
        assert!((&m * &s.right_below).norm() <= 1e-8);
        for k in 1..s.singular_values.len() {
            assert!(s.singular_values[k] <= s.singular_values[k - 1]);
        }
    }

    #[test]
    fn factors_reconstruct_the_input() {
        let m = DMatrix::from_fn(5, 4, |i, j| ((i as f64) - 1.5 * (j as f64)).cos());
        let s = spectral_split(&m, 0.3).unwrap();
        let smax = s.singular_values[0];
        assert!((reconstruct(&s) - &m).norm() <= 1e-8 * smax.max(1.0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(spectral_split(&m, 0.1).is_err());
        let ok = DMatrix::<f64>::identity(2, 2);
        assert!(spectral_split(&ok, -1.0).is_err());
        assert!(spectral_split(&ok, f64::INFINITY).is_err());
    }

    #[test]
    fn pseudo_inverse_satisfies_the_penrose_identity() {
        let a = DMatrix::from_fn(4, 2, |i, j| ((2 * i + j) as f64 * 0.43).sin() + 0.1);
        let pinv = pseudo_inverse(&a).unwrap();
        assert!(((&a * &pinv * &a) - &a).norm() <= 1e-8);
        assert!(((&pinv * &a) - DMatrix::identity(2, 2)).norm() <= 1e-8);

        let rank1 = DMatrix::from_element(3, 3, 1.0);
        let p1 = pseudo_inverse(&rank1).unwrap();
        assert!(((&rank1 * &p1 * &rank1) - &rank1).norm() <= 1e-8);
    }
}
