//! Pixel grids and sinogram grids.
//!
//! Images are square `N x N` grids with physical support `[-1, 1]^2`; pixel
//! `(row, col)` is centered at `(x_col, y_row)` with `x_i = y_i = -1 + (i +
//! 1/2) * 2/N` (the `y` axis grows with the row index).  Sinograms are
//! `N_phi x N_s` grids over equispaced angles `phi_k = k pi / N_phi` and
//! detector offsets placed at the cell centers of a uniform partition of
//! `[-1.5, 1.5]`.

use ndarray::Array2;

use crate::error::{AnettError, Result};

/// Half-width of the detector line; offsets live in `[-DETECTOR_HALF_WIDTH,
/// DETECTOR_HALF_WIDTH]`.
pub const DETECTOR_HALF_WIDTH: f64 = 1.5;

/// A square real-valued pixel grid, the unknown `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    n: usize,
    data: Array2<f64>,
}

impl Image {
    /// Builds an `n x n` image from row-major values.  Requires `n >= 2`,
    /// `data.len() == n * n` and finite entries.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(AnettError::domain(format!("image size {n} < 2")));
        }
        if data.len() != n * n {
            return Err(AnettError::dim(format!(
                "image payload has {} values, expected {}",
                data.len(),
                n * n
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(AnettError::domain("image contains non-finite values"));
        }
        let data = Array2::from_shape_vec((n, n), data).expect("length checked");
        Ok(Image { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 2, "image size must be at least 2");
        Image {
            n,
            data: Array2::zeros((n, n)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Pixel side length in physical units.
    pub fn pixel_width(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("images are standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data
            .as_slice_mut()
            .expect("images are standard layout")
    }

    pub fn max_value(&self) -> f64 {
        self.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Physical coordinate of cell center `i` on an `n`-cell uniform partition
/// of `[lo, hi]`.
pub(crate) fn cell_center(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (i as f64 + 0.5) * (hi - lo) / n as f64
}

/// Parallel-beam scan geometry: angle `k` is `k pi / N_phi`, detector offset
/// `j` is the center of cell `j` of a uniform partition of `[-1.5, 1.5]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanGeometry {
    n_angles: usize,
    n_detectors: usize,
}

impl ScanGeometry {
    pub fn new(n_angles: usize, n_detectors: usize) -> Result<Self> {
        if n_angles < 1 {
            return Err(AnettError::domain("scan geometry needs at least one angle"));
        }
        if n_detectors < 2 {
            return Err(AnettError::domain(
                "scan geometry needs at least two detectors",
            ));
        }
        Ok(ScanGeometry {
            n_angles,
            n_detectors,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * std::f64::consts::PI / self.n_angles as f64
    }

    pub fn detector_offset(&self, j: usize) -> f64 {
        cell_center(-DETECTOR_HALF_WIDTH, DETECTOR_HALF_WIDTH, self.n_detectors, j)
    }

    /// Width of one detector cell.
    pub fn detector_spacing(&self) -> f64 {
        2.0 * DETECTOR_HALF_WIDTH / self.n_detectors as f64
    }

    pub fn len(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Radon-transform data: one row per angle, one column per detector offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    geometry: ScanGeometry,
    data: Array2<f64>,
}

impl Sinogram {
    pub fn new(geometry: ScanGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(AnettError::dim(format!(
                "sinogram payload has {} values, expected {} x {}",
                data.len(),
                geometry.n_angles(),
                geometry.n_detectors()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(AnettError::domain("sinogram contains non-finite values"));
        }
        let data = Array2::from_shape_vec((geometry.n_angles(), geometry.n_detectors()), data)
            .expect("length checked");
        Ok(Sinogram { geometry, data })
    }

    pub fn zeros(geometry: ScanGeometry) -> Self {
        Sinogram {
            geometry,
            data: Array2::zeros((geometry.n_angles(), geometry.n_detectors())),
        }
    }

    pub fn geometry(&self) -> ScanGeometry {
        self.geometry
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("sinograms are standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data
            .as_slice_mut()
            .expect("sinograms are standard layout")
    }

    pub fn mean(&self) -> f64 {
        let s = self.as_slice();
        s.iter().sum::<f64>() / s.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_shapes() {
        assert!(Image::new(1, vec![0.0]).is_err());
        assert!(Image::new(2, vec![0.0; 3]).is_err());
        assert!(Image::new(2, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        assert!(Image::new(2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn geometry_samples_match_definitions() {
        let g = ScanGeometry::new(4, 6).unwrap();
        assert_eq!(g.angle(0), 0.0);
        assert!((g.angle(2) - std::f64::consts::PI / 2.0).abs() < 1e-15);
        // cell centers of [-1.5, 1.5] split into 6 cells
        assert!((g.detector_offset(0) + 1.25).abs() < 1e-15);
        assert!((g.detector_offset(5) - 1.25).abs() < 1e-15);
        assert!((g.detector_spacing() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn geometry_rejects_degenerate() {
        assert!(ScanGeometry::new(0, 4).is_err());
        assert!(ScanGeometry::new(3, 1).is_err());
    }

    #[test]
    fn sinogram_shape_is_checked() {
        let g = ScanGeometry::new(3, 4).unwrap();
        assert!(Sinogram::new(g, vec![0.0; 11]).is_err());
        assert!(Sinogram::new(g, vec![0.0; 12]).is_ok());
    }
}
