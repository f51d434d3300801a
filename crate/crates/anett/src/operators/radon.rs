//! Ray-driven discretization of the parallel-beam Radon transform.
//!
//! Entry `(k, j)` of the forward map approximates the line integral of the
//! bilinear interpolant of the image along the line with angle `phi_k` and
//! signed offset `s_j`, sampled with the midpoint rule at half-pixel steps.
//! Points outside `[-1, 1]^2` contribute zero.  The adjoint scatters through
//! the identical interpolation stencil, so it is the exact transpose of the
//! forward map as a linear operator.

use super::{fbp, FbpFilter, LinearOperator};
use crate::error::{AnettError, Result};
use crate::image::{Image, ScanGeometry, Sinogram};

#[derive(Clone, Copy, Debug)]
pub struct RadonOperator {
    n: usize,
    geometry: ScanGeometry,
}

/// Rays are integrated over `t` in `[-sqrt(2), sqrt(2)]`, which covers every
/// line segment intersecting `[-1, 1]^2`.
const RAY_HALF_LENGTH: f64 = std::f64::consts::SQRT_2;

impl RadonOperator {
    pub fn new(n: usize, geometry: ScanGeometry) -> Result<Self> {
        if n < 2 {
            return Err(AnettError::domain(format!("image size {n} < 2")));
        }
        Ok(RadonOperator { n, geometry })
    }

    pub fn image_size(&self) -> usize {
        self.n
    }

    pub fn geometry(&self) -> ScanGeometry {
        self.geometry
    }

    fn ray_step(&self) -> f64 {
        // half the pixel width
        1.0 / self.n as f64
    }

    fn samples_per_ray(&self) -> usize {
        (2.0 * RAY_HALF_LENGTH / self.ray_step()).ceil() as usize
    }

    /// Visits the bilinear stencil of every sample point along ray `(k, j)`.
    /// The callback receives the flat pixel index and the quadrature weight
    /// (interpolation weight times the ray step).
    fn for_each_ray_weight(&self, k: usize, j: usize, mut visit: impl FnMut(usize, f64)) {
        let n = self.n;
        let ni = n as isize;
        let step = self.ray_step();
        let delta = 2.0 / n as f64;
        let phi = self.geometry.angle(k);
        let s = self.geometry.detector_offset(j);
        let (sin_phi, cos_phi) = phi.sin_cos();
        let m = self.samples_per_ray();
        for sample in 0..m {
            let t = -RAY_HALF_LENGTH + (sample as f64 + 0.5) * step;
            let px = s * cos_phi - t * sin_phi;
            let py = s * sin_phi + t * cos_phi;
            // fractional pixel-center coordinates
            let u = (px + 1.0) / delta - 0.5;
            let v = (py + 1.0) / delta - 0.5;
            let i0 = u.floor();
            let j0 = v.floor();
            let fu = u - i0;
            let fv = v - j0;
            let i0 = i0 as isize;
            let j0 = j0 as isize;
            let weights = [
                (i0, j0, (1.0 - fu) * (1.0 - fv)),
                (i0 + 1, j0, fu * (1.0 - fv)),
                (i0, j0 + 1, (1.0 - fu) * fv),
                (i0 + 1, j0 + 1, fu * fv),
            ];
            for (ix, iy, w) in weights {
                if ix >= 0 && ix < ni && iy >= 0 && iy < ni && w != 0.0 {
                    visit(iy as usize * n + ix as usize, w * step);
                }
            }
        }
    }

    pub fn forward(&self, img: &Image) -> Result<Sinogram> {
        if img.n() != self.n {
            return Err(AnettError::dim(format!(
                "image size {} does not match operator size {}",
                img.n(),
                self.n
            )));
        }
        Sinogram::new(self.geometry, self.apply(img.as_slice()))
    }

    pub fn adjoint(&self, sino: &Sinogram) -> Result<Image> {
        if sino.geometry() != self.geometry {
            return Err(AnettError::dim(
                "sinogram geometry does not match operator geometry",
            ));
        }
        Image::new(self.n, self.apply_adjoint(sino.as_slice()))
    }

    /// Filtered backprojection with this operator's geometry.
    pub fn fbp(&self, sino: &Sinogram, filter: FbpFilter) -> Result<Image> {
        fbp(sino, self.n, filter)
    }
}

impl LinearOperator for RadonOperator {
    fn domain_len(&self) -> usize {
        self.n * self.n
    }

    fn range_len(&self) -> usize {
        self.geometry.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.domain_len());
        let mut out = vec![0.0; self.range_len()];
        for k in 0..self.geometry.n_angles() {
            for j in 0..self.geometry.n_detectors() {
                let mut acc = 0.0;
                self.for_each_ray_weight(k, j, |px, w| acc += w * x[px]);
                out[k * self.geometry.n_detectors() + j] = acc;
            }
        }
        out
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.range_len());
        let mut out = vec![0.0; self.domain_len()];
        for k in 0..self.geometry.n_angles() {
            for j in 0..self.geometry.n_detectors() {
                let val = y[k * self.geometry.n_detectors() + j];
                if val != 0.0 {
                    self.for_each_ray_weight(k, j, |px, w| out[px] += w * val);
                }
            }
        }
        out
    }

    fn approx_inverse(&self, y: &[f64]) -> Vec<f64> {
        let sino = Sinogram::new(self.geometry, y.to_vec()).expect("caller passes matching shape");
        self.fbp(&sino, FbpFilter::RamLak)
            .expect("shapes match by construction")
            .as_slice()
            .to_vec()
    }
}
