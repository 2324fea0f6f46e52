//! Constant-velocity Kalman filter over `[cx, cy, w, h, vcx, vcy, vw, vh]`.
//!
//! Noise follows the usual tracking-by-detection convention: standard
//! deviations proportional to the box height, so the filter is scale-free.

use thiserror::Error;

use crate::geometry::BBox;
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 8;
pub const MEASUREMENT_DIM: usize = 4;

/// Pivot magnitude below which the innovation covariance is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KalmanError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub mean: Vector<T, STATE_DIM>,
    pub covariance: Matrix<T, STATE_DIM, STATE_DIM>,
}

impl<T: Scalar> KalmanState<T> {
    pub fn new(mean: [T; STATE_DIM], covariance: Matrix<T, STATE_DIM, STATE_DIM>) -> Self {
        Self { mean: Vector::from_array(mean), covariance }
    }

    pub fn bbox(&self) -> BBox<T> {
        let m = self.mean.to_array();
        BBox::from_center(m[0], m[1], m[2].max(T::zero()), m[3].max(T::zero()))
    }

    /// Symmetric within `tol` and no negative diagonal entry.
    pub fn covariance_is_valid(&self, tol: T) -> bool {
        self.covariance.asymmetry() <= tol
            && (0..STATE_DIM).all(|i| self.covariance[(i, i)] >= -tol)
    }
}

pub fn measurement_of<T: Scalar>(b: &BBox<T>) -> Vector<T, MEASUREMENT_DIM> {
    let (cx, cy) = b.center();
    Vector::from_array([cx, cy, b.w, b.h])
}

/// One-frame constant-velocity transition.
pub fn transition<T: Scalar>() -> Matrix<T, STATE_DIM, STATE_DIM> {
    let mut f = Matrix::identity();
    for i in 0..MEASUREMENT_DIM {
        f[(i, MEASUREMENT_DIM + i)] = T::one();
    }
    f
}

pub fn observation<T: Scalar>() -> Matrix<T, MEASUREMENT_DIM, STATE_DIM> {
    Matrix::from_fn(|r, c| if r == c { T::one() } else { T::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter<T> {
    pub process_noise_scale: T,
    pub measurement_noise_scale: T,
    pub position_weight: T,
    pub velocity_weight: T,
}

impl<T: Scalar> Default for KalmanFilter<T> {
    fn default() -> Self {
        Self::new(T::one(), T::one())
    }
}

impl<T: Scalar> KalmanFilter<T> {
    pub fn new(process_noise_scale: T, measurement_noise_scale: T) -> Self {
        Self {
            process_noise_scale,
            measurement_noise_scale,
            position_weight: T::lit(1.0 / 20.0),
            velocity_weight: T::lit(1.0 / 160.0),
        }
    }

    fn height_of(mean: &Vector<T, STATE_DIM>) -> T {
        let h = mean[(3, 0)].abs();
        if h > T::zero() { h } else { T::one() }
    }

    /// Starts a track at rest on the measured box.
    pub fn initiate(&self, z: &BBox<T>) -> KalmanState<T> {
        let m = measurement_of(z).to_array();
        let h = if z.h > T::zero() { z.h } else { T::one() };
        let p = T::lit(2.0) * self.position_weight * h;
        let v = T::lit(10.0) * self.velocity_weight * h;
        let (p2, v2) = (p * p, v * v);
        KalmanState::new(
            [m[0], m[1], m[2], m[3], T::zero(), T::zero(), T::zero(), T::zero()],
            Matrix::from_diagonal([p2, p2, p2, p2, v2, v2, v2, v2]),
        )
    }

    pub fn process_noise(&self, mean: &Vector<T, STATE_DIM>) -> Matrix<T, STATE_DIM, STATE_DIM> {
        let h = Self::height_of(mean);
        let p = self.position_weight * h;
        let v = self.velocity_weight * h;
        let (p2, v2) = (p * p * self.process_noise_scale, v * v * self.process_noise_scale);
        Matrix::from_diagonal([p2, p2, p2, p2, v2, v2, v2, v2])
    }

    pub fn measurement_noise(
        &self,
        mean: &Vector<T, STATE_DIM>,
    ) -> Matrix<T, MEASUREMENT_DIM, MEASUREMENT_DIM> {
        let h = Self::height_of(mean);
        let p = self.position_weight * h;
        let r = p * p * self.measurement_noise_scale;
        Matrix::from_diagonal([r, r, r, r])
    }

    /// `x ← F x`, `P ← F P Fᵀ + Q`.
    pub fn predict(&self, s: &KalmanState<T>) -> KalmanState<T> {
        let f = transition::<T>();
        let mean = f * s.mean;
        let covariance = (f * s.covariance * f.transpose() + self.process_noise(&s.mean)).symmetrized();
        KalmanState { mean, covariance }
    }

    /// Corrects `s` with the measured box, using the Joseph form for the
    /// covariance so it stays symmetric positive semidefinite.
    pub fn update(&self, s: &KalmanState<T>, z: &BBox<T>) -> Result<KalmanState<T>, KalmanError> {
        let h = observation::<T>();
        let r = self.measurement_noise(&s.mean);
        let ht = h.transpose();
        let innovation_cov = h * s.covariance * ht + r;
        let s_inv = innovation_cov
            .try_inverse(T::lit(SINGULAR_TOLERANCE))
            .ok_or(KalmanError::SingularInnovation)?;
        let gain = s.covariance * ht * s_inv;
        let residual = measurement_of(z) - h * s.mean;
        let mean = s.mean + gain * residual;
        let i_kh = Matrix::<T, STATE_DIM, STATE_DIM>::identity() - gain * h;
        let covariance =
            (i_kh * s.covariance * i_kh.transpose() + gain * r * gain.transpose()).symmetrized();
        Ok(KalmanState { mean, covariance })
    }
}
