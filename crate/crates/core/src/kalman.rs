//! Constant-velocity Kalman filter over `(cx, cy, a, h)` box measurements.
//!
//! State is `(cx, cy, a, h, vcx, vcy, va, vh)` with a unit time step. Noise
//! standard deviations scale with the box height: position terms use a
//! weight of 1/20 and velocity terms 1/160.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = [f64; 4];

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    #[error("measurement has non-finite components: {0:?}")]
    NonFinite(Measurement),
    #[error("measurement height must be positive, got {0}")]
    NonPositiveHeight(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn measurement(&self) -> Measurement {
        [self.mean[0], self.mean[1], self.mean[2], self.mean[3]]
    }

    /// Max absolute asymmetry `|P - P^T|`.
    pub fn asymmetry(&self) -> f64 {
        (self.covariance - self.covariance.transpose()).amax()
    }
}

fn check(m: &Measurement) -> Result<(), KalmanError> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(KalmanError::NonFinite(*m));
    }
    if m[3] <= 0.0 {
        return Err(KalmanError::NonPositiveHeight(m[3]));
    }
    Ok(())
}

fn diag_sq(std: [f64; 8]) -> StateCovariance {
    StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)))
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

pub fn initiate(m: Measurement) -> Result<KalmanState, KalmanError> {
    check(&m)?;
    let h = m[3];
    let p = 2.0 * STD_WEIGHT_POSITION * h;
    let v = 10.0 * STD_WEIGHT_VELOCITY * h;
    Ok(KalmanState {
        mean: StateVector::from([m[0], m[1], m[2], m[3], 0.0, 0.0, 0.0, 0.0]),
        covariance: diag_sq([p, p, 1e-2, p, v, v, 1e-5, v]),
    })
}

pub fn predict(state: &KalmanState) -> KalmanState {
    let h = state.mean[3];
    let p = STD_WEIGHT_POSITION * h;
    let v = STD_WEIGHT_VELOCITY * h;
    let q = diag_sq([p, p, 1e-2, p, v, v, 1e-5, v]);
    let f = transition();
    let cov = f * state.covariance * f.transpose() + q;
    KalmanState {
        mean: f * state.mean,
        covariance: (cov + cov.transpose()) * 0.5,
    }
}

pub fn update(state: &KalmanState, m: Measurement) -> Result<KalmanState, KalmanError> {
    check(&m)?;
    let h = state.mean[3];
    let p = STD_WEIGHT_POSITION * h;
    let r = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::from([p * p, p * p, 1e-2, p * p]));

    let proj = state.covariance.fixed_view::<4, 4>(0, 0).into_owned() + r;
    let cross = state.covariance.fixed_view::<8, 4>(0, 0).into_owned();
    let chol = proj.cholesky().ok_or(KalmanError::SingularInnovation)?;
    // K = P H^T S^-1, solved as S K^T = (P H^T)^T.
    let gain = chol.solve(&cross.transpose()).transpose();

    let innovation = SVector::<f64, 4>::from(m) - state.mean.fixed_rows::<4>(0);
    let mean = state.mean + gain * innovation;
    let cov = state.covariance - gain * proj * gain.transpose();
    Ok(KalmanState {
        mean,
        covariance: (cov + cov.transpose()) * 0.5,
    })
}
