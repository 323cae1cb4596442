//! Constant-velocity EKF over `[p; v]` with a stereo-plus-range measurement
//! `z = [u, v, d_u, d_r]`.

use nalgebra::{Matrix3, Matrix4, Matrix4x6, Matrix6, Matrix6x3, SMatrix, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateVector = Vector6<f64>;
pub type MeasurementVector = Vector4<f64>;

pub const DEFAULT_ACCEL_VARIANCE: f64 = 1e-4;
pub const DEFAULT_R_DIAG: [f64; 4] = [4.0, 4.0, 4.0, 2.5e-5];
pub const DEFAULT_P0_DIAG: [f64; 6] = [1e-2; 6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("time step {0} s is not positive")]
    NonPositiveDt(f64),
    #[error("acceleration variance {0} is negative")]
    NegativeVariance(f64),
    #[error("state depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),
}

/// Rectified camera parameters used by the measurement model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub f_u: f64,
    pub f_v: f64,
    pub c_u: f64,
    pub c_v: f64,
    pub baseline: f64,
}

/// Process and measurement noise. The acceleration entries are variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub accel_variance: [f64; 3],
    pub r_diag: [f64; 4],
    pub p0_diag: [f64; 6],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { accel_variance: [DEFAULT_ACCEL_VARIANCE; 3], r_diag: DEFAULT_R_DIAG, p0_diag: DEFAULT_P0_DIAG }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), EkfError> {
        if let Some(v) = self.accel_variance.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(EkfError::NegativeVariance(*v));
        }
        if self.r_diag.iter().chain(&self.p0_diag).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(EkfError::InvalidNoise("covariance diagonals must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn r(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.r_diag))
    }

    pub fn p0(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from(self.p0_diag))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub x: StateVector,
    pub p: Matrix6<f64>,
    pub last_update: f64,
    pub target_id: u32,
}

impl TrackState {
    /// Back-projects the left-image point `(u, v)` at depth `z`, zero velocity.
    pub fn initialize(target_id: u32, t: f64, u: f64, v: f64, z: f64, cam: &CameraParams, p0: Matrix6<f64>) -> Result<Self, EkfError> {
        if !(z > 0.0) {
            return Err(EkfError::NonPositiveDepth(z));
        }
        let x = Vector6::new((u - cam.c_u) * z / cam.f_u, (v - cam.c_v) * z / cam.f_v, z, 0.0, 0.0, 0.0);
        Ok(Self { x, p: p0, last_update: t, target_id })
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into()
    }
}

fn check_dt(dt: f64) -> Result<(), EkfError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(EkfError::NonPositiveDt(dt));
    }
    Ok(())
}

/// State transition `A` and input matrix `B` for step `dt`.
pub fn build_ab(dt: f64) -> Result<(Matrix6<f64>, Matrix6x3<f64>), EkfError> {
    check_dt(dt)?;
    let i3 = Matrix3::<f64>::identity();
    let mut a = Matrix6::identity();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(i3 * dt));
    let mut b = Matrix6x3::zeros();
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(i3 * (0.5 * dt * dt)));
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&(i3 * dt));
    Ok((a, b))
}

/// Discrete white-acceleration process noise with blocks
/// `¼dt⁴Q_b, ½dt³Q_b, dt²Q_b`, `Q_b = diag(σ_x, σ_y, σ_z)` (variances).
pub fn build_q(dt: f64, accel_variance: [f64; 3]) -> Result<Matrix6<f64>, EkfError> {
    check_dt(dt)?;
    if let Some(v) = accel_variance.iter().find(|v| !(**v >= 0.0)) {
        return Err(EkfError::NegativeVariance(*v));
    }
    let qb = Matrix3::from_diagonal(&Vector3::from(accel_variance));
    let mut q = Matrix6::zeros();
    q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(qb * (0.25 * dt.powi(4))));
    q.fixed_view_mut::<3, 3>(0, 3).copy_from(&(qb * (0.5 * dt.powi(3))));
    q.fixed_view_mut::<3, 3>(3, 0).copy_from(&(qb * (0.5 * dt.powi(3))));
    q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(qb * (dt * dt)));
    Ok(q)
}

/// `h(x) = [f_u p_x/p_z + c_u, f_v p_y/p_z + c_v, b f_u/p_z, p_z]`.
pub fn measure_h(x: &StateVector, cam: &CameraParams) -> Result<MeasurementVector, EkfError> {
    let (px, py, pz) = (x[0], x[1], x[2]);
    if !(pz > 0.0) {
        return Err(EkfError::NonPositiveDepth(pz));
    }
    Ok(Vector4::new(
        cam.f_u * px / pz + cam.c_u,
        cam.f_v * py / pz + cam.c_v,
        cam.baseline * cam.f_u / pz,
        pz,
    ))
}

pub fn jacobian_h(x: &StateVector, cam: &CameraParams) -> Result<Matrix4x6<f64>, EkfError> {
    let (px, py, pz) = (x[0], x[1], x[2]);
    if !(pz > 0.0) {
        return Err(EkfError::NonPositiveDepth(pz));
    }
    let pz2 = pz * pz;
    let mut h = Matrix4x6::zeros();
    h[(0, 0)] = cam.f_u / pz;
    h[(0, 2)] = -cam.f_u * px / pz2;
    h[(1, 1)] = cam.f_v / pz;
    h[(1, 2)] = -cam.f_v * py / pz2;
    h[(2, 2)] = -cam.baseline * cam.f_u / pz2;
    h[(3, 2)] = 1.0;
    Ok(h)
}

/// `x⁻ = A x + B u`, `P⁻ = A P Aᵀ + Q`.
pub fn predict(track: &TrackState, u: &Vector3<f64>, dt: f64, q: &Matrix6<f64>) -> Result<TrackState, EkfError> {
    let (a, b) = build_ab(dt)?;
    Ok(TrackState {
        x: a * track.x + b * u,
        p: a * track.p * a.transpose() + q,
        last_update: track.last_update + dt,
        target_id: track.target_id,
    })
}

pub fn update(prior: &TrackState, z: &MeasurementVector, cam: &CameraParams, r: &Matrix4<f64>) -> Result<TrackState, EkfError> {
    let h = jacobian_h(&prior.x, cam)?;
    let innovation = z - measure_h(&prior.x, cam)?;
    let s = h * prior.p * h.transpose() + r;
    let s_inv = match s.cholesky() {
        Some(c) => c.inverse(),
        None => s.try_inverse().ok_or(EkfError::SingularInnovation)?,
    };
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(EkfError::SingularInnovation);
    }
    let k: SMatrix<f64, 6, 4> = prior.p * h.transpose() * s_inv;
    let x = prior.x + k * innovation;
    let p = (Matrix6::identity() - k * h) * prior.p;
    let p = (p + p.transpose()) * 0.5;
    Ok(TrackState { x, p, last_update: prior.last_update, target_id: prior.target_id })
}

/// Filter settings shared by all tracks of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfParams {
    pub camera: CameraParams,
    pub accel_variance: [f64; 3],
    pub r: Matrix4<f64>,
}

/// Predicts to `t` and, when a measurement is present, updates.
/// Returns `(prior, posterior)`; without a measurement they are equal.
pub fn step(
    track: &TrackState,
    u: &Vector3<f64>,
    t: f64,
    z: Option<&MeasurementVector>,
    params: &EkfParams,
) -> Result<(TrackState, TrackState), EkfError> {
    let dt = t - track.last_update;
    let q = build_q(dt, params.accel_variance)?;
    let mut prior = predict(track, u, dt, &q)?;
    prior.last_update = t;
    let posterior = match z {
        Some(z) => update(&prior, z, &params.camera, &params.r)?,
        None => prior.clone(),
    };
    Ok((prior, posterior))
}
