//! Constant-velocity Kalman filter over (cx, cy, aspect, height) plus
//! velocities, with the squared Mahalanobis distance used for association
//! gating. Noise scales follow the SORT lineage: standard deviations
//! proportional to the box height, position factor 1/20, velocity factor
//! 1/160.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::types::BoundingBox;

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;
type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat4x8 = SMatrix<f64, 4, 8>;

/// 0.95 chi-square quantile at 4 degrees of freedom, the default gate for
/// squared Mahalanobis distances.
pub const CHI2_GATE_95_4DOF: f64 = 9.4877;

/// Floor applied to aspect and height so the state stays physically valid.
const MIN_EXTENT: f64 = 1e-9;

/// Gaussian state estimate: mean (cx, cy, a, h, vx, vy, va, vh) and its 8x8
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: Vec8,
    pub covariance: Mat8,
}

impl MotionState {
    /// Box recovered from the state mean.
    pub fn to_box(&self) -> BoundingBox {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        let w = a * h;
        BoundingBox {
            left: cx - w / 2.0,
            top: cy - h / 2.0,
            right: cx + w / 2.0,
            bottom: cy + h / 2.0,
        }
    }
}

/// Measurement vector (cx, cy, aspect, height) derived from a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub cx: f64,
    pub cy: f64,
    pub aspect: f64,
    pub height: f64,
}

impl Measurement {
    pub fn new(cx: f64, cy: f64, aspect: f64, height: f64) -> Result<Self> {
        if height <= 0.0 || aspect <= 0.0 {
            return Err(Error::invalid(format!(
                "measurement requires positive aspect and height (a={aspect}, h={height})"
            )));
        }
        Ok(Self {
            cx,
            cy,
            aspect,
            height,
        })
    }

    /// Measurement from a box; degenerate boxes are rejected.
    pub fn from_box(b: &BoundingBox) -> Result<Self> {
        let (cx, cy) = b.center();
        let h = b.height();
        if h <= 0.0 || b.width() <= 0.0 {
            return Err(Error::invalid("degenerate box has no measurement"));
        }
        Self::new(cx, cy, b.width() / h, h)
    }

    fn as_vector(&self) -> Vec4 {
        Vec4::new(self.cx, self.cy, self.aspect, self.height)
    }
}

/// The filter itself; holds only the noise scale factors.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

impl KalmanFilter {
    /// New track state from a first measurement: zero velocity, diagonal
    /// covariance scaled by the measured height.
    pub fn initiate(&self, m: &Measurement) -> MotionState {
        let mean = Vec8::from([m.cx, m.cy, m.aspect, m.height, 0.0, 0.0, 0.0, 0.0]);
        let wp = self.std_weight_position;
        let wv = self.std_weight_velocity;
        let std = [
            2.0 * wp * m.height,
            2.0 * wp * m.height,
            1e-2,
            2.0 * wp * m.height,
            10.0 * wv * m.height,
            10.0 * wv * m.height,
            1e-5,
            10.0 * wv * m.height,
        ];
        let mut covariance = Mat8::zeros();
        for (i, s) in std.iter().enumerate() {
            covariance[(i, i)] = s * s;
        }
        MotionState { mean, covariance }
    }

    fn transition() -> Mat8 {
        let mut f = Mat8::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0; // dt = 1 frame
        }
        f
    }

    fn process_noise(&self, height: f64) -> Mat8 {
        let wp = self.std_weight_position;
        let wv = self.std_weight_velocity;
        let std = [
            wp * height,
            wp * height,
            1e-2,
            wp * height,
            wv * height,
            wv * height,
            1e-5,
            wv * height,
        ];
        let mut q = Mat8::zeros();
        for (i, s) in std.iter().enumerate() {
            q[(i, i)] = s * s;
        }
        q
    }

    fn measurement_noise(&self, height: f64) -> Mat4 {
        let wp = self.std_weight_position;
        let std = [wp * height, wp * height, 1e-1, wp * height];
        let mut r = Mat4::zeros();
        for (i, s) in std.iter().enumerate() {
            r[(i, i)] = s * s;
        }
        r
    }

    fn observation() -> Mat4x8 {
        let mut h = Mat4x8::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        h
    }

    /// One prediction step: position += velocity, covariance grows by the
    /// process noise.
    pub fn predict(&self, state: &MotionState) -> MotionState {
        let f = Self::transition();
        let q = self.process_noise(state.mean[3]);
        let mut mean = f * state.mean;
        mean[2] = mean[2].max(MIN_EXTENT);
        mean[3] = mean[3].max(MIN_EXTENT);
        let covariance = f * state.covariance * f.transpose() + q;
        MotionState {
            mean,
            covariance: symmetrize(&covariance),
        }
    }

    /// Projects the state into measurement space: (H mean, H P H^T + R).
    pub fn project(&self, state: &MotionState) -> (Vec4, Mat4) {
        let h = Self::observation();
        let r = self.measurement_noise(state.mean[3]);
        let mean = h * state.mean;
        let cov = h * state.covariance * h.transpose() + r;
        (mean, cov)
    }

    /// Standard Kalman correction. Errors if the innovation covariance is not
    /// positive definite.
    pub fn update(&self, state: &MotionState, m: &Measurement) -> Result<MotionState> {
        let (projected_mean, projected_cov) = self.project(state);
        let chol = projected_cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let h = Self::observation();
        // K = P H^T S^-1, via S K^T = H P^T.
        let kt = chol.solve(&(h * state.covariance.transpose()));
        let gain = kt.transpose();
        let innovation = m.as_vector() - projected_mean;
        let mut mean = state.mean + gain * innovation;
        mean[2] = mean[2].max(MIN_EXTENT);
        mean[3] = mean[3].max(MIN_EXTENT);
        // P' = P - K S K^T keeps the result symmetric by construction.
        let covariance = state.covariance - gain * projected_cov * gain.transpose();
        Ok(MotionState {
            mean,
            covariance: symmetrize(&covariance),
        })
    }

    /// Squared Mahalanobis distance between the predicted measurement and an
    /// observed one.
    pub fn mahalanobis(&self, state: &MotionState, m: &Measurement) -> Result<f64> {
        let (projected_mean, projected_cov) = self.project(state);
        let chol = projected_cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let d = m.as_vector() - projected_mean;
        // Solve L z = d; the squared distance is z^T z.
        let z = chol.l().solve_lower_triangular(&d).ok_or_else(|| {
            Error::Numerical("triangular solve failed in mahalanobis".into())
        })?;
        Ok(z.norm_squared())
    }
}

/// Gate decision: distances at or below the chi-square threshold pass.
pub fn gate(dist: f64, chi2: f64) -> bool {
    dist <= chi2
}

fn symmetrize(m: &Mat8) -> Mat8 {
    (m + m.transpose()) * 0.5
}
