//! Time-local predictive-information controller.
//!
//! Two single-layer networks drive the robot: a controller mapping the five
//! proprioceptive channels to two motor commands through `tanh`, and a linear
//! forward model predicting the next sensor reading from the motor commands.
//! The controller climbs the one-step information surrogate
//!
//! ```text
//! J = ½ ln det(L Lᵀ + σ² I) − (n/2) ln σ²,    L = A · diag(1 − y²) · C
//! ```
//!
//! while the forward model descends its squared prediction error.

mod snapshot;

pub use snapshot::{restore, snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of proprioceptive channels.
pub const SENSOR_DIM: usize = 5;
/// Number of motor commands.
pub const MOTOR_DIM: usize = 2;

pub type SensorArray = SVector<f64, SENSOR_DIM>;
pub type MotorArray = SVector<f64, MOTOR_DIM>;
pub type ControllerMatrix = SMatrix<f64, MOTOR_DIM, SENSOR_DIM>;
pub type ModelMatrix = SMatrix<f64, SENSOR_DIM, MOTOR_DIM>;
type SquareSensor = SMatrix<f64, SENSOR_DIM, SENSOR_DIM>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid learning config: {0}")]
    InvalidConfig(String),
    #[error("snapshot decode failed at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
}

/// Normalized reading of the five selected channels, each clamped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SensorVector {
    pub pitch: f64,
    pub roll: f64,
    pub acc_x: f64,
    pub acc_y: f64,
    pub gyro_z: f64,
}

impl SensorVector {
    pub const ZERO: SensorVector = SensorVector {
        pitch: 0.0,
        roll: 0.0,
        acc_x: 0.0,
        acc_y: 0.0,
        gyro_z: 0.0,
    };

    /// Builds a reading from already-normalized values, clamping each channel
    /// to [-1, 1]. NaN channels collapse to 0.
    pub fn clamped(values: [f64; SENSOR_DIM]) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        SensorVector {
            pitch: c(values[0]),
            roll: c(values[1]),
            acc_x: c(values[2]),
            acc_y: c(values[3]),
            gyro_z: c(values[4]),
        }
    }

    pub fn to_array(self) -> [f64; SENSOR_DIM] {
        [self.pitch, self.roll, self.acc_x, self.acc_y, self.gyro_z]
    }

    pub fn to_vector(self) -> SensorArray {
        SensorArray::from(self.to_array())
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && v.abs() <= 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MotorVector {
    pub speed_cmd: f64,
    pub heading_rate_cmd: f64,
}

impl MotorVector {
    pub fn to_vector(self) -> MotorArray {
        MotorArray::new(self.speed_cmd, self.heading_rate_cmd)
    }

    fn from_vector(v: &MotorArray) -> Self {
        MotorVector {
            speed_cmd: v[0],
            heading_rate_cmd: v[1],
        }
    }
}

/// Sensor-to-motor layer: `y = tanh(C x + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerNet {
    pub weights: ControllerMatrix,
    pub bias: MotorArray,
}

/// Motor-to-next-sensor forward model: `x̂' = A y + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorNet {
    pub weights: ModelMatrix,
    pub bias: SensorArray,
}

/// The unit that is adapted, snapshotted and frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkPair {
    pub controller: ControllerNet,
    pub predictor: PredictorNet,
    /// Adapting updates applied (or attempted) since initialization.
    pub step_count: u64,
}

impl NetworkPair {
    pub fn zeros() -> Self {
        NetworkPair {
            controller: ControllerNet {
                weights: ControllerMatrix::zeros(),
                bias: MotorArray::zeros(),
            },
            predictor: PredictorNet {
                weights: ModelMatrix::zeros(),
                bias: SensorArray::zeros(),
            },
            step_count: 0,
        }
    }

    /// Fresh pair for a pre-adaptation trial: controller weights uniform in
    /// `[-scale, scale]`, everything else zero.
    pub fn random_init<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        Self::random_init_with_model(rng, scale, 0.0)
    }

    /// As [`Self::random_init`], with forward-model weights uniform in
    /// `[-model_scale, model_scale]` (zero when `model_scale` is 0).
    pub fn random_init_with_model<R: Rng + ?Sized>(rng: &mut R, scale: f64, model_scale: f64) -> Self {
        let mut pair = Self::zeros();
        for w in pair.controller.weights.iter_mut() {
            *w = rng.random_range(-scale..=scale);
        }
        if model_scale > 0.0 {
            for w in pair.predictor.weights.iter_mut() {
                *w = rng.random_range(-model_scale..=model_scale);
            }
        }
        pair
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.controller
            .weights
            .iter()
            .chain(self.controller.bias.iter())
            .chain(self.predictor.weights.iter())
            .chain(self.predictor.bias.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.controller
            .weights
            .iter()
            .chain(self.controller.bias.iter())
            .chain(self.predictor.weights.iter())
            .chain(self.predictor.bias.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub eps_controller: f64,
    pub eps_model: f64,
    pub noise_variance: f64,
    pub weight_clip: f64,
    pub gradient_clip: f64,
    pub adapting: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            eps_controller: 0.1,
            eps_model: 0.01,
            noise_variance: 0.01,
            weight_clip: 5.0,
            gradient_clip: 1.0,
            adapting: true,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), PiError> {
        let bad = |what: &str| Err(PiError::InvalidConfig(what.to_string()));
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance must be positive");
        }
        if !(self.weight_clip > 0.0 && self.gradient_clip > 0.0) {
            return bad("clips must be positive");
        }
        if !(self.eps_controller >= 0.0 && self.eps_model >= 0.0) {
            return bad("learning rates must be nonnegative");
        }
        Ok(())
    }

    pub fn frozen(mut self) -> Self {
        self.adapting = false;
        self
    }

    /// Controller rate `eps`, model rate `eps / 10`.
    pub fn with_rate(mut self, eps_controller: f64) -> Self {
        self.eps_controller = eps_controller;
        self.eps_model = eps_controller / 10.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StepDiagnostics {
    pub pi_value: f64,
    pub prediction_error_sq: f64,
    pub controller_grad_norm: f64,
    pub model_grad_norm: f64,
    /// Set when a non-finite gradient caused the update to be dropped.
    pub update_skipped: bool,
}

pub fn controller_step(net: &ControllerNet, x: &SensorVector) -> Result<MotorVector, PiError> {
    let y = (net.weights * x.to_vector() + net.bias).map(f64::tanh);
    if y.iter().all(|v| v.is_finite()) {
        Ok(MotorVector::from_vector(&y))
    } else {
        Err(PiError::NonFinite("controller output"))
    }
}

/// Forward-model prediction of the next (unclamped) sensor vector.
pub fn predict(net: &PredictorNet, y: &MotorVector) -> Result<SensorArray, PiError> {
    let p = net.weights * y.to_vector() + net.bias;
    if p.iter().all(|v| v.is_finite()) {
        Ok(p)
    } else {
        Err(PiError::NonFinite("prediction"))
    }
}

/// Quantities shared by the objective and its gradient.
struct Linearization {
    y: MotorArray,
    slope: MotorArray,
    jacobian: SquareSensor,
    cholesky: nalgebra::Cholesky<f64, nalgebra::Const<SENSOR_DIM>>,
}

fn linearize(pair: &NetworkPair, x: &SensorArray, noise_variance: f64) -> Result<Linearization, PiError> {
    let c = &pair.controller;
    let y = (c.weights * x + c.bias).map(f64::tanh);
    let slope = y.map(|v| 1.0 - v * v);
    let gain = ModelMatrix::from_fn(|i, k| pair.predictor.weights[(i, k)] * slope[k]);
    let jacobian = gain * c.weights;
    let m = jacobian * jacobian.transpose() + SquareSensor::identity() * noise_variance;
    if !m.iter().all(|v| v.is_finite()) {
        return Err(PiError::NonFinite("sensor covariance"));
    }
    let cholesky = m
        .cholesky()
        .ok_or(PiError::NonFinite("cholesky of sensor covariance"))?;
    Ok(Linearization {
        y,
        slope,
        jacobian,
        cholesky,
    })
}

fn objective_from(lin: &Linearization, noise_variance: f64) -> Result<f64, PiError> {
    let half_log_det: f64 = lin.cholesky.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let j = half_log_det - 0.5 * SENSOR_DIM as f64 * noise_variance.ln();
    if !j.is_finite() {
        return Err(PiError::NonFinite("objective"));
    }
    // L Lᵀ is PSD, so J ≥ 0 up to rounding.
    Ok(j.max(0.0))
}

/// One-step predictive-information surrogate, in nats.
pub fn pi_objective(pair: &NetworkPair, x: &SensorVector, cfg: &LearningConfig) -> Result<f64, PiError> {
    if !(cfg.noise_variance > 0.0) {
        return Err(PiError::InvalidConfig("noise_variance must be positive".into()));
    }
    let lin = linearize(pair, &x.to_vector(), cfg.noise_variance)?;
    objective_from(&lin, cfg.noise_variance)
}

/// Analytic gradient of the objective with respect to the controller.
///
/// With `M = L Lᵀ + σ² I` and `G = M⁻¹ L`, `∂J/∂L = G`. The bias gradient
/// flows only through the `tanh` slope; the weight gradient adds the direct
/// term `D Aᵀ G` to the slope term `∂J/∂h · xᵀ`.
fn controller_gradient(pair: &NetworkPair, x: &SensorArray, lin: &Linearization) -> (ControllerMatrix, MotorArray) {
    let a = &pair.predictor.weights;
    let c = &pair.controller.weights;
    let g = lin.cholesky.solve(&lin.jacobian);
    let at_g = a.transpose() * g;
    let through_slope = at_g * c.transpose();
    let grad_h = MotorArray::from_fn(|k, _| {
        through_slope[(k, k)] * (-2.0 * lin.y[k] * lin.slope[k])
    });
    let direct = ControllerMatrix::from_fn(|k, j| lin.slope[k] * at_g[(k, j)]);
    let grad_c = direct + grad_h * x.transpose();
    (grad_c, grad_h)
}

/// Exposed for gradient checking.
pub fn objective_gradient(
    pair: &NetworkPair,
    x: &SensorVector,
    cfg: &LearningConfig,
) -> Result<(ControllerMatrix, MotorArray), PiError> {
    let xv = x.to_vector();
    let lin = linearize(pair, &xv, cfg.noise_variance)?;
    Ok(controller_gradient(pair, &xv, &lin))
}

fn clip_scale(norm: f64, limit: f64) -> f64 {
    if norm > limit {
        limit / norm
    } else {
        1.0
    }
}

/// One learning tick on the transition `x_t → x_next`.
///
/// Diagnostics always describe the pre-update networks. When `cfg.adapting`
/// is false, or both rates are zero, the returned pair is the input pair.
pub fn update_step(
    pair: &NetworkPair,
    x_t: &SensorVector,
    x_next: &SensorVector,
    cfg: &LearningConfig,
) -> Result<(NetworkPair, StepDiagnostics), PiError> {
    cfg.validate()?;
    let xv = x_t.to_vector();
    let lin = linearize(pair, &xv, cfg.noise_variance)?;
    let y = MotorVector::from_vector(&lin.y);
    let error = x_next.to_vector() - predict(&pair.predictor, &y)?;
    let pi_value = objective_from(&lin, cfg.noise_variance)?;

    let (grad_c, grad_h) = controller_gradient(pair, &xv, &lin);
    let grad_a = error * lin.y.transpose();
    let grad_b = error;
    let controller_norm = (grad_c.norm_squared() + grad_h.norm_squared()).sqrt();
    let model_norm = (grad_a.norm_squared() + grad_b.norm_squared()).sqrt();

    let mut diag = StepDiagnostics {
        pi_value,
        prediction_error_sq: error.norm_squared(),
        controller_grad_norm: controller_norm,
        model_grad_norm: model_norm,
        update_skipped: false,
    };

    if !cfg.adapting || (cfg.eps_controller == 0.0 && cfg.eps_model == 0.0) {
        return Ok((*pair, diag));
    }
    if !(controller_norm.is_finite() && model_norm.is_finite()) {
        diag.update_skipped = true;
        let mut next = *pair;
        next.step_count += 1;
        return Ok((next, diag));
    }

    let clip = cfg.weight_clip;
    let rc = cfg.eps_controller * clip_scale(controller_norm, cfg.gradient_clip);
    let rm = cfg.eps_model * clip_scale(model_norm, cfg.gradient_clip);
    let mut next = *pair;
    // ascent on J for the controller, descent on ½‖ξ‖² for the model
    next.controller.weights = (pair.controller.weights + grad_c * rc).map(|w| w.clamp(-clip, clip));
    next.controller.bias = (pair.controller.bias + grad_h * rc).map(|w| w.clamp(-clip, clip));
    next.predictor.weights = (pair.predictor.weights + grad_a * rm).map(|w| w.clamp(-clip, clip));
    next.predictor.bias = (pair.predictor.bias + grad_b * rm).map(|w| w.clamp(-clip, clip));
    next.step_count += 1;
    if !next.is_finite() {
        diag.update_skipped = true;
        let mut kept = *pair;
        kept.step_count += 1;
        return Ok((kept, diag));
    }
    Ok((next, diag))
}

#[cfg(test)]
mod tests;
