//! Small simulated kinematics tasks.
//!
//! * Damped oscillator: `ẍ + 2ζω ẋ + ω² x = 0`, sampled from its closed
//!   form. Observations `[position, velocity]`. Each rollout draws
//!   `ω ∈ [0.8, 1.6]`, `ζ ∈ [0.02, 0.1]`, amplitude `∈ [0.5, 1.5]` and a
//!   random phase.
//! * Driven pendulum: `θ̈ = −9.81 sin θ − 0.1 θ̇ + τ`, integrated with RK4
//!   (10 sub-steps per sample). The torque `τ = −1.5 sin θ − 0.5 θ̇ +
//!   0.8 sin(0.7 t + ψ)` is recorded as the action column `act_torque`.
//!
//! Observation noise is uniform with standard deviation `noise`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Rollout};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTask {
    DampedOscillator,
    DrivenPendulum,
}

impl std::str::FromStr for SyntheticTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "damped-oscillator" | "oscillator" => Ok(SyntheticTask::DampedOscillator),
            "driven-pendulum" | "pendulum" => Ok(SyntheticTask::DrivenPendulum),
            other => Err(format!(
                "unknown synthetic task {other:?} (damped-oscillator, driven-pendulum)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Sampling interval.
    pub dt: f64,
    pub omega: (f64, f64),
    pub zeta: (f64, f64),
    pub amplitude: (f64, f64),
    pub noise: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams {
            dt: 0.1,
            omega: (0.8, 1.6),
            zeta: (0.02, 0.1),
            amplitude: (0.5, 1.5),
            noise: 0.01,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn noise(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let half = std * 3f64.sqrt();
        rng.gen_range(-half..half)
    }
}

pub fn gen_synthetic(
    task: SyntheticTask,
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Rollout>, DataError> {
    match task {
        SyntheticTask::DampedOscillator => {
            oscillator(&OscillatorParams::default(), n_rollouts, steps, seed)
        }
        SyntheticTask::DrivenPendulum => pendulum(n_rollouts, steps, seed),
    }
}

pub fn oscillator(
    p: &OscillatorParams,
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Rollout>, DataError> {
    if steps < 2 {
        return Err(DataError::Invalid(format!(
            "rollouts need at least 2 steps, got {steps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let omega = draw(&mut rng, p.omega);
        let zeta = draw(&mut rng, p.zeta);
        if !(0.0..1.0).contains(&zeta) {
            return Err(DataError::Invalid(format!(
                "damping ratio {zeta} is not underdamped"
            )));
        }
        let amp = draw(&mut rng, p.amplitude);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let wd = omega * (1.0 - zeta * zeta).sqrt();
        let mut data = Vec::with_capacity(2 * steps);
        for k in 0..steps {
            let t = k as f64 * p.dt;
            let env = amp * (-zeta * omega * t).exp();
            let (s, c) = (wd * t + phase).sin_cos();
            let x = env * c;
            let v = env * (-zeta * omega * c - wd * s);
            data.push(x + noise(&mut rng, p.noise));
            data.push(v + noise(&mut rng, p.noise));
        }
        out.push(Rollout {
            feature_names: vec!["position".into(), "velocity".into()],
            features: Tensor::new(steps, 2, data).expect("two columns"),
            action_names: vec![],
            actions: None,
        });
    }
    Ok(out)
}

const PENDULUM_DT: f64 = 0.05;
const PENDULUM_SUBSTEPS: usize = 10;

fn torque(theta: f64, omega: f64, t: f64, psi: f64) -> f64 {
    -1.5 * theta.sin() - 0.5 * omega + 0.8 * (0.7 * t + psi).sin()
}

fn pendulum_rhs(theta: f64, omega: f64, tau: f64) -> (f64, f64) {
    (omega, -9.81 * theta.sin() - 0.1 * omega + tau)
}

fn pendulum(n_rollouts: usize, steps: usize, seed: u64) -> Result<Vec<Rollout>, DataError> {
    if steps < 2 {
        return Err(DataError::Invalid(format!(
            "rollouts need at least 2 steps, got {steps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_std = 0.01;
    let mut out = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let mut theta = rng.gen_range(-PI / 2.0..PI / 2.0);
        let mut omega = rng.gen_range(-1.0..1.0);
        let psi = rng.gen_range(0.0..2.0 * PI);
        let mut features = Vec::with_capacity(2 * steps);
        let mut actions = Vec::with_capacity(steps);
        let h = PENDULUM_DT / PENDULUM_SUBSTEPS as f64;
        for k in 0..steps {
            let t = k as f64 * PENDULUM_DT;
            let tau = torque(theta, omega, t, psi);
            features.push(theta + noise(&mut rng, noise_std));
            features.push(omega + noise(&mut rng, noise_std));
            actions.push(tau);
            // The torque is held over the sample interval.
            for _ in 0..PENDULUM_SUBSTEPS {
                let k1 = pendulum_rhs(theta, omega, tau);
                let k2 = pendulum_rhs(theta + 0.5 * h * k1.0, omega + 0.5 * h * k1.1, tau);
                let k3 = pendulum_rhs(theta + 0.5 * h * k2.0, omega + 0.5 * h * k2.1, tau);
                let k4 = pendulum_rhs(theta + h * k3.0, omega + h * k3.1, tau);
                theta += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                omega += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
        }
        out.push(Rollout {
            feature_names: vec!["angle".into(), "angular_velocity".into()],
            features: Tensor::new(steps, 2, features).expect("two columns"),
            action_names: vec!["act_torque".into()],
            actions: Some(Tensor::new(steps, 1, actions).expect("one column")),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undamped_oscillator_keeps_its_energy() {
        let p = OscillatorParams {
            zeta: (0.0, 0.0),
            omega: (1.3, 1.3),
            noise: 0.0,
            ..Default::default()
        };
        let r = &oscillator(&p, 1, 500, 4).unwrap()[0];
        let energy = |k: usize| {
            let (x, v) = (r.features.get(k, 0), r.features.get(k, 1));
            x * x + (v / 1.3).powi(2)
        };
        for k in 0..500 {
            assert!((energy(k) - energy(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_minimal() {
        let a = gen_synthetic(SyntheticTask::DrivenPendulum, 2, 2, 9).unwrap();
        assert_eq!(
            a,
            gen_synthetic(SyntheticTask::DrivenPendulum, 2, 2, 9).unwrap()
        );
        assert_eq!(a[0].steps(), 2);
        assert!(gen_synthetic(SyntheticTask::DampedOscillator, 1, 1, 0).is_err());
        assert_ne!(
            a,
            gen_synthetic(SyntheticTask::DrivenPendulum, 2, 2, 10).unwrap()
        );
    }

    #[test]
    fn pendulum_rk4_converges() {
        // Halving the step changes a smooth trajectory by O(h⁴).
        let run = |sub: usize| {
            let (mut th, mut om) = (1.0f64, 0.0f64);
            let h = 1.0 / sub as f64;
            for _ in 0..sub {
                let k1 = pendulum_rhs(th, om, 0.0);
                let k2 = pendulum_rhs(th + 0.5 * h * k1.0, om + 0.5 * h * k1.1, 0.0);
                let k3 = pendulum_rhs(th + 0.5 * h * k2.0, om + 0.5 * h * k2.1, 0.0);
                let k4 = pendulum_rhs(th + h * k3.0, om + h * k3.1, 0.0);
                th += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                om += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
            th
        };
        let (a, b, c) = (run(50), run(100), run(200));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }
}
