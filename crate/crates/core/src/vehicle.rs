//! Dynamic bicycle model with friction-limited tires.

use serde::{Deserialize, Serialize};

use crate::envelope::PerformanceEnvelope;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Speed below which slip angles and the balance metric are not meaningful.
pub const MIN_METRIC_SPEED: f64 = 3.0;

/// Parameters of the default "desk car".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// CG to front axle (m).
    pub lf: f64,
    /// CG to rear axle (m).
    pub lr: f64,
    pub mu_front: f64,
    pub mu_rear: f64,
    /// Axle cornering stiffness (N/rad).
    pub cornering_front: f64,
    pub cornering_rear: f64,
    /// Peak engine power (W), rear-wheel drive.
    pub power: f64,
    /// Aerodynamic drag `c · v²` (N s²/m²).
    pub drag: f64,
    /// Rolling resistance coefficient.
    pub rolling: f64,
    /// Traction control: share of rear-axle grip the drive force may use.
    pub traction_limit: f64,
    /// Share of each axle's grip used at full brake.
    pub brake_limit: f64,
    pub max_steer: f64,
    /// Lateral distance from the center to the side of the car (m).
    pub half_width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1200.0,
            yaw_inertia: 1600.0,
            lf: 1.25,
            lr: 1.35,
            mu_front: 1.40,
            mu_rear: 1.45,
            cornering_front: 90_000.0,
            cornering_rear: 100_000.0,
            power: 250_000.0,
            drag: 0.35,
            rolling: 0.012,
            traction_limit: 0.95,
            brake_limit: 0.95,
            max_steer: 0.4,
            half_width: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Static axle loads `(front, rear)` in N.
    pub fn axle_loads(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY;
        let l = self.wheelbase();
        (w * self.lr / l, w * self.lf / l)
    }

    /// Understeer gradient (rad per m/s²) of the linear bicycle model.
    pub fn understeer_gradient(&self) -> f64 {
        self.mass / self.wheelbase()
            * (self.lr / self.cornering_front - self.lf / self.cornering_rear)
    }

    /// Drive force at full throttle and speed `v`, after traction control.
    pub fn drive_force(&self, v: f64) -> f64 {
        let (_, rear) = self.axle_loads();
        (self.power / v.max(1.0)).min(self.traction_limit * self.mu_rear * rear)
    }

    /// Drag plus rolling resistance at speed `v` (N, opposing motion).
    pub fn resistance(&self, v: f64) -> f64 {
        let roll = self.rolling * self.mass * GRAVITY * (v / 0.5).tanh();
        self.drag * v * v.abs() + roll
    }

    /// Envelope consistent with this plant: lateral limit from the weaker
    /// axle, net acceleration tabulated every 5 m/s, full-brake deceleration.
    pub fn envelope(&self) -> PerformanceEnvelope {
        let (front, rear) = self.axle_loads();
        let v_max = 85.0;
        let ax_acc = (0..=17)
            .map(|k| {
                let v = 5.0 * k as f64;
                let net = (self.drive_force(v) - self.resistance(v)) / self.mass;
                (v, net.max(0.05))
            })
            .collect();
        PerformanceEnvelope {
            ay_max: 0.95 * self.mu_front.min(self.mu_rear) * GRAVITY,
            ax_acc,
            ax_brake: self.brake_limit * (self.mu_front * front + self.mu_rear * rear) / self.mass,
            v_max,
            scale: 1.0,
        }
    }
}

/// Driver inputs: steering angle, throttle and brake pedal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Action {
    /// Clamps to `|δ| ≤ max_steer`, `g, b ∈ [0, 1]`.
    pub fn saturate(self, max_steer: f64) -> Self {
        let clean = |v: f64| if v.is_finite() { v } else { 0.0 };
        Self {
            steer: clean(self.steer).clamp(-max_steer, max_steer),
            throttle: clean(self.throttle).clamp(0.0, 1.0),
            brake: clean(self.brake).clamp(0.0, 1.0),
        }
    }

    /// Throttle and brake pressed together.
    pub fn co_active(&self) -> bool {
        self.throttle > 0.0 && self.brake > 0.0
    }
}

/// Pose and body-frame velocities, plus slip angles of the last step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub vx: f64,
    pub vy: f64,
    pub slip_front: f64,
    pub slip_rear: f64,
}

impl VehicleState {
    pub fn at(x: f64, y: f64, yaw: f64, vx: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            vx,
            ..Self::default()
        }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.yaw, self.yaw_rate, self.vx, self.vy]
    }
}

/// Tire and body forces for one state/action pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Forces {
    pub fx_front: f64,
    pub fy_front: f64,
    pub fx_rear: f64,
    pub fy_rear: f64,
    pub slip_front: f64,
    pub slip_rear: f64,
    pub resistance: f64,
}

/// Slip angles `(front, rear)`; the longitudinal speed is floored at 1 m/s.
pub fn slip_angles(p: &VehicleParams, vx: f64, vy: f64, r: f64, steer: f64) -> (f64, f64) {
    let u = vx.max(1.0);
    (
        (vy + p.lf * r).atan2(u) - steer,
        (vy - p.lr * r).atan2(u),
    )
}

pub fn forces(p: &VehicleParams, s: &[f64; 6], a: &Action) -> Forces {
    let [_, _, _, r, vx, vy] = *s;
    let (load_f, load_r) = p.axle_loads();
    let (alpha_f, alpha_r) = slip_angles(p, vx, vy, r, a.steer);
    let moving = (vx / 0.5).tanh().max(0.0);
    let fx_front = -a.brake * p.brake_limit * p.mu_front * load_f * moving;
    let fx_rear = a.throttle * p.drive_force(vx) - a.brake * p.brake_limit * p.mu_rear * load_r * moving;
    let lateral = |c: f64, alpha: f64, mu: f64, load: f64, fx: f64| {
        let cap = ((mu * load).powi(2) - fx * fx).max(0.0).sqrt();
        (-c * alpha).clamp(-cap, cap)
    };
    Forces {
        fx_front,
        fy_front: lateral(p.cornering_front, alpha_f, p.mu_front, load_f, fx_front),
        fx_rear,
        fy_rear: lateral(p.cornering_rear, alpha_r, p.mu_rear, load_r, fx_rear),
        slip_front: alpha_f,
        slip_rear: alpha_r,
        resistance: p.resistance(vx),
    }
}

fn derivative(p: &VehicleParams, s: &[f64; 6], a: &Action) -> [f64; 6] {
    let [_, _, yaw, r, vx, vy] = *s;
    let f = forces(p, s, a);
    let (sin_d, cos_d) = a.steer.sin_cos();
    let (sin_y, cos_y) = yaw.sin_cos();
    let fx = f.fx_rear + f.fx_front * cos_d - f.fy_front * sin_d - f.resistance;
    let fy = f.fy_rear + f.fx_front * sin_d + f.fy_front * cos_d;
    let mz = p.lf * (f.fy_front * cos_d + f.fx_front * sin_d) - p.lr * f.fy_rear;
    [
        vx * cos_y - vy * sin_y,
        vx * sin_y + vy * cos_y,
        r,
        mz / p.yaw_inertia,
        fx / p.mass + vy * r,
        fy / p.mass - vx * r,
    ]
}

/// Advances the plant by `dt` with the action held constant (classic RK4).
pub fn step(p: &VehicleParams, state: &VehicleState, action: &Action, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let a = action.saturate(p.max_steer);
    let y0 = state.as_array();
    let add = |y: &[f64; 6], k: &[f64; 6], h: f64| -> [f64; 6] {
        std::array::from_fn(|i| y[i] + h * k[i])
    };
    let k1 = derivative(p, &y0, &a);
    let k2 = derivative(p, &add(&y0, &k1, dt / 2.0), &a);
    let k3 = derivative(p, &add(&y0, &k2, dt / 2.0), &a);
    let k4 = derivative(p, &add(&y0, &k3, dt), &a);
    let y: [f64; 6] = std::array::from_fn(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let [x, yy, yaw, r, vx, vy] = y;
    if y.iter().any(|v| !v.is_finite()) || vx.abs() > 150.0 || vy.abs() > 60.0 || r.abs() > 10.0 {
        return Err(Error::NumericalBlowup);
    }
    let (slip_front, slip_rear) = slip_angles(p, vx, vy, r, a.steer);
    Ok(VehicleState {
        x,
        y: yy,
        yaw: crate::geometry::wrap_angle(yaw),
        yaw_rate: r,
        vx,
        vy,
        slip_front,
        slip_rear,
    })
}

/// Front minus rear slip-angle magnitude; positive means understeer.
/// Zero below [`MIN_METRIC_SPEED`].
pub fn balance_metric(state: &VehicleState) -> f64 {
    if state.vx <= MIN_METRIC_SPEED {
        return 0.0;
    }
    state.slip_front.abs() - state.slip_rear.abs()
}

/// Accelerations `(longitudinal, lateral)` in the body frame.
pub fn body_accelerations(p: &VehicleParams, state: &VehicleState, action: &Action) -> (f64, f64) {
    let d = derivative(p, &state.as_array(), &action.saturate(p.max_steer));
    (d[4] - state.vy * state.yaw_rate, d[5] + state.vx * state.yaw_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coasting_straight_keeps_heading() {
        let p = VehicleParams::default();
        let mut s = VehicleState::at(0.0, 0.0, 0.3, 30.0);
        for _ in 0..400 {
            let next = step(&p, &s, &Action::default(), 0.005).unwrap();
            assert!(next.vx < s.vx);
            s = next;
        }
        assert_eq!(s.yaw, 0.3);
        assert_eq!(s.vy, 0.0);
        assert_eq!(s.yaw_rate, 0.0);
    }

    #[test]
    fn time_step_is_validated() {
        let p = VehicleParams::default();
        let s = VehicleState::at(0.0, 0.0, 0.0, 10.0);
        assert!(step(&p, &s, &Action::default(), 0.0).is_err());
        assert!(step(&p, &s, &Action::default(), 0.05).is_err());
    }

    #[test]
    fn balance_is_gated_at_low_speed() {
        let s = VehicleState {
            vx: 1.0,
            slip_front: 0.2,
            ..Default::default()
        };
        assert_eq!(balance_metric(&s), 0.0);
    }

    #[test]
    fn saturation_bounds_actions() {
        let a = Action {
            steer: 2.0,
            throttle: 1.5,
            brake: f64::NAN,
        }
        .saturate(0.4);
        assert_eq!(a, Action { steer: 0.4, throttle: 1.0, brake: 0.0 });
    }

    #[test]
    fn default_envelope_is_valid() {
        let env = VehicleParams::default().envelope();
        env.validate().unwrap();
        assert!(env.ay_max > 12.0 && env.ay_max < 14.0);
    }
}
