//! Rigid-body model of a plus-configuration quadrotor whose four arms change
//! length in flight.
//!
//! Rotors are point masses at the arm tips, so the arm lengths set both the
//! torque arms and the diagonal inertia. With z up, rotor 1 sits on +x, 2 on
//! -y, 3 on -x and 4 on +y. Rotors 1 and 3 produce positive yaw anti-torque.
//!
//! Translational states are kept in error coordinates relative to a moving
//! reference, so the derivative subtracts the reference acceleration.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Physical constants of the vehicle. Rotor speeds are in rpm throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Inertia `(Ix, Iy, Iz)` with every arm at `l_min` (kg m^2).
    pub base_inertia: [f64; 3],
    /// Lift per rpm^2 (N).
    pub k_f: f64,
    /// Anti-torque per rpm^2 (N m).
    pub k_m: f64,
    /// Point mass carried at each arm tip (kg).
    pub motor_mass: f64,
    pub gravity: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Rotor speed cap (rpm).
    pub n_max: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 1.732,
            base_inertia: [0.0375, 0.0375, 0.0749],
            k_f: 3.03e-5,
            k_m: 5.5e-5,
            motor_mass: 0.1,
            gravity: 9.81,
            l_min: 0.15,
            l_max: 0.25,
            n_max: 1000.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.mass),
            ("I_x0", self.base_inertia[0]),
            ("I_y0", self.base_inertia[1]),
            ("I_z0", self.base_inertia[2]),
            ("k_f", self.k_f),
            ("k_m", self.k_m),
            ("m_mot", self.motor_mass),
            ("g", self.gravity),
            ("l_min", self.l_min),
            ("l_max", self.l_max),
            ("n_max", self.n_max),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        if self.l_min >= self.l_max {
            return Err(Error::InvalidValue {
                key: "l_max".into(),
                reason: format!("must exceed l_min ({} >= {})", self.l_min, self.l_max),
            });
        }
        Ok(())
    }

    /// Equal rotor speed that balances gravity at level attitude.
    pub fn hover_speed(&self) -> f64 {
        (self.mass * self.gravity / (4.0 * self.k_f)).sqrt()
    }
}

/// The 12-dimensional observed flight state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidState {
    pub pos_err: Vector3<f64>,
    /// Roll, pitch, yaw (rad), wrapped to `[-pi, pi]`.
    pub att: Vector3<f64>,
    pub vel_err: Vector3<f64>,
    pub att_rate: Vector3<f64>,
}

impl RigidState {
    pub const DIM: usize = 12;

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(self.pos_err.as_slice());
        out[3..6].copy_from_slice(self.att.as_slice());
        out[6..9].copy_from_slice(self.vel_err.as_slice());
        out[9..12].copy_from_slice(self.att_rate.as_slice());
        out
    }

    pub fn from_array(v: &[f64; 12]) -> Self {
        Self {
            pos_err: Vector3::new(v[0], v[1], v[2]),
            att: Vector3::new(v[3], v[4], v[5]),
            vel_err: Vector3::new(v[6], v[7], v[8]),
            att_rate: Vector3::new(v[9], v[10], v[11]),
        }
    }

    fn axpy(&self, h: f64, d: &[f64; 12]) -> Self {
        let mut v = self.to_array();
        for (x, dx) in v.iter_mut().zip(d) {
            *x += h * dx;
        }
        Self::from_array(&v)
    }
}

/// Current arm lengths (m), arm `j` carrying rotor `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmLengths(pub [f64; 4]);

impl ArmLengths {
    /// Validates every component against `[l_min, l_max]`.
    pub fn new(l: [f64; 4], p: &QuadParams) -> Result<Self> {
        let arms = Self(l);
        arms.check(p)?;
        Ok(arms)
    }

    pub fn uniform(l: f64) -> Self {
        Self([l; 4])
    }

    pub fn check(&self, p: &QuadParams) -> Result<()> {
        // Ramps accumulate rounding; admit a few ulps past the bounds.
        const SLACK: f64 = 1e-12;
        for (arm, &value) in self.0.iter().enumerate() {
            if !(value >= p.l_min - SLACK && value <= p.l_max + SLACK) {
                return Err(Error::ArmOutOfBounds {
                    arm: arm + 1,
                    value,
                    min: p.l_min,
                    max: p.l_max,
                });
            }
        }
        Ok(())
    }
}

/// Commanded rotor speeds (rpm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorSpeeds(pub [f64; 4]);

impl RotorSpeeds {
    pub fn uniform(n: f64) -> Self {
        Self([n; 4])
    }

    pub fn clamped(self, n_max: f64) -> Self {
        Self(self.0.map(|n| n.clamp(0.0, n_max)))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|n| n * n).sum::<f64>().sqrt()
    }
}

const ARRIVAL_SLACK: f64 = 1e-12;

/// Arm motion over one control interval: every arm slews from `start`
/// toward `end` at its signed `rate` (m/s) and stops once it arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmProfile {
    pub start: ArmLengths,
    pub end: ArmLengths,
    pub rate: [f64; 4],
}

impl ArmProfile {
    pub fn fixed(l: ArmLengths) -> Self {
        Self {
            start: l,
            end: l,
            rate: [0.0; 4],
        }
    }

    /// Lengths and realized rates `tau` seconds into the interval.
    pub fn at(&self, tau: f64) -> (ArmLengths, [f64; 4]) {
        let mut l = [0.0; 4];
        let mut l_dot = [0.0; 4];
        for j in 0..4 {
            let (a, b, r) = (self.start.0[j], self.end.0[j], self.rate[j]);
            let moved = a + r * tau;
            // The slack absorbs rounding when whole steps divide the distance.
            let arrived = if r > 0.0 {
                moved >= b - ARRIVAL_SLACK
            } else if r < 0.0 {
                moved <= b + ARRIVAL_SLACK
            } else {
                true
            };
            if arrived {
                l[j] = if r == 0.0 { a } else { b };
            } else {
                l[j] = moved;
                l_dot[j] = r;
            }
        }
        (ArmLengths(l), l_dot)
    }
}

/// Body-to-world rotation for Z-Y-X Euler angles `(phi, theta, psi)`.
pub fn rotation_matrix(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = att[0].sin_cos();
    let (st, ct) = att[1].sin_cos();
    let (sp, cp) = att[2].sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

fn inertia_unchecked(p: &QuadParams, l: &[f64; 4]) -> [f64; 3] {
    let sq = l.map(|x| x * x);
    let base = p.l_min * p.l_min;
    [
        p.base_inertia[0] + p.motor_mass * (sq[1] + sq[3] - 2.0 * base),
        p.base_inertia[1] + p.motor_mass * (sq[0] + sq[2] - 2.0 * base),
        p.base_inertia[2] + p.motor_mass * (sq.iter().sum::<f64>() - 4.0 * base),
    ]
}

/// Diagonal inertia with tip masses at the given arm lengths.
pub fn inertia_from_arms(p: &QuadParams, l: &ArmLengths) -> Result<[f64; 3]> {
    l.check(p)?;
    Ok(inertia_unchecked(p, &l.0))
}

/// Time derivative of [`inertia_from_arms`] under arm rates `l_dot`.
pub fn inertia_rate(p: &QuadParams, l: &ArmLengths, l_dot: &[f64; 4]) -> [f64; 3] {
    let d: [f64; 4] = std::array::from_fn(|j| 2.0 * p.motor_mass * l.0[j] * l_dot[j]);
    [d[1] + d[3], d[0] + d[2], d.iter().sum()]
}

/// Total thrust (N) and body torques `(roll, pitch, yaw)` (N m).
pub fn forces_torques(p: &QuadParams, l: &ArmLengths, n: &RotorSpeeds) -> (f64, Vector3<f64>) {
    let sq = n.0.map(|x| x * x);
    let thrust = p.k_f * sq.iter().sum::<f64>();
    let torque = Vector3::new(
        p.k_f * (sq[3] * l.0[3] - sq[1] * l.0[1]),
        p.k_f * (sq[2] * l.0[2] - sq[0] * l.0[0]),
        p.k_m * (sq[0] - sq[1] + sq[2] - sq[3]),
    );
    (thrust, torque)
}

/// Time derivative of the 12-state, ordered like [`RigidState::to_array`].
pub fn state_derivative(
    p: &QuadParams,
    s: &RigidState,
    n: &RotorSpeeds,
    l: &ArmLengths,
    l_dot: &[f64; 4],
    ref_acc: &Vector3<f64>,
) -> [f64; 12] {
    let (thrust, torque) = forces_torques(p, l, n);
    let inertia = inertia_unchecked(p, &l.0);
    let inertia_dot = inertia_rate(p, l, l_dot);

    let (sf, cf) = s.att[0].sin_cos();
    let (st, ct) = s.att[1].sin_cos();
    let (sp, cp) = s.att[2].sin_cos();
    let accel = thrust / p.mass;
    let lin = Vector3::new(
        (cf * st * cp + sf * sp) * accel - ref_acc[0],
        (cf * st * sp - sf * cp) * accel - ref_acc[1],
        cf * ct * accel - p.gravity - ref_acc[2],
    );

    let [ix, iy, iz] = inertia;
    let w = &s.att_rate;
    let ang = Vector3::new(
        (torque[0] + (iy - iz) * w[1] * w[2] - inertia_dot[0] * w[0]) / ix,
        (torque[1] + (iz - ix) * w[0] * w[2] - inertia_dot[1] * w[1]) / iy,
        (torque[2] + (ix - iy) * w[0] * w[1] - inertia_dot[2] * w[2]) / iz,
    );

    let mut out = [0.0; 12];
    out[0..3].copy_from_slice(s.vel_err.as_slice());
    out[3..6].copy_from_slice(s.att_rate.as_slice());
    out[6..9].copy_from_slice(lin.as_slice());
    out[9..12].copy_from_slice(ang.as_slice());
    out
}

/// Largest body-rate angle advanced by one RK4 sub-step (rad).
pub const MAX_RATE_STEP: f64 = 0.5;
const MAX_SUBSTEPS: usize = 20_000;

pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = x - two_pi * (x / two_pi).round();
    w.clamp(-PI, PI)
}

/// Advances `s` by `dt` with classical RK4 over `substeps` equal pieces.
///
/// Rotor speeds are held for the whole interval; the arms follow `arms`;
/// `ref_acc` gives the reference acceleration `tau` seconds into the interval.
///
/// Fast body rates make the roll/pitch coupling stiff, so the sub-step count
/// is raised until `h * max|rate| <= MAX_RATE_STEP`.
///
/// # Panics
///
/// If `dt <= 0` or `substeps == 0`.
pub fn integrate_step(
    p: &QuadParams,
    s: &RigidState,
    n: &RotorSpeeds,
    arms: &ArmProfile,
    ref_acc: &dyn Fn(f64) -> Vector3<f64>,
    dt: f64,
    substeps: usize,
) -> RigidState {
    assert!(dt > 0.0, "integration interval must be positive");
    assert!(substeps >= 1, "at least one sub-step is required");
    let fastest = s.att_rate.amax();
    let needed = if fastest.is_finite() {
        (dt * fastest / MAX_RATE_STEP).ceil().min(MAX_SUBSTEPS as f64) as usize
    } else {
        MAX_SUBSTEPS
    };
    let substeps = substeps.max(needed);
    let h = dt / substeps as f64;
    let f = |tau: f64, x: &RigidState| {
        let (l, l_dot) = arms.at(tau);
        state_derivative(p, x, n, &l, &l_dot, &ref_acc(tau))
    };
    let mut x = *s;
    for k in 0..substeps {
        let t0 = k as f64 * h;
        let k1 = f(t0, &x);
        let k2 = f(t0 + 0.5 * h, &x.axpy(0.5 * h, &k1));
        let k3 = f(t0 + 0.5 * h, &x.axpy(0.5 * h, &k2));
        let k4 = f(t0 + h, &x.axpy(h, &k3));
        let mut v = x.to_array();
        for i in 0..12 {
            v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        x = RigidState::from_array(&v);
    }
    x.att = x.att.map(wrap_angle);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_ref(_: f64) -> Vector3<f64> {
        Vector3::zeros()
    }

    #[test]
    fn rotation_special_cases() {
        assert_eq!(rotation_matrix(&Vector3::zeros()), Matrix3::identity());
        let r = rotation_matrix(&Vector3::new(0.0, 0.0, PI / 2.0));
        let want = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - want).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_is_proper_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let att = Vector3::from_fn(|_, _| rng.random_range(-PI..PI));
            let r = rotation_matrix(&att);
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_examples() {
        let p = QuadParams::default();
        assert_eq!(
            inertia_from_arms(&p, &ArmLengths::uniform(0.15)).unwrap(),
            [0.0375, 0.0375, 0.0749]
        );
        let i = inertia_from_arms(&p, &ArmLengths::uniform(0.25)).unwrap();
        assert!((i[0] - 0.0455).abs() < 1e-15);
        let i = inertia_from_arms(&p, &ArmLengths([0.25, 0.15, 0.15, 0.15])).unwrap();
        assert!((i[0] - 0.0375).abs() < 1e-15);
        assert!((i[1] - 0.0415).abs() < 1e-15);
        assert!(inertia_from_arms(&p, &ArmLengths([0.26, 0.15, 0.15, 0.15])).is_err());
        assert!(inertia_from_arms(&p, &ArmLengths([0.15, 0.1, 0.15, 0.15])).is_err());
    }

    #[test]
    fn inertia_rate_matches_finite_difference() {
        let p = QuadParams::default();
        assert_eq!(inertia_rate(&p, &ArmLengths::uniform(0.2), &[0.0; 4]), [0.0; 3]);
        let l = ArmLengths::uniform(0.2);
        let r = inertia_rate(&p, &l, &[0.1, 0.0, 0.0, 0.0]);
        assert!((r[1] - 0.004).abs() < 1e-15);

        let l_dot = [0.1, -0.05, 0.07, 0.02];
        let l = ArmLengths([0.2, 0.21, 0.18, 0.17]);
        let dt = 1e-6;
        let ahead = ArmLengths(std::array::from_fn(|j| l.0[j] + l_dot[j] * dt));
        let i0 = inertia_from_arms(&p, &l).unwrap();
        let i1 = inertia_from_arms(&p, &ahead).unwrap();
        let r = inertia_rate(&p, &l, &l_dot);
        for k in 0..3 {
            assert!(((i1[k] - i0[k]) / dt - r[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn forces_examples() {
        let p = QuadParams::default();
        let l = ArmLengths::uniform(0.2);
        let (f, tau) = forces_torques(&p, &l, &RotorSpeeds::uniform(300.0));
        assert_eq!(tau, Vector3::zeros());
        assert!((f - 4.0 * p.k_f * 300.0 * 300.0).abs() < 1e-12);
        let (f, tau) = forces_torques(&p, &l, &RotorSpeeds::default());
        assert_eq!((f, tau), (0.0, Vector3::zeros()));
        let (f, _) = forces_torques(&p, &l, &RotorSpeeds::uniform(374.4));
        assert!((f - 16.99).abs() < 0.01);
        assert!((f - p.mass * p.gravity).abs() < 0.01);
    }

    #[test]
    fn free_fall_and_hover_derivatives() {
        let p = QuadParams::default();
        let l = ArmLengths::uniform(0.15);
        let s = RigidState::default();
        let d = state_derivative(&p, &s, &RotorSpeeds::default(), &l, &[0.0; 4], &Vector3::zeros());
        assert_eq!(d[8], -9.81);
        let hover = RotorSpeeds::uniform(p.hover_speed());
        let d = state_derivative(&p, &s, &hover, &l, &[0.0; 4], &Vector3::zeros());
        assert!(d.iter().all(|x| x.abs() < 1e-9), "{d:?}");
    }

    #[test]
    fn inertia_rate_term_in_pitch() {
        let p = QuadParams::default();
        let l = ArmLengths::uniform(0.2);
        let mut s = RigidState::default();
        s.att_rate = Vector3::new(0.3, -0.7, 0.2);
        let n = RotorSpeeds([380.0, 360.0, 390.0, 370.0]);
        let l_dot = [0.1, 0.0, -0.05, 0.0];
        let still = state_derivative(&p, &s, &n, &l, &[0.0; 4], &Vector3::zeros());
        let moving = state_derivative(&p, &s, &n, &l, &l_dot, &Vector3::zeros());
        let iy = inertia_from_arms(&p, &l).unwrap()[1];
        let iy_dot = inertia_rate(&p, &l, &l_dot)[1];
        let expected = -iy_dot * s.att_rate[1] / iy;
        assert!((moving[10] - still[10] - expected).abs() < 1e-12);
    }

    #[test]
    fn near_identity_step() {
        let p = QuadParams::default();
        let mut s = RigidState::default();
        s.vel_err = Vector3::new(0.1, 0.2, -0.3);
        let prof = ArmProfile::fixed(ArmLengths::uniform(0.15));
        let next = integrate_step(&p, &s, &RotorSpeeds::uniform(500.0), &prof, &no_ref, 1e-12, 1);
        let a = s.to_array();
        let b = next.to_array();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn free_fall_parabola() {
        let p = QuadParams::default();
        let prof = ArmProfile::fixed(ArmLengths::uniform(0.15));
        let mut s = RigidState::default();
        for _ in 0..10 {
            s = integrate_step(&p, &s, &RotorSpeeds::default(), &prof, &no_ref, 0.1, 10);
        }
        assert!((s.pos_err[2] + 4.905).abs() < 1e-6);
        assert!((s.vel_err[2] + 9.81).abs() < 1e-9);
    }

    #[test]
    fn wrap_stays_in_range() {
        for x in [-10.0, -PI, -3.0, 0.0, 3.0, PI, 7.0, 100.0] {
            let w = wrap_angle(x);
            assert!((-PI..=PI).contains(&w));
            assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn profile_stops_at_target() {
        let prof = ArmProfile {
            start: ArmLengths::uniform(0.15),
            end: ArmLengths([0.155, 0.15, 0.145, 0.15]),
            rate: [0.1, 0.0, -0.1, 0.0],
        };
        let (l, d) = prof.at(0.02);
        assert!((l.0[0] - 0.152).abs() < 1e-15);
        assert_eq!(d[0], 0.1);
        let (l, d) = prof.at(0.08);
        assert_eq!(l.0[0], 0.155);
        assert_eq!(l.0[2], 0.145);
        assert_eq!(d, [0.0; 4]);
    }
}
