//! Two-DOF shaft system coupled by a universal joint with radial clearance at
//! the input yoke.
//!
//! Generalized coordinates are `q = (phi1, phi1c)`: the input yoke angle and
//! the crosspiece rotation about the joint's Z' axis. The output shaft and the
//! crosspiece tilt are slaved to `phi1c` through the Cardan kinematics, so the
//! equations of motion are two scalar ODEs with a diagonal mass matrix. The
//! yoke and crosspiece only interact through the two wall contacts.

use nalgebra::Vector2;
use serde::Serialize;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Physical constants and integration controls. SI units throughout,
/// angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    /// Input shaft inertia, kg m^2.
    pub j1: f64,
    /// Crosspiece inertia about X', kg m^2.
    pub j2x: f64,
    /// Crosspiece inertia about Y', kg m^2.
    pub j2y: f64,
    /// Crosspiece inertia about Z', kg m^2.
    pub j2z: f64,
    /// Output shaft inertia, kg m^2.
    pub j3: f64,
    /// Output shaft torsional stiffness, N m/rad.
    pub ks: f64,
    /// Output shaft damping, N m s/rad.
    pub cs: f64,
    /// Crosspiece cap radius, m.
    pub r1: f64,
    /// Radial clearance between yoke bore and cap, m.
    pub clearance: f64,
    /// Joint misalignment angle, rad.
    pub beta: f64,
    /// Crosspiece arm length, m.
    pub arm_length: f64,
    pub eps_n: f64,
    pub eps_t: f64,
    pub mu: f64,
    /// Forcing frequency, rad/s.
    pub omega: f64,
    /// Input torque amplitude, N m.
    pub torque_amplitude: f64,
    /// Time step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub t_final: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            j1: 0.014,
            j2x: 0.00111,
            j2y: 0.00202,
            j2z: 0.00111,
            j3: 0.012,
            ks: 1000.0,
            cs: 5.0,
            r1: 0.02,
            clearance: 50e-6,
            beta: 5f64.to_radians(),
            arm_length: 0.04,
            eps_n: 0.45,
            eps_t: 0.45,
            mu: 0.8,
            omega: 100.0,
            torque_amplitude: 1.0,
            dt: 1e-5,
            t_final: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parameter `{name}` = {value} is out of range: {requirement}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let check = |name: &'static str, value: f64, ok: bool, requirement: &'static str| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError {
                    name,
                    value,
                    requirement,
                })
            }
        };
        for (name, value) in [
            ("j1", self.j1),
            ("j2x", self.j2x),
            ("j2y", self.j2y),
            ("j2z", self.j2z),
            ("j3", self.j3),
            ("ks", self.ks),
            ("cs", self.cs),
            ("r1", self.r1),
            ("arm_length", self.arm_length),
            ("dt", self.dt),
            ("t_final", self.t_final),
        ] {
            check(name, value, value > 0.0, "must be strictly positive")?;
        }
        check(
            "clearance",
            self.clearance,
            self.clearance >= 0.0,
            "must be >= 0",
        )?;
        check(
            "eps_n",
            self.eps_n,
            (0.0..=1.0).contains(&self.eps_n),
            "must lie in [0, 1]",
        )?;
        check(
            "eps_t",
            self.eps_t,
            (0.0..=1.0).contains(&self.eps_t),
            "must lie in [0, 1]",
        )?;
        check("mu", self.mu, self.mu >= 0.0, "must be >= 0")?;
        check(
            "beta",
            self.beta,
            (0.0..std::f64::consts::FRAC_PI_2).contains(&self.beta),
            "must lie in [0, pi/2)",
        )?;
        check("omega", self.omega, true, "must be finite")?;
        check(
            "torque_amplitude",
            self.torque_amplitude,
            true,
            "must be finite",
        )?;
        Ok(())
    }

    /// Input torque `T0 sin(Omega t)`.
    pub fn input_torque(&self, t: f64) -> f64 {
        self.torque_amplitude * (self.omega * t).sin()
    }

    pub fn forcing_period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }
}

/// Time and generalized coordinates/velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub t: f64,
    /// `(phi1, phi1c)`, rad.
    pub q: Vec2,
    /// `(phi1_dot, phi1c_dot)`, rad/s.
    pub u: Vec2,
}

impl State {
    pub fn at_rest() -> Self {
        Self {
            t: 0.0,
            q: Vec2::zeros(),
            u: Vec2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.u.iter()).all(|v| v.is_finite())
    }

    /// Transmission error `phi1 - phi1c`.
    pub fn delta(&self) -> f64 {
        self.q[0] - self.q[1]
    }

    pub fn delta_dot(&self) -> f64 {
        self.u[0] - self.u[1]
    }
}

/// Cardan kinematics at one crosspiece configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsEval {
    /// `d phi4 / d phi1c`.
    pub eta: f64,
    /// `d phi2 / d phi1c`.
    pub nu: f64,
    pub eta_prime: f64,
    pub nu_prime: f64,
    /// Crosspiece rotation about Y', rad.
    pub phi2: f64,
    /// Output shaft angle, rad (continuous in `phi1c`).
    pub phi4: f64,
    pub phi4_dot: f64,
}

pub fn eval_kinematics(phi1c: f64, phi1c_dot: f64, beta: f64) -> KinematicsEval {
    let (sb, cb) = beta.sin_cos();
    let (s, c) = phi1c.sin_cos();
    let sb2 = sb * sb;
    // Bounded below by cos^2(beta).
    let d = 1.0 - sb2 * c * c;
    let d2 = d * d;

    let eta = cb / d;
    let nu = -sb * cb * c / d;
    let eta_prime = -cb * sb2 * (2.0 * phi1c).sin() / d2;
    let nu_prime = sb * cb * s * (1.0 + sb2 * c * c) / d2;

    // tan(phi4 - phi1c) written with a positive denominator, so the
    // correction stays in (-pi/2, pi/2) and phi4 follows phi1c across
    // every quadrant without unwrapping.
    let phi4 = phi1c + (s * c * (1.0 - cb)).atan2(cb * c * c + s * s);
    let phi2 = -(beta.tan() * s).atan();

    KinematicsEval {
        eta,
        nu,
        eta_prime,
        nu_prime,
        phi2,
        phi4,
        phi4_dot: eta * phi1c_dot,
    }
}

/// Diagonal of the mass matrix, kg m^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassMatrix(pub Vec2);

impl MassMatrix {
    pub fn solve(&self, rhs: &Vec2) -> Vec2 {
        rhs.component_div(&self.0)
    }

    /// `a^T M^-1 b`.
    pub fn inv_form(&self, a: &Vec2, b: &Vec2) -> f64 {
        a[0] * b[0] / self.0[0] + a[1] * b[1] / self.0[1]
    }

    /// `1/2 u^T M u`.
    pub fn kinetic_energy(&self, u: &Vec2) -> f64 {
        0.5 * (self.0[0] * u[0] * u[0] + self.0[1] * u[1] * u[1])
    }
}

pub fn mass_matrix(p: &SystemParams, kin: &KinematicsEval) -> MassMatrix {
    let (s2, c2) = kin.phi2.sin_cos();
    let m22 =
        p.j3 * kin.eta * kin.eta + p.j2y * kin.nu * kin.nu + p.j2x * c2 * c2 + p.j2z * s2 * s2;
    MassMatrix(Vec2::new(p.j1, m22))
}

/// Right-hand side `h` of `M u_dot = h`, N m.
///
/// The crosspiece row carries the gyroscopic coefficient
/// `(d phi2/d phi1c - 2 nu) (J2x - J2z)/2 sin(2 phi2)`; since
/// `d phi2/d phi1c = nu` the bracket is evaluated as `-nu`.
pub fn force_vector(p: &SystemParams, state: &State, kin: &KinematicsEval) -> Vec2 {
    let phi1c_dot = state.u[1];
    let gyro = p.j3 * kin.eta * kin.eta_prime
        + p.j2y * kin.nu * kin.nu_prime
        + (kin.nu - 2.0 * kin.nu) * 0.5 * (p.j2x - p.j2z) * (2.0 * kin.phi2).sin();
    let crosspiece =
        gyro * phi1c_dot * phi1c_dot + p.ks * kin.eta * kin.phi4 + p.cs * kin.eta * kin.phi4_dot;
    Vec2::new(p.input_torque(state.t), -crosspiece)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wall {
    Left,
    Right,
}

impl Wall {
    pub const BOTH: [Wall; 2] = [Wall::Left, Wall::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Wall::Left => "left",
            Wall::Right => "right",
        }
    }

    /// `W_N = [d g_N / d q]^T`, m/rad.
    pub fn normal_direction(self, arm_length: f64) -> Vec2 {
        match self {
            Wall::Left => Vec2::new(-arm_length, arm_length),
            Wall::Right => Vec2::new(arm_length, -arm_length),
        }
    }
}

impl Serialize for Wall {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl std::fmt::Display for Wall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normal gaps `(g_minus, g_plus)` at the left and right yoke walls, m.
pub fn gap_functions(p: &SystemParams, q: &Vec2) -> (f64, f64) {
    let delta = q[0] - q[1];
    (
        -delta * p.arm_length + p.clearance,
        delta * p.arm_length + p.clearance,
    )
}

pub fn gap(p: &SystemParams, q: &Vec2, wall: Wall) -> f64 {
    let (g_minus, g_plus) = gap_functions(p, q);
    match wall {
        Wall::Left => g_minus,
        Wall::Right => g_plus,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContactSet {
    pub left: bool,
    pub right: bool,
}

impl ContactSet {
    pub fn is_empty(&self) -> bool {
        !self.left && !self.right
    }

    pub fn len(&self) -> usize {
        usize::from(self.left) + usize::from(self.right)
    }

    pub fn contains(&self, wall: Wall) -> bool {
        match wall {
            Wall::Left => self.left,
            Wall::Right => self.right,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Wall> + '_ {
        Wall::BOTH.into_iter().filter(|w| self.contains(*w))
    }
}

/// Walls whose gap is at most `activation_tol`.
pub fn contact_set(p: &SystemParams, q: &Vec2, activation_tol: f64) -> ContactSet {
    let (g_minus, g_plus) = gap_functions(p, q);
    ContactSet {
        left: g_minus <= activation_tol,
        right: g_plus <= activation_tol,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactJacobians {
    pub normals: Vec<(Wall, Vec2)>,
    /// Shared by both walls: `gamma_T = nu phi1_dot R1`.
    pub tangential: Vec2,
}

pub fn contact_jacobians(
    p: &SystemParams,
    active: &ContactSet,
    kin: &KinematicsEval,
) -> ContactJacobians {
    ContactJacobians {
        normals: active
            .iter()
            .map(|w| (w, w.normal_direction(p.arm_length)))
            .collect(),
        tangential: Vec2::new(kin.nu * p.r1, 0.0),
    }
}

/// Normal velocities per active wall and the tangential slip velocity, m/s.
pub fn relative_velocities(jac: &ContactJacobians, u: &Vec2) -> (Vec<f64>, f64) {
    (
        jac.normals.iter().map(|(_, w)| w.dot(u)).collect(),
        jac.tangential.dot(u),
    )
}

/// Contact geometry and kinematics at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSnapshot {
    pub delta: f64,
    pub g_minus: f64,
    pub g_plus: f64,
    pub active: ContactSet,
    pub jacobians: ContactJacobians,
    pub gamma_n: Vec<f64>,
    pub gamma_t: f64,
}

impl ContactSnapshot {
    pub fn new(
        p: &SystemParams,
        q: &Vec2,
        u: &Vec2,
        kin: &KinematicsEval,
        activation_tol: f64,
    ) -> Self {
        let (g_minus, g_plus) = gap_functions(p, q);
        let active = contact_set(p, q, activation_tol);
        let jacobians = contact_jacobians(p, &active, kin);
        let (gamma_n, gamma_t) = relative_velocities(&jacobians, u);
        Self {
            delta: q[0] - q[1],
            g_minus,
            g_plus,
            active,
            jacobians,
            gamma_n,
            gamma_t,
        }
    }
}
