//! Planar 2-DoF manipulator simulation.
//!
//! The dynamics are the standard two-link arm with point masses at the
//! link ends, Coulomb + viscous joint friction, gravity, and an additive
//! torque disturbance:
//!
//! ```text
//! M(q) q̈ + h(q, q̇) + grav(q) + τ_f(q̇) + d = u
//! ```
//!
//! expressed through the lumped parameters
//! `η1 = (m1 + m2) l1²`, `η2 = m2 l2²`, `η3 = m2 l1 l2`, `η4 = g / l1`
//! (with `m2` inflated by the payload fraction when the arm carries a
//! load at the second link's tip). The inverse dynamics double as the
//! exact steady-state control oracle used for dataset generation.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the arm (masses kg, lengths m, frictions,
/// gravity m/s²) plus the payload carried at the tip of link 2 as a
/// fraction of `m2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub fs1: f64,
    pub fs2: f64,
    pub fv1: f64,
    pub fv2: f64,
    pub g: f64,
    #[serde(default)]
    pub payload_fraction: f64,
}

/// Lumped parameters derived from the physical ones.
#[derive(Debug, Clone, Copy)]
pub struct Eta {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

impl PlantParams {
    /// Benchmark values: m = (7, 4) kg, l = (0.5, 0.5) m, Fs = 0.8,
    /// Fv = 4.0, g = 9.8 m/s².
    pub fn nominal() -> Self {
        Self {
            m1: 7.0,
            m2: 4.0,
            l1: 0.5,
            l2: 0.5,
            fs1: 0.8,
            fs2: 0.8,
            fv1: 4.0,
            fv2: 4.0,
            g: 9.8,
            payload_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m1, self.m2, self.l1, self.l2, self.g];
        if positive.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::invalid_argument(
                "masses, lengths and gravity must be strictly positive",
            ));
        }
        let frictions = [self.fs1, self.fs2, self.fv1, self.fv2];
        if frictions.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid_argument(
                "friction coefficients must be non-negative",
            ));
        }
        if !(self.payload_fraction >= 0.0) || !self.payload_fraction.is_finite() {
            return Err(Error::invalid_argument(
                "payload fraction must be non-negative",
            ));
        }
        Ok(())
    }

    /// Effective second-link mass including the payload.
    pub fn m2_effective(&self) -> f64 {
        self.m2 * (1.0 + self.payload_fraction)
    }

    pub fn eta(&self) -> Eta {
        let m2 = self.m2_effective();
        Eta {
            eta1: (self.m1 + m2) * self.l1 * self.l1,
            eta2: m2 * self.l2 * self.l2,
            eta3: m2 * self.l1 * self.l2,
            eta4: self.g / self.l1,
        }
    }

    pub fn with_payload(&self, payload_fraction: f64) -> Self {
        Self {
            payload_fraction,
            ..*self
        }
    }

    /// The eight uncertain parameters in calibration order
    /// (m1, m2, l1, l2, Fs1, Fs2, Fv1, Fv2).
    pub fn theta(&self) -> [f64; 8] {
        [
            self.m1, self.m2, self.l1, self.l2, self.fs1, self.fs2, self.fv1, self.fv2,
        ]
    }

    pub fn from_theta(theta: &[f64; 8], g: f64, payload_fraction: f64) -> Self {
        Self {
            m1: theta[0],
            m2: theta[1],
            l1: theta[2],
            l2: theta[3],
            fs1: theta[4],
            fs2: theta[5],
            fv1: theta[6],
            fv2: theta[7],
            g,
            payload_fraction,
        }
    }
}

/// Joint state of the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
    pub t: f64,
}

impl PlantState {
    pub fn new(q: Vector2<f64>, qdot: Vector2<f64>, t: f64) -> Self {
        Self { q, qdot, t }
    }

    pub fn at_rest(q: Vector2<f64>) -> Self {
        Self {
            q,
            qdot: Vector2::zeros(),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|x| x.is_finite()) && self.t.is_finite()
    }
}

/// Additive torque disturbance acting on the joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    None,
    /// `d(t) = [a1·sin(νt), a2·cos(νt)]`; the benchmark uses
    /// a1 = −80, a2 = 30, ν = 10 rad/s.
    Sinusoid { a1: f64, a2: f64, nu: f64 },
    /// Piecewise-linear table of (t, d1, d2) rows; clamped outside the range.
    Table { rows: Vec<[f64; 3]> },
}

impl Disturbance {
    /// The benchmark disturbance, roughly 50% of the required torque.
    pub fn paper_sinusoid() -> Self {
        Disturbance::Sinusoid {
            a1: -80.0,
            a2: 30.0,
            nu: 10.0,
        }
    }

    pub fn eval(&self, t: f64) -> Vector2<f64> {
        match self {
            Disturbance::None => Vector2::zeros(),
            Disturbance::Sinusoid { a1, a2, nu } => {
                Vector2::new(a1 * (nu * t).sin(), a2 * (nu * t).cos())
            }
            Disturbance::Table { rows } => {
                if rows.is_empty() {
                    return Vector2::zeros();
                }
                if t <= rows[0][0] {
                    return Vector2::new(rows[0][1], rows[0][2]);
                }
                for w in rows.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if t <= b[0] {
                        let s = if b[0] > a[0] { (t - a[0]) / (b[0] - a[0]) } else { 0.0 };
                        return Vector2::new(
                            a[1] + s * (b[1] - a[1]),
                            a[2] + s * (b[2] - a[2]),
                        );
                    }
                }
                let last = rows[rows.len() - 1];
                Vector2::new(last[1], last[2])
            }
        }
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Inertia matrix M(q). Symmetric positive definite for all q.
pub fn mass_matrix(q: &Vector2<f64>, params: &PlantParams) -> Matrix2<f64> {
    let Eta {
        eta1, eta2, eta3, ..
    } = params.eta();
    let c2 = q[1].cos();
    Matrix2::new(
        eta1 + eta2 + 2.0 * eta3 * c2,
        eta2 + eta3 * c2,
        eta2 + eta3 * c2,
        eta2,
    )
}

/// Centrifugal/Coriolis torque h(q, q̇).
pub fn coriolis(q: &Vector2<f64>, qdot: &Vector2<f64>, params: &PlantParams) -> Vector2<f64> {
    let eta3 = params.eta().eta3;
    let s2 = q[1].sin();
    Vector2::new(
        -eta3 * (2.0 * qdot[0] * qdot[1] + qdot[1] * qdot[1]) * s2,
        eta3 * qdot[0] * qdot[0] * s2,
    )
}

/// Gravity torque.
pub fn gravity(q: &Vector2<f64>, params: &PlantParams) -> Vector2<f64> {
    let Eta {
        eta1, eta3, eta4, ..
    } = params.eta();
    let c12 = (q[0] + q[1]).cos();
    Vector2::new(eta4 * eta1 * q[0].cos() + eta3 * eta4 * c12, eta3 * eta4 * c12)
}

/// Joint friction `τ_f = Fs·sgn(q̇) + Fv·q̇` with `sgn(0) = 0`.
pub fn friction(qdot: &Vector2<f64>, params: &PlantParams) -> Vector2<f64> {
    Vector2::new(
        params.fs1 * sgn(qdot[0]) + params.fv1 * qdot[0],
        params.fs2 * sgn(qdot[1]) + params.fv2 * qdot[1],
    )
}

/// Solve the torque balance for the joint accelerations.
pub fn forward_dynamics(
    state: &PlantState,
    u: &Vector2<f64>,
    params: &PlantParams,
    d: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    params.validate()?;
    if !state.is_finite() || !u.iter().all(|x| x.is_finite()) || !d.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid_argument(
            "non-finite state, torque or disturbance",
        ));
    }
    let m = mass_matrix(&state.q, params);
    let rhs = u - coriolis(&state.q, &state.qdot, params) - gravity(&state.q, params)
        - friction(&state.qdot, params)
        - d;
    // det(M) = η1η2 − η3²cos²(q2) ≥ η1η2 − η3² = m1·m2_eff·l1²l2² > 0
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Ok(Vector2::new(
        (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det,
        (-m[(1, 0)] * rhs[0] + m[(0, 0)] * rhs[1]) / det,
    ))
}

/// Exact torque that realizes the requested acceleration (friction
/// included, no disturbance). This is the steady-state control oracle:
/// evaluated along a desired trajectory it yields `u_ss(t)`.
pub fn inverse_dynamics(
    q: &Vector2<f64>,
    qdot: &Vector2<f64>,
    qddot: &Vector2<f64>,
    params: &PlantParams,
) -> Vector2<f64> {
    mass_matrix(q, params) * qddot
        + coriolis(q, qdot, params)
        + gravity(q, params)
        + friction(qdot, params)
}

/// Total mechanical energy; conserved when friction, torque and
/// disturbance are all zero. Used as an integration-accuracy oracle.
pub fn mechanical_energy(state: &PlantState, params: &PlantParams) -> f64 {
    let m = mass_matrix(&state.q, params);
    let kinetic = 0.5 * state.qdot.dot(&(m * state.qdot));
    let m2 = params.m2_effective();
    let potential = params.g
        * ((params.m1 + m2) * params.l1 * state.q[0].sin()
            + m2 * params.l2 * (state.q[0] + state.q[1]).sin());
    kinetic + potential
}

const BLOWUP_LIMIT: f64 = 1e6;

/// One classical Runge–Kutta step of the second-order dynamics with the
/// torque held constant over the step (zero-order hold). The disturbance
/// is evaluated at the substep times.
pub fn step_rk4(
    state: &PlantState,
    u: &Vector2<f64>,
    params: &PlantParams,
    disturbance: &Disturbance,
    dt: f64,
) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::invalid_argument("dt must be positive"));
    }
    let deriv = |q: Vector2<f64>, qdot: Vector2<f64>, t: f64| -> Result<(Vector2<f64>, Vector2<f64>)> {
        let s = PlantState { q, qdot, t };
        let d = disturbance.eval(t);
        Ok((qdot, forward_dynamics(&s, u, params, &d)?))
    };

    let (k1q, k1v) = deriv(state.q, state.qdot, state.t)?;
    let (k2q, k2v) = deriv(
        state.q + 0.5 * dt * k1q,
        state.qdot + 0.5 * dt * k1v,
        state.t + 0.5 * dt,
    )?;
    let (k3q, k3v) = deriv(
        state.q + 0.5 * dt * k2q,
        state.qdot + 0.5 * dt * k2v,
        state.t + 0.5 * dt,
    )?;
    let (k4q, k4v) = deriv(state.q + dt * k3q, state.qdot + dt * k3v, state.t + dt)?;

    let next = PlantState {
        q: state.q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        qdot: state.qdot + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        t: state.t + dt,
    };
    if next
        .q
        .iter()
        .chain(next.qdot.iter())
        .any(|x| !x.is_finite() || x.abs() > BLOWUP_LIMIT)
    {
        return Err(Error::Divergence {
            step: 0,
            t: next.t,
            what: "plant state exceeded blow-up limit".into(),
        });
    }
    Ok(next)
}

/// Integrate for `n_steps`, calling `control` once per step (zero-order
/// hold). Divergence errors identify the failing step.
pub fn simulate(
    mut state: PlantState,
    mut control: impl FnMut(&PlantState) -> Vector2<f64>,
    params: &PlantParams,
    disturbance: &Disturbance,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<PlantState>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(state);
    for step in 0..n_steps {
        let u = control(&state);
        state = step_rk4(&state, &u, params, disturbance, dt).map_err(|e| match e {
            Error::Divergence { t, what, .. } => Error::Divergence { step, t, what },
            other => other,
        })?;
        out.push(state);
    }
    Ok(out)
}

/// Draw a random plant from the ±`fraction` uniform envelope around the
/// nominal values. Gravity is held fixed; the payload fraction carries
/// over unchanged.
pub fn sample_uncertain_params(
    nominal: &PlantParams,
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<PlantParams> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid_argument(format!(
            "uncertainty fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let mut draw = |x: f64| {
        if fraction == 0.0 {
            x
        } else {
            x * rng.random_range(1.0 - fraction..=1.0 + fraction)
        }
    };
    let sampled = PlantParams {
        m1: draw(nominal.m1),
        m2: draw(nominal.m2),
        l1: draw(nominal.l1),
        l2: draw(nominal.l2),
        fs1: draw(nominal.fs1),
        fs2: draw(nominal.fs2),
        fv1: draw(nominal.fv1),
        fv2: draw(nominal.fv2),
        g: nominal.g,
        payload_fraction: nominal.payload_fraction,
    };
    sampled.validate()?;
    Ok(sampled)
}
