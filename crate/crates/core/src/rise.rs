//! RISE regulation control and the stability-margin calculators.
//!
//! The regulator drives the filtered tracking error
//! `e = x̃̇ + λ₀·x̃` through
//!
//! ```text
//! u_reg = −(k+1)·e − ∫₀ᵗ [α(k+1)·e + β·sgn(e)] dτ
//! ```
//!
//! With `β = 0` the control is continuous (the sign term only ever sits
//! under the integral). The calculators in the second half of the module
//! evaluate the closed-form gain and bound expressions produced by the
//! Lyapunov analysis: the minimum `β` for asymptotic tracking, the
//! minimum `k` for a given initial error, the region-of-attraction
//! radius, and the ultimate bounds on the extended error and the value
//! estimation error.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regulator gains. `lambda0` is the diagonal of the Hurwitz weight on
/// the position error (the velocity-error weight is fixed at 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiseGains {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda0: Vector2<f64>,
}

impl RiseGains {
    /// Benchmark gains: k = 20, α = 5, β = 0, λ₀ = diag(4, 2).
    pub fn benchmark() -> Self {
        RiseGains {
            k: 20.0,
            alpha: 5.0,
            beta: 0.0,
            lambda0: Vector2::new(4.0, 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::invalid_argument(
                "require k > 0, alpha > 0, beta >= 0",
            ));
        }
        if !self.lambda0.iter().all(|&l| l > 0.0) {
            return Err(Error::invalid_argument("lambda0 diagonal must be positive"));
        }
        Ok(())
    }
}

/// Integral accumulator of the RISE law, per episode.
#[derive(Debug, Clone, Default)]
pub struct RiseState {
    integral: Vector2<f64>,
    prev_integrand: Option<Vector2<f64>>,
}

impl RiseState {
    pub fn new() -> Self {
        Self::default()
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

/// Filtered tracking error `e = x̃̇ + λ₀·x̃`.
pub fn filtered_error(
    x_tilde: &Vector2<f64>,
    x_tilde_dot: &Vector2<f64>,
    lambda0: &Vector2<f64>,
) -> Vector2<f64> {
    Vector2::new(
        x_tilde_dot[0] + lambda0[0] * x_tilde[0],
        x_tilde_dot[1] + lambda0[1] * x_tilde[1],
    )
}

/// Error manifold `s = ė + α·e`.
pub fn error_manifold(e: &Vector2<f64>, e_dot: &Vector2<f64>, alpha: f64) -> Vector2<f64> {
    e_dot + alpha * e
}

/// Advance the RISE integral by one control period (trapezoidal rule)
/// and return the regulation torque.
pub fn rise_step(
    state: &mut RiseState,
    e: &Vector2<f64>,
    gains: &RiseGains,
    dt: f64,
) -> Result<Vector2<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid_argument("dt must be positive"));
    }
    let integrand = Vector2::new(
        gains.alpha * (gains.k + 1.0) * e[0] + gains.beta * sgn(e[0]),
        gains.alpha * (gains.k + 1.0) * e[1] + gains.beta * sgn(e[1]),
    );
    if let Some(prev) = state.prev_integrand {
        state.integral += 0.5 * dt * (prev + integrand);
    }
    state.prev_integrand = Some(integrand);
    Ok(-(gains.k + 1.0) * e - state.integral)
}

/// Adaptive gain law of the baseline controller: `β̇ = rate·‖e‖₁`,
/// clipped to `[0, beta_max]`. Returns the updated gain.
pub fn baseline_adaptive_beta(
    e: &Vector2<f64>,
    beta: f64,
    rate: f64,
    beta_max: f64,
    dt: f64,
) -> f64 {
    (beta + rate * dt * (e[0].abs() + e[1].abs())).clamp(0.0, beta_max)
}

/// Control-input bias `u(0) = k·e(0) − û_ss(0)`; the benchmark protocol
/// subtracts this constant from the applied torque so the reported
/// control starts near zero.
pub fn initial_control_bias(k: f64, e0: &Vector2<f64>, u_ss0: &Vector2<f64>) -> Vector2<f64> {
    k * e0 - u_ss0
}

/// Monotone non-decreasing bounding function ρ(·) used by the gain
/// conditions. Either affine `c0 + c1·x` or a tabulated map with linear
/// interpolation between strictly increasing knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rho {
    Affine { c0: f64, c1: f64 },
    Table { knots: Vec<[f64; 2]> },
}

impl Rho {
    pub fn validate(&self) -> Result<()> {
        match self {
            Rho::Affine { c0, c1 } => {
                if *c0 < 0.0 || *c1 < 0.0 {
                    return Err(Error::invalid_argument("rho coefficients must be >= 0"));
                }
            }
            Rho::Table { knots } => {
                if knots.len() < 2 {
                    return Err(Error::invalid_argument("rho table needs at least 2 knots"));
                }
                for w in knots.windows(2) {
                    if w[1][0] <= w[0][0] || w[1][1] < w[0][1] {
                        return Err(Error::invalid_argument(
                            "rho table must be increasing in x and non-decreasing in y",
                        ));
                    }
                }
                if knots.iter().any(|k| k[1] < 0.0) {
                    return Err(Error::invalid_argument("rho values must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Rho::Affine { c0, c1 } => c0 + c1 * x,
            Rho::Table { knots } => {
                if x <= knots[0][0] {
                    return knots[0][1];
                }
                for w in knots.windows(2) {
                    if x <= w[1][0] {
                        let s = (x - w[0][0]) / (w[1][0] - w[0][0]);
                        return w[0][1] + s * (w[1][1] - w[0][1]);
                    }
                }
                knots[knots.len() - 1][1]
            }
        }
    }

    /// Generalized inverse: the largest x with ρ(x) ≤ y (∞ when ρ is
    /// bounded above by y, 0 when even ρ(0) exceeds y).
    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Rho::Affine { c0, c1 } => {
                if y < *c0 {
                    0.0
                } else if *c1 == 0.0 {
                    f64::INFINITY
                } else {
                    (y - c0) / c1
                }
            }
            Rho::Table { knots } => {
                let last = knots[knots.len() - 1];
                if y >= last[1] {
                    return f64::INFINITY;
                }
                if y < knots[0][1] {
                    return 0.0;
                }
                for w in knots.windows(2) {
                    if y <= w[1][1] {
                        if w[1][1] == w[0][1] {
                            return w[1][0];
                        }
                        let s = (y - w[0][1]) / (w[1][1] - w[0][1]);
                        return w[0][0] + s * (w[1][0] - w[0][0]);
                    }
                }
                f64::INFINITY
            }
        }
    }
}

/// User-supplied constants of the stability analysis: disturbance and
/// feedforward-error derivative bounds, the adaptation cross-term
/// bounds, the Lyapunov sandwich constants, and ρ(·).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityBounds {
    /// Bound on ‖ḋ‖.
    pub c_d1: f64,
    /// Bound on ‖d̈‖.
    pub c_d2: f64,
    /// Bound on the feedforward-error rate ‖δ̇₃‖.
    pub delta3_dot: f64,
    /// Bound on ‖δ̈₃‖.
    pub delta3_ddot: f64,
    /// Bound on ‖M₁‖ (latent/adaptor cross term).
    pub c_m1: f64,
    /// Bound on ‖Ṁ₁‖.
    pub c_m1_dot: f64,
    /// Bound on ‖M₂‖.
    pub c_m2: f64,
    /// Margin ε in (0, ᾱ).
    pub epsilon: f64,
    /// ᾱ = min{α, 1}.
    pub alpha_bar: f64,
    /// Upper bound ḡ on the input-gain matrix.
    pub g_upper: f64,
    /// Lower bound g̲ on the input-gain matrix.
    pub g_lower: f64,
    /// Critic learning rate η_v entering the Lyapunov sandwich constants.
    pub eta_v: f64,
    /// Optional direct override of α_max/α_min.
    #[serde(default)]
    pub alpha_ratio_override: Option<f64>,
    pub rho: Rho,
}

impl Default for StabilityBounds {
    fn default() -> Self {
        StabilityBounds {
            c_d1: 0.0,
            c_d2: 0.0,
            delta3_dot: 0.0,
            delta3_ddot: 0.0,
            c_m1: 0.0,
            c_m1_dot: 0.0,
            c_m2: 0.0,
            epsilon: 0.5,
            alpha_bar: 1.0,
            g_upper: 1.0,
            g_lower: 0.5,
            eta_v: 1.0,
            alpha_ratio_override: None,
            rho: Rho::Affine { c0: 0.0, c1: 1.0 },
        }
    }
}

impl StabilityBounds {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.c_d1,
            self.c_d2,
            self.delta3_dot,
            self.delta3_ddot,
            self.c_m1,
            self.c_m1_dot,
            self.c_m2,
        ];
        if nonneg.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid_argument("bound constants must be >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.alpha_bar && self.alpha_bar <= 1.0) {
            return Err(Error::invalid_argument("require 0 < epsilon < alpha_bar <= 1"));
        }
        if !(self.g_upper > 0.0 && self.g_lower > 0.0 && self.eta_v > 0.0) {
            return Err(Error::invalid_argument(
                "gain bounds and eta_v must be positive",
            ));
        }
        self.rho.validate()
    }

    /// Lower Lyapunov sandwich constant `α_min = ½·min{1, 1/η_v, 1/ḡ}`.
    pub fn alpha_min(&self) -> f64 {
        0.5 * 1.0f64.min(1.0 / self.eta_v).min(1.0 / self.g_upper)
    }

    /// Upper Lyapunov sandwich constant `α_max = max{1, 1/η_v, 1/(2g̲)}`.
    pub fn alpha_max(&self) -> f64 {
        1.0f64.max(1.0 / self.eta_v).max(1.0 / (2.0 * self.g_lower))
    }

    /// `α_max/α_min`, honoring the override when present.
    pub fn alpha_ratio(&self) -> f64 {
        self.alpha_ratio_override
            .unwrap_or_else(|| self.alpha_max() / self.alpha_min())
    }
}

/// Minimum gain β for asymptotic tracking:
/// `β ≥ δ̇̄₃ + c_d1 + c_M1 + (δ̈̄₃ + c_d2 + c_Ṁ1 + c_M2)/α`.
pub fn min_gain_beta(bounds: &StabilityBounds, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid_argument("alpha must be positive"));
    }
    Ok(bounds.delta3_dot
        + bounds.c_d1
        + bounds.c_m1
        + (bounds.delta3_ddot + bounds.c_d2 + bounds.c_m1_dot + bounds.c_m2) / alpha)
}

/// Minimum gain k that places a given initial extended error inside the
/// region of attraction:
/// `k ≥ ρ²(max{√(α_max/α_min)·‖ξ(t₀)‖, UB_ξ}) / (4(ᾱ − ε))`.
pub fn min_gain_k(bounds: &StabilityBounds, xi0_norm: f64, ub_xi: f64) -> Result<f64> {
    bounds.validate()?;
    if !(xi0_norm >= 0.0) || !(ub_xi >= 0.0) {
        return Err(Error::invalid_argument("norms must be non-negative"));
    }
    let arg = (bounds.alpha_ratio().sqrt() * xi0_norm).max(ub_xi);
    let rho = bounds.rho.eval(arg);
    Ok(rho * rho / (4.0 * (bounds.alpha_bar - bounds.epsilon)))
}

/// Outputs of the ultimate-bound / region-of-attraction evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltimateBounds {
    /// Residual ball radius of the extended tracking error (0 when β = β_d).
    pub ub_xi: f64,
    /// Residual ball radius of the value estimation error.
    pub ub_v: f64,
    /// Radius of the region of attraction for gain k.
    pub roa_radius: f64,
}

/// Inputs of the value-error bound: critic reconstruction-error bounds,
/// replay size, feature-excitation level, and the feature-rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticBoundInputs {
    pub gamma: f64,
    pub delta4: f64,
    pub delta4_dot: f64,
    pub replay_size: usize,
    pub lambda_min_pi: f64,
    pub a_dot_bar: f64,
}

/// Evaluate the region-of-attraction radius and the ultimate bounds on
/// the extended error and the value estimation error.
pub fn ultimate_bounds(
    bounds: &StabilityBounds,
    gains: &RiseGains,
    beta_d: f64,
    critic: &CriticBoundInputs,
) -> Result<UltimateBounds> {
    bounds.validate()?;
    gains.validate()?;
    if !(critic.gamma > 0.0) {
        return Err(Error::invalid_argument("gamma must be positive"));
    }
    let ratio_sqrt = bounds.alpha_ratio().sqrt();

    let ub_xi = ratio_sqrt * (gains.beta - beta_d).abs() / bounds.epsilon;

    let numerator = critic.gamma * critic.delta4 + critic.delta4_dot;
    let denominator = 2.0 * critic.gamma * critic.gamma * critic.lambda_min_pi
        - 2.0 * critic.gamma * critic.replay_size as f64 * critic.a_dot_bar
        - critic.a_dot_bar;
    if denominator < 0.0 {
        return Err(Error::ConditionFailed(format!(
            "2γ²λ_min(Π) − 2γp·ǡ − ǡ = {denominator:.6} < 0; record richer data to raise λ_min(Π)"
        )));
    }
    let ub_v = if numerator == 0.0 {
        0.0
    } else if denominator == 0.0 {
        return Err(Error::ConditionFailed(
            "value-error denominator is zero with a nonzero reconstruction bound".into(),
        ));
    } else {
        let term_pointwise = numerator / critic.gamma;
        let term_batch =
            2.0 * critic.gamma * critic.replay_size as f64 * numerator / denominator;
        ratio_sqrt * term_pointwise.max(term_batch)
    };

    let roa_radius = (1.0 / ratio_sqrt)
        * bounds
            .rho
            .inverse(2.0 * (gains.k * (bounds.alpha_bar - bounds.epsilon)).sqrt());

    Ok(UltimateBounds {
        ub_xi,
        ub_v,
        roa_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filtered_error_cases() {
        let lambda = Vector2::new(4.0, 2.0);
        assert_eq!(
            filtered_error(&Vector2::zeros(), &Vector2::zeros(), &lambda),
            Vector2::zeros()
        );
        let e = filtered_error(&Vector2::new(0.1, 0.2), &Vector2::zeros(), &lambda);
        assert!((e - Vector2::new(0.4, 0.4)).norm() < 1e-15);
        let v = Vector2::new(-0.7, 1.3);
        assert_eq!(filtered_error(&Vector2::zeros(), &v, &lambda), v);
    }

    #[test]
    fn error_manifold_cases() {
        assert_eq!(
            error_manifold(&Vector2::zeros(), &Vector2::zeros(), 5.0),
            Vector2::zeros()
        );
        let s = error_manifold(&Vector2::new(1.0, 0.0), &Vector2::new(0.0, 1.0), 5.0);
        assert_eq!(s, Vector2::new(5.0, 1.0));
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rise_zero_error_gives_zero_control() {
        let gains = RiseGains::benchmark();
        let mut state = RiseState::new();
        for _ in 0..100 {
            let u = rise_step(&mut state, &Vector2::zeros(), &gains, 1e-3).unwrap();
            assert_eq!(u, Vector2::zeros());
        }
    }

    #[test]
    fn rise_one_step_closed_form() {
        let gains = RiseGains {
            beta: 0.0,
            ..RiseGains::benchmark()
        };
        let c = Vector2::new(0.3, -0.2);
        let mut state = RiseState::new();
        let dt = 1e-3;
        let u0 = rise_step(&mut state, &c, &gains, dt).unwrap();
        assert!((u0 + (gains.k + 1.0) * c).norm() < 1e-12);
        let u1 = rise_step(&mut state, &c, &gains, dt).unwrap();
        let expected = -(gains.k + 1.0) * c - gains.alpha * (gains.k + 1.0) * dt * c;
        assert!((u1 - expected).norm() < 1e-12, "{u1:?} vs {expected:?}");
    }

    #[test]
    fn rise_control_is_continuous_when_beta_zero() {
        // flipping the sign of e changes u_reg by the proportional term
        // only; the integral (and hence the control) has no jump
        let gains = RiseGains::benchmark();
        assert_eq!(gains.beta, 0.0);
        let mut state = RiseState::new();
        let dt = 1e-4;
        let mut prev_u = Vector2::zeros();
        let mut max_jump: f64 = 0.0;
        for k in 0..2000 {
            let t = k as f64 * dt;
            // error crossing zero repeatedly
            let e = Vector2::new(1e-3 * (50.0 * t).sin(), -1e-3 * (70.0 * t).cos());
            let u = rise_step(&mut state, &e, &gains, dt).unwrap();
            if k > 0 {
                max_jump = max_jump.max((u - prev_u).norm());
            }
            prev_u = u;
        }
        // proportional term alone bounds the step-to-step change
        assert!(max_jump < 0.05, "max jump {max_jump}");
    }

    #[test]
    fn baseline_beta_monotone_and_clipped() {
        let mut beta = 0.0;
        let e = Vector2::new(0.5, -0.5);
        let mut prev = beta;
        for _ in 0..10_000 {
            beta = baseline_adaptive_beta(&e, beta, 10.0, 5.0, 1e-3);
            assert!(beta >= prev);
            assert!(beta <= 5.0);
            prev = beta;
        }
        assert!((beta - 5.0).abs() < 1e-12);
        // constant under zero error
        let frozen = baseline_adaptive_beta(&Vector2::zeros(), 2.0, 10.0, 5.0, 1e-3);
        assert_eq!(frozen, 2.0);
    }

    #[test]
    fn min_gain_beta_cases() {
        let zero = StabilityBounds::default();
        assert_eq!(min_gain_beta(&zero, 5.0).unwrap(), 0.0);

        let mut b = StabilityBounds::default();
        b.c_d1 = 1.0;
        assert!((min_gain_beta(&b, 5.0).unwrap() - 1.0).abs() < 1e-15);

        let mut full = StabilityBounds::default();
        full.c_d1 = 0.5;
        full.c_d2 = 1.0;
        full.delta3_dot = 0.25;
        full.delta3_ddot = 2.0;
        full.c_m1 = 0.75;
        full.c_m1_dot = 0.5;
        full.c_m2 = 1.5;
        let base = min_gain_beta(&full, 5.0).unwrap();
        let mut doubled = full.clone();
        doubled.c_d1 *= 2.0;
        doubled.c_d2 *= 2.0;
        doubled.delta3_dot *= 2.0;
        doubled.delta3_ddot *= 2.0;
        doubled.c_m1 *= 2.0;
        doubled.c_m1_dot *= 2.0;
        doubled.c_m2 *= 2.0;
        assert!((min_gain_beta(&doubled, 5.0).unwrap() - 2.0 * base).abs() < 1e-12);

        assert!(min_gain_beta(&full, 0.0).is_err());
    }

    #[test]
    fn min_gain_k_cases() {
        // constant rho: k_min independent of the initial error
        let mut b = StabilityBounds::default();
        b.rho = Rho::Affine { c0: 3.0, c1: 0.0 };
        b.alpha_bar = 1.0;
        b.epsilon = 0.5;
        let k1 = min_gain_k(&b, 0.1, 0.0).unwrap();
        let k2 = min_gain_k(&b, 10.0, 0.0).unwrap();
        assert!((k1 - k2).abs() < 1e-12);
        assert!((k1 - 9.0 / 2.0).abs() < 1e-12);

        // identity rho with unit sandwich ratio: k_min = ρ²(2)/(4·0.5) = 2
        let mut unit = StabilityBounds::default();
        unit.rho = Rho::Affine { c0: 0.0, c1: 1.0 };
        unit.alpha_bar = 1.0;
        unit.epsilon = 0.5;
        unit.alpha_ratio_override = Some(1.0);
        let k = min_gain_k(&unit, 2.0, 0.0).unwrap();
        assert!((k - 2.0).abs() < 1e-12);

        // non-decreasing in the initial error norm
        let mut prev = 0.0;
        for i in 0..50 {
            let xi = i as f64 * 0.2;
            let k = min_gain_k(&unit, xi, 0.0).unwrap();
            assert!(k >= prev);
            prev = k;
        }

        // epsilon >= alpha_bar is rejected
        let mut bad = StabilityBounds::default();
        bad.epsilon = 1.0;
        bad.alpha_bar = 1.0;
        assert!(min_gain_k(&bad, 1.0, 0.0).is_err());
    }

    fn critic_inputs() -> CriticBoundInputs {
        CriticBoundInputs {
            gamma: 2.0,
            delta4: 0.0,
            delta4_dot: 0.0,
            replay_size: 64,
            lambda_min_pi: 10.0,
            a_dot_bar: 0.1,
        }
    }

    #[test]
    fn ultimate_bounds_cases() {
        let bounds = StabilityBounds::default();
        let gains = RiseGains::benchmark();

        // beta = beta_d: asymptotic case, UB_xi = 0
        let ub = ultimate_bounds(&bounds, &gains, gains.beta, &critic_inputs()).unwrap();
        assert_eq!(ub.ub_xi, 0.0);
        // zero reconstruction error: UB_v = 0
        assert_eq!(ub.ub_v, 0.0);
        assert!(ub.roa_radius > 0.0);

        // UB_xi linear in |beta − beta_d| and inversely proportional to epsilon
        let mut g1 = gains;
        g1.beta = 1.0;
        let a = ultimate_bounds(&bounds, &g1, 0.0, &critic_inputs()).unwrap();
        g1.beta = 2.0;
        let b = ultimate_bounds(&bounds, &g1, 0.0, &critic_inputs()).unwrap();
        assert!((b.ub_xi - 2.0 * a.ub_xi).abs() < 1e-12);
        let mut half_eps = bounds.clone();
        half_eps.epsilon = bounds.epsilon / 2.0;
        let c = ultimate_bounds(&half_eps, &g1, 0.0, &critic_inputs()).unwrap();
        assert!((c.ub_xi - 2.0 * b.ub_xi).abs() < 1e-12);
    }

    #[test]
    fn ultimate_bounds_reports_condition_failure() {
        let bounds = StabilityBounds::default();
        let gains = RiseGains::benchmark();
        let mut critic = critic_inputs();
        critic.lambda_min_pi = 0.0;
        critic.a_dot_bar = 1.0;
        critic.delta4 = 0.1;
        let err = ultimate_bounds(&bounds, &gains, gains.beta, &critic);
        assert!(matches!(err, Err(Error::ConditionFailed(_))));
    }

    #[test]
    fn rho_table_eval_and_inverse() {
        let rho = Rho::Table {
            knots: vec![[0.0, 1.0], [1.0, 2.0], [3.0, 6.0]],
        };
        rho.validate().unwrap();
        assert_eq!(rho.eval(0.5), 1.5);
        assert_eq!(rho.eval(2.0), 4.0);
        assert_eq!(rho.eval(10.0), 6.0);
        assert!((rho.inverse(1.5) - 0.5).abs() < 1e-12);
        assert!((rho.inverse(4.0) - 2.0).abs() < 1e-12);
        assert!(rho.inverse(100.0).is_infinite());
    }

    proptest::proptest! {
        #[test]
        fn min_gain_beta_is_linear_in_bounds(
            c1 in 0.0f64..10.0, c2 in 0.0f64..10.0, scale in 0.1f64..10.0
        ) {
            let mut b = StabilityBounds::default();
            b.c_d1 = c1;
            b.c_d2 = c2;
            let base = min_gain_beta(&b, 5.0).unwrap();
            b.c_d1 *= scale;
            b.c_d2 *= scale;
            let scaled = min_gain_beta(&b, 5.0).unwrap();
            proptest::prop_assert!((scaled - scale * base).abs() < 1e-9 * (1.0 + base));
        }
    }
}
