//! Closed-loop experiment runner: plant + steady-state policy +
//! regulator + adaptation law, with the scenario catalog and the
//! tracking/effort/actuation-rate metrics.

use nalgebra::{DMatrix, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::cgan::{CganModel, FaultDetector, FaultDetectorConfig, FaultStatus};
use crate::ekf_indirect::{ekf_step, AdaptorIndirect, EkfConfig, EkfEstimate};
use crate::error::{Error, Result};
use crate::plant::{
    inverse_dynamics, sample_uncertain_params, step_rk4, Disturbance, PlantParams, PlantState,
};
use crate::rise::{
    baseline_adaptive_beta, filtered_error, initial_control_bias, rise_step, RiseGains, RiseState,
};
use crate::rl_direct::{
    extended_state, lambda_all, rank_check, reward, td_error, update_adaptor, update_critic,
    AdaptorDirect, CriticNet, LatentState, ReplayBuffer, RlConfig, Snapshot,
};
use crate::tfs::TfsCoefficients;

/// Which controller drives the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Exact inverse dynamics of the (current) true plant as feedforward.
    OracleFeedforward,
    /// Frozen policy at z = 0, no adaptation.
    FixedZ,
    /// Actor–critic latent adaptation.
    Direct,
    /// EKF + learned decoder latent adaptation.
    Indirect,
    /// RISE alone with the adaptive-β law, no feedforward.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::OracleFeedforward,
        Variant::FixedZ,
        Variant::Direct,
        Variant::Indirect,
        Variant::Baseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::OracleFeedforward => "oracle",
            Variant::FixedZ => "fixed-z",
            Variant::Direct => "direct",
            Variant::Indirect => "indirect",
            Variant::Baseline => "baseline",
        }
    }

    pub fn parse(name: &str) -> Result<Variant> {
        match name {
            "oracle" | "oracle-feedforward" => Ok(Variant::OracleFeedforward),
            "fixed-z" => Ok(Variant::FixedZ),
            "direct" => Ok(Variant::Direct),
            "indirect" => Ok(Variant::Indirect),
            "baseline" => Ok(Variant::Baseline),
            other => Err(Error::invalid_argument(format!(
                "unknown variant '{other}' (expected oracle, fixed-z, direct, indirect or baseline)"
            ))),
        }
    }
}

/// Timed change applied to the running episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventAction {
    /// Load the arm with this fraction of the second link's mass.
    SetPayload { fraction: f64 },
    SetDisturbance { disturbance: Disturbance },
}

/// How the constant control bias is chosen at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    None,
    /// The benchmark protocol's printed expression `k·e(0) − û_ss(0)`.
    Paper,
    /// Bias equal to the control law's own value at t = 0, so the
    /// applied torque starts at exactly zero.
    ZeroInitial,
}

/// One benchmark setup: the hidden true plant (drawn per seed), the
/// desired trajectory, timed events, and the controller variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub nominal: PlantParams,
    /// The true plant is drawn uniformly within ±fraction of nominal
    /// per seed (0 runs the nominal plant).
    pub param_uncertainty: f64,
    pub trajectory: TfsCoefficients,
    pub duration: f64,
    pub dt: f64,
    pub events: Vec<Event>,
    pub disturbance: Disturbance,
    pub variant: Variant,
    /// Attach the discriminator-based fault monitor.
    #[serde(default)]
    pub monitor_faults: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !(self.dt > 0.0) {
            return Err(Error::invalid_argument("duration and dt must be positive"));
        }
        let mut prev = f64::NEG_INFINITY;
        for ev in &self.events {
            if ev.t < prev {
                return Err(Error::invalid_argument("events must be time-ordered"));
            }
            if ev.t > self.duration {
                return Err(Error::invalid_argument("event beyond episode duration"));
            }
            prev = ev.t;
        }
        Ok(())
    }

    pub fn with_variant(&self, variant: Variant) -> Scenario {
        Scenario {
            variant,
            ..self.clone()
        }
    }
}

/// The benchmark trajectory `x_d = [π/4 + 0.2·cos(2πt), sin(2πt)]`.
pub fn paper_trajectory() -> TfsCoefficients {
    let n_x = 3;
    let mut coeffs = DMatrix::zeros(2, 2 * n_x + 1);
    coeffs[(0, 0)] = std::f64::consts::FRAC_PI_2; // DC kernel element is 0.5
    coeffs[(0, 1)] = 0.2;
    coeffs[(1, n_x + 1)] = 1.0;
    TfsCoefficients::new(coeffs, std::f64::consts::TAU, n_x).expect("static trajectory")
}

/// The three benchmark scenarios plus oracle / fixed-z ablation
/// variants of each.
pub fn scenario_catalog() -> Vec<Scenario> {
    let nominal = PlantParams::nominal();
    let sim1 = Scenario {
        name: "sim1".into(),
        nominal,
        param_uncertainty: 0.5,
        trajectory: paper_trajectory(),
        duration: 30.0,
        dt: 1e-3,
        events: vec![Event {
            t: 22.0,
            action: EventAction::SetPayload { fraction: 0.25 },
        }],
        disturbance: Disturbance::None,
        variant: Variant::Direct,
        monitor_faults: false,
    };
    let sim2 = Scenario {
        name: "sim2".into(),
        nominal,
        param_uncertainty: 0.5,
        trajectory: paper_trajectory(),
        duration: 30.0,
        dt: 1e-3,
        events: Vec::new(),
        disturbance: Disturbance::paper_sinusoid(),
        variant: Variant::Direct,
        monitor_faults: false,
    };
    let fault_demo = Scenario {
        name: "fault-demo".into(),
        nominal,
        param_uncertainty: 0.0,
        trajectory: paper_trajectory(),
        duration: 30.0,
        dt: 1e-3,
        events: vec![Event {
            t: 18.0,
            action: EventAction::SetPayload { fraction: 0.60 },
        }],
        disturbance: Disturbance::None,
        variant: Variant::FixedZ,
        monitor_faults: true,
    };

    let mut catalog = Vec::new();
    for base in [sim1, sim2, fault_demo] {
        catalog.push(base.clone());
        for (suffix, variant) in [("oracle", Variant::OracleFeedforward), ("fixed-z", Variant::FixedZ)] {
            let mut s = base.with_variant(variant);
            s.name = format!("{}-{}", base.name, suffix);
            catalog.push(s);
        }
    }
    catalog
}

pub fn find_scenario(catalog: &[Scenario], name: &str) -> Option<Scenario> {
    catalog.iter().find(|s| s.name == name).cloned()
}

/// Per-step record of the closed loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: [f64; 2],
    pub q_d: [f64; 2],
    pub qdot: [f64; 2],
    pub u: [f64; 2],
    pub u_ss: [f64; 2],
    pub u_reg: [f64; 2],
    pub e: [f64; 2],
    pub x_tilde: [f64; 2],
    pub reward: f64,
    pub v_hat: Option<f64>,
    pub delta_td: Option<f64>,
    pub z: Option<[f64; 2]>,
    pub lambda_min_pi: Option<f64>,
    pub rank_ok: Option<bool>,
    pub theta_hat: Option<[f64; 8]>,
    pub cov_trace: Option<f64>,
    pub score: Option<f64>,
    pub fault: Option<bool>,
}

/// Complete episode record at a uniform step.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub scenario: String,
    pub variant: Variant,
    pub seed: u64,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    /// True plant the controllers were not allowed to see.
    pub true_params: PlantParams,
}

impl EpisodeTrace {
    pub fn max_tracking_error_over(&self, t_from: f64, t_to: f64) -> f64 {
        self.records
            .iter()
            .filter(|r| r.t >= t_from && r.t < t_to)
            .map(|r| r.x_tilde[0].abs().max(r.x_tilde[1].abs()))
            .fold(0.0, f64::max)
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward * self.dt).sum()
    }
}

/// Trained models the adaptive variants need.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub cgan: Option<CganModel>,
    pub adaptor: Option<AdaptorIndirect>,
}

/// Per-episode options shared across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub gains: RiseGains,
    pub rl: RlConfig,
    pub ekf: EkfConfig,
    pub fault: FaultDetectorConfig,
    pub bias_mode: BiasMode,
    /// Adaptive-β law of the baseline variant.
    pub baseline_beta_rate: f64,
    pub baseline_beta_max: f64,
    /// Initial joint state (the benchmark starts at rest at the origin).
    pub q0: [f64; 2],
    pub qdot0: [f64; 2],
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            gains: RiseGains::benchmark(),
            rl: RlConfig::default(),
            ekf: EkfConfig::default(),
            fault: FaultDetectorConfig::default(),
            bias_mode: BiasMode::Paper,
            baseline_beta_rate: 5.0,
            baseline_beta_max: 40.0,
            q0: [0.0, 0.0],
            qdot0: [0.0, 0.0],
        }
    }
}

struct DirectState {
    critic: CriticNet,
    adaptor: AdaptorDirect,
    replay: ReplayBuffer,
    latent: Option<LatentState>,
    prev_a: Option<nalgebra::DVector<f64>>,
    prev_v_lambda: Vec<f64>,
    z: nalgebra::DVector<f64>,
    lambda_min_pi: f64,
    rank_ok: bool,
}

/// Run one closed-loop episode. The true plant is drawn from the
/// scenario's uncertainty envelope using `seed`; all controller-side
/// randomness derives from the same seed.
pub fn run_episode(
    scenario: &Scenario,
    models: &Models,
    opts: &EpisodeOptions,
    seed: u64,
) -> Result<EpisodeTrace> {
    scenario.validate()?;
    opts.gains.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base_params = if scenario.param_uncertainty > 0.0 {
        sample_uncertain_params(&scenario.nominal, scenario.param_uncertainty, &mut rng)?
    } else {
        scenario.nominal
    };

    let needs_model = matches!(
        scenario.variant,
        Variant::FixedZ | Variant::Direct | Variant::Indirect
    ) || scenario.monitor_faults;
    let model = match (&models.cgan, needs_model) {
        (Some(m), _) => Some(m),
        (None, false) => None,
        (None, true) => {
            return Err(Error::InvalidState(format!(
                "variant '{}' needs a trained model",
                scenario.variant.name()
            )))
        }
    };
    if scenario.variant == Variant::Indirect && models.adaptor.is_none() {
        return Err(Error::InvalidState(
            "indirect variant needs a trained latent decoder".into(),
        ));
    }

    let c_xd = &scenario.trajectory;
    let label = crate::cgan::label_vec(c_xd);
    let n_steps = (scenario.duration / scenario.dt).round() as usize;
    let dt = scenario.dt;

    let mut state = PlantState {
        q: Vector2::new(opts.q0[0], opts.q0[1]),
        qdot: Vector2::new(opts.qdot0[0], opts.qdot0[1]),
        t: 0.0,
    };
    let mut current_params = base_params;
    let mut disturbance = scenario.disturbance.clone();
    let mut next_event = 0usize;

    let mut rise = RiseState::new();
    let mut bias = Vector2::zeros();
    let mut beta = opts.gains.beta;

    let mut direct = if scenario.variant == Variant::Direct {
        let m = model.unwrap();
        Some(DirectState {
            critic: CriticNet::new(opts.rl.l_c, 2 * 4 + 2, seed.wrapping_add(0x9e3779b9))?,
            adaptor: AdaptorDirect::zeros(m.latent_dim),
            replay: ReplayBuffer::new(opts.rl.replay_capacity),
            latent: None,
            prev_a: None,
            prev_v_lambda: vec![0.0; m.latent_dim],
            z: nalgebra::DVector::zeros(m.latent_dim),
            lambda_min_pi: 0.0,
            rank_ok: false,
        })
    } else {
        None
    };

    let mut ekf: Option<EkfEstimate> = if scenario.variant == Variant::Indirect {
        Some(EkfEstimate::new(&state, &scenario.nominal, &opts.ekf))
    } else {
        None
    };
    let mut ekf_frozen = false;

    let mut detector = if scenario.monitor_faults {
        Some(FaultDetector::new(
            opts.fault,
            c_xd.omega(),
            dt,
            c_xd.n_channels(),
        )?)
    } else {
        None
    };

    let mut records = Vec::with_capacity(n_steps);

    for step in 0..n_steps {
        let t = step as f64 * dt;

        while next_event < scenario.events.len() && scenario.events[next_event].t <= t {
            match &scenario.events[next_event].action {
                EventAction::SetPayload { fraction } => {
                    current_params = base_params.with_payload(*fraction);
                }
                EventAction::SetDisturbance { disturbance: d } => {
                    disturbance = d.clone();
                }
            }
            next_event += 1;
        }

        let xd_v = c_xd.decode(t);
        let xd_dot_v = c_xd.decode_derivative(t, 1);
        let x_d = Vector2::new(xd_v[0], xd_v[1]);
        let x_d_dot = Vector2::new(xd_dot_v[0], xd_dot_v[1]);
        let x_tilde = state.q - x_d;
        let x_tilde_dot = state.qdot - x_d_dot;
        let e = filtered_error(&x_tilde, &x_tilde_dot, &opts.gains.lambda0);

        // variant feedforward
        let (u_ss, z_now, theta_now, cov_now) = match scenario.variant {
            Variant::OracleFeedforward => {
                let xd_ddot_v = c_xd.decode_derivative(t, 2);
                let u = inverse_dynamics(
                    &x_d,
                    &x_d_dot,
                    &Vector2::new(xd_ddot_v[0], xd_ddot_v[1]),
                    &current_params,
                );
                (u, None, None, None)
            }
            Variant::Baseline => (Vector2::zeros(), None, None, None),
            Variant::FixedZ => {
                let m = model.unwrap();
                let z = nalgebra::DVector::zeros(m.latent_dim);
                let u = m.steady_state_policy(&z, c_xd, t)?;
                (Vector2::new(u[0], u[1]), Some([0.0, 0.0]), None, None)
            }
            Variant::Direct => {
                let m = model.unwrap();
                let d = direct.as_mut().unwrap();
                if d.latent.is_none() {
                    d.latent = Some(LatentState::new(&d.adaptor, &e));
                }
                let v_lambda = d.prev_v_lambda.clone();
                let z = d.latent.as_mut().unwrap().update(
                    &d.adaptor,
                    &v_lambda,
                    &e,
                    dt,
                    opts.rl.z_clip,
                );
                d.z = z.clone();
                let u = m.steady_state_policy(&z, c_xd, t)?;
                (
                    Vector2::new(u[0], u[1]),
                    Some([z[0], z.get(1).copied().unwrap_or(0.0)]),
                    None,
                    None,
                )
            }
            Variant::Indirect => {
                let m = model.unwrap();
                let est = ekf.as_ref().unwrap();
                let adaptor = models.adaptor.as_ref().unwrap();
                let z = adaptor.indirect_z(&est.theta(), &label)?;
                let u = m.steady_state_policy(&z, c_xd, t)?;
                (
                    Vector2::new(u[0], u[1]),
                    Some([z[0], z.get(1).copied().unwrap_or(0.0)]),
                    Some(est.theta()),
                    Some(est.cov_trace()),
                )
            }
        };

        // regulation
        let gains_now = RiseGains {
            beta,
            ..opts.gains
        };
        if scenario.variant == Variant::Baseline {
            beta = baseline_adaptive_beta(&e, beta, opts.baseline_beta_rate, opts.baseline_beta_max, dt);
        }
        let u_reg = rise_step(&mut rise, &e, &gains_now, dt)?;
        let u_law = u_ss + u_reg;

        if step == 0 {
            bias = match opts.bias_mode {
                BiasMode::None => Vector2::zeros(),
                BiasMode::Paper => initial_control_bias(opts.gains.k, &e, &u_ss),
                BiasMode::ZeroInitial => u_law,
            };
        }
        let u = u_law - bias;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence {
                step,
                t,
                what: "control torque became non-finite".into(),
            });
        }

        let r = reward(&x_tilde, &u, &opts.rl.reward);

        // fault monitor sees the applied control
        let (score, fault_flag) = match (&mut detector, model) {
            (Some(det), Some(m)) => {
                let u_dvec = nalgebra::DVector::from_column_slice(&[u[0], u[1]]);
                let e_norm = e.norm();
                let (s, status) = det.step(m, c_xd, &u_dvec, e_norm, t, dt)?;
                (s, Some(status == FaultStatus::Fault))
            }
            _ => (None, None),
        };

        // direct adaptation
        let (v_hat, delta) = if let Some(d) = direct.as_mut() {
            let m = model.unwrap();
            let x_ext = extended_state(&x_tilde, &x_tilde_dot, &x_d, &x_d_dot);
            let a = d.critic.features(&x_ext, &u)?;
            let a_dot = match &d.prev_a {
                Some(p) => (&a - p) / dt,
                None => nalgebra::DVector::zeros(a.len()),
            };
            d.prev_a = Some(a.clone());
            let delta = td_error(r, &a, &a_dot, &d.critic.v, opts.rl.reward.gamma);
            let v_hat = d.critic.value_from_features(&a);
            let snap = Snapshot {
                t,
                a: a.clone(),
                a_dot,
                r,
            };
            update_critic(
                &mut d.critic,
                &d.replay,
                &snap,
                opts.rl.reward.eta_v,
                opts.rl.reward.gamma,
                dt,
            );
            if step % opts.rl.snapshot_stride == 0 {
                d.replay.push(snap);
                let (ok, lmin) = rank_check(&d.replay, opts.rl.l_c);
                d.rank_ok = ok;
                d.lambda_min_pi = lmin;
            }
            let lambdas = lambda_all(
                &d.critic,
                m,
                &d.z,
                c_xd,
                t,
                &x_ext,
                &u,
                opts.rl.reward.eta_w,
            )?;
            let v_lambda: Vec<f64> = lambdas.iter().map(|l| d.critic.v.dot(l)).collect();
            update_adaptor(&mut d.adaptor, &v_lambda, &e, dt);
            d.prev_v_lambda = v_lambda;
            (Some(v_hat), Some(delta))
        } else {
            (None, None)
        };

        // indirect identification runs on noisy position measurements
        if let (Some(est), false) = (&mut ekf, ekf_frozen) {
            let n0: f64 = StandardNormal.sample(&mut rng);
            let n1: f64 = StandardNormal.sample(&mut rng);
            let y = Vector2::new(
                state.q[0] + opts.ekf.meas_noise_std * n0,
                state.q[1] + opts.ekf.meas_noise_std * n1,
            );
            match ekf_step(est, &u, &y, dt, &opts.ekf) {
                Ok(next) => *est = next,
                Err(_) => {
                    // freeze the estimate; the regulator keeps the loop up
                    ekf_frozen = true;
                }
            }
        }

        records.push(StepRecord {
            t,
            q: [state.q[0], state.q[1]],
            q_d: [x_d[0], x_d[1]],
            qdot: [state.qdot[0], state.qdot[1]],
            u: [u[0], u[1]],
            u_ss: [u_ss[0], u_ss[1]],
            u_reg: [u_reg[0], u_reg[1]],
            e: [e[0], e[1]],
            x_tilde: [x_tilde[0], x_tilde[1]],
            reward: r,
            v_hat,
            delta_td: delta,
            z: z_now,
            lambda_min_pi: direct.as_ref().map(|d| d.lambda_min_pi),
            rank_ok: direct.as_ref().map(|d| d.rank_ok),
            theta_hat: theta_now,
            cov_trace: cov_now,
            score,
            fault: fault_flag,
        });

        state = step_rk4(&state, &u, &current_params, &disturbance, dt).map_err(|err| {
            match err {
                Error::Divergence { t, what, .. } => Error::Divergence { step, t, what },
                other => other,
            }
        })?;
    }

    Ok(EpisodeTrace {
        scenario: scenario.name.clone(),
        variant: scenario.variant,
        seed,
        dt,
        records,
        true_params: base_params,
    })
}

/// Diagonal weights of the three cost integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub q: Vector2<f64>,
    pub r1: Vector2<f64>,
    pub r2: Vector2<f64>,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            q: Vector2::new(2.0, 2.0),
            r1: Vector2::new(0.01, 0.01),
            r2: Vector2::new(0.002, 0.002),
        }
    }
}

/// Tracking error, control effort, actuation rate, and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iae: f64,
    pub ce: f64,
    pub iar: f64,
    pub j_p: f64,
}

/// Trapezoidal integrals of the weighted L1 tracking error, control
/// magnitude, and control rate (backward difference, first sample 0).
pub fn compute_metrics(trace: &EpisodeTrace, weights: &MetricWeights) -> Metrics {
    let dt = trace.dt;
    let n = trace.records.len();
    let mut iae = 0.0;
    let mut ce = 0.0;
    let mut iar = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for k in 0..n {
        let r = &trace.records[k];
        let f_iae = weights.q[0] * r.x_tilde[0].abs() + weights.q[1] * r.x_tilde[1].abs();
        let f_ce = weights.r1[0] * r.u[0].abs() + weights.r1[1] * r.u[1].abs();
        let f_iar = if k == 0 {
            0.0
        } else {
            let pu = &trace.records[k - 1].u;
            weights.r2[0] * ((r.u[0] - pu[0]) / dt).abs()
                + weights.r2[1] * ((r.u[1] - pu[1]) / dt).abs()
        };
        if let Some((p_iae, p_ce, p_iar)) = prev {
            iae += 0.5 * dt * (p_iae + f_iae);
            ce += 0.5 * dt * (p_ce + f_ce);
            iar += 0.5 * dt * (p_iar + f_iar);
        }
        prev = Some((f_iae, f_ce, f_iar));
    }
    Metrics {
        iae,
        ce,
        iar,
        j_p: iae + ce + iar,
    }
}

const CSV_HEADER: &str = "t,q1,q2,qd1,qd2,u1,u2,e1,e2,reward,uss1,uss2,ureg1,ureg2,xt1,xt2,qdot1,qdot2,v_hat,delta_td,z1,z2,lambda_min_pi,rank_ok,th1,th2,th3,th4,th5,th6,th7,th8,cov_trace,score,fault";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Stream the trace to CSV, one row per control step.
pub fn write_trace_csv(trace: &EpisodeTrace, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &trace.records {
        let theta = r
            .theta_hat
            .map(|th| th.map(|x| format!("{x}")).join(","))
            .unwrap_or_else(|| ",,,,,,,".into());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.q[0],
            r.q[1],
            r.q_d[0],
            r.q_d[1],
            r.u[0],
            r.u[1],
            r.e[0],
            r.e[1],
            r.reward,
            r.u_ss[0],
            r.u_ss[1],
            r.u_reg[0],
            r.u_reg[1],
            r.x_tilde[0],
            r.x_tilde[1],
            r.qdot[0],
            r.qdot[1],
            opt(r.v_hat),
            opt(r.delta_td),
            opt(r.z.map(|z| z[0])),
            opt(r.z.map(|z| z[1])),
            opt(r.lambda_min_pi),
            r.rank_ok.map(|b| (b as u8).to_string()).unwrap_or_default(),
            theta,
            opt(r.cov_trace),
            opt(r.score),
            r.fault.map(|b| (b as u8).to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

/// Metrics summary in the shape the experiment reports expect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub variant: String,
    pub iae: f64,
    pub ce: f64,
    pub iar: f64,
    pub j_p: f64,
    pub seed: u64,
}

impl MetricsSummary {
    pub fn new(trace: &EpisodeTrace, metrics: &Metrics) -> Self {
        MetricsSummary {
            scenario: trace.scenario.clone(),
            variant: trace.variant.name().into(),
            iae: metrics.iae,
            ce: metrics.ce,
            iar: metrics.iar,
            j_p: metrics.j_p,
            seed: trace.seed,
        }
    }
}

/// Minimal line-plot SVG of tracking (q vs q_d per joint) and torque.
pub fn write_plots_svg(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    const W: f64 = 900.0;
    const H: f64 = 220.0;
    const PAD: f64 = 40.0;

    struct Series<'a> {
        name: &'a str,
        color: &'a str,
        values: Vec<f64>,
    }

    let panels: Vec<(String, Vec<Series>)> = vec![
        (
            "joint 1 position (rad)".into(),
            vec![
                Series {
                    name: "q1",
                    color: "#1f77b4",
                    values: trace.records.iter().map(|r| r.q[0]).collect(),
                },
                Series {
                    name: "q1_d",
                    color: "#d62728",
                    values: trace.records.iter().map(|r| r.q_d[0]).collect(),
                },
            ],
        ),
        (
            "joint 2 position (rad)".into(),
            vec![
                Series {
                    name: "q2",
                    color: "#1f77b4",
                    values: trace.records.iter().map(|r| r.q[1]).collect(),
                },
                Series {
                    name: "q2_d",
                    color: "#d62728",
                    values: trace.records.iter().map(|r| r.q_d[1]).collect(),
                },
            ],
        ),
        (
            "applied torque (N·m)".into(),
            vec![
                Series {
                    name: "u1",
                    color: "#2ca02c",
                    values: trace.records.iter().map(|r| r.u[0]).collect(),
                },
                Series {
                    name: "u2",
                    color: "#9467bd",
                    values: trace.records.iter().map(|r| r.u[1]).collect(),
                },
            ],
        ),
    ];

    let n = trace.records.len().max(2);
    let t_max = trace.records.last().map(|r| r.t).unwrap_or(1.0).max(1e-9);
    let total_h = H * panels.len() as f64;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{total_h}\" viewBox=\"0 0 {W} {total_h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // thin the polylines to a sane point count
    let stride = (n / 1800).max(1);
    for (p, (title, series)) in panels.iter().enumerate() {
        let y0 = p as f64 * H;
        let lo = series
            .iter()
            .flat_map(|s| s.values.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = series
            .iter()
            .flat_map(|s| s.values.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-9);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" font-family=\"sans-serif\">{} — {}</text>\n",
            PAD,
            y0 + 16.0,
            title,
            series
                .iter()
                .map(|s| format!("{} ({})", s.name, s.color))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
            PAD,
            y0 + 24.0,
            W - 2.0 * PAD,
            H - 48.0
        ));
        for s in series {
            let mut points = String::new();
            for (k, v) in s.values.iter().enumerate().step_by(stride) {
                let t = trace.records[k].t;
                let x = PAD + (t / t_max) * (W - 2.0 * PAD);
                let y = y0 + 24.0 + (1.0 - (v - lo) / span) * (H - 48.0);
                points.push_str(&format!("{x:.1},{y:.1} "));
            }
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>\n",
                s.color, points
            ));
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_matches_benchmark_protocol() {
        let catalog = scenario_catalog();
        let sim1 = find_scenario(&catalog, "sim1").unwrap();
        assert_eq!(sim1.events.len(), 1);
        assert_eq!(sim1.events[0].t, 22.0);
        assert!(matches!(
            sim1.events[0].action,
            EventAction::SetPayload { fraction } if fraction == 0.25
        ));
        assert_eq!(sim1.disturbance, Disturbance::None);
        assert_eq!(sim1.duration, 30.0);

        let sim2 = find_scenario(&catalog, "sim2").unwrap();
        match sim2.disturbance {
            Disturbance::Sinusoid { a1, a2, nu } => {
                assert_eq!((a1, a2, nu), (-80.0, 30.0, 10.0));
            }
            _ => panic!("sim2 must carry the benchmark sinusoid"),
        }
        assert!(sim2.events.is_empty());

        let fault = find_scenario(&catalog, "fault-demo").unwrap();
        assert_eq!(fault.events[0].t, 18.0);
        assert!(matches!(
            fault.events[0].action,
            EventAction::SetPayload { fraction } if fraction == 0.60
        ));
        assert!(fault.monitor_faults);

        // ablation variants exist for every base scenario
        for base in ["sim1", "sim2", "fault-demo"] {
            assert!(find_scenario(&catalog, &format!("{base}-oracle")).is_some());
            assert!(find_scenario(&catalog, &format!("{base}-fixed-z")).is_some());
        }
    }

    #[test]
    fn paper_trajectory_values() {
        let c = paper_trajectory();
        let x0 = c.decode(0.0);
        assert!((x0[0] - (std::f64::consts::FRAC_PI_4 + 0.2)).abs() < 1e-12);
        assert!(x0[1].abs() < 1e-12);
        let quarter = c.decode(0.25);
        assert!((quarter[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((quarter[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_trivial_cases() {
        let weights = MetricWeights::default();
        let make_trace = |records: Vec<StepRecord>| EpisodeTrace {
            scenario: "test".into(),
            variant: Variant::OracleFeedforward,
            seed: 0,
            dt: 0.1,
            records,
            true_params: PlantParams::nominal(),
        };
        let zero_row = |t: f64| StepRecord {
            t,
            q: [0.0; 2],
            q_d: [0.0; 2],
            qdot: [0.0; 2],
            u: [0.0; 2],
            u_ss: [0.0; 2],
            u_reg: [0.0; 2],
            e: [0.0; 2],
            x_tilde: [0.0; 2],
            reward: 1.0,
            v_hat: None,
            delta_td: None,
            z: None,
            lambda_min_pi: None,
            rank_ok: None,
            theta_hat: None,
            cov_trace: None,
            score: None,
            fault: None,
        };

        // identically zero trace
        let rows: Vec<StepRecord> = (0..11).map(|k| zero_row(k as f64 * 0.1)).collect();
        let m = compute_metrics(&make_trace(rows), &weights);
        assert_eq!((m.iae, m.ce, m.iar, m.j_p), (0.0, 0.0, 0.0, 0.0));

        // constant torque, zero error: CE = R1·|c|·t_f, IAR = 0
        let rows: Vec<StepRecord> = (0..11)
            .map(|k| {
                let mut r = zero_row(k as f64 * 0.1);
                r.u = [3.0, -1.0];
                r
            })
            .collect();
        let m = compute_metrics(&make_trace(rows), &weights);
        assert!(m.iae == 0.0 && m.iar == 0.0);
        let expected_ce = (0.01 * 3.0 + 0.01 * 1.0) * 1.0;
        assert!((m.ce - expected_ce).abs() < 1e-12, "{} vs {expected_ce}", m.ce);
        assert_eq!(m.j_p, m.iae + m.ce + m.iar);
    }

    #[test]
    fn oracle_feedforward_tracks_tightly() {
        // benchmark gains, nominal plant, oracle feedforward: the
        // tracking error settles under 0.01 rad after 3 s
        let catalog = scenario_catalog();
        let mut scenario = find_scenario(&catalog, "sim1-oracle").unwrap();
        scenario.param_uncertainty = 0.0;
        scenario.events.clear();
        scenario.duration = 8.0;
        let trace = run_episode(&scenario, &Models::default(), &EpisodeOptions::default(), 1)
            .unwrap();
        let worst = trace.max_tracking_error_over(3.0, 8.0);
        assert!(worst < 0.01, "‖x̃‖∞ = {worst} after 3 s");
        assert_eq!(trace.records.len(), 8000);
    }

    #[test]
    fn episodes_are_deterministic_per_seed() {
        let catalog = scenario_catalog();
        let mut scenario = find_scenario(&catalog, "sim1-oracle").unwrap();
        scenario.events.clear();
        scenario.duration = 2.0;
        let opts = EpisodeOptions::default();
        let a = run_episode(&scenario, &Models::default(), &opts, 7).unwrap();
        let b = run_episode(&scenario, &Models::default(), &opts, 7).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.q, rb.q);
            assert_eq!(ra.u, rb.u);
        }
        assert_eq!(a.true_params, b.true_params);
        // different seed draws a different plant
        let c = run_episode(&scenario, &Models::default(), &opts, 8).unwrap();
        assert_ne!(a.true_params, c.true_params);
    }

    #[test]
    fn baseline_variant_stays_bounded_and_tracks() {
        let catalog = scenario_catalog();
        let mut scenario = find_scenario(&catalog, "sim1").unwrap().with_variant(Variant::Baseline);
        scenario.param_uncertainty = 0.0;
        scenario.events.clear();
        scenario.duration = 10.0;
        let trace = run_episode(&scenario, &Models::default(), &EpisodeOptions::default(), 3)
            .unwrap();
        // without a feedforward the baseline oscillates but stays
        // bounded, clearly worse than the oracle loop
        let worst = trace.max_tracking_error_over(6.0, 10.0);
        assert!(worst < 1.5, "baseline left the bounded regime: {worst}");
        assert!(worst > 0.01, "baseline unexpectedly matched the oracle: {worst}");
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let catalog = scenario_catalog();
        let mut scenario = find_scenario(&catalog, "sim1-oracle").unwrap();
        scenario.events.clear();
        scenario.duration = 0.05;
        let trace = run_episode(&scenario, &Models::default(), &EpisodeOptions::default(), 1)
            .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,q1,q2,qd1,qd2,u1,u2,e1,e2,reward"));
        assert_eq!(lines.count(), 50);
    }

    #[test]
    fn adaptive_variants_require_models() {
        let catalog = scenario_catalog();
        let scenario = find_scenario(&catalog, "sim1").unwrap();
        let err = run_episode(&scenario, &Models::default(), &EpisodeOptions::default(), 1);
        assert!(matches!(err, Err(Error::InvalidState(_))));
    }
}
