//! Indirect adaptation: an extended Kalman filter identifies the eight
//! uncertain plant parameters jointly with the joint state, and a small
//! supervised network decodes the estimate (plus the trajectory label)
//! into the generator's latent input.
//!
//! The filter works on the augmented state `[q; q̇; θ]` with θ modeled
//! as a random walk. Jacobians of the augmented dynamics come from
//! central finite differences, so no hand-derived 12×12 linearization
//! is needed.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::cgan::{CganModel, Normalizer};
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamParams, AdamState, Gradients, Mlp};
use crate::plant::{forward_dynamics, PlantParams, PlantState};
use crate::tfs::{kernel_gram, TfsCoefficients};

pub const N_THETA: usize = 8;
pub const AUG_DIM: usize = 4 + N_THETA;

/// Noise levels, initial covariance, and finite-difference settings of
/// the identifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    /// Per-step process variance of the joint state block.
    pub q_state: f64,
    /// Per-step random-walk variance of the parameter block.
    pub q_param: f64,
    /// Measurement noise variance (positions, rad²).
    pub r_meas: f64,
    /// Initial state variance.
    pub p0_state: f64,
    /// Initial parameter standard deviation as a fraction of nominal.
    pub p0_param_frac: f64,
    /// Central-difference step for the dynamics Jacobian.
    pub fd_step: f64,
    /// Magnitude clamp on continuous-time Jacobian entries (guards the
    /// friction sign jump at velocity zero crossings).
    pub jac_clamp: f64,
    /// Measurement noise σ added when synthesizing identification data.
    pub meas_noise_std: f64,
    /// Mean prediction uses a midpoint (RK2) step instead of plain
    /// Euler; the linearization stays first order either way.
    pub midpoint_predict: bool,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            q_state: 1e-8,
            q_param: 1e-8,
            r_meas: 1e-8,
            p0_state: 1e-6,
            p0_param_frac: 0.5,
            fd_step: 1e-6,
            jac_clamp: 1e4,
            meas_noise_std: 1e-4,
            midpoint_predict: true,
        }
    }
}

/// Augmented mean and covariance of the identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Gravity and payload are not estimated; carried for model
    /// evaluation.
    pub g: f64,
    pub payload_fraction: f64,
    /// Projection box keeping the parameter estimates physical; large
    /// unexplained torques (e.g. a disturbance the model cannot
    /// represent) otherwise push the means into invalid territory.
    pub theta_box: [(f64, f64); N_THETA],
}

impl EkfEstimate {
    /// Start from a known initial state and the nominal parameter guess.
    pub fn new(state: &PlantState, theta0: &PlantParams, cfg: &EkfConfig) -> Self {
        let mut mean = DVector::zeros(AUG_DIM);
        mean[0] = state.q[0];
        mean[1] = state.q[1];
        mean[2] = state.qdot[0];
        mean[3] = state.qdot[1];
        let theta = theta0.theta();
        for i in 0..N_THETA {
            mean[4 + i] = theta[i];
        }
        let mut cov = DMatrix::zeros(AUG_DIM, AUG_DIM);
        for i in 0..4 {
            cov[(i, i)] = cfg.p0_state;
        }
        for i in 0..N_THETA {
            let sd = cfg.p0_param_frac * theta[i];
            cov[(4 + i, 4 + i)] = sd * sd;
        }
        let mut theta_box = [(0.0, 0.0); N_THETA];
        for i in 0..N_THETA {
            let lo = if i < 4 { 0.1 * theta[i] } else { 0.0 };
            theta_box[i] = (lo, 5.0 * theta[i]);
        }
        EkfEstimate {
            mean,
            cov,
            g: theta0.g,
            payload_fraction: theta0.payload_fraction,
            theta_box,
        }
    }

    pub fn q(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn qdot(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }

    pub fn theta(&self) -> [f64; N_THETA] {
        let mut out = [0.0; N_THETA];
        for i in 0..N_THETA {
            out[i] = self.mean[4 + i];
        }
        out
    }

    /// Plant parameters implied by the current estimate, floored to
    /// physical values for model evaluation.
    pub fn params(&self) -> PlantParams {
        let t = self.theta();
        PlantParams {
            m1: t[0].max(1e-3),
            m2: t[1].max(1e-3),
            l1: t[2].max(1e-3),
            l2: t[3].max(1e-3),
            fs1: t[4].max(0.0),
            fs2: t[5].max(0.0),
            fv1: t[6].max(0.0),
            fv2: t[7].max(0.0),
            g: self.g,
            payload_fraction: self.payload_fraction,
        }
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.diagonal().sum()
    }
}

/// Augmented drift `[q̇; q̈(q, q̇, u; θ); 0]`.
fn augmented_dynamics(est_mean: &DVector<f64>, u: &Vector2<f64>, g: f64, payload: f64) -> DVector<f64> {
    let mut theta = [0.0; N_THETA];
    for i in 0..N_THETA {
        theta[i] = est_mean[4 + i];
    }
    let params = PlantParams {
        m1: theta[0].max(1e-3),
        m2: theta[1].max(1e-3),
        l1: theta[2].max(1e-3),
        l2: theta[3].max(1e-3),
        fs1: theta[4].max(0.0),
        fs2: theta[5].max(0.0),
        fv1: theta[6].max(0.0),
        fv2: theta[7].max(0.0),
        g,
        payload_fraction: payload,
    };
    let state = PlantState {
        q: Vector2::new(est_mean[0], est_mean[1]),
        qdot: Vector2::new(est_mean[2], est_mean[3]),
        t: 0.0,
    };
    let qdd = forward_dynamics(&state, u, &params, &Vector2::zeros())
        .unwrap_or_else(|_| Vector2::zeros());
    // acceleration clamp: implausible parameter combinations otherwise
    // produce predictions that destabilize the filter
    let mut f = DVector::zeros(AUG_DIM);
    f[0] = est_mean[2];
    f[1] = est_mean[3];
    f[2] = qdd[0].clamp(-1e3, 1e3);
    f[3] = qdd[1].clamp(-1e3, 1e3);
    f
}

/// One predict/update cycle: Euler-discretized augmented dynamics with a
/// finite-difference Jacobian, then a position-measurement update. The
/// covariance is symmetrized every step; loss of positive definiteness
/// beyond a jitter repair is reported as identifier divergence.
pub fn ekf_step(
    est: &EkfEstimate,
    u: &Vector2<f64>,
    y: &Vector2<f64>,
    dt: f64,
    cfg: &EkfConfig,
) -> Result<EkfEstimate> {
    if !(dt > 0.0) {
        return Err(Error::invalid_argument("dt must be positive"));
    }
    let (g, payload) = (est.g, est.payload_fraction);

    // predict
    let f0 = augmented_dynamics(&est.mean, u, g, payload);
    let mean_pred = if cfg.midpoint_predict {
        let mid = &est.mean + 0.5 * dt * &f0;
        let f_mid = augmented_dynamics(&mid, u, g, payload);
        &est.mean + dt * f_mid
    } else {
        &est.mean + dt * &f0
    };

    let h = cfg.fd_step;
    let mut jac = DMatrix::zeros(AUG_DIM, AUG_DIM);
    for c in 0..AUG_DIM {
        let mut plus = est.mean.clone();
        plus[c] += h;
        let mut minus = est.mean.clone();
        minus[c] -= h;
        let fp = augmented_dynamics(&plus, u, g, payload);
        let fm = augmented_dynamics(&minus, u, g, payload);
        for r in 0..AUG_DIM {
            jac[(r, c)] = ((fp[r] - fm[r]) / (2.0 * h)).clamp(-cfg.jac_clamp, cfg.jac_clamp);
        }
    }
    let f_mat = DMatrix::identity(AUG_DIM, AUG_DIM) + dt * jac;
    let mut cov = &f_mat * &est.cov * f_mat.transpose();
    for i in 0..4 {
        cov[(i, i)] += cfg.q_state;
    }
    for i in 4..AUG_DIM {
        cov[(i, i)] += cfg.q_param;
    }

    // update with y = q + noise
    let innovation = Vector2::new(y[0] - mean_pred[0], y[1] - mean_pred[1]);
    let s00 = cov[(0, 0)] + cfg.r_meas;
    let s01 = cov[(0, 1)];
    let s11 = cov[(1, 1)] + cfg.r_meas;
    let det = s00 * s11 - s01 * s01;
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::IdentifierDivergence(
            "innovation covariance is singular".into(),
        ));
    }
    let (i00, i01, i11) = (s11 / det, -s01 / det, s00 / det);
    // K = P·Hᵀ·S⁻¹ with H = [I₂ 0]
    let mut gain = DMatrix::zeros(AUG_DIM, 2);
    for r in 0..AUG_DIM {
        let (p0, p1) = (cov[(r, 0)], cov[(r, 1)]);
        gain[(r, 0)] = p0 * i00 + p1 * i01;
        gain[(r, 1)] = p0 * i01 + p1 * i11;
    }
    let mut mean = mean_pred;
    for r in 0..AUG_DIM {
        mean[r] += gain[(r, 0)] * innovation[0] + gain[(r, 1)] * innovation[1];
    }
    // P ← (I − K·H)·P
    let mut kh = DMatrix::zeros(AUG_DIM, AUG_DIM);
    for r in 0..AUG_DIM {
        kh[(r, 0)] = gain[(r, 0)];
        kh[(r, 1)] = gain[(r, 1)];
    }
    cov = (DMatrix::identity(AUG_DIM, AUG_DIM) - kh) * cov;
    // symmetrize
    cov = 0.5 * (&cov + cov.transpose());

    for i in 0..N_THETA {
        let (lo, hi) = est.theta_box[i];
        mean[4 + i] = mean[4 + i].clamp(lo, hi);
    }
    // velocity estimates stay inside a generous physical envelope
    mean[2] = mean[2].clamp(-1e2, 1e2);
    mean[3] = mean[3].clamp(-1e2, 1e2);
    if mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::IdentifierDivergence("non-finite estimate".into()));
    }
    if cov.clone().cholesky().is_none() {
        // one jitter repair attempt
        for i in 0..AUG_DIM {
            cov[(i, i)] += 1e-12;
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::IdentifierDivergence(
                "covariance lost positive definiteness".into(),
            ));
        }
    }

    Ok(EkfEstimate {
        mean,
        cov,
        g,
        payload_fraction: payload,
        theta_box: est.theta_box,
    })
}

/// One record of the decoder corpus: parameter estimate, trajectory
/// label, and the steady-state coefficient target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D3Record {
    pub theta_hat: Vec<f64>,
    pub label: Vec<f64>,
    pub target: Vec<f64>,
}

/// Corpus mapping (θ̂, label) to steady-state coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetD3 {
    pub records: Vec<D3Record>,
    pub n_channels: usize,
    pub n_x: usize,
    pub n_u: usize,
    /// z-score statistics of the stacked `[θ̂ ‖ label]` input.
    pub input_norm: Normalizer,
    /// Identification episodes dropped because the filter diverged.
    pub excluded: usize,
}

impl DatasetD3 {
    pub fn from_records(
        records: Vec<D3Record>,
        n_channels: usize,
        n_x: usize,
        n_u: usize,
        excluded: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid_argument("no identification records"));
        }
        let stacked: Vec<Vec<f64>> = records
            .iter()
            .map(|r| {
                let mut row = r.theta_hat.clone();
                row.extend_from_slice(&r.label);
                row
            })
            .collect();
        Ok(DatasetD3 {
            input_norm: Normalizer::fit(&stacked)?,
            records,
            n_channels,
            n_x,
            n_u,
            excluded,
        })
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead, n_channels: usize, n_x: usize, n_u: usize) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<D3Record>(&line)?);
        }
        Self::from_records(records, n_channels, n_x, n_u, 0)
    }
}

/// Identification episode length when transforming the corpus, s.
pub const D3_EPISODE_DURATION: f64 = 20.0;
pub const D3_EPISODE_DT: f64 = 1e-3;

/// One recorded steady-state episode: position measurements at the grid
/// times, the torques applied over each interval, and the encoded
/// (label, target) coefficient pair of the same motion. The ground
/// truth behind the recording is not part of the episode.
#[derive(Debug, Clone)]
pub struct D1Episode {
    pub c_xd: TfsCoefficients,
    pub c_uss: TfsCoefficients,
    /// y_k at t = k·dt (k = 0 is the initial condition).
    pub measurements: Vec<Vector2<f64>>,
    /// u_k applied over [k·dt, (k+1)·dt).
    pub torques: Vec<Vector2<f64>>,
    pub dt: f64,
}

/// Synthesize one steady-state recording of `params` tracking `c_xd`:
/// noisy position measurements plus the exact holding torque (sampled
/// at interval midpoints to stand in for the zero-order hold).
pub fn record_episode(
    c_xd: &TfsCoefficients,
    params: &PlantParams,
    n_u: usize,
    duration: f64,
    dt: f64,
    noise_std: f64,
    rng: &mut impl Rng,
) -> Result<D1Episode> {
    let steps = (duration / dt).round() as usize;
    let mut measurements = Vec::with_capacity(steps + 1);
    let mut torques = Vec::with_capacity(steps);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let q = c_xd.decode(t);
        let n0: f64 = StandardNormal.sample(rng);
        let n1: f64 = StandardNormal.sample(rng);
        measurements.push(Vector2::new(q[0] + noise_std * n0, q[1] + noise_std * n1));
        if k < steps {
            let tm = t + 0.5 * dt;
            let qm = c_xd.decode(tm);
            let qdm = c_xd.decode_derivative(tm, 1);
            let qddm = c_xd.decode_derivative(tm, 2);
            let u = crate::plant::inverse_dynamics(
                &Vector2::new(qm[0], qm[1]),
                &Vector2::new(qdm[0], qdm[1]),
                &Vector2::new(qddm[0], qddm[1]),
                params,
            );
            if !u.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid_argument("non-finite steady-state torque"));
            }
            torques.push(u);
        }
    }
    let c_uss = crate::cgan::steady_state_coefficients(c_xd, params, n_u)?;
    Ok(D1Episode {
        c_xd: c_xd.clone(),
        c_uss,
        measurements,
        torques,
        dt,
    })
}

/// Run the identifier along one recorded episode and return the
/// terminal parameter estimate.
pub fn identify_episode(
    episode: &D1Episode,
    nominal: &PlantParams,
    cfg: &EkfConfig,
) -> Result<[f64; N_THETA]> {
    if episode.measurements.len() != episode.torques.len() + 1 {
        return Err(Error::invalid_argument(
            "episode needs one more measurement than torque",
        ));
    }
    let qd0 = episode.c_xd.decode_derivative(0.0, 1);
    let state0 = PlantState {
        q: episode.measurements[0],
        qdot: Vector2::new(qd0[0], qd0[1]),
        t: 0.0,
    };
    let mut est = EkfEstimate::new(&state0, nominal, cfg);
    for k in 0..episode.torques.len() {
        est = ekf_step(
            &est,
            &episode.torques[k],
            &episode.measurements[k + 1],
            episode.dt,
            cfg,
        )?;
    }
    // an estimate pinned to the projection box is a failed fit
    let theta = est.theta();
    for i in 0..N_THETA {
        let (lo, hi) = est.theta_box[i];
        if theta[i] <= lo + 1e-9 || theta[i] >= hi - 1e-9 {
            return Err(Error::IdentifierDivergence(format!(
                "parameter {i} pinned to the projection boundary"
            )));
        }
    }
    Ok(theta)
}

/// Transform recorded episodes into the decoder corpus by running the
/// identifier over each one. Diverged episodes are excluded and
/// counted.
pub fn build_d3(episodes: &[D1Episode], nominal: &PlantParams, cfg: &EkfConfig) -> Result<DatasetD3> {
    let (mut records, mut excluded) = (Vec::with_capacity(episodes.len()), 0usize);
    let mut shape: Option<(usize, usize, usize)> = None;
    for ep in episodes {
        shape.get_or_insert((ep.c_xd.n_channels(), ep.c_xd.n_harmonics(), ep.c_uss.n_harmonics()));
        match identify_episode(ep, nominal, cfg) {
            Ok(theta_hat) => records.push(D3Record {
                theta_hat: theta_hat.to_vec(),
                label: crate::cgan::label_vec(&ep.c_xd),
                target: ep.c_uss.flatten(),
            }),
            Err(_) => excluded += 1,
        }
    }
    let (n_channels, n_x, n_u) =
        shape.ok_or_else(|| Error::invalid_argument("no episodes supplied"))?;
    DatasetD3::from_records(records, n_channels, n_x, n_u, excluded)
}

/// Draw plants and trajectories exactly like the adversarial corpus
/// generator, record one steady-state episode per draw, and identify
/// each one. Episodes are processed one at a time, so the corpus size
/// is not memory-bound. Returns the sampled plants alongside for
/// ground-truth checks.
#[allow(clippy::too_many_arguments)]
pub fn generate_d3(
    nominal: &PlantParams,
    uncertainty: f64,
    family: &crate::cgan::TrajectoryFamily,
    n_samples: usize,
    n_x: usize,
    n_u: usize,
    cfg: &EkfConfig,
    seed: u64,
) -> Result<(DatasetD3, Vec<PlantParams>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_samples);
    let mut plants = Vec::with_capacity(n_samples);
    let mut excluded = 0usize;
    let mut shape: Option<(usize, usize, usize)> = None;
    for _ in 0..n_samples {
        let params = crate::plant::sample_uncertain_params(nominal, uncertainty, &mut rng)?;
        let c_xd = family.sample(n_x, &mut rng)?;
        let episode = match record_episode(
            &c_xd,
            &params,
            n_u,
            D3_EPISODE_DURATION,
            D3_EPISODE_DT,
            cfg.meas_noise_std,
            &mut rng,
        ) {
            Ok(ep) => ep,
            Err(_) => {
                excluded += 1;
                continue;
            }
        };
        shape.get_or_insert((
            episode.c_xd.n_channels(),
            episode.c_xd.n_harmonics(),
            episode.c_uss.n_harmonics(),
        ));
        match identify_episode(&episode, nominal, cfg) {
            Ok(theta_hat) => {
                records.push(D3Record {
                    theta_hat: theta_hat.to_vec(),
                    label: crate::cgan::label_vec(&episode.c_xd),
                    target: episode.c_uss.flatten(),
                });
                plants.push(params);
            }
            Err(_) => excluded += 1,
        }
    }
    let (n_channels, n_x, n_u) =
        shape.ok_or_else(|| Error::invalid_argument("no usable episodes"))?;
    let d3 = DatasetD3::from_records(records, n_channels, n_x, n_u, excluded)?;
    Ok((d3, plants))
}

/// Coefficient-space loss `trace((C−Ĉ)·P·(C−Ĉ)ᵀ)` with the kernel Gram
/// diagonal P; equals the mean-square torque distance over one period
/// for band-limited signals (the fixed truncation term is dropped).
pub fn adaptor_loss(c_uss: &TfsCoefficients, c_hat: &TfsCoefficients) -> Result<f64> {
    crate::tfs::mean_square_distance(c_uss, c_hat)
}

/// Learned decoder from `[θ̂ ‖ label]` to the latent input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptorIndirect {
    pub net: Mlp,
    pub input_norm: Normalizer,
    pub latent_dim: usize,
    pub z_clip: f64,
}

impl AdaptorIndirect {
    /// Latent decode `z = ψ(θ̂, label)`, clipped to ±z_clip.
    pub fn indirect_z(&self, theta_hat: &[f64], label: &[f64]) -> Result<DVector<f64>> {
        let mut row = theta_hat.to_vec();
        row.extend_from_slice(label);
        if row.len() != self.input_norm.dim() {
            return Err(Error::invalid_argument("adaptor input dimension mismatch"));
        }
        let out = self.net.infer(&self.input_norm.apply(&row))?;
        Ok(out.map(|z| z.clamp(-self.z_clip, self.z_clip)))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Training hyperparameters of the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptorTrainConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for AdaptorTrainConfig {
    fn default() -> Self {
        AdaptorTrainConfig {
            hidden: vec![32],
            lr: 1e-3,
            epochs: 300,
            batch_size: 32,
        }
    }
}

/// Loss and adaptor-weight gradients of one record, chained through the
/// frozen generator: dLoss/dĈ → generator backward → latent gradient →
/// adaptor backward.
fn record_loss_and_grads(
    adaptor: &Mlp,
    input_norm: &Normalizer,
    model: &CganModel,
    rec: &D3Record,
) -> Result<(f64, Gradients)> {
    let mut row = rec.theta_hat.clone();
    row.extend_from_slice(&rec.label);
    let input = input_norm.apply(&row);
    let (z, adaptor_cache) = adaptor.forward(&input)?;

    let label_n = model.label_norm.apply(&rec.label);
    let mut gen_in = DVector::zeros(model.latent_dim + label_n.len());
    gen_in.rows_mut(0, model.latent_dim).copy_from(&z);
    gen_in
        .rows_mut(model.latent_dim, label_n.len())
        .copy_from(&label_n);
    let (fake_n, gen_cache) = model.generator.forward(&gen_in)?;

    let gram = kernel_gram(model.n_u);
    let n_cols = 2 * model.n_u + 1;
    let mut loss = 0.0;
    let mut dloss_dfake = DVector::zeros(fake_n.len());
    for idx in 0..fake_n.len() {
        let raw = fake_n[idx] * model.target_norm.std[idx] + model.target_norm.mean[idx];
        let diff = raw - rec.target[idx];
        let w = gram[idx % n_cols];
        loss += w * diff * diff;
        // chain through the de-normalization scale
        dloss_dfake[idx] = 2.0 * w * diff * model.target_norm.std[idx];
    }

    let (_, dgen_in) = model.generator.backward(&gen_cache, &dloss_dfake)?;
    let dz = dgen_in.rows(0, model.latent_dim).into_owned();
    let (grads, _) = adaptor.backward(&adaptor_cache, &dz)?;
    Ok((loss, grads))
}

/// Mean adaptor loss over a corpus for a given adaptor network.
pub fn mean_adaptor_loss(
    adaptor: &AdaptorIndirect,
    model: &CganModel,
    d3: &DatasetD3,
) -> Result<f64> {
    let mut total = 0.0;
    for rec in &d3.records {
        let z = adaptor.indirect_z(&rec.theta_hat, &rec.label)?;
        let omega = *rec.label.last().unwrap();
        let c_xd = TfsCoefficients::from_flat(
            &rec.label[..rec.label.len() - 1],
            d3.n_channels,
            omega,
            d3.n_x,
        )?;
        let c_hat = model.generator_coefficients(&z, &c_xd)?;
        let c_true =
            TfsCoefficients::from_flat(&rec.target, d3.n_channels, omega, d3.n_u)?;
        total += adaptor_loss(&c_true, &c_hat)?;
    }
    Ok(total / d3.records.len() as f64)
}

/// Minimize the mean coefficient-space loss over the corpus with Adam,
/// keeping the generator frozen. Returns the trained decoder and the
/// per-epoch loss curve.
pub fn train_adaptor(
    d3: &DatasetD3,
    model: &CganModel,
    cfg: &AdaptorTrainConfig,
    seed: u64,
) -> Result<(AdaptorIndirect, Vec<f64>)> {
    if d3.records.is_empty() {
        return Err(Error::invalid_argument("decoder corpus is empty"));
    }
    let input_dim = N_THETA + d3.records[0].label.len();
    let mut widths = vec![input_dim];
    widths.extend(&cfg.hidden);
    widths.push(model.latent_dim);
    let mut acts = vec![Activation::Tanh; cfg.hidden.len()];
    acts.push(Activation::Identity);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::glorot_init(&widths, &acts, &mut rng)?;
    let mut state = AdamState::new(&net);
    let adam = AdamParams {
        lr: cfg.lr,
        ..AdamParams::default()
    };

    let n = d3.records.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&net);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (loss, g) =
                    record_loss_and_grads(&net, &d3.input_norm, model, &d3.records[i])?;
                batch_loss += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut net, &grads, &mut state, &adam)?;
            epoch_loss += batch_loss;
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                what: "decoder loss became non-finite".into(),
            });
        }
        curve.push(mean_loss);
    }

    Ok((
        AdaptorIndirect {
            net,
            input_norm: d3.input_norm.clone(),
            latent_dim: model.latent_dim,
            z_clip: 3.0,
        },
        curve,
    ))
}
