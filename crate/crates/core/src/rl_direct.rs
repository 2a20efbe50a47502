//! Direct adaptation of the policy's latent input by actor–critic
//! reinforcement learning.
//!
//! A critic with a frozen random feature layer estimates the
//! exponentially discounted state–action value online from the
//! continuous-time TD residual, replaying time-stamped feature
//! snapshots to help excitation. The adaptor weights follow the
//! deterministic policy gradient assembled from the critic's action
//! Jacobian and the generator's latent Jacobian; the latent itself is
//! reconstructed from the adaptor by integration by parts, so no ė
//! measurement is needed at run time.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::cgan::CganModel;
use crate::error::{Error, Result};
use crate::tfs::TfsCoefficients;

/// Reward shaping and learning-rate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Diagonal tracking-error weight.
    pub q: Vector2<f64>,
    /// Diagonal control-effort weight.
    pub r: Vector2<f64>,
    /// Value attenuation rate γ, 1/s.
    pub gamma: f64,
    /// Critic learning rate.
    pub eta_v: f64,
    /// Adaptor learning rate.
    pub eta_w: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            q: Vector2::new(2.0, 2.0),
            r: Vector2::new(0.01, 0.01),
            gamma: 2.0,
            eta_v: 5.0,
            eta_w: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.q.iter().chain(self.r.iter()).all(|&x| x > 0.0) {
            return Err(Error::invalid_argument("Q and R diagonals must be positive"));
        }
        if !(self.gamma > 0.0 && self.eta_v > 0.0 && self.eta_w > 0.0) {
            return Err(Error::invalid_argument(
                "gamma and learning rates must be positive",
            ));
        }
        Ok(())
    }
}

/// Structural constants of the direct adaptation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub reward: RewardConfig,
    /// Critic feature count l_c.
    pub l_c: usize,
    /// Replay ring capacity p.
    pub replay_capacity: usize,
    /// Steps between replay snapshots.
    pub snapshot_stride: usize,
    /// Latent values are clipped to ±z_clip (3σ of the prior).
    pub z_clip: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            reward: RewardConfig::default(),
            l_c: 48,
            replay_capacity: 64,
            snapshot_stride: 50,
            z_clip: 3.0,
        }
    }
}

/// Immediate reward `r = exp(−(Σ qᵢ|x̃ᵢ| + Σ rᵢ|uᵢ|))`, in (0, 1].
/// Floored at the smallest positive double so the range stays open at 0
/// even when the exponent underflows.
pub fn reward(x_tilde: &Vector2<f64>, u: &Vector2<f64>, cfg: &RewardConfig) -> f64 {
    let j = cfg.q[0] * x_tilde[0].abs()
        + cfg.q[1] * x_tilde[1].abs()
        + cfg.r[0] * u[0].abs()
        + cfg.r[1] * u[1].abs();
    (-j).exp().max(f64::MIN_POSITIVE)
}

/// Critic `V̂ = vᵀ·tanh(Γ[X; u])` with a frozen random hidden matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub v: DVector<f64>,
    gamma_hidden: DMatrix<f64>,
}

impl CriticNet {
    /// Glorot-initialize the frozen feature matrix; output weights zero.
    pub fn new(l_c: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if l_c == 0 || input_dim == 0 {
            return Err(Error::invalid_argument("critic dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (l_c + input_dim) as f64).sqrt();
        use rand::Rng;
        let gamma_hidden = DMatrix::from_fn(l_c, input_dim, |_, _| {
            rng.random_range(-limit..=limit)
        });
        Ok(CriticNet {
            v: DVector::zeros(l_c),
            gamma_hidden,
        })
    }

    pub fn l_c(&self) -> usize {
        self.gamma_hidden.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.gamma_hidden.ncols()
    }

    fn stacked(&self, x_ext: &DVector<f64>, u: &Vector2<f64>) -> Result<DVector<f64>> {
        if x_ext.len() + 2 != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "critic input is {}+2, expected {}",
                x_ext.len(),
                self.input_dim()
            )));
        }
        let mut xu = DVector::zeros(self.input_dim());
        xu.rows_mut(0, x_ext.len()).copy_from(x_ext);
        xu[x_ext.len()] = u[0];
        xu[x_ext.len() + 1] = u[1];
        Ok(xu)
    }

    /// Feature vector `a = tanh(Γ[X; u])`; every entry lies in (−1, 1).
    pub fn features(&self, x_ext: &DVector<f64>, u: &Vector2<f64>) -> Result<DVector<f64>> {
        let xu = self.stacked(x_ext, u)?;
        Ok((&self.gamma_hidden * xu).map(f64::tanh))
    }

    /// Features for an already stacked `[X; u]` input.
    pub fn features_from_stacked(&self, xu: &DVector<f64>) -> Result<DVector<f64>> {
        if xu.len() != self.input_dim() {
            return Err(Error::invalid_argument("stacked input dimension mismatch"));
        }
        Ok((&self.gamma_hidden * xu).map(f64::tanh))
    }

    pub fn value_from_features(&self, a: &DVector<f64>) -> f64 {
        self.v.dot(a)
    }

    pub fn value(&self, x_ext: &DVector<f64>, u: &Vector2<f64>) -> Result<f64> {
        Ok(self.v.dot(&self.features(x_ext, u)?))
    }

    /// Critic action Jacobian `∂V̂/∂u = Γ_uᵀ·(v ⊙ σ'(Υ))`.
    pub fn value_gradient_u(&self, x_ext: &DVector<f64>, u: &Vector2<f64>) -> Result<Vector2<f64>> {
        let xu = self.stacked(x_ext, u)?;
        let pre = &self.gamma_hidden * xu;
        let nx = x_ext.len();
        let mut grad = Vector2::zeros();
        for i in 0..self.l_c() {
            let t = pre[i].tanh();
            let w = self.v[i] * (1.0 - t * t);
            grad[0] += w * self.gamma_hidden[(i, nx)];
            grad[1] += w * self.gamma_hidden[(i, nx + 1)];
        }
        Ok(grad)
    }

    /// σ'(Υ) evaluated at the current input, needed by the policy-gradient
    /// chain.
    pub fn feature_slopes(&self, x_ext: &DVector<f64>, u: &Vector2<f64>) -> Result<DVector<f64>> {
        let xu = self.stacked(x_ext, u)?;
        let pre = &self.gamma_hidden * xu;
        Ok(pre.map(|z| {
            let t = z.tanh();
            1.0 - t * t
        }))
    }

    /// Columns of Γ multiplying the control block.
    pub fn gamma_u(&self) -> DMatrix<f64> {
        let nx = self.input_dim() - 2;
        self.gamma_hidden.columns(nx, 2).into_owned()
    }
}

/// Continuous-time TD residual `δ = r + vᵀȧ − γ·vᵀa`.
pub fn td_error(r: f64, a: &DVector<f64>, a_dot: &DVector<f64>, v: &DVector<f64>, gamma: f64) -> f64 {
    r + v.dot(a_dot) - gamma * v.dot(a)
}

/// Time-stamped critic-feature snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub a: DVector<f64>,
    pub a_dot: DVector<f64>,
    pub r: f64,
}

/// Ring of recorded snapshots, oldest evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    snaps: VecDeque<Snapshot>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            snaps: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, snap: Snapshot) {
        if self.snaps.len() == self.capacity {
            self.snaps.pop_front();
        }
        self.snaps.push_back(snap);
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Snapshot> {
        self.snaps.iter()
    }
}

/// Euler-advance the critic weights along the online TD term plus the
/// replayed minibatch, all residuals evaluated against the current v.
pub fn update_critic(
    critic: &mut CriticNet,
    buffer: &ReplayBuffer,
    current: &Snapshot,
    eta_v: f64,
    gamma: f64,
    dt: f64,
) {
    let mut dv = &current.a * td_error(current.r, &current.a, &current.a_dot, &critic.v, gamma);
    for snap in buffer.iter() {
        dv += &snap.a * td_error(snap.r, &snap.a, &snap.a_dot, &critic.v, gamma);
    }
    critic.v += dt * eta_v * dv;
}

/// Excitation check over the recorded features: whether the snapshot
/// matrix has full row rank `l_c`, and the smallest eigenvalue of
/// `Π = Σ a(tᵢ)a(tᵢ)ᵀ`.
pub fn rank_check(buffer: &ReplayBuffer, l_c: usize) -> (bool, f64) {
    if buffer.is_empty() {
        return (false, 0.0);
    }
    let p = buffer.len();
    let mut features = DMatrix::zeros(l_c, p);
    for (i, snap) in buffer.iter().enumerate() {
        features.column_mut(i).copy_from(&snap.a);
    }
    let pi = &features * features.transpose();
    let eigen = pi.symmetric_eigen();
    let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let svd = features.svd(false, false);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = s_max * (l_c.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    (rank == l_c, lambda_min.max(0.0))
}

/// Adaptor weights, one n-vector per latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptorDirect {
    pub w: Vec<Vector2<f64>>,
}

impl AdaptorDirect {
    pub fn zeros(latent_dim: usize) -> Self {
        AdaptorDirect {
            w: vec![Vector2::zeros(); latent_dim],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w.len()
    }
}

/// Policy-gradient carrier `Λ_j = η_w·σ'(Υ) ⊙ (Γ·[0; ∂û_ss/∂z_j])`,
/// one vector per latent dimension; `vᵀΛ_j` is the scalar ascent rate
/// of w_j per unit error. The generator Jacobian is evaluated once for
/// all latent columns.
pub fn lambda_all(
    critic: &CriticNet,
    model: &CganModel,
    z: &DVector<f64>,
    c_xd: &TfsCoefficients,
    t: f64,
    x_ext: &DVector<f64>,
    u: &Vector2<f64>,
    eta_w: f64,
) -> Result<Vec<DVector<f64>>> {
    let jac = model.generator_jacobian_z(z, c_xd)?;
    let phi = crate::tfs::kernel(c_xd.omega(), model.n_u, t)?;
    let slopes = critic.feature_slopes(x_ext, u)?;
    let gamma_u = critic.gamma_u();
    let n_cols = 2 * model.n_u + 1;
    let mut out = Vec::with_capacity(model.latent_dim);
    for j in 0..model.latent_dim {
        // ∂û_ss/∂z_j = reshape(∂C/∂z_j)·Φ(t)
        let mut du_dz = Vector2::zeros();
        for ch in 0..model.n_channels.min(2) {
            let mut acc = 0.0;
            for c in 0..n_cols {
                acc += jac[(ch * n_cols + c, j)] * phi[c];
            }
            du_dz[ch] = acc;
        }
        let mut lam = &gamma_u * du_dz;
        for i in 0..lam.len() {
            lam[i] *= eta_w * slopes[i];
        }
        out.push(lam);
    }
    Ok(out)
}

/// Single-column variant of [`lambda_all`].
#[allow(clippy::too_many_arguments)]
pub fn lambda_j(
    critic: &CriticNet,
    model: &CganModel,
    z: &DVector<f64>,
    c_xd: &TfsCoefficients,
    t: f64,
    x_ext: &DVector<f64>,
    u: &Vector2<f64>,
    eta_w: f64,
    j: usize,
) -> Result<DVector<f64>> {
    let mut all = lambda_all(critic, model, z, c_xd, t, x_ext, u, eta_w)?;
    if j >= all.len() {
        return Err(Error::invalid_argument("latent index out of range"));
    }
    Ok(all.swap_remove(j))
}

/// Ascend the adaptor weights: `w_j += dt·(vᵀΛ_j)·e`.
pub fn update_adaptor(
    adaptor: &mut AdaptorDirect,
    v_dot_lambda: &[f64],
    e: &Vector2<f64>,
    dt: f64,
) {
    for (w_j, &vl) in adaptor.w.iter_mut().zip(v_dot_lambda.iter()) {
        *w_j += dt * vl * e;
    }
}

/// Running state of the integration-by-parts latent reconstruction
/// `z_j(t) = w_jᵀe − w_jᵀ(0)e(0) − ∫₀ᵗ vᵀΛ_j·‖e‖² dτ`.
#[derive(Debug, Clone)]
pub struct LatentState {
    w0_e0: Vec<f64>,
    integral: Vec<f64>,
    prev_integrand: Option<Vec<f64>>,
}

impl LatentState {
    pub fn new(adaptor: &AdaptorDirect, e0: &Vector2<f64>) -> Self {
        LatentState {
            w0_e0: adaptor.w.iter().map(|w| w.dot(e0)).collect(),
            integral: vec![0.0; adaptor.latent_dim()],
            prev_integrand: None,
        }
    }

    /// Advance the correction integral (trapezoidal) and return the
    /// clipped latent vector.
    pub fn update(
        &mut self,
        adaptor: &AdaptorDirect,
        v_dot_lambda: &[f64],
        e: &Vector2<f64>,
        dt: f64,
        z_clip: f64,
    ) -> DVector<f64> {
        let e2 = e.norm_squared();
        let integrand: Vec<f64> = v_dot_lambda.iter().map(|&vl| vl * e2).collect();
        if let Some(prev) = &self.prev_integrand {
            for i in 0..self.integral.len() {
                self.integral[i] += 0.5 * dt * (prev[i] + integrand[i]);
            }
        }
        self.prev_integrand = Some(integrand);
        DVector::from_fn(adaptor.latent_dim(), |j, _| {
            (adaptor.w[j].dot(e) - self.w0_e0[j] - self.integral[j]).clamp(-z_clip, z_clip)
        })
    }
}

/// Extended state `X = [x̃; x̃̇; x_d; ẋ_d]` of the benchmark arm.
pub fn extended_state(
    x_tilde: &Vector2<f64>,
    x_tilde_dot: &Vector2<f64>,
    x_d: &Vector2<f64>,
    x_d_dot: &Vector2<f64>,
) -> DVector<f64> {
    DVector::from_column_slice(&[
        x_tilde[0],
        x_tilde[1],
        x_tilde_dot[0],
        x_tilde_dot[1],
        x_d[0],
        x_d[1],
        x_d_dot[0],
        x_d_dot[1],
    ])
}
