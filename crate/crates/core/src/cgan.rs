//! Conditional GAN over steady-state control patterns.
//!
//! The generator maps `[z ‖ label]` to the Fourier coefficients of the
//! steady-state torque, where the label is the desired trajectory's
//! coefficient block plus its fundamental frequency and `z` is a
//! low-dimensional latent draw standing in for the plant's parametric
//! uncertainty. The discriminator doubles as a data-driven fault
//! detector: away from the training distribution its filtered score
//! leaves the ideal band around 1/2.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamParams, AdamState, Mlp};
use crate::plant::{inverse_dynamics, sample_uncertain_params, PlantParams};
use crate::tfs::{self, TfsCoefficients};

/// Hyperparameters of dataset generation and adversarial training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CganConfig {
    /// Harmonics of the trajectory labels.
    pub n_x: usize,
    /// Harmonics of the control targets.
    pub n_u: usize,
    /// Latent dimension l_z.
    pub latent_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub dis_hidden: Vec<usize>,
    pub lr_gen: f64,
    pub lr_dis: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_samples: usize,
    /// Parametric uncertainty fraction of the training plants.
    pub uncertainty: f64,
}

impl Default for CganConfig {
    fn default() -> Self {
        CganConfig {
            n_x: 3,
            n_u: 8,
            latent_dim: 2,
            gen_hidden: vec![64, 64],
            dis_hidden: vec![64, 64],
            lr_gen: 2e-4,
            lr_dis: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 64,
            epochs: 400,
            n_samples: 2000,
            uncertainty: 0.5,
        }
    }
}

/// Family of periodic desired trajectories used for data generation:
/// per channel `a + b·cos(ωt + φ)` with the parameters drawn uniformly
/// from ranges bracketing the benchmark trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFamily {
    pub offset: (f64, f64),
    pub amplitude: (f64, f64),
    pub phase: (f64, f64),
    pub omega: (f64, f64),
    pub n_channels: usize,
}

impl Default for TrajectoryFamily {
    fn default() -> Self {
        use std::f64::consts::{PI, TAU};
        TrajectoryFamily {
            offset: (-0.3, 1.1),
            amplitude: (0.1, 1.2),
            phase: (-PI, PI),
            omega: (0.75 * TAU, 1.25 * TAU),
            n_channels: 2,
        }
    }
}

fn range_sample(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl TrajectoryFamily {
    pub fn sample(&self, n_x: usize, rng: &mut impl Rng) -> Result<TfsCoefficients> {
        let omega = range_sample(rng, self.omega);
        let mut coeffs = DMatrix::zeros(self.n_channels, 2 * n_x + 1);
        for ch in 0..self.n_channels {
            let a = range_sample(rng, self.offset);
            let b = range_sample(rng, self.amplitude);
            let phi = range_sample(rng, self.phase);
            coeffs[(ch, 0)] = 2.0 * a;
            coeffs[(ch, 1)] = b * phi.cos();
            coeffs[(ch, n_x + 1)] = -b * phi.sin();
        }
        TfsCoefficients::new(coeffs, omega, n_x)
    }
}

/// Per-dimension z-score statistics. Standard deviations are floored so
/// constant dimensions stay invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| {
            Error::invalid_argument("cannot fit a normalizer to an empty set")
        })?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                let d = r[i] - mean[i];
                var[i] += d * d / n;
            }
        }
        let std = var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> DVector<f64> {
        DVector::from_fn(raw.len(), |i, _| (raw[i] - self.mean[i]) / self.std[i])
    }

    pub fn invert(&self, normalized: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(normalized.len(), |i, _| {
            normalized[i] * self.std[i] + self.mean[i]
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One (label, target) pair: flattened trajectory coefficients plus ω,
/// and the flattened steady-state torque coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Record {
    pub label: Vec<f64>,
    pub target: Vec<f64>,
}

/// The supervised corpus for adversarial training, with the z-score
/// statistics of both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetD2 {
    pub records: Vec<D2Record>,
    pub n_channels: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub label_norm: Normalizer,
    pub target_norm: Normalizer,
    pub skipped: usize,
}

impl DatasetD2 {
    pub fn from_records(
        records: Vec<D2Record>,
        n_channels: usize,
        n_x: usize,
        n_u: usize,
        skipped: usize,
    ) -> Result<Self> {
        let label_dim = n_channels * (2 * n_x + 1) + 1;
        let target_dim = n_channels * (2 * n_u + 1);
        for r in &records {
            if r.label.len() != label_dim || r.target.len() != target_dim {
                return Err(Error::invalid_argument("record layout mismatch"));
            }
        }
        let labels: Vec<Vec<f64>> = records.iter().map(|r| r.label.clone()).collect();
        let targets: Vec<Vec<f64>> = records.iter().map(|r| r.target.clone()).collect();
        Ok(DatasetD2 {
            label_norm: Normalizer::fit(&labels)?,
            target_norm: Normalizer::fit(&targets)?,
            records,
            n_channels,
            n_x,
            n_u,
            skipped,
        })
    }

    pub fn label_dim(&self) -> usize {
        self.n_channels * (2 * self.n_x + 1) + 1
    }

    pub fn target_dim(&self) -> usize {
        self.n_channels * (2 * self.n_u + 1)
    }

    /// Split off the last `n_holdout` records (normalizers are refit on
    /// each side).
    pub fn split(&self, n_holdout: usize) -> Result<(DatasetD2, DatasetD2)> {
        if n_holdout == 0 || n_holdout >= self.records.len() {
            return Err(Error::invalid_argument("holdout size out of range"));
        }
        let cut = self.records.len() - n_holdout;
        let train = DatasetD2::from_records(
            self.records[..cut].to_vec(),
            self.n_channels,
            self.n_x,
            self.n_u,
            0,
        )?;
        let holdout = DatasetD2::from_records(
            self.records[cut..].to_vec(),
            self.n_channels,
            self.n_x,
            self.n_u,
            0,
        )?;
        Ok((train, holdout))
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(
        r: impl BufRead,
        n_channels: usize,
        n_x: usize,
        n_u: usize,
    ) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<D2Record>(&line)?);
        }
        Self::from_records(records, n_channels, n_x, n_u, 0)
    }
}

/// Samples per fundamental period when projecting the steady-state
/// torque onto the kernel (≥ 10× oversampling for n_u ≤ 8).
pub const ENCODE_SAMPLES_PER_PERIOD: usize = 200;

/// Flattened label `[C_xd row-major ‖ ω]`.
pub fn label_vec(c_xd: &TfsCoefficients) -> Vec<f64> {
    let mut label = c_xd.flatten();
    label.push(c_xd.omega());
    label
}

/// Evaluate the exact steady-state torque of `params` along the
/// trajectory and encode one period of it.
pub fn steady_state_coefficients(
    c_xd: &TfsCoefficients,
    params: &PlantParams,
    n_u: usize,
) -> Result<TfsCoefficients> {
    let n = ENCODE_SAMPLES_PER_PERIOD;
    let dt = c_xd.period() / n as f64;
    let mut samples = DMatrix::zeros(c_xd.n_channels(), n);
    for k in 0..n {
        let t = k as f64 * dt;
        let q = c_xd.decode(t);
        let qd = c_xd.decode_derivative(t, 1);
        let qdd = c_xd.decode_derivative(t, 2);
        let u = inverse_dynamics(
            &nalgebra::Vector2::new(q[0], q[1]),
            &nalgebra::Vector2::new(qd[0], qd[1]),
            &nalgebra::Vector2::new(qdd[0], qdd[1]),
            params,
        );
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid_argument("non-finite steady-state torque"));
        }
        samples[(0, k)] = u[0];
        samples[(1, k)] = u[1];
    }
    tfs::encode(&samples, 0.0, dt, c_xd.omega(), n_u)
}

/// Draw `n_samples` plants and trajectories, evaluate the inverse
/// dynamics along each trajectory, and encode the (label, target)
/// pairs. Returns the sampled plants alongside for oracles that need
/// the ground truth. Non-finite evaluations are skipped and counted;
/// more than 10% skips is an error.
pub fn generate_dataset_with_params(
    nominal: &PlantParams,
    uncertainty: f64,
    family: &TrajectoryFamily,
    n_samples: usize,
    n_x: usize,
    n_u: usize,
    seed: u64,
) -> Result<(DatasetD2, Vec<PlantParams>)> {
    if n_samples == 0 {
        return Err(Error::invalid_argument("n_samples must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_samples);
    let mut plants = Vec::with_capacity(n_samples);
    let mut skipped = 0usize;
    for _ in 0..n_samples {
        let params = sample_uncertain_params(nominal, uncertainty, &mut rng)?;
        let c_xd = family.sample(n_x, &mut rng)?;
        match steady_state_coefficients(&c_xd, &params, n_u) {
            Ok(c_uss) => {
                records.push(D2Record {
                    label: label_vec(&c_xd),
                    target: c_uss.flatten(),
                });
                plants.push(params);
            }
            Err(_) => skipped += 1,
        }
    }
    if records.len() * 10 < n_samples * 9 {
        return Err(Error::invalid_argument(format!(
            "dataset yield too low: {} of {n_samples} samples usable",
            records.len()
        )));
    }
    let dataset = DatasetD2::from_records(records, family.n_channels, n_x, n_u, skipped)?;
    Ok((dataset, plants))
}

pub fn generate_dataset(
    nominal: &PlantParams,
    uncertainty: f64,
    family: &TrajectoryFamily,
    n_samples: usize,
    n_x: usize,
    n_u: usize,
    seed: u64,
) -> Result<DatasetD2> {
    generate_dataset_with_params(nominal, uncertainty, family, n_samples, n_x, n_u, seed)
        .map(|(d, _)| d)
}

/// Trained conditional generator/discriminator pair plus the
/// normalization statistics both networks were trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CganModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
    pub n_channels: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub label_norm: Normalizer,
    pub target_norm: Normalizer,
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainRow {
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    pub mean_real_score: f64,
    pub mean_fake_score: f64,
}

fn safe_ln(x: f64) -> f64 {
    x.max(1e-12).ln()
}

/// Alternating minibatch training. The discriminator ascends
/// `½·log D(real|label) + ½·log(1 − D(fake|label))`; the generator uses
/// the non-saturating objective, ascending `log D(fake|label)`. Both
/// reported losses approach log 2 at the adversarial equilibrium.
pub fn train_cgan(
    data: &DatasetD2,
    cfg: &CganConfig,
    seed: u64,
) -> Result<(CganModel, Vec<TrainRow>)> {
    if data.records.is_empty() {
        return Err(Error::invalid_argument("dataset is empty"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid_argument("batch size and epochs must be positive"));
    }
    let label_dim = data.label_dim();
    let target_dim = data.target_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen_widths = vec![cfg.latent_dim + label_dim];
    gen_widths.extend(&cfg.gen_hidden);
    gen_widths.push(target_dim);
    let mut gen_acts = vec![Activation::Tanh; cfg.gen_hidden.len()];
    gen_acts.push(Activation::Identity);
    let mut generator = Mlp::glorot_init(&gen_widths, &gen_acts, &mut rng)?;

    let mut dis_widths = vec![target_dim + label_dim];
    dis_widths.extend(&cfg.dis_hidden);
    dis_widths.push(1);
    let mut dis_acts = vec![Activation::LeakyRelu; cfg.dis_hidden.len()];
    dis_acts.push(Activation::Sigmoid);
    let mut discriminator = Mlp::glorot_init(&dis_widths, &dis_acts, &mut rng)?;

    // normalize once up front
    let labels_n: Vec<DVector<f64>> = data
        .records
        .iter()
        .map(|r| data.label_norm.apply(&r.label))
        .collect();
    let targets_n: Vec<DVector<f64>> = data
        .records
        .iter()
        .map(|r| data.target_norm.apply(&r.target))
        .collect();

    let adam_gen = AdamParams {
        lr: cfg.lr_gen,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        epsilon: 1e-8,
    };
    let adam_dis = AdamParams {
        lr: cfg.lr_dis,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        epsilon: 1e-8,
    };
    let mut gen_state = AdamState::new(&generator);
    let mut dis_state = AdamState::new(&discriminator);

    let n = data.records.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum_loss_g = 0.0;
        let mut sum_loss_d = 0.0;
        let mut sum_real = 0.0;
        let mut sum_fake = 0.0;
        let mut count = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let bs = batch.len() as f64;

            // discriminator update
            let mut dgrads = crate::nn::Gradients::zeros_like(&discriminator);
            let mut loss_d = 0.0;
            for &i in batch {
                // real sample: ascend ½·log D
                let mut x = DVector::zeros(target_dim + label_dim);
                x.rows_mut(0, target_dim).copy_from(&targets_n[i]);
                x.rows_mut(target_dim, label_dim).copy_from(&labels_n[i]);
                let (s, cache) = discriminator.forward(&x)?;
                loss_d += -0.5 * safe_ln(s[0]);
                sum_real += s[0];
                // d(−½ ln σ(z))/dz = ½(σ(z) − 1)
                let dlogit = DVector::from_element(1, 0.5 * (s[0] - 1.0) / bs);
                let (g, _) = discriminator.backward_from_logit(&cache, &dlogit)?;
                dgrads.add_assign(&g);

                // fake sample: ascend ½·log(1 − D)
                let mut zin = DVector::zeros(cfg.latent_dim + label_dim);
                for j in 0..cfg.latent_dim {
                    zin[j] = StandardNormal.sample(&mut rng);
                }
                zin.rows_mut(cfg.latent_dim, label_dim).copy_from(&labels_n[i]);
                let fake = generator.infer(&zin)?;
                let mut xf = DVector::zeros(target_dim + label_dim);
                xf.rows_mut(0, target_dim).copy_from(&fake);
                xf.rows_mut(target_dim, label_dim).copy_from(&labels_n[i]);
                let (sf, cache_f) = discriminator.forward(&xf)?;
                loss_d += -0.5 * safe_ln(1.0 - sf[0]);
                // d(−½ ln(1−σ(z)))/dz = ½σ(z)
                let dlogit_f = DVector::from_element(1, 0.5 * sf[0] / bs);
                let (gf, _) = discriminator.backward_from_logit(&cache_f, &dlogit_f)?;
                dgrads.add_assign(&gf);
            }
            adam_step(&mut discriminator, &dgrads, &mut dis_state, &adam_dis)?;

            // generator update (non-saturating): ascend log D(fake)
            let mut ggrads = crate::nn::Gradients::zeros_like(&generator);
            let mut loss_g = 0.0;
            for &i in batch {
                let mut zin = DVector::zeros(cfg.latent_dim + label_dim);
                for j in 0..cfg.latent_dim {
                    zin[j] = StandardNormal.sample(&mut rng);
                }
                zin.rows_mut(cfg.latent_dim, label_dim).copy_from(&labels_n[i]);
                let (fake, gen_cache) = generator.forward(&zin)?;
                let mut xf = DVector::zeros(target_dim + label_dim);
                xf.rows_mut(0, target_dim).copy_from(&fake);
                xf.rows_mut(target_dim, label_dim).copy_from(&labels_n[i]);
                let (sf, dis_cache) = discriminator.forward(&xf)?;
                loss_g += -safe_ln(sf[0]);
                sum_fake += sf[0];
                // d(−ln σ(z))/dz = σ(z) − 1
                let dlogit = DVector::from_element(1, (sf[0] - 1.0) / bs);
                let (_, dinput) = discriminator.backward_from_logit(&dis_cache, &dlogit)?;
                let dfake = dinput.rows(0, target_dim).into_owned();
                let (g, _) = generator.backward(&gen_cache, &dfake)?;
                ggrads.add_assign(&g);
            }
            adam_step(&mut generator, &ggrads, &mut gen_state, &adam_gen)?;

            sum_loss_d += loss_d / bs;
            sum_loss_g += loss_g / bs;
            count += 1.0;
        }

        let row = TrainRow {
            epoch,
            loss_g: sum_loss_g / count,
            loss_d: sum_loss_d / count,
            mean_real_score: sum_real / n as f64,
            mean_fake_score: sum_fake / n as f64,
        };
        if !row.loss_g.is_finite() || !row.loss_d.is_finite() {
            return Err(Error::Training {
                epoch,
                what: "adversarial loss became non-finite".into(),
            });
        }
        curve.push(row);
    }

    Ok((
        CganModel {
            generator,
            discriminator,
            latent_dim: cfg.latent_dim,
            n_channels: data.n_channels,
            n_x: data.n_x,
            n_u: data.n_u,
            label_norm: data.label_norm.clone(),
            target_norm: data.target_norm.clone(),
        },
        curve,
    ))
}

impl CganModel {
    pub fn label_dim(&self) -> usize {
        self.n_channels * (2 * self.n_x + 1) + 1
    }

    pub fn target_dim(&self) -> usize {
        self.n_channels * (2 * self.n_u + 1)
    }

    fn check_label(&self, c_xd: &TfsCoefficients) -> Result<()> {
        if c_xd.n_channels() != self.n_channels || c_xd.n_harmonics() != self.n_x {
            return Err(Error::invalid_argument(format!(
                "label shape {}×{} does not match model ({}×{})",
                c_xd.n_channels(),
                c_xd.n_harmonics(),
                self.n_channels,
                self.n_x
            )));
        }
        Ok(())
    }

    fn generator_input(&self, z: &DVector<f64>, c_xd: &TfsCoefficients) -> Result<DVector<f64>> {
        self.check_label(c_xd)?;
        if z.len() != self.latent_dim {
            return Err(Error::invalid_argument(format!(
                "latent vector has {} entries, model expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let label_n = self.label_norm.apply(&label_vec(c_xd));
        let mut input = DVector::zeros(self.latent_dim + label_n.len());
        input.rows_mut(0, self.latent_dim).copy_from(z);
        input
            .rows_mut(self.latent_dim, label_n.len())
            .copy_from(&label_n);
        Ok(input)
    }

    /// Generated steady-state coefficient matrix `Ĉ_uss` for `(z, label)`,
    /// de-normalized to raw torque units.
    pub fn generator_coefficients(
        &self,
        z: &DVector<f64>,
        c_xd: &TfsCoefficients,
    ) -> Result<TfsCoefficients> {
        let input = self.generator_input(z, c_xd)?;
        let out_n = self.generator.infer(&input)?;
        let raw = self.target_norm.invert(&out_n);
        TfsCoefficients::from_flat(
            raw.as_slice(),
            self.n_channels,
            c_xd.omega(),
            self.n_u,
        )
    }

    /// Steady-state torque estimate `û_ss(t) = Ĉ_uss·Φ(t)`.
    pub fn steady_state_policy(
        &self,
        z: &DVector<f64>,
        c_xd: &TfsCoefficients,
        t: f64,
    ) -> Result<DVector<f64>> {
        Ok(self.generator_coefficients(z, c_xd)?.decode(t))
    }

    /// Jacobian of the flattened (raw-unit) coefficients with respect to
    /// the latent input, `target_dim × latent_dim`.
    pub fn generator_jacobian_z(
        &self,
        z: &DVector<f64>,
        c_xd: &TfsCoefficients,
    ) -> Result<DMatrix<f64>> {
        let input = self.generator_input(z, c_xd)?;
        let cols: Vec<usize> = (0..self.latent_dim).collect();
        let mut jac = self.generator.jacobian_wrt_inputs(&input, &cols)?;
        for r in 0..jac.nrows() {
            let s = self.target_norm.std[r];
            for c in 0..jac.ncols() {
                jac[(r, c)] *= s;
            }
        }
        Ok(jac)
    }

    /// Discriminator score of a (coefficients, label) pair, in (0, 1).
    pub fn discriminator_score(
        &self,
        c_u: &TfsCoefficients,
        c_xd: &TfsCoefficients,
    ) -> Result<f64> {
        self.check_label(c_xd)?;
        if c_u.n_channels() != self.n_channels || c_u.n_harmonics() != self.n_u {
            return Err(Error::invalid_argument("control coefficient shape mismatch"));
        }
        let target_n = self.target_norm.apply(&c_u.flatten());
        let label_n = self.label_norm.apply(&label_vec(c_xd));
        let mut x = DVector::zeros(target_n.len() + label_n.len());
        x.rows_mut(0, target_n.len()).copy_from(&target_n);
        x.rows_mut(target_n.len(), label_n.len()).copy_from(&label_n);
        // keep the score strictly inside (0, 1) even when the sigmoid
        // saturates at f64 precision
        Ok(self.discriminator.infer(&x)?[0].clamp(1e-12, 1.0 - 1e-12))
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

/// Settings of the discriminator-based fault monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultDetectorConfig {
    /// Ideal score band around 1/2.
    pub band: (f64, f64),
    /// First-order low-pass time constant applied to the score, s.
    pub filter_tau: f64,
    /// Filtered-error norm below which the loop counts as steady.
    pub steady_threshold: f64,
    /// Scoring cadence in control steps.
    pub score_stride: usize,
}

impl Default for FaultDetectorConfig {
    fn default() -> Self {
        FaultDetectorConfig {
            band: (0.45, 0.55),
            filter_tau: 1.0,
            steady_threshold: 0.5,
            score_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultStatus {
    /// Window not yet full, or the loop has not reached steady state.
    WarmingUp,
    Healthy,
    Fault,
}

/// Sliding one-period window over the applied control, re-encoded and
/// scored by the discriminator, with the score low-pass filtered.
/// Verdicts only count once the loop has been in steady state for one
/// full period (the monitor then stays armed).
#[derive(Debug, Clone)]
pub struct FaultDetector {
    cfg: FaultDetectorConfig,
    window: Vec<DVector<f64>>,
    n_window: usize,
    head: usize,
    filled: usize,
    step: usize,
    filtered: Option<f64>,
    armed: bool,
    steady_run: usize,
}

impl FaultDetector {
    pub fn new(cfg: FaultDetectorConfig, omega: f64, dt: f64, n_channels: usize) -> Result<Self> {
        if !(omega > 0.0) || !(dt > 0.0) {
            return Err(Error::invalid_argument("omega and dt must be positive"));
        }
        if !(cfg.band.0 < 0.5 && 0.5 < cfg.band.1) {
            return Err(Error::invalid_argument("band must straddle 1/2"));
        }
        let period = 2.0 * std::f64::consts::PI / omega;
        let n_window = (period / dt).round() as usize;
        if n_window < 4 {
            return Err(Error::invalid_argument("window too short for the period"));
        }
        Ok(FaultDetector {
            cfg,
            window: vec![DVector::zeros(n_channels); n_window],
            n_window,
            head: 0,
            filled: 0,
            step: 0,
            filtered: None,
            armed: false,
            steady_run: 0,
        })
    }

    pub fn window_len(&self) -> usize {
        self.n_window
    }

    pub fn filtered_score(&self) -> Option<f64> {
        self.filtered
    }

    pub fn armed(&self) -> bool {
        self.armed
    }

    /// First-order low-pass `y += (dt/τ)·(x − y)`; DC gain 1.
    fn filter(&mut self, score: f64, dt_score: f64) -> f64 {
        let y = match self.filtered {
            None => score,
            Some(prev) => prev + (dt_score / self.cfg.filter_tau).min(1.0) * (score - prev),
        };
        self.filtered = Some(y);
        y
    }

    /// Ingest one control sample; periodically re-encode the window and
    /// refresh the filtered score.
    pub fn step(
        &mut self,
        model: &CganModel,
        c_xd: &TfsCoefficients,
        u: &DVector<f64>,
        e_norm: f64,
        t: f64,
        dt: f64,
    ) -> Result<(Option<f64>, FaultStatus)> {
        self.window[self.head] = u.clone();
        self.head = (self.head + 1) % self.n_window;
        self.filled = (self.filled + 1).min(self.n_window);
        self.step += 1;

        if e_norm < self.cfg.steady_threshold {
            self.steady_run += 1;
            if self.steady_run >= self.n_window {
                self.armed = true;
            }
        } else {
            self.steady_run = 0;
        }

        if self.filled < self.n_window {
            return Ok((self.filtered, FaultStatus::WarmingUp));
        }

        if self.step % self.cfg.score_stride == 0 {
            // chronological window: oldest sample sits at `head`
            let n_ch = self.window[0].len();
            let mut samples = DMatrix::zeros(n_ch, self.n_window);
            for k in 0..self.n_window {
                let idx = (self.head + k) % self.n_window;
                for ch in 0..n_ch {
                    samples[(ch, k)] = self.window[idx][ch];
                }
            }
            let t0 = t - (self.n_window - 1) as f64 * dt;
            let encoded = tfs::encode(&samples, t0, dt, c_xd.omega(), model.n_u)?;
            let score = model.discriminator_score(&encoded, c_xd)?;
            self.filter(score, self.cfg.score_stride as f64 * dt);
        }

        let status = if !self.armed {
            FaultStatus::WarmingUp
        } else {
            match self.filtered {
                Some(s) if s < self.cfg.band.0 || s > self.cfg.band.1 => FaultStatus::Fault,
                Some(_) => FaultStatus::Healthy,
                None => FaultStatus::WarmingUp,
            }
        };
        Ok((self.filtered, status))
    }
}
