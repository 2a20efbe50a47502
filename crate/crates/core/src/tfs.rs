//! Truncated Fourier series (TFS) codec.
//!
//! Every periodic signal in this crate — desired trajectories and
//! steady-state control patterns alike — is represented by a coefficient
//! matrix against the sine/cosine kernel
//!
//! ```text
//! Φ(t) = [0.5, cos(ωt), …, cos(nωt), sin(ωt), …, sin(nωt)]ᵀ
//! ```
//!
//! so that `signal(t) = C · Φ(t)` with `C` of shape
//! `n_channels × (2n + 1)`. Encoding projects uniform samples of one
//! fundamental period onto the kernel; the projection is exact for
//! signals band-limited to `n` harmonics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient matrix of a truncated Fourier series plus its fundamental
/// frequency. Rows are signal channels, columns follow the kernel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TfsCoefficients {
    coeffs: DMatrix<f64>,
    omega: f64,
    n_harmonics: usize,
}

/// Serialized form: `{omega, n_harmonics, coeffs}` with the coefficient
/// matrix flattened row-major.
#[derive(Serialize, Deserialize)]
struct TfsWire {
    omega: f64,
    n_harmonics: usize,
    coeffs: Vec<f64>,
}

impl Serialize for TfsCoefficients {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut flat = Vec::with_capacity(self.coeffs.len());
        for r in 0..self.coeffs.nrows() {
            for c in 0..self.coeffs.ncols() {
                flat.push(self.coeffs[(r, c)]);
            }
        }
        TfsWire {
            omega: self.omega,
            n_harmonics: self.n_harmonics,
            coeffs: flat,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TfsCoefficients {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = TfsWire::deserialize(d)?;
        let ncols = 2 * wire.n_harmonics + 1;
        if wire.coeffs.is_empty() || wire.coeffs.len() % ncols != 0 {
            return Err(serde::de::Error::custom(format!(
                "coefficient count {} not a multiple of {}",
                wire.coeffs.len(),
                ncols
            )));
        }
        let nrows = wire.coeffs.len() / ncols;
        let coeffs = DMatrix::from_row_iterator(nrows, ncols, wire.coeffs.into_iter());
        TfsCoefficients::new(coeffs, wire.omega, wire.n_harmonics)
            .map_err(serde::de::Error::custom)
    }
}

impl TfsCoefficients {
    pub fn new(coeffs: DMatrix<f64>, omega: f64, n_harmonics: usize) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::invalid_argument(format!(
                "fundamental frequency must be positive and finite, got {omega}"
            )));
        }
        if coeffs.ncols() != 2 * n_harmonics + 1 {
            return Err(Error::invalid_argument(format!(
                "coefficient matrix has {} columns, expected 2*{} + 1",
                coeffs.ncols(),
                n_harmonics
            )));
        }
        if coeffs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_argument("non-finite coefficient"));
        }
        Ok(Self {
            coeffs,
            omega,
            n_harmonics,
        })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    pub fn n_channels(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Fundamental period `T = 2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// Row-major flattening of the coefficient matrix.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.coeffs.len());
        for r in 0..self.coeffs.nrows() {
            for c in 0..self.coeffs.ncols() {
                flat.push(self.coeffs[(r, c)]);
            }
        }
        flat
    }

    /// Rebuild from a row-major flattening.
    pub fn from_flat(flat: &[f64], n_channels: usize, omega: f64, n_harmonics: usize) -> Result<Self> {
        let ncols = 2 * n_harmonics + 1;
        if flat.len() != n_channels * ncols {
            return Err(Error::invalid_argument(format!(
                "expected {} coefficients, got {}",
                n_channels * ncols,
                flat.len()
            )));
        }
        let coeffs = DMatrix::from_row_iterator(n_channels, ncols, flat.iter().copied());
        Self::new(coeffs, omega, n_harmonics)
    }

    /// Evaluate the represented signal at time `t`.
    pub fn decode(&self, t: f64) -> DVector<f64> {
        &self.coeffs * kernel_unchecked(self.omega, self.n_harmonics, t)
    }

    /// Evaluate the `order`-th time derivative of the represented signal.
    ///
    /// Uses the phase-shift identity `dᵖ/dtᵖ cos(jωt) = (jω)ᵖ cos(jωt + pπ/2)`.
    pub fn decode_derivative(&self, t: f64, order: u32) -> DVector<f64> {
        if order == 0 {
            return self.decode(t);
        }
        let n = self.n_harmonics;
        let shift = order as f64 * std::f64::consts::FRAC_PI_2;
        let mut phi = DVector::zeros(2 * n + 1);
        for j in 1..=n {
            let scale = (j as f64 * self.omega).powi(order as i32);
            let arg = j as f64 * self.omega * t + shift;
            phi[j] = scale * arg.cos();
            phi[n + j] = scale * arg.sin();
        }
        &self.coeffs * phi
    }
}

/// Sine/cosine kernel `Φ(t)` of the truncated Fourier series.
///
/// Element 0 is the constant 0.5; elements `1..=n` are `cos(jωt)`;
/// elements `n+1..=2n` are `sin(jωt)`.
pub fn kernel(omega: f64, n_harmonics: usize, t: f64) -> Result<DVector<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::invalid_argument(format!(
            "fundamental frequency must be positive and finite, got {omega}"
        )));
    }
    Ok(kernel_unchecked(omega, n_harmonics, t))
}

fn kernel_unchecked(omega: f64, n_harmonics: usize, t: f64) -> DVector<f64> {
    let n = n_harmonics;
    let mut phi = DVector::zeros(2 * n + 1);
    phi[0] = 0.5;
    for j in 1..=n {
        let arg = j as f64 * omega * t;
        phi[j] = arg.cos();
        phi[n + j] = arg.sin();
    }
    phi
}

/// Project uniform samples of one fundamental period onto the kernel.
///
/// `samples` holds one channel per row and one sample per column; sample
/// `k` is taken at `t0 + k·dt`. The window `n_samples·dt` must span one
/// period of `omega` (to within one sample), and at least `2·(2n+1)`
/// samples are required. On a uniform one-period grid the trapezoidal
/// inner products reduce to plain averages, which recover band-limited
/// signals exactly.
pub fn encode(
    samples: &DMatrix<f64>,
    t0: f64,
    dt: f64,
    omega: f64,
    n_harmonics: usize,
) -> Result<TfsCoefficients> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::invalid_argument(format!(
            "fundamental frequency must be positive and finite, got {omega}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid_argument("sample spacing must be positive"));
    }
    let n_samples = samples.ncols();
    let min_samples = 2 * (2 * n_harmonics + 1);
    if n_samples < min_samples {
        return Err(Error::invalid_argument(format!(
            "{n_samples} samples is too few for {n_harmonics} harmonics (need at least {min_samples})"
        )));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let window = n_samples as f64 * dt;
    if (window - period).abs() > 0.75 * dt {
        return Err(Error::invalid_argument(format!(
            "sample window {window:.6} s does not span one period {period:.6} s"
        )));
    }

    let n_channels = samples.nrows();
    let scale = 2.0 / n_samples as f64;
    let mut coeffs = DMatrix::zeros(n_channels, 2 * n_harmonics + 1);
    for k in 0..n_samples {
        let t = t0 + k as f64 * dt;
        for j in 0..=n_harmonics {
            let arg = j as f64 * omega * t;
            let (s, c) = arg.sin_cos();
            for ch in 0..n_channels {
                let x = samples[(ch, k)] * scale;
                if j == 0 {
                    coeffs[(ch, 0)] += x;
                } else {
                    coeffs[(ch, j)] += x * c;
                    coeffs[(ch, n_harmonics + j)] += x * s;
                }
            }
        }
    }
    TfsCoefficients::new(coeffs, omega, n_harmonics)
}

/// Diagonal of the kernel Gram matrix `(1/T)∫_T Φ Φᵀ dt`.
///
/// The DC element of the kernel is 0.5, so its mean square is 0.25; each
/// harmonic element averages to 0.5. This diagonal is the weight matrix
/// of the coefficient-space quadratic form that equals the time-domain
/// mean-square distance between two band-limited signals.
pub fn kernel_gram(n_harmonics: usize) -> DVector<f64> {
    let mut p = DVector::from_element(2 * n_harmonics + 1, 0.5);
    p[0] = 0.25;
    p
}

/// Mean-square distance `(1/T)∫_T ‖u − û‖² dt` between two band-limited
/// signals, computed in coefficient space as `trace((C−Ĉ) P (C−Ĉ)ᵀ)`
/// with `P = kernel_gram`.
pub fn mean_square_distance(a: &TfsCoefficients, b: &TfsCoefficients) -> Result<f64> {
    if a.n_harmonics != b.n_harmonics || a.n_channels() != b.n_channels() {
        return Err(Error::invalid_argument(
            "coefficient shapes do not match",
        ));
    }
    let p = kernel_gram(a.n_harmonics);
    let mut acc = 0.0;
    for r in 0..a.coeffs.nrows() {
        for c in 0..a.coeffs.ncols() {
            let d = a.coeffs[(r, c)] - b.coeffs[(r, c)];
            acc += p[c] * d * d;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn vec_close(a: &DVector<f64>, b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for i in 0..b.len() {
            assert!(
                (a[i] - b[i]).abs() <= tol,
                "element {i}: {} vs {} (tol {tol})",
                a[i],
                b[i]
            );
        }
    }

    #[test]
    fn kernel_at_zero() {
        let phi = kernel(TAU, 1, 0.0).unwrap();
        vec_close(&phi, &[0.5, 1.0, 0.0], 1e-15);
    }

    #[test]
    fn kernel_quarter_period() {
        let phi = kernel(TAU, 1, 0.25).unwrap();
        vec_close(&phi, &[0.5, 0.0, 1.0], 1e-12);
    }

    #[test]
    fn kernel_half_period_two_harmonics() {
        let phi = kernel(TAU, 2, 0.5).unwrap();
        vec_close(&phi, &[0.5, -1.0, 1.0, 0.0, 0.0], 1e-12);
    }

    #[test]
    fn kernel_rejects_nonpositive_omega() {
        assert!(kernel(0.0, 1, 0.0).is_err());
        assert!(kernel(-1.0, 1, 0.0).is_err());
    }

    #[test]
    fn kernel_element_bounds_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let omega = rng.random_range(1e-3..100.0);
            let n = rng.random_range(0..12usize);
            let t = rng.random_range(-50.0..50.0);
            let phi = kernel(omega, n, t).unwrap();
            assert_eq!(phi[0], 0.5);
            for i in 1..phi.len() {
                assert!(phi[i] >= -1.0 && phi[i] <= 1.0);
            }
        }
    }

    #[test]
    fn decode_constant_row() {
        let c = 3.25;
        let coeffs = DMatrix::from_row_slice(1, 5, &[2.0 * c, 0.0, 0.0, 0.0, 0.0]);
        let tfs = TfsCoefficients::new(coeffs, TAU, 2).unwrap();
        for &t in &[0.0, 0.3, 1.7, -2.2] {
            assert!((tfs.decode(t)[0] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_pure_cosine_and_sine() {
        let cosine = TfsCoefficients::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]), TAU, 1)
            .unwrap();
        assert!((cosine.decode(0.0)[0] - 1.0).abs() < 1e-12);
        let sine = TfsCoefficients::new(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]), TAU, 1)
            .unwrap();
        assert!((sine.decode(0.25)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decode_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs = DMatrix::from_fn(2, 9, |_, _| rng.random_range(-1.0..1.0));
        let tfs = TfsCoefficients::new(coeffs, 3.0, 4).unwrap();
        let h = 1e-6;
        for &t in &[0.0, 0.13, 0.77] {
            let d1 = tfs.decode_derivative(t, 1);
            let fd = (tfs.decode(t + h) - tfs.decode(t - h)) / (2.0 * h);
            for i in 0..2 {
                assert!((d1[i] - fd[i]).abs() < 1e-6, "{} vs {}", d1[i], fd[i]);
            }
            let d2 = tfs.decode_derivative(t, 2);
            let fd2 = (tfs.decode(t + h) - 2.0 * tfs.decode(t) + tfs.decode(t - h)) / (h * h);
            for i in 0..2 {
                assert!((d2[i] - fd2[i]).abs() < 1e-2);
            }
        }
    }

    fn sample_signal(tfs: &TfsCoefficients, n_samples: usize) -> DMatrix<f64> {
        let dt = tfs.period() / n_samples as f64;
        DMatrix::from_fn(tfs.n_channels(), n_samples, |ch, k| {
            tfs.decode(k as f64 * dt)[ch]
        })
    }

    #[test]
    fn encode_constant_signal() {
        let c = -1.5;
        let samples = DMatrix::from_element(1, 64, c);
        let enc = encode(&samples, 0.0, 1.0 / 64.0, TAU, 2).unwrap();
        let expected = [2.0 * c, 0.0, 0.0, 0.0, 0.0];
        for (i, &e) in expected.iter().enumerate() {
            assert!((enc.coeffs()[(0, i)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_pure_cosine() {
        let n = 128;
        let dt = 1.0 / n as f64;
        let samples = DMatrix::from_fn(1, n, |_, k| (TAU * k as f64 * dt).cos());
        let enc = encode(&samples, 0.0, dt, TAU, 3).unwrap();
        let row = enc.coeffs();
        assert!((row[(0, 1)] - 1.0).abs() < 1e-12);
        for i in [0usize, 2, 3, 4, 5, 6] {
            assert!(row[(0, i)].abs() < 1e-12, "column {i} = {}", row[(0, i)]);
        }
    }

    #[test]
    fn encode_rejects_bad_windows() {
        let samples = DMatrix::from_element(1, 64, 1.0);
        // window is half a period
        assert!(encode(&samples, 0.0, 0.5 / 64.0, TAU, 2).is_err());
        // too few samples for the harmonic count
        let short = DMatrix::from_element(1, 8, 1.0);
        assert!(encode(&short, 0.0, 1.0 / 8.0, TAU, 4).is_err());
        assert!(encode(&samples, 0.0, 1.0 / 64.0, 0.0, 2).is_err());
    }

    #[test]
    fn round_trip_random_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n_harm = rng.random_range(1..=8usize);
            let omega = rng.random_range(0.5..20.0);
            let n_ch = rng.random_range(1..=3usize);
            let coeffs = DMatrix::from_fn(n_ch, 2 * n_harm + 1, |_, _| rng.random_range(-5.0..5.0));
            let tfs = TfsCoefficients::new(coeffs, omega, n_harm).unwrap();
            let n_samples = 200;
            let dt = tfs.period() / n_samples as f64;
            let samples = sample_signal(&tfs, n_samples);
            let enc = encode(&samples, 0.0, dt, omega, n_harm).unwrap();
            let err = (enc.coeffs() - tfs.coeffs()).abs().max();
            assert!(err < 1e-9, "trial {trial}: round-trip error {err}");
        }
    }

    #[test]
    fn round_trip_window_offset_invariance() {
        // Encoding a periodic signal from a window starting mid-period
        // recovers the same coefficients.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-2.0..2.0));
        let tfs = TfsCoefficients::new(coeffs, TAU, 3).unwrap();
        let n_samples = 100;
        let dt = tfs.period() / n_samples as f64;
        let t0 = 0.377;
        let samples = DMatrix::from_fn(2, n_samples, |ch, k| {
            tfs.decode(t0 + k as f64 * dt)[ch]
        });
        let enc = encode(&samples, t0, dt, TAU, 3).unwrap();
        assert!((enc.coeffs() - tfs.coeffs()).abs().max() < 1e-9);
    }

    #[test]
    fn quadratic_form_matches_time_domain_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n_harm = 4;
            let omega = rng.random_range(1.0..10.0);
            let a = TfsCoefficients::new(
                DMatrix::from_fn(2, 9, |_, _| rng.random_range(-3.0..3.0)),
                omega,
                n_harm,
            )
            .unwrap();
            let b = TfsCoefficients::new(
                DMatrix::from_fn(2, 9, |_, _| rng.random_range(-3.0..3.0)),
                omega,
                n_harm,
            )
            .unwrap();
            let coeff_space = mean_square_distance(&a, &b).unwrap();

            // independent time-domain oracle: trapezoid on a fine one-period grid
            let n = 4096;
            let period = a.period();
            let h = period / n as f64;
            let mut acc = 0.0;
            for k in 0..n {
                let t = k as f64 * h;
                let d = a.decode(t) - b.decode(t);
                acc += d.norm_squared();
            }
            let time_domain = acc / n as f64;
            assert!(
                (coeff_space - time_domain).abs() < 1e-9,
                "{coeff_space} vs {time_domain}"
            );
        }
    }

    #[test]
    fn serialization_round_trip() {
        let coeffs = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tfs = TfsCoefficients::new(coeffs, PI, 1).unwrap();
        let json = serde_json::to_string(&tfs).unwrap();
        let back: TfsCoefficients = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tfs);
    }

    proptest::proptest! {
        #[test]
        fn decode_is_periodic(seed in 0u64..1000, t in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs = DMatrix::from_fn(1, 7, |_, _| rng.random_range(-1.0..1.0));
            let tfs = TfsCoefficients::new(coeffs, TAU, 3).unwrap();
            let a = tfs.decode(t)[0];
            let b = tfs.decode(t + tfs.period())[0];
            proptest::prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
