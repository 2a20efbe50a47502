// scratch: compare identification error across predict variants and settings
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use risegen::ekf_indirect::{ekf_step, EkfConfig, EkfEstimate, N_THETA};
use risegen::plant::{inverse_dynamics, Disturbance, PlantParams, PlantState};
use risegen::tfs::TfsCoefficients;
use std::f64::consts::TAU;

fn benchmark_trajectory() -> TfsCoefficients {
    use nalgebra::DMatrix;
    let mut coeffs = DMatrix::zeros(2, 7);
    coeffs[(0, 0)] = std::f64::consts::PI / 2.0;
    coeffs[(0, 1)] = 0.2;
    coeffs[(1, 4)] = 1.0;
    TfsCoefficients::new(coeffs, TAU, 3).unwrap()
}

fn main() {
    let truth = PlantParams {
        m1: 7.0 * 1.3, m2: 4.0 * 0.8, l1: 0.5 * 1.15, l2: 0.5 * 0.9,
        fs1: 0.8 * 1.4, fs2: 0.8 * 0.7, fv1: 4.0 * 1.25, fv2: 4.0 * 0.85,
        ..PlantParams::nominal()
    };
    let c_xd = benchmark_trajectory();
    let cases: [(&str, f64, f64, f64, bool, f64); 6] = [
        ("euler qs=1e-6", 1e-8, 10.0, 1e-3, false, 1e-6),
        ("mid   qs=1e-6", 1e-8, 10.0, 1e-3, true, 1e-6),
        ("mid   qs=1e-8", 1e-8, 10.0, 1e-3, true, 1e-8),
        ("mid   qs=1e-10", 1e-8, 10.0, 1e-3, true, 1e-10),
        ("mid   qs=1e-8 qp=1e-9", 1e-9, 10.0, 1e-3, true, 1e-8),
        ("mid   qs=1e-8 20s", 1e-8, 20.0, 1e-3, true, 1e-8),
    ];
    for (label, q_param, duration, dt, midpoint_predict, q_state) in cases {
        let cfg = EkfConfig { q_param, midpoint_predict, q_state, ..EkfConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let steps = (duration / dt).round() as usize;
        let q0 = c_xd.decode(0.0);
        let qd0 = c_xd.decode_derivative(0.0, 1);
        let state0 = PlantState { q: Vector2::new(q0[0], q0[1]), qdot: Vector2::new(qd0[0], qd0[1]), t: 0.0 };
        let mut est = EkfEstimate::new(&state0, &PlantParams::nominal(), &cfg);
        let mut ok = true;
        for k in 1..=steps {
            let t = k as f64 * dt;
            let tp = t - 0.5 * dt; // midpoint torque stands in for the ZOH value
            let q = c_xd.decode(tp);
            let qd = c_xd.decode_derivative(tp, 1);
            let qdd = c_xd.decode_derivative(tp, 2);
            let u = inverse_dynamics(
                &Vector2::new(q[0], q[1]), &Vector2::new(qd[0], qd[1]), &Vector2::new(qdd[0], qdd[1]), &truth,
            ) + Disturbance::None.eval(tp);
            let xd = c_xd.decode(t);
            let n0: f64 = StandardNormal.sample(&mut rng);
            let n1: f64 = StandardNormal.sample(&mut rng);
            let y = Vector2::new(xd[0] + 1e-4 * n0, xd[1] + 1e-4 * n1);
            match ekf_step(&est, &u, &y, dt, &cfg) {
                Ok(e) => est = e,
                Err(err) => { println!("{label}: DIVERGED {err}"); ok = false; break; }
            }
        }
        if ok {
            let th = est.theta();
            let expected = truth.theta();
            let rels: Vec<String> = (0..N_THETA)
                .map(|i| format!("{:.3}", (th[i] - expected[i]).abs() / expected[i].abs()))
                .collect();
            println!("{label}: rel errs [{}]", rels.join(", "));
        }
    }
}
