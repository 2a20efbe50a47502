// scratch: disturbance robustness + D3 correlation across settings
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use risegen::cgan::TrajectoryFamily;
use risegen::ekf_indirect::{ekf_step, generate_d3, EkfConfig, EkfEstimate, N_THETA};
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

fn disturbance_case() {
    let truth = PlantParams {
        m1: 7.0 * 1.3,
        m2: 4.0 * 0.8,
        l1: 0.5 * 1.15,
        l2: 0.5 * 0.9,
        fs1: 0.8 * 1.4,
        fs2: 0.8 * 0.7,
        fv1: 4.0 * 1.25,
        fv2: 4.0 * 0.85,
        ..PlantParams::nominal()
    };
    let c_xd = benchmark_trajectory();
    let cfg = EkfConfig::default();
    let d = Disturbance::paper_sinusoid();
    let dt = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let q0 = c_xd.decode(0.0);
    let qd0 = c_xd.decode_derivative(0.0, 1);
    let state0 = PlantState {
        q: Vector2::new(q0[0], q0[1]),
        qdot: Vector2::new(qd0[0], qd0[1]),
        t: 0.0,
    };
    let mut est = EkfEstimate::new(&state0, &PlantParams::nominal(), &cfg);
    for k in 1..=10_000 {
        let t = k as f64 * dt;
        let tm = t - 0.5 * dt;
        let q = c_xd.decode(tm);
        let qd = c_xd.decode_derivative(tm, 1);
        let qdd = c_xd.decode_derivative(tm, 2);
        let u = inverse_dynamics(
            &Vector2::new(q[0], q[1]),
            &Vector2::new(qd[0], qd[1]),
            &Vector2::new(qdd[0], qdd[1]),
            &truth,
        ) + d.eval(tm);
        let xd = c_xd.decode(t);
        let n0: f64 = StandardNormal.sample(&mut rng);
        let n1: f64 = StandardNormal.sample(&mut rng);
        let y = Vector2::new(xd[0] + 1e-4 * n0, xd[1] + 1e-4 * n1);
        match ekf_step(&est, &u, &y, dt, &cfg) {
            Ok(e) => est = e,
            Err(err) => {
                println!(
                    "disturbance: blew up at step {k}: {err}; |mean|={:.3e} trace(P)={:.3e} theta={:?}",
                    est.mean.norm(),
                    est.cov_trace(),
                    est.theta()
                );
                return;
            }
        }
        if est.mean.norm() > 1e2 {
            println!(
                "k={k}: trace(P)={:.3e} |mean|={:.3e} qdot=({:.2e},{:.2e})",
                est.cov_trace(), est.mean.norm(), est.mean[2], est.mean[3]
            );
        }
        if k % 2000 == 0 {
            println!(
                "disturbance k={k}: trace(P)={:.3e} theta={:?}",
                est.cov_trace(),
                est.theta().map(|x| (x * 1000.0).round() / 1000.0)
            );
        }
    }
    println!("disturbance: survived; final theta = {:?}", est.theta());
}

fn d3_correlation(q_state: f64, duration_label: &str) {
    let family = if duration_label.contains("moderate") {
        TrajectoryFamily {
            offset: (0.4, 0.6),
            amplitude: (0.2, 0.4),
            phase: (-0.5, 0.5),
            omega: (TAU * 0.95, TAU * 1.05),
            n_channels: 2,
        }
    } else {
        TrajectoryFamily::default()
    };
    let cfg = EkfConfig {
        q_state,
        ..EkfConfig::default()
    };
    let (d3, plants) =
        generate_d3(&PlantParams::nominal(), 0.4, &family, 200, 3, 8, &cfg, 7).unwrap();
    let n = d3.records.len();
    let mut line = format!("qs={q_state:.0e} {duration_label}: corr [");
    for i in 0..N_THETA {
        let est: Vec<f64> = d3.records.iter().map(|r| r.theta_hat[i]).collect();
        let truth: Vec<f64> = plants[..n].iter().map(|p| p.theta()[i]).collect();
        let me = est.iter().sum::<f64>() / n as f64;
        let mt = truth.iter().sum::<f64>() / n as f64;
        let (mut cov, mut ve, mut vt) = (0.0, 0.0, 0.0);
        for k in 0..n {
            cov += (est[k] - me) * (truth[k] - mt);
            ve += (est[k] - me) * (est[k] - me);
            vt += (truth[k] - mt) * (truth[k] - mt);
        }
        line += &format!("{:.3}, ", cov / (ve.sqrt() * vt.sqrt()).max(1e-12));
        // worst relative error per component
        let mut worst = 0.0f64;
        let mut worst_k = 0usize;
        for k in 0..n {
            let rel = (est[k] - truth[k]).abs() / truth[k].abs();
            if rel > worst { worst = rel; worst_k = k; }
        }
        eprintln!("  theta[{i}]: worst rel err {worst:.3} at record {worst_k}");
    }
    for k in [174usize, 82] {
        if k < n {
            eprintln!(
                "record {k}: truth {:?}\n        est   {:?}\n        label {:?}",
                plants[k].theta().map(|x| (x * 1000.0).round() / 1000.0),
                d3.records[k].theta_hat.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                d3.records[k].label.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
    }
    println!("{line}] excluded={}", d3.excluded);
}

fn main() {
    disturbance_case();
    d3_correlation(1e-8, "20s moderate");
    d3_correlation(1e-8, "20s default");
}
