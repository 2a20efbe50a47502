// scratch: dissect the oracle-loop residual error
use risegen::bench::*;
use risegen::plant::PlantParams;

fn run_case(label: &str, scenario: &Scenario, opts: &EpisodeOptions) {
    let trace = run_episode(scenario, &Models::default(), opts, 1).unwrap();
    let profile: Vec<String> = (0..10)
        .map(|i| {
            let a = i as f64;
            format!("{:.4}", trace.max_tracking_error_over(a, a + 1.0))
        })
        .collect();
    println!("{label}: per-second max err {}", profile.join(" "));
}

fn main() {
    let catalog = scenario_catalog();
    let mut scenario = find_scenario(&catalog, "sim1-oracle").unwrap();
    scenario.param_uncertainty = 0.0;
    scenario.events.clear();
    scenario.duration = 10.0;
    let opts = EpisodeOptions { bias_mode: BiasMode::None, ..EpisodeOptions::default() };

    run_case("nominal          ", &scenario, &opts);

    let mut frictionless = scenario.clone();
    frictionless.nominal = PlantParams { fs1: 0.0, fs2: 0.0, ..PlantParams::nominal() };
    run_case("no static fric   ", &frictionless, &opts);

    let mut viscous_only = scenario.clone();
    viscous_only.nominal = PlantParams { fs1: 0.0, fs2: 0.0, fv1: 0.0, fv2: 0.0, ..PlantParams::nominal() };
    run_case("no friction      ", &viscous_only, &opts);

    let mut matched_start = scenario.clone();
    matched_start.duration = 10.0;
    let opts_start = EpisodeOptions {
        bias_mode: BiasMode::None,
        q0: [std::f64::consts::FRAC_PI_4 + 0.2, 0.0],
        qdot0: [0.0, std::f64::consts::TAU],
        ..EpisodeOptions::default()
    };
    run_case("start on traj    ", &matched_start, &opts_start);
}
