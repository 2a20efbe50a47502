// scratch: tune the baseline adaptive-beta RISE variant
use risegen::bench::*;
use risegen::plant::Disturbance;

fn main() {
    let catalog = scenario_catalog();
    let mut scenario = find_scenario(&catalog, "sim1").unwrap().with_variant(Variant::Baseline);
    scenario.param_uncertainty = 0.0;
    scenario.events.clear();
    scenario.duration = 12.0;
    for (rate, beta_max) in [(5.0, 40.0), (50.0, 600.0), (100.0, 1000.0), (200.0, 2000.0)] {
        let opts = EpisodeOptions {
            baseline_beta_rate: rate,
            baseline_beta_max: beta_max,
            ..EpisodeOptions::default()
        };
        match run_episode(&scenario, &Models::default(), &opts, 3) {
            Ok(trace) => {
                let m = compute_metrics(&trace, &MetricWeights::default());
                println!(
                    "rate={rate:6.1} bmax={beta_max:7.1}: err[6,12]={:.4} IAE={:.2} CE={:.2} IAR={:.2} Jp={:.2}",
                    trace.max_tracking_error_over(6.0, 12.0), m.iae, m.ce, m.iar, m.j_p
                );
            }
            Err(e) => println!("rate={rate} bmax={beta_max}: {e}"),
        }
    }
    // disturbance robustness
    scenario.disturbance = Disturbance::paper_sinusoid();
    let opts = EpisodeOptions { baseline_beta_rate: 100.0, baseline_beta_max: 1000.0, ..EpisodeOptions::default() };
    match run_episode(&scenario, &Models::default(), &opts, 3) {
        Ok(trace) => println!("disturbed: err[6,12]={:.4}", trace.max_tracking_error_over(6.0, 12.0)),
        Err(e) => println!("disturbed: {e}"),
    }
}
