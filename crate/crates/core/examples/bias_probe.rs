// scratch: compare initial-bias handling modes on the oracle loop
use risegen::bench::*;

fn main() {
    let catalog = scenario_catalog();
    let mut scenario = find_scenario(&catalog, "sim1-oracle").unwrap();
    scenario.param_uncertainty = 0.0;
    scenario.events.clear();
    scenario.duration = 10.0;
    for mode in [BiasMode::None, BiasMode::Paper, BiasMode::ZeroInitial] {
        let opts = EpisodeOptions { bias_mode: mode, ..EpisodeOptions::default() };
        let trace = run_episode(&scenario, &Models::default(), &opts, 1).unwrap();
        let m = compute_metrics(&trace, &MetricWeights::default());
        println!(
            "{mode:?}: err(3..10)={:.5} err(5..10)={:.5} u(0)=({:.1},{:.1}) IAE={:.2} CE={:.2} IAR={:.2}",
            trace.max_tracking_error_over(3.0, 10.0),
            trace.max_tracking_error_over(5.0, 10.0),
            trace.records[0].u[0], trace.records[0].u[1],
            m.iae, m.ce, m.iar
        );
    }
}
