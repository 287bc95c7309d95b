// temporary calibration probe
use lptsched::sim::*;
use lptsched::SimConfig;

fn main() {
    let cfg = SimConfig::default();
    let (world, index) = prepare(&cfg).unwrap();
    for seed in [1u64, 2, 3] {
        let rates = preset_rates(LoadPreset::Medium, cfg.models.len(), seed);
        let trace = generate_trace(&rates, &cfg, &world, 1.0, "medium", seed).unwrap();
        println!("seed {seed}:");
        let variants: Vec<(&str, PolicySpec)> = vec![
            ("full", PolicySpec::new(PolicyKind::PromptTuner)),
            ("no-delay", PolicySpec { kind: PolicyKind::PromptTuner, knobs: Knobs { disable_delay: true, ..Default::default() } }),
            ("no-budget", PolicySpec { kind: PolicyKind::PromptTuner, knobs: Knobs { disable_budget: true, ..Default::default() } }),
            ("no-warm-gang", PolicySpec { kind: PolicyKind::PromptTuner, knobs: Knobs { disable_warm_gang: true, ..Default::default() } }),
            ("infless", PolicySpec::new(PolicyKind::InflessLike)),
            ("elasticflow", PolicySpec::new(PolicyKind::ElasticFlowLike)),
        ];
        for (name, spec) in variants {
            let rep = run_prepared(&trace, &cfg, spec, &world, &index, &mut |_| {}).unwrap();
            println!("  {:<13} viol {:>5.1}%  cost ${:<7.2}", name, rep.slo_violation_pct, rep.cost_dollars);
        }
    }
}
