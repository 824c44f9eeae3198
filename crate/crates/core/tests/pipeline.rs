//! End-to-end library pipeline: spec text → expansion → phase oracles →
//! weighted-rate LP → code simulation, on the identity + BEC(0.5)
//! broadcast with staggered deadlines.

use timerate::bound::{
    check_allocation, max_weighted_rate, supported_constraints, BuiltinOracles, MaxRateOptions,
    OracleConfig,
};
use timerate::expansion::{expand, ExpandOptions, SubRateVector};
use timerate::model::validate_problem;
use timerate::oracles::static_broadcast_max_rate;
use timerate::sim::{build_two_phase_erasure_scheme, simulate, SimConfig, TwoPhaseSchemeSpec};
use timerate::specfile::parse_network_spec;

const SPEC: &str = r#"
nodes = 3
messages = 1
input_alphabets = [2, 1, 1]
output_alphabets = [1, 2, 3]
side_info = [[1, 0, 0]]
demands = [[0, 1, 1]]

[channel]
form = "product"

[[channel.receiver]]
node = 2
table = [[1.0, 0.0], [0.0, 1.0]]

[[channel.receiver]]
node = 3
table = [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]]

[[deadline]]
message = 1
node = 2
sigma = 0.5

[[deadline]]
message = 1
node = 3
sigma = 1.0
"#;

#[test]
fn staggered_broadcast_pipeline() {
    let (problem, sigma) = parse_network_spec(SPEC).unwrap();
    assert!(validate_problem(&problem, &sigma).is_valid());

    let expanded = expand(&problem, &sigma, &ExpandOptions::default()).unwrap();
    let phases = expanded.phase_problems().unwrap();
    let provider = BuiltinOracles::new(OracleConfig::default());
    let supported = supported_constraints(&expanded, &phases, &provider).unwrap();

    // Inner bound: max sum rate 0.375, strictly below the optimum 0.5.
    let point = max_weighted_rate(
        &expanded,
        &supported.constraints,
        &[1.0],
        &MaxRateOptions::default(),
    )
    .unwrap();
    assert!((point.value - 0.375).abs() < 1e-3, "{}", point.value);

    let w1 = problem.channel.receiver_marginal(1);
    let w2 = problem.channel.receiver_marginal(2);
    let optimum = static_broadcast_max_rate(&w1, &w2, 0.5, 1.0, 201).unwrap();
    assert!((optimum - 0.5).abs() < 1e-3);
    assert!(point.value < optimum - 0.1, "inner bound must stay below the optimum");

    // The allocation-level check accepts the LP point.
    let check = check_allocation(
        &expanded,
        &phases,
        &provider,
        &SubRateVector(point.allocation.clone()),
        1e-6,
    )
    .unwrap();
    assert!(check.achievable);

    // Simulate a rate strictly inside the bound.
    let scheme = build_two_phase_erasure_scheme(&TwoPhaseSchemeSpec {
        common_rate: 0.1,
        private_rate: 0.2,
        sigma: (0.5, 1.0),
        n: 2000,
        eps_weak: 0.5,
        codebook_seed: 7,
    })
    .unwrap();
    let report = simulate(
        &scheme,
        &problem.channel,
        &[1, 2],
        &SimConfig {
            trials: 400,
            seed: 7,
            workers: 2,
            log_access: false,
        },
    )
    .unwrap();
    assert!(report.joint_error_rate < 0.05, "{}", report.joint_error_rate);
}
