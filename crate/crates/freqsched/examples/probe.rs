use freqsched::agents::{Agent, AgentSpec, ProblemDims, Variant};
use freqsched::env::{new_scenario, EnvConfig};
use freqsched::eval::{bench_latency, EvalPolicy};
use freqsched::link::McsTable;

fn main() {
    let env = EnvConfig::default(); // 4 users, 10 sub-bands
    let scenario = new_scenario(&env, 31).unwrap();
    let dims = ProblemDims::from_env(&env).unwrap();
    let mcs = McsTable::default();

    let mut policies = Vec::new();
    for variant in [Variant::ActionBranching, Variant::Unibranch, Variant::Gnn] {
        let spec = AgentSpec::new(variant);
        let (agent, params) = Agent::build(&spec, &dims, 1).unwrap();
        policies.push(EvalPolicy::learned(variant.name(), agent, params));
    }
    for n_i in [1usize, 2, 3, 5] {
        let spec = AgentSpec { gnn_iterations: n_i, ..AgentSpec::new(Variant::Gnn) };
        let (agent, params) = Agent::build(&spec, &dims, 1).unwrap();
        policies.push(EvalPolicy::learned(format!("gnn_iters_{n_i}"), agent, params));
    }
    let entries = bench_latency(&policies, &scenario, 300, &mcs).unwrap();
    for e in &entries {
        println!("{:<16} {:>10.1} us   rel {:>5.2}  params {:?}", e.name, e.median_latency_s * 1e6, e.relative, e.parameter_count);
    }
}
