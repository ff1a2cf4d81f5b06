use criterion::{black_box, criterion_group, criterion_main, Criterion};
use qgate_core::baselines::{fidelity_gradient, random_pulses, GrapeConfig};
use qgate_core::env::{EnvConfig, GateEnv, TaskSpec};
use qgate_core::nnet::{ActorCritic, HeadGrads, HeadOutputs, PolicyParams, PolicySpec, SampleLoss, Workspace};
use qgate_core::qcore::{gates, propagator, DisturbanceChannels, DisturbanceTrace, SystemModel};
use qgate_core::seed::rng_from;

fn bench_propagator(c: &mut Criterion) {
    for n in [1usize, 2] {
        let model = SystemModel::spin_chain(n, DisturbanceChannels::Common).unwrap();
        let controls = vec![0.7; model.n_controls()];
        let h = model.hamiltonian(&controls, &[0.1]).unwrap();
        c.bench_function(&format!("propagator_{n}q"), |b| b.iter(|| propagator(black_box(&h), 0.04).unwrap()));
    }
}

fn bench_gradient(c: &mut Criterion) {
    let cases = [(1usize, gates::hadamard(), GrapeConfig::single_qubit()), (2, gates::cnot(), GrapeConfig::two_qubit())];
    for (n, target, cfg) in cases {
        let model = SystemModel::spin_chain(n, DisturbanceChannels::Common).unwrap();
        let pulses = random_pulses(&model, &cfg, &mut rng_from(0, &[]));
        let trace = DisturbanceTrace::zeros(cfg.n_steps, 1);
        c.bench_function(&format!("fidelity_gradient_{n}q"), |b| {
            b.iter(|| fidelity_gradient(&model, &target, black_box(&pulses), &trace).unwrap())
        });
    }
}

/// Squared value plus mean norm over a fixed batch, enough to touch every head.
struct BatchLoss(Vec<Vec<f64>>);

impl SampleLoss for BatchLoss {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn observation(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    fn term(&self, _: usize, out: &HeadOutputs, grads: &mut HeadGrads) -> f64 {
        grads.d_value += 2.0 * out.value;
        let mut loss = out.value * out.value;
        for (g, m) in grads.d_mean.iter_mut().zip(&out.mean) {
            *g += 2.0 * m;
            loss += m * m;
        }
        loss
    }
}

fn bench_network(c: &mut Criterion) {
    let params = PolicyParams::init(PolicySpec::new(8, 2, &[64, 64]), -0.5, &mut rng_from(0, &[]));
    let obs = [0.1, -0.2, 0.3, 0.0, 0.5, 0.2, -0.1, 0.4];
    let net = ActorCritic::new(&params);
    let mut ws = Workspace::new(&params.spec);
    c.bench_function("policy_heads_64x64", |b| b.iter(|| net.heads(black_box(&obs), &mut ws).unwrap()));
    c.bench_function("policy_log_prob_64x64", |b| b.iter(|| net.log_prob(black_box(&obs), &[0.3, -1.0]).unwrap()));
    let batch = BatchLoss((0..64).map(|i| obs.iter().map(|x| x * (i as f64 / 64.0)).collect()).collect());
    c.bench_function("policy_gradient_batch64", |b| b.iter(|| net.loss_and_gradient(black_box(&batch), &mut ws).unwrap()));
}

fn bench_env(c: &mut Criterion) {
    let cfg = EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::Common).unwrap();
    let mut env = GateEnv::new(cfg).unwrap();
    let mut rng = rng_from(0, &[]);
    c.bench_function("env_episode_hadamard", |b| {
        b.iter(|| {
            env.reset(TaskSpec::Common { eta: 0.3 }, &mut rng).unwrap();
            while !env.step(&[1.0, -0.5], &mut rng).unwrap().done() {}
        })
    });
}

criterion_group!(benches, bench_propagator, bench_gradient, bench_network, bench_env);
criterion_main!(benches);
