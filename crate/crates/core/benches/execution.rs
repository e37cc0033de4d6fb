use std::path::PathBuf;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use divcode::formation::{FormationConfig, FormationMode};
use divcode::groups::form_all;
use divcode::net::{parse_network, uniform_traffic};
use divcode::report::{run_full, RunConfig};
use divcode::{Execution, Network};

fn fixture(name: &str) -> Network {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    parse_network(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn formation(c: &mut Criterion) {
    let mut group = c.benchmark_group("form_all");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (net_name, dest) in [("desk6.net", "A"), ("cost239.net", "London")] {
        let net = fixture(net_name);
        let d = net.node(dest).unwrap();
        for (label, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(label, net_name), &exec, |b, &exec| {
                b.iter(|| form_all(&net, d, FormationMode::Nonsystematic, &FormationConfig::default(), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn full_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_full");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    let net = fixture("desk6.net");
    let tm = uniform_traffic(&net, 2);
    for (label, exec) in MODES {
        let cfg = RunConfig { exec, ..Default::default() };
        group.bench_function(BenchmarkId::new(label, "desk6.net"), |b| {
            b.iter(|| run_full(&net, &tm, FormationMode::Systematic, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, formation, full_run);
criterion_main!(benches);
