use criterion::{criterion_group, criterion_main, Criterion};
use imix_core::harness::{parse_config, run_sweep};

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for (name, text) in [
        ("awgn_mf_6_cells_x_20", "[experiment]\nscenario = awgn\nn_trials = 20\n[grid]\nes_n0_db = 0:2:10\n"),
        (
            "sps32_sic_4_cells_x_20",
            "[experiment]\nscenario = qpsk_sps32\nn_trials = 20\nmethods = mf, sic\n[grid]\nes_n0_db = 10\nsir_db = -10:2:-4\n",
        ),
    ] {
        let cfg = parse_config(text).unwrap();
        g.bench_function(name, |b| b.iter(|| run_sweep(&cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
