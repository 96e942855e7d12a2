//! Kernel timings. Run once with the default features and once with
//! `--no-default-features`; the group name records which build ran.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pcurl::constitutive::ConstitutiveParams;
use pcurl::data::{FieldPreset, StepData};
use pcurl::evolution::{solve_step, StepperConfig};
use pcurl::mesh::{self, build_grid, FaceField, LerayProjector, SurfaceField};

const BUILD: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("kernels/{BUILD}"));
    group.sample_size(20);
    for n in [16usize, 32] {
        let g = build_grid([1.0; 3], [n; 3]).unwrap();
        let h = FieldPreset::Random { amplitude: 1.0, seed: 1 }.sample(&g);
        let proj = LerayProjector::new(&g);
        group.bench_with_input(BenchmarkId::new("curl", n), &h, |b, h| b.iter(|| mesh::curl(black_box(h)).unwrap()));
        let w = mesh::curl(&h).unwrap();
        group.bench_with_input(BenchmarkId::new("curl_adjoint", n), &w, |b, w| {
            b.iter(|| mesh::curl_adjoint(black_box(w)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("leray", n), &h, |b, h| b.iter(|| proj.project(black_box(h)).unwrap()));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("step/{BUILD}"));
    group.sample_size(10);
    let g = build_grid([1.0; 3], [16; 3]).unwrap();
    let proj = LerayProjector::new(&g);
    let h_prev = FieldPreset::Vortex { amplitude: 1.0, axis: 2 }.build(&g, &proj).unwrap();
    let f = FieldPreset::Shear { amplitude: 1.0 }.sample(&g);
    let s = SurfaceField::new(&g);
    let data = StepData { f: &f, g: &s, psi: None };
    for p in [1.5, 3.0] {
        let params = ConstitutiveParams::power_law(&g, p, 1.0);
        let cfg = StepperConfig::sweep();
        group.bench_function(BenchmarkId::new("implicit_step_16", p), |b| {
            b.iter(|| {
                let (h, _): (FaceField, _) = solve_step(&proj, black_box(&h_prev), 0.05, data, &params, &cfg).unwrap();
                h
            })
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, step);
criterion_main!(benches);
