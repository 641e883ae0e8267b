use criterion::{black_box, criterion_group, criterion_main, Criterion};

use hlf_core::bench::{synth_hlf, TunableFilter, TwoPlaneScene};
use hlf_core::descriptor::{normalize, DescriptorEngine};
use hlf_core::metric::bwncc_shifted;
use hlf_core::model::{HyperspectralLightField, SpectralBand};
use hlf_core::mrf::{alpha_expansion, grid_edges, ExpansionParams, MrfProblem};
use hlf_core::pairwise::PairwiseMatcher;
use hlf_core::stereo::StereoEngine;
use hlf_core::CameraSpectralResponse;

fn dataset(size: usize) -> HyperspectralLightField {
    let scene = TwoPlaneScene {
        width: size,
        height: size,
        ..TwoPlaneScene::default()
    };
    let lf = scene.render().unwrap();
    let bands = SpectralBand::standard_series();
    let filter = TunableFilter::from_camera(&CameraSpectralResponse::reference(), &bands);
    synth_hlf(&lf, &bands, &filter, scene.disparity_range(), 64)
        .unwrap()
        .0
}

fn descriptor(c: &mut Criterion) {
    let hlf = dataset(64);
    let engine = DescriptorEngine::new(Default::default()).unwrap();
    let img = normalize(&hlf.views()[0]).unwrap();
    c.bench_function("describe_field_64", |b| {
        b.iter(|| engine.describe_field(black_box(&img)).unwrap())
    });
    let a = engine.describe_field(&img).unwrap();
    let other = engine
        .describe_field(&normalize(&hlf.views()[1]).unwrap())
        .unwrap();
    c.bench_function("bwncc_shifted_64_w9", |b| {
        b.iter(|| bwncc_shifted(black_box(&a), black_box(&other), (2, 0), 9).unwrap())
    });
}

fn expansion(c: &mut Criterion) {
    let (w, h, labels) = (48, 48, 16);
    let unary: Vec<f64> = (0..w * h * labels)
        .map(|i| ((i * 2654435761usize) % 1000) as f64 / 1000.0)
        .collect();
    let mut problem = MrfProblem::new(w * h, labels, unary, 2.0).unwrap();
    for (a, b, wt) in grid_edges(w, h, |_, _| 0.3) {
        problem.add_edge(a, b, wt).unwrap();
    }
    let init = problem.unary_argmin();
    c.bench_function("alpha_expansion_48x48x16", |b| {
        b.iter(|| alpha_expansion(&problem, black_box(&init), &ExpansionParams::default()).unwrap())
    });
}

fn pipelines(c: &mut Criterion) {
    let hlf = dataset(32);
    let matcher =
        PairwiseMatcher::new(Default::default(), Default::default(), Default::default()).unwrap();
    let views = hlf.views();
    let mut group = c.benchmark_group("pipelines");
    group.sample_size(10);
    group.bench_function("pairwise_32", |b| {
        b.iter(|| {
            matcher
                .match_pair(&views[13], &views[14], (-4.0, 4.0), None)
                .unwrap()
        })
    });
    let engine =
        StereoEngine::new(Default::default(), Default::default(), Default::default()).unwrap();
    let cam = CameraSpectralResponse::reference();
    group.bench_function("stereo_32", |b| {
        b.iter(|| engine.estimate(&hlf, &cam).unwrap())
    });
    group.finish();
}

criterion_group!(benches, descriptor, expansion, pipelines);
criterion_main!(benches);
