use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recon_core::fusion::{extract_surface_cloud, tsdf_integrate};
use recon_core::geometry::warp_point;
use recon_core::metrics::metric_cloud;
use recon_core::optimizer::{FreezeFlags, ParamVector, Problem};
use recon_core::{AlignmentPlan, GlobalAffine, LossWeights, LwlrConfig, PixelCoord, TsdfVolume};
use recon_bench::{render, scene};

const W: usize = 128;
const H: usize = 96;
const ANCHORS: usize = 64;

fn alignment(c: &mut Criterion) {
    let s = scene(W, H, 2);
    let (_, _, depths) = render(&s, 1).unwrap();
    let plan = AlignmentPlan::new(W, H, ANCHORS, &LwlrConfig::for_grid(W, H, ANCHORS)).unwrap();
    let omega = vec![0.1; ANCHORS];
    let g = GlobalAffine::new(1.3, 0.2).unwrap();
    c.bench_function("lwlr_forward_128x96", |b| {
        b.iter(|| plan.forward(black_box(&depths[0]), g, &omega).unwrap())
    });
}

fn gradients(c: &mut Criterion) {
    let s = scene(W, H, 4);
    let (imgs, _, depths) = render(&s, 2).unwrap();
    let problem = Problem::new(imgs, depths, ANCHORS, &LwlrConfig::for_grid(W, H, ANCHORS)).unwrap();
    let mut params = ParamVector::initial(problem.layout());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for v in params.values_mut() {
        *v += rng.random_range(-0.01..0.01);
    }
    let pairs = [(0, 1), (1, 2), (2, 3), (3, 1)];
    let w = LossWeights::new(2.0, 1.0, 0.1).unwrap();
    let freeze = FreezeFlags::default();
    c.bench_function("compute_gradients_4_pairs_128x96", |b| {
        b.iter(|| problem.compute_gradients(black_box(&params), &pairs, &w, &freeze).unwrap())
    });
}

fn warping(c: &mut Criterion) {
    let s = scene(W, H, 2);
    let (_, gts, _) = render(&s, 3).unwrap();
    let intr = s.intrinsics().unwrap();
    let poses = s.poses();
    c.bench_function("warp_frame_128x96", |b| {
        b.iter(|| {
            let mut valid = 0usize;
            for y in 0..H {
                for x in 0..W {
                    let p = PixelCoord::new(x as f64, y as f64);
                    valid += usize::from(warp_point(p, gts[0].get(x, y), &intr, &poses[0], &poses[1]).valid);
                }
            }
            black_box(valid)
        })
    });
}

fn fusion(c: &mut Criterion) {
    let s = scene(W, H, 4);
    let (_, gts, _) = render(&s, 4).unwrap();
    let intr = s.intrinsics().unwrap();
    let poses = s.poses();
    let fresh = || TsdfVolume::new([-4.0, -4.0, 0.0], [64, 64, 64], 0.125, 0.5).unwrap();
    c.bench_function("tsdf_integrate_64cubed", |b| {
        b.iter(|| {
            let mut vol = fresh();
            tsdf_integrate(&mut vol, black_box(&gts[0]), &intr, &poses[0]);
            vol
        })
    });
    let mut vol = fresh();
    for (d, p) in gts.iter().zip(&poses) {
        tsdf_integrate(&mut vol, d, &intr, p);
    }
    c.bench_function("tsdf_extract_64cubed", |b| b.iter(|| extract_surface_cloud(black_box(&vol))));
}

fn cloud_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cloud = |n: usize| -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    };
    let (a, b_cloud) = (cloud(20_000), cloud(20_000));
    c.bench_function("metric_cloud_20k", |b| {
        b.iter(|| metric_cloud(black_box(&a), black_box(&b_cloud), 0.05).unwrap())
    });
}

criterion_group!(benches, alignment, gradients, warping, fusion, cloud_metrics);
criterion_main!(benches);
