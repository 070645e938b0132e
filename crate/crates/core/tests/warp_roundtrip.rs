//! Warping a point into another frame and back returns it unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recon_core::geometry::{make_relative_pose, warp_point};
use recon_core::{Intrinsics, PixelCoord, RelativePose};

#[test]
fn ten_thousand_round_trips() {
    let intr = Intrinsics::from_focal(60.0, 64, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 10_000 {
        let mut pose = || {
            make_relative_pose(&RelativePose {
                r: [0.0; 3].map(|_| rng.random_range(-0.2..0.2)),
                t: [0.0; 3].map(|_| rng.random_range(-0.3..0.3)),
            })
        };
        let (pi, pj) = (pose(), pose());
        let p = PixelCoord::new(rng.random_range(0.0..63.0), rng.random_range(0.0..47.0));
        let d = rng.random_range(0.5..10.0);
        let fwd = warp_point(p, d, &intr, &pi, &pj);
        if !fwd.valid {
            continue;
        }
        let back = warp_point(fwd.coord, fwd.depth, &intr, &pj, &pi);
        assert!(back.valid);
        let coord_err = ((back.coord.u - p.u).powi(2) + (back.coord.v - p.v).powi(2)).sqrt()
            / (p.u * p.u + p.v * p.v).sqrt().max(1.0);
        let depth_err = (back.depth - d).abs() / d;
        worst = worst.max(coord_err).max(depth_err);
        checked += 1;
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}
