use eon_core::costmodel::{frame_cost, sample_cost, CostParams};
use eon_core::data::GrayImage;
use eon_core::encoder::{encode, encode_frame, FilterBank};
use eon_core::network::{Layer, ModelConfig};
use eon_core::scan::FrameScanner;
use eon_core::Rng;
use proptest::prelude::*;

fn noise(h: usize, w: usize, rng: &mut Rng) -> GrayImage {
    GrayImage::new(h, w, (0..h * w).map(|_| rng.below(256) as u8).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_cost_counts_every_window(h in 32usize..200, w in 32usize..200, stride in 1usize..40, n in 1usize..900, p in 1usize..500) {
        let model = ModelConfig::faces(n);
        let params = CostParams { parallelism: p, ..CostParams::default() };
        let r = frame_cost(h, w, 32, stride, &model, &params).unwrap();
        let mut windows = 0u64;
        let mut rows = 0u64;
        let mut y = 0;
        while y + 32 <= h {
            rows += 1;
            let mut x = 0;
            while x + 32 <= w {
                windows += 1;
                x += stride;
            }
            y += stride;
        }
        let per = ((n + p - 1) / p) as u64;
        prop_assert_eq!(r.units, windows);
        prop_assert_eq!(r.total_cycles, rows * 32 + windows * per);
        prop_assert!((r.seconds - r.total_cycles as f64 * 1e-8).abs() < 1e-12);
    }

    #[test]
    fn sample_latency_formula(n in 1usize..10000, p in 1usize..10000) {
        let model = ModelConfig::mnist(n);
        let r = sample_cost(&model, 1, 0, &CostParams { parallelism: p, ..CostParams::default() });
        prop_assert_eq!(r.total_cycles, 14 + ((n + p - 1) / p) as u64 + 1);
    }

    #[test]
    fn frame_encoding_crops_match_patch_encoding(seed in any::<u64>(), theta in 0i32..300) {
        let mut rng = Rng::new(seed);
        let frame = noise(40, 47, &mut rng);
        let bank = FilterBank::oriented(4, 5, theta).unwrap();
        let map = encode_frame(&frame, &bank).unwrap();
        for _ in 0..10 {
            let (x, y) = (rng.below(47 - 13), rng.below(40 - 13));
            let patch = frame.crop(x, y, 14, 14).unwrap();
            prop_assert_eq!(map.crop(x, y, 10).unwrap(), encode(&patch, &bank).unwrap());
        }
    }
}

#[test]
fn scanner_detections_match_window_inference() {
    let mut rng = Rng::new(3);
    let frame = noise(48, 60, &mut rng);
    let bank = FilterBank::oriented(4, 5, 0).unwrap();
    let config = ModelConfig {
        side: 10,
        kernel_side: 5,
        filters: 4,
        neurons: 30,
        active: 12,
        t_learn0: 2,
        clusters: 1,
    };
    let map = encode_frame(&frame, &bank).unwrap();
    let scanner = FrameScanner::new(&map, 10, 2).unwrap();
    let mut layer = Layer::random(config, &mut rng).unwrap();
    let cfg = eon_core::learning::LearnConfig::default();
    for i in (0..scanner.grid().count()).step_by(17) {
        eon_core::learning::learn_step(&mut layer, &scanner.window(i), Some(0), &cfg, &mut rng).unwrap();
    }
    let det = scanner.detections(&layer).unwrap();
    let grid = scanner.grid();
    let oracle: Vec<(usize, usize)> = (0..grid.count())
        .filter(|&i| !layer.infer(&scanner.window(i), 1).unwrap().fired.is_empty())
        .map(|i| grid.origin(i))
        .collect();
    assert!(!oracle.is_empty());
    assert_eq!(det, oracle);
}
