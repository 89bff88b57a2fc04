//! Seeded inputs shared by the benchmarks.

use boxsim_core::{build_grid, AnchorSpec, AnnotationSet, CBox, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` boxes with centers in a 512 x 512 frame and sides in [2, 64).
pub fn random_boxes(count: usize, seed: u64) -> Vec<CBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            CBox::new(
                rng.gen_range(0.0..512.0),
                rng.gen_range(0.0..512.0),
                rng.gen_range(2.0..64.0),
                rng.gen_range(2.0..64.0),
            )
            .expect("valid box")
        })
        .collect()
}

/// Default anchors over a 512 x 512 image.
pub fn default_anchors() -> Vec<CBox> {
    build_grid(&AnchorSpec::default(), (512.0, 512.0))
        .expect("default grid")
        .anchors
}

pub fn tiny_object_set(images: usize, seed: u64) -> AnnotationSet {
    boxsim_core::synth_dataset(&SynthParams {
        images,
        image_size: (512.0, 512.0),
        scale_range: (2.0, 8.0),
        objects_per_image: 10,
        seed,
    })
    .expect("feasible synthetic set")
}
