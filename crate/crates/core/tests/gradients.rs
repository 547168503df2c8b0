mod common;

use a2s::ctc::required_frames;
use common::{ctc_fd_max_error, miniature_config, network_fd_max_error, random_target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ctc_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let classes = rng.gen_range(2..=4);
        let frames = rng.gen_range(1..=6);
        let len = rng.gen_range(0..=3);
        let target = random_target(&mut rng, len, classes);
        if required_frames(&target) > frames {
            continue;
        }
        let err = ctc_fd_max_error(&mut rng, frames, classes, &target, 1e-5);
        assert!(err < 1e-4, "relative error {err} for {target:?} over {frames} frames");
    }
}

#[test]
fn network_gradient_matches_finite_differences() {
    for (seed, frames, target) in [(1u64, 3usize, vec![1usize, 2, 3]), (2, 6, vec![4, 4, 5, 1]), (3, 1, vec![2])] {
        let config = miniature_config(6, 0.2);
        let err = network_fd_max_error(seed, frames, &config, &target, 1e-4);
        assert!(err < 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn network_gradient_without_frame_doubling() {
    let mut config = miniature_config(4, 0.0);
    config.frame_doubling = false;
    config.recurrent_layers = 1;
    let err = network_fd_max_error(9, 5, &config, &[1, 3, 2], 1e-4);
    assert!(err < 1e-3, "relative error {err}");
}
