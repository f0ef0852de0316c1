use crate::rng::{seeded, shuffle};

use super::config::UnrollConfig;

/// Window start indices (0-based) for a series of `n_time` snapshots:
/// `0, stride, 2·stride, …` while `start + steps < n_time`.
pub fn window_starts(n_time: usize, cfg: &UnrollConfig) -> Vec<usize> {
    let stride = cfg.window_stride.max(1);
    if cfg.steps >= n_time {
        return Vec::new();
    }
    (0..n_time - cfg.steps).step_by(stride).collect()
}

/// Shuffles the window starts with `seed` and chunks them into batches of
/// at most `batch_size` windows. Empty when no window fits.
pub fn make_unroll_batches(n_time: usize, cfg: &UnrollConfig, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut starts = window_starts(n_time, cfg);
    let mut rng = seeded(seed);
    shuffle(&mut rng, &mut starts);
    starts.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
