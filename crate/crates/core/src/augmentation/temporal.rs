//! Segment-wise random frame sampling and additive sensor noise.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::sequence::ThermalSequence;

/// Splits `0..n_t` into `n_segments` contiguous ranges whose sizes differ by
/// at most one; the leading segments take the remainder.
pub fn segment_bounds(n_t: usize, n_segments: usize) -> Result<Vec<Range<usize>>> {
    if n_segments == 0 || n_segments > n_t {
        return Err(Error::InvalidArgument(format!(
            "{n_segments} segments for {n_t} frames"
        )));
    }
    let base = n_t / n_segments;
    let extra = n_t % n_segments;
    let mut start = 0;
    Ok((0..n_segments)
        .map(|s| {
            let len = base + usize::from(s < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// One uniformly drawn frame index per segment, in segment order.
pub fn sample_segment_indices<R: Rng + ?Sized>(
    n_t: usize,
    n_segments: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    Ok(segment_bounds(n_t, n_segments)?
        .into_iter()
        .map(|r| rng.random_range(r))
        .collect())
}

/// Builds the sub-sequence made of `indices` (strictly increasing).
///
/// Frame times are inherited from the source. The reference (pulse) frame
/// of the result is the last selected frame acquired no later than the
/// source's pulse frame, or frame 0 if none was selected.
pub fn select_frames(seq: &ThermalSequence, indices: &[usize]) -> Result<ThermalSequence> {
    if indices.len() < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) || indices[indices.len() - 1] >= seq.n_t() {
        return Err(Error::InvalidArgument(
            "frame indices must be increasing and in range".into(),
        ));
    }
    let p = seq.pixels();
    let mut frames = Vec::with_capacity(indices.len() * p);
    for &k in indices {
        frames.extend_from_slice(seq.frame(k));
    }
    let pulse = indices
        .iter()
        .filter(|&&k| k <= seq.pulse_frame())
        .count()
        .saturating_sub(1);
    let times: Vec<f64> = indices.iter().map(|&k| seq.time_of(k)).collect();
    let out = ThermalSequence::new(
        seq.id(),
        (indices.len(), seq.n_y(), seq.n_x()),
        seq.frame_rate_hz(),
        pulse,
        frames,
    )?;
    let uniform = seq.explicit_frame_times().is_none()
        && indices.iter().enumerate().all(|(i, &k)| i == k);
    if uniform {
        Ok(out)
    } else {
        out.with_frame_times(times)
    }
}

/// Draws one frame per segment and returns the sub-sequence with the chosen
/// source indices.
pub fn segment_sample<R: Rng + ?Sized>(
    seq: &ThermalSequence,
    n_segments: usize,
    rng: &mut R,
) -> Result<(ThermalSequence, Vec<usize>)> {
    let indices = sample_segment_indices(seq.n_t(), n_segments, rng)?;
    Ok((select_frames(seq, &indices)?, indices))
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance to every
/// sample.
pub fn add_gaussian_noise<R: Rng + ?Sized>(
    seq: &ThermalSequence,
    variance: f64,
    rng: &mut R,
) -> Result<ThermalSequence> {
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {variance}")));
    }
    let mut out = seq.clone();
    if variance == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite std");
    for v in out.frames_mut() {
        *v = (f64::from(*v) + normal.sample(rng)) as f32;
    }
    Ok(out)
}
