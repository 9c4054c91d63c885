//! Thermal sequence and ground-truth data model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound of defect depth, millimetres.
pub const DEFAULT_MAX_DEPTH_MM: f64 = 2.5;

/// A time-ordered stack of thermograms, stored time-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalSequence {
    id: String,
    n_t: usize,
    n_y: usize,
    n_x: usize,
    frame_rate_hz: f64,
    pulse_frame: usize,
    frames: Vec<f32>,
    /// Acquisition time of each frame in seconds. `None` means uniform
    /// sampling at `frame_rate_hz` starting from frame 0.
    frame_times: Option<Vec<f64>>,
}

impl ThermalSequence {
    pub fn new(
        id: impl Into<String>,
        (n_t, n_y, n_x): (usize, usize, usize),
        frame_rate_hz: f64,
        pulse_frame: usize,
        frames: Vec<f32>,
    ) -> Result<Self> {
        let seq = ThermalSequence {
            id: id.into(),
            n_t,
            n_y,
            n_x,
            frame_rate_hz,
            pulse_frame,
            frames,
            frame_times: None,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds a sequence whose frames were acquired at explicit times, e.g.
    /// a temporally resampled sequence.
    pub fn with_frame_times(mut self, times: Vec<f64>) -> Result<Self> {
        self.frame_times = Some(times);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 {
            return Err(Error::Invariant(format!("n_t = {} (need >= 2)", self.n_t)));
        }
        if self.n_y == 0 || self.n_x == 0 {
            return Err(Error::Invariant(format!(
                "empty frame {}x{}",
                self.n_y, self.n_x
            )));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::Invariant(format!(
                "frame_rate_hz = {}",
                self.frame_rate_hz
            )));
        }
        if self.pulse_frame >= self.n_t {
            return Err(Error::Invariant(format!(
                "pulse_frame {} outside [0, {})",
                self.pulse_frame, self.n_t
            )));
        }
        let expected = self.n_t * self.n_y * self.n_x;
        if self.frames.len() != expected {
            return Err(Error::Shape(format!(
                "{} samples for {}x{}x{}",
                self.frames.len(),
                self.n_t,
                self.n_y,
                self.n_x
            )));
        }
        if let Some(i) = self.frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let Some(times) = &self.frame_times {
            if times.len() != self.n_t {
                return Err(Error::Shape(format!(
                    "{} frame times for {} frames",
                    times.len(),
                    self.n_t
                )));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite())
            {
                return Err(Error::Invariant(
                    "frame times must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn pixels(&self) -> usize {
        self.n_y * self.n_x
    }
    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }
    pub fn pulse_frame(&self) -> usize {
        self.pulse_frame
    }
    pub fn frames(&self) -> &[f32] {
        &self.frames
    }
    pub fn frames_mut(&mut self) -> &mut [f32] {
        &mut self.frames
    }
    pub fn into_frames(self) -> Vec<f32> {
        self.frames
    }
    pub fn explicit_frame_times(&self) -> Option<&[f64]> {
        self.frame_times.as_deref()
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let p = self.pixels();
        &self.frames[k * p..(k + 1) * p]
    }

    /// Acquisition time of frame `k`, seconds.
    pub fn time_of(&self, k: usize) -> f64 {
        match &self.frame_times {
            Some(t) => t[k],
            None => k as f64 / self.frame_rate_hz,
        }
    }

    /// Temperature trace of pixel `p` (row-major index) over all frames.
    pub fn trace(&self, p: usize) -> Vec<f32> {
        let stride = self.pixels();
        (0..self.n_t).map(|k| self.frames[k * stride + p]).collect()
    }
}

/// Ground-truth annotations for one specimen.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub n_y: usize,
    pub n_x: usize,
    /// 0 = sound, 1..C-1 = depth classes.
    pub class_mask: Vec<u8>,
    /// Millimetres; zero exactly on sound pixels.
    pub depth_map: Vec<f32>,
    /// `class_depths[c]` is the depth in mm of class `c`; entry 0 is 0.
    pub class_depths: Vec<f64>,
}

impl GroundTruth {
    pub fn num_classes(&self) -> usize {
        self.class_depths.len()
    }

    pub fn validate(&self, max_depth_mm: f64) -> Result<()> {
        let n = self.n_y * self.n_x;
        if self.class_mask.len() != n || self.depth_map.len() != n {
            return Err(Error::Shape(format!(
                "ground truth buffers do not match {}x{}",
                self.n_y, self.n_x
            )));
        }
        let classes = self.num_classes();
        for (i, (&label, &depth)) in self.class_mask.iter().zip(&self.depth_map).enumerate() {
            if label as usize >= classes {
                return Err(Error::LabelOutOfRange {
                    label: label as usize,
                    classes,
                });
            }
            if !(0.0..=max_depth_mm as f32).contains(&depth) {
                return Err(Error::Invariant(format!(
                    "depth {depth} at pixel {i} outside [0, {max_depth_mm}]"
                )));
            }
            if (label == 0) != (depth == 0.0) {
                return Err(Error::Invariant(format!(
                    "pixel {i}: label {label} inconsistent with depth {depth}"
                )));
            }
        }
        Ok(())
    }

    /// Defect indicator (label > 0) as 0/1.
    pub fn binary_mask(&self) -> Vec<u8> {
        self.class_mask.iter().map(|&c| u8::from(c > 0)).collect()
    }

    /// Labels present in the mask, ascending.
    pub fn labels_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &c in &self.class_mask {
            seen[c as usize] = true;
        }
        (0..=255u8).filter(|&c| seen[c as usize]).collect()
    }
}

/// Sidecar JSON for the class → depth mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDepths {
    pub class_depths_mm: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_sequences() {
        let err = ThermalSequence::new("a", (1, 1, 1), 10.0, 0, vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn rejects_pulse_outside_sequence() {
        let err = ThermalSequence::new("a", (2, 1, 1), 10.0, 2, vec![0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn rejects_nan() {
        let err =
            ThermalSequence::new("a", (2, 1, 1), 10.0, 0, vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(1)));
    }

    #[test]
    fn trace_and_times() {
        let s = ThermalSequence::new("a", (3, 1, 2), 4.0, 0, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        assert_eq!(s.trace(1), vec![1., 3., 5.]);
        assert_eq!(s.time_of(2), 0.5);
        let s = s.with_frame_times(vec![0.0, 0.75, 2.0]).unwrap();
        assert_eq!(s.time_of(1), 0.75);
    }

    #[test]
    fn ground_truth_consistency() {
        let gt = GroundTruth {
            n_y: 1,
            n_x: 2,
            class_mask: vec![0, 1],
            depth_map: vec![0.0, 1.0],
            class_depths: vec![0.0, 1.0],
        };
        gt.validate(2.5).unwrap();
        let mut bad = gt.clone();
        bad.depth_map[0] = 0.5;
        assert!(bad.validate(2.5).is_err());
        let mut bad = gt;
        bad.class_mask[1] = 2;
        assert!(matches!(bad.validate(2.5), Err(Error::LabelOutOfRange { .. })));
    }
}
