//! Synthetic pulse-thermography sequences from the one-dimensional
//! adiabatic-plate solution.
//!
//! After an instantaneous pulse of areal energy `Q` the front face of an
//! insulated plate of thickness `L` warms by
//!
//! ```text
//! ΔT(t) = (Q / L) · [1 + 2 Σ_{j=1..50} exp(-j² π² α t / L²)]
//! ```
//!
//! Inside a back-drilled defect the remaining wall thickness (the defect
//! depth) replaces `L`, so shallow defects stay warmer for longer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{GroundTruth, ThermalSequence};

/// Number of reflection terms kept in the series.
pub const SERIES_TERMS: usize = 50;
/// Largest allowed relative size of the first dropped term.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    /// `[row, col]` of the footprint centre, pixels.
    pub center: [f64; 2],
    pub radius_px: f64,
    pub depth_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecimenSpec {
    pub plate_thickness_mm: f64,
    pub thermal_diffusivity_mm2_s: f64,
    #[serde(default)]
    pub defects: Vec<Defect>,
    pub pulse_energy_au: f64,
    pub noise_std_au: f64,
    /// Global class table (depths in mm, without the sound class). Empty
    /// means the distinct defect depths in ascending order.
    #[serde(default)]
    pub depth_classes_mm: Vec<f64>,
}

impl SpecimenSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.plate_thickness_mm) {
            return Err(Error::Invariant("plate thickness must be positive".into()));
        }
        if !positive(self.thermal_diffusivity_mm2_s) {
            return Err(Error::Invariant("diffusivity must be positive".into()));
        }
        if !(self.pulse_energy_au.is_finite() && self.pulse_energy_au >= 0.0) {
            return Err(Error::Invariant("pulse energy must be non-negative".into()));
        }
        if !(self.noise_std_au.is_finite() && self.noise_std_au >= 0.0) {
            return Err(Error::Invariant("noise std must be non-negative".into()));
        }
        for d in &self.defects {
            if !(d.depth_mm > 0.0 && d.depth_mm < self.plate_thickness_mm) {
                return Err(Error::Invariant(format!(
                    "defect depth {} outside (0, {})",
                    d.depth_mm, self.plate_thickness_mm
                )));
            }
            if !positive(d.radius_px) {
                return Err(Error::Invariant("defect radius must be positive".into()));
            }
            if !d.center.iter().all(|c| c.is_finite()) {
                return Err(Error::Invariant("defect centre must be finite".into()));
            }
        }
        self.class_table().map(|_| ())
    }

    /// Class depths including the sound class 0.
    pub fn class_table(&self) -> Result<Vec<f64>> {
        let mut classes = if self.depth_classes_mm.is_empty() {
            let mut d: Vec<f64> = self.defects.iter().map(|d| d.depth_mm).collect();
            d.sort_by(|a, b| a.partial_cmp(b).expect("finite depths"));
            d.dedup();
            d
        } else {
            self.depth_classes_mm.clone()
        };
        if classes.len() > 254 {
            return Err(Error::Invariant("more than 254 depth classes".into()));
        }
        for d in &self.defects {
            if !classes.iter().any(|c| (c - d.depth_mm).abs() <= 1e-9) {
                return Err(Error::Invariant(format!(
                    "defect depth {} missing from the class table",
                    d.depth_mm
                )));
            }
        }
        classes.insert(0, 0.0);
        Ok(classes)
    }
}

/// Camera geometry and timing of a simulated acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub n_t: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub frame_rate_hz: f64,
    /// Frames `0..=pulse_frame` are recorded at ambient level.
    pub pulse_frame: usize,
}

/// Front-face temperature rise of an adiabatic plate at time `t > 0`.
pub fn plate_rise(energy: f64, diffusivity: f64, thickness: f64, t: f64) -> f64 {
    let tau = std::f64::consts::PI * std::f64::consts::PI * diffusivity * t
        / (thickness * thickness);
    let series: f64 = (1..=SERIES_TERMS)
        .map(|j| (-((j * j) as f64) * tau).exp())
        .sum();
    energy / thickness * (1.0 + 2.0 * series)
}

/// Relative size of the first dropped series term.
pub fn truncation_tail(diffusivity: f64, thickness: f64, t: f64) -> f64 {
    let j = (SERIES_TERMS + 1) as f64;
    (-(j * j) * std::f64::consts::PI.powi(2) * diffusivity * t / (thickness * thickness)).exp()
}

/// Footprint test: boundary pixels (distance exactly `radius`) are inside.
fn inside(defect: &Defect, row: usize, col: usize) -> bool {
    let dy = row as f64 - defect.center[0];
    let dx = col as f64 - defect.center[1];
    dy * dy + dx * dx <= defect.radius_px * defect.radius_px
}

/// Simulates one specimen. Noise-free output does not depend on `seed`.
pub fn simulate_pulse_sequence(
    spec: &SpecimenSpec,
    acq: &Acquisition,
    id: &str,
    seed: u64,
) -> Result<(ThermalSequence, GroundTruth)> {
    spec.validate()?;
    if acq.n_t < 2 || acq.n_y == 0 || acq.n_x == 0 {
        return Err(Error::Invariant("acquisition needs n_t >= 2 and a non-empty frame".into()));
    }
    if acq.pulse_frame + 1 >= acq.n_t {
        return Err(Error::Invariant("no post-pulse frames".into()));
    }
    if !(acq.frame_rate_hz.is_finite() && acq.frame_rate_hz > 0.0) {
        return Err(Error::Invariant("frame rate must be positive".into()));
    }
    let classes = spec.class_table()?;
    let p = acq.n_y * acq.n_x;

    // thickness index per pixel: 0 = sound plate, i+1 = defect i
    let mut owner = vec![0usize; p];
    let mut class_mask = vec![0u8; p];
    let mut depth_map = vec![0.0f32; p];
    for (i, d) in spec.defects.iter().enumerate() {
        let class = classes
            .iter()
            .position(|c| (c - d.depth_mm).abs() <= 1e-9)
            .expect("validated class table") as u8;
        for row in 0..acq.n_y {
            for col in 0..acq.n_x {
                if inside(d, row, col) {
                    let px = row * acq.n_x + col;
                    owner[px] = i + 1;
                    class_mask[px] = class;
                    depth_map[px] = d.depth_mm as f32;
                }
            }
        }
    }

    let thicknesses: Vec<f64> = std::iter::once(spec.plate_thickness_mm)
        .chain(spec.defects.iter().map(|d| d.depth_mm))
        .collect();
    let first_t = 1.0 / acq.frame_rate_hz;
    for &l in &thicknesses {
        if truncation_tail(spec.thermal_diffusivity_mm2_s, l, first_t) > TRUNCATION_TOLERANCE {
            return Err(Error::Invariant(format!(
                "series truncation error too large for thickness {l} mm at t = {first_t} s"
            )));
        }
    }
    let curves: Vec<Vec<f64>> = thicknesses
        .iter()
        .map(|&l| {
            (0..acq.n_t)
                .map(|k| {
                    if k <= acq.pulse_frame {
                        0.0
                    } else {
                        let t = (k - acq.pulse_frame) as f64 / acq.frame_rate_hz;
                        plate_rise(spec.pulse_energy_au, spec.thermal_diffusivity_mm2_s, l, t)
                    }
                })
                .collect()
        })
        .collect();

    let mut frames = vec![0.0f32; acq.n_t * p];
    for k in 0..acq.n_t {
        for (px, &o) in owner.iter().enumerate() {
            frames[k * p + px] = curves[o][k] as f32;
        }
    }
    if spec.noise_std_au > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spec.noise_std_au).expect("finite std");
        for v in &mut frames {
            *v = (f64::from(*v) + normal.sample(&mut rng)) as f32;
        }
    }
    let seq = ThermalSequence::new(
        id,
        (acq.n_t, acq.n_y, acq.n_x),
        acq.frame_rate_hz,
        acq.pulse_frame,
        frames,
    )?;
    let gt = GroundTruth {
        n_y: acq.n_y,
        n_x: acq.n_x,
        class_mask,
        depth_map,
        class_depths: classes,
    };
    Ok((seq, gt))
}

/// Random defect layout parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomDefects {
    pub count_min: usize,
    pub count_max: usize,
    pub radius_min_px: f64,
    pub radius_max_px: f64,
    /// Depth classes; each defect draws one uniformly.
    pub depths_mm: Vec<f64>,
    /// Minimum gap between footprints and to the image border, pixels.
    #[serde(default = "default_margin")]
    pub margin_px: f64,
}

fn default_margin() -> f64 {
    2.0
}

/// A reproducible recipe for a batch of simulated specimens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub specimen: SpecimenSpec,
    pub acquisition: Acquisition,
    /// When present, each specimen gets its own random layout and the
    /// `specimen.defects` list is ignored.
    #[serde(default)]
    pub random_defects: Option<RandomDefects>,
}

impl SimulationPlan {
    /// A 2.5 mm PVC-like plate with four depth classes, sampled at 2 Hz.
    pub fn desk_default(n_y: usize, n_x: usize) -> Self {
        let depths = vec![0.5, 1.0, 1.5, 2.0];
        SimulationPlan {
            specimen: SpecimenSpec {
                plate_thickness_mm: 2.5,
                thermal_diffusivity_mm2_s: 0.1,
                defects: Vec::new(),
                pulse_energy_au: 10.0,
                noise_std_au: 0.02,
                depth_classes_mm: depths.clone(),
            },
            acquisition: Acquisition {
                n_t: 200,
                n_y,
                n_x,
                frame_rate_hz: 2.0,
                pulse_frame: 1,
            },
            random_defects: Some(RandomDefects {
                count_min: 1,
                count_max: 4,
                radius_min_px: n_y.min(n_x) as f64 * 0.07,
                radius_max_px: n_y.min(n_x) as f64 * 0.15,
                depths_mm: depths,
                margin_px: 2.0,
            }),
        }
    }
}

/// Draws a non-overlapping random layout (rejection sampling).
pub fn sample_specimen<R: Rng>(plan: &SimulationPlan, rng: &mut R) -> Result<SpecimenSpec> {
    let mut spec = plan.specimen.clone();
    let Some(rd) = &plan.random_defects else {
        return Ok(spec);
    };
    if rd.count_min > rd.count_max
        || rd.depths_mm.is_empty()
        || !(rd.radius_min_px > 0.0 && rd.radius_min_px <= rd.radius_max_px)
    {
        return Err(Error::InvalidArgument("inconsistent random defect ranges".into()));
    }
    let (h, w) = (plan.acquisition.n_y as f64, plan.acquisition.n_x as f64);
    let count = rng.random_range(rd.count_min..=rd.count_max);
    let mut defects: Vec<Defect> = Vec::with_capacity(count);
    let mut attempts = 0;
    while defects.len() < count && attempts < 1000 {
        attempts += 1;
        let r = rng.random_range(rd.radius_min_px..=rd.radius_max_px);
        let lo = r + rd.margin_px;
        if 2.0 * lo >= h.min(w) {
            continue;
        }
        let cy = rng.random_range(lo..h - 1.0 - lo);
        let cx = rng.random_range(lo..w - 1.0 - lo);
        let depth = rd.depths_mm[rng.random_range(0..rd.depths_mm.len())];
        let clear = defects.iter().all(|d| {
            let dist = ((d.center[0] - cy).powi(2) + (d.center[1] - cx).powi(2)).sqrt();
            dist > d.radius_px + r + rd.margin_px
        });
        if clear {
            defects.push(Defect {
                center: [cy, cx],
                radius_px: r,
                depth_mm: depth,
            });
        }
    }
    spec.defects = defects;
    if spec.depth_classes_mm.is_empty() {
        spec.depth_classes_mm = rd.depths_mm.clone();
    }
    Ok(spec)
}

/// Simulates `count` specimens named `seq_0000`, `seq_0001`, ...; specimen
/// `i` depends only on `(seed, i)`.
pub fn simulate_batch(
    plan: &SimulationPlan,
    count: usize,
    seed: u64,
) -> Result<Vec<(ThermalSequence, GroundTruth)>> {
    (0..count)
        .map(|i| {
            let stream = crate::rng::derive_seed(seed, &["simulate", &i.to_string()]);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let spec = sample_specimen(plan, &mut rng)?;
            simulate_pulse_sequence(&spec, &plan.acquisition, &format!("seq_{i:04}"), rng.random())
        })
        .collect()
}
