//! Paired affine augmentation of modality tensors and ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AugmentedSample, SpatialRanges};
use crate::error::{Error, Result};

/// One draw of the spatial augmentation. Angles in degrees, translations as
/// fractions of the image height/width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub rotation_deg: f64,
    pub translate_y: f64,
    pub translate_x: f64,
    pub shear_deg: f64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl SpatialParams {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn draw<R: Rng + ?Sized>(ranges: &SpatialRanges, rng: &mut R) -> Self {
        let sym = |rng: &mut R, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        SpatialParams {
            rotation_deg: sym(rng, ranges.rotation_deg),
            translate_y: sym(rng, ranges.translate_frac),
            translate_x: sym(rng, ranges.translate_frac),
            shear_deg: sym(rng, ranges.shear_deg),
            flip_h: rng.random_bool(ranges.flip_h_prob),
            flip_v: rng.random_bool(ranges.flip_v_prob),
        }
    }

    pub fn within(&self, ranges: &SpatialRanges) -> bool {
        let tol = 1e-12;
        self.rotation_deg.abs() <= ranges.rotation_deg + tol
            && self.translate_y.abs() <= ranges.translate_frac + tol
            && self.translate_x.abs() <= ranges.translate_frac + tol
            && self.shear_deg.abs() <= ranges.shear_deg + tol
            && (!self.flip_h || ranges.flip_h_prob > 0.0)
            && (!self.flip_v || ranges.flip_v_prob > 0.0)
    }
}

/// Output-to-source coordinate map about the image centre.
///
/// Forward map: `x' = R·S·(F·(x − c) + t) + c`, i.e. flips, then
/// translation, then shear, then rotation.
#[derive(Clone, Copy, Debug)]
struct InverseMap {
    /// Row-major 2x2 acting on `(y, x)` offsets from the centre.
    m: [f64; 4],
    t: [f64; 2],
    flip: [f64; 2],
    c: [f64; 2],
}

fn exact_trig(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

impl InverseMap {
    fn new(p: &SpatialParams, h: usize, w: usize) -> Self {
        let (cos, sin) = exact_trig(p.rotation_deg);
        let shear = if p.shear_deg == 0.0 { 0.0 } else { p.shear_deg.to_radians().tan() };
        // forward rotation on (x, y): [cos -sin; sin cos]; on (y, x):
        // y' = sin·x + cos·y, x' = cos·x − sin·y. The inverse uses −θ.
        let r_inv = [cos, -sin, sin, cos]; // (y, x) → (y, x) rotation by −θ
        // forward shear x' = x + k·y; inverse x = x' − k·y'
        let s_inv = [1.0, 0.0, -shear, 1.0];
        let m = [
            s_inv[0] * r_inv[0] + s_inv[1] * r_inv[2],
            s_inv[0] * r_inv[1] + s_inv[1] * r_inv[3],
            s_inv[2] * r_inv[0] + s_inv[3] * r_inv[2],
            s_inv[2] * r_inv[1] + s_inv[3] * r_inv[3],
        ];
        InverseMap {
            m,
            t: [p.translate_y * h as f64, p.translate_x * w as f64],
            flip: [
                if p.flip_v { -1.0 } else { 1.0 },
                if p.flip_h { -1.0 } else { 1.0 },
            ],
            c: [(h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0],
        }
    }

    fn source(&self, y: usize, x: usize) -> (f64, f64) {
        let dy = y as f64 - self.c[0];
        let dx = x as f64 - self.c[1];
        let uy = self.m[0] * dy + self.m[1] * dx - self.t[0];
        let ux = self.m[2] * dy + self.m[3] * dx - self.t[1];
        (self.flip[0] * uy + self.c[0], self.flip[1] * ux + self.c[1])
    }
}

/// Source pixel of every output pixel when the map is a lattice
/// permutation (with zero fill), `None` otherwise.
fn lattice_table(map: &InverseMap, h: usize, w: usize) -> Option<Vec<Option<usize>>> {
    let mut table = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map.source(y, x);
            if sy.fract() != 0.0 || sx.fract() != 0.0 {
                return None;
            }
            table.push(
                (sy >= 0.0 && sx >= 0.0 && sy < h as f64 && sx < w as f64)
                    .then(|| sy as usize * w + sx as usize),
            );
        }
    }
    Some(table)
}

fn nearest_table(map: &InverseMap, h: usize, w: usize) -> Vec<Option<usize>> {
    let mut table = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map.source(y, x);
            let (ry, rx) = (sy.round(), sx.round());
            table.push(
                (ry >= 0.0 && rx >= 0.0 && ry < h as f64 && rx < w as f64)
                    .then(|| ry as usize * w + rx as usize),
            );
        }
    }
    table
}

fn gather<T: Copy + Default>(src: &[T], table: &[Option<usize>]) -> Vec<T> {
    let plane = table.len();
    src.chunks(plane)
        .flat_map(|ch| table.iter().map(move |s| s.map_or(T::default(), |i| ch[i])))
        .collect()
}

fn bilinear(src: &[f32], map: &InverseMap, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map.source(y, x);
            let y0 = sy.floor();
            let x0 = sx.floor();
            let fy = sy - y0;
            let fx = sx - x0;
            let taps = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x0 + 1.0, (1.0 - fy) * fx),
                (y0 + 1.0, x0, fy * (1.0 - fx)),
                (y0 + 1.0, x0 + 1.0, fy * fx),
            ];
            for (c, ch) in src.chunks(plane).enumerate() {
                let mut acc = 0.0f64;
                for &(ty, tx, wt) in &taps {
                    if wt != 0.0 && ty >= 0.0 && tx >= 0.0 && ty < h as f64 && tx < w as f64 {
                        acc += wt * f64::from(ch[ty as usize * w + tx as usize]);
                    }
                }
                out[c * plane + y * w + x] = acc as f32;
            }
        }
    }
    out
}

/// Applies one affine map to every modality channel (bilinear, zero
/// padding) and to the mask and depth map (nearest neighbour).
///
/// With `strict` set, parameters outside `ranges` are rejected.
pub fn spatial_transform(
    sample: &AugmentedSample,
    params: &SpatialParams,
    ranges: &SpatialRanges,
    strict: bool,
) -> Result<AugmentedSample> {
    if strict && !params.within(ranges) {
        return Err(Error::InvalidArgument(format!(
            "spatial parameters {params:?} outside configured ranges"
        )));
    }
    let (h, w) = (sample.gt.n_y, sample.gt.n_x);
    let map = InverseMap::new(params, h, w);
    let mut out = sample.clone();
    out.provenance.spatial = Some(*params);
    if let Some(table) = lattice_table(&map, h, w) {
        out.pca.channels = gather(&sample.pca.channels, &table);
        out.tsr.channels = gather(&sample.tsr.channels, &table);
        out.gt.class_mask = gather(&sample.gt.class_mask, &table);
        out.gt.depth_map = gather(&sample.gt.depth_map, &table);
        return Ok(out);
    }
    out.pca.channels = bilinear(&sample.pca.channels, &map, h, w);
    out.tsr.channels = bilinear(&sample.tsr.channels, &map, h, w);
    let table = nearest_table(&map, h, w);
    out.gt.class_mask = gather(&sample.gt.class_mask, &table);
    out.gt.depth_map = gather(&sample.gt.depth_map, &table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_trig_is_exact() {
        assert_eq!(exact_trig(90.0), (0.0, 1.0));
        assert_eq!(exact_trig(-90.0), (0.0, -1.0));
        assert_eq!(exact_trig(180.0), (-1.0, 0.0));
    }

    #[test]
    fn identity_map_is_lattice() {
        let map = InverseMap::new(&SpatialParams::identity(), 4, 5);
        let t = lattice_table(&map, 4, 5).unwrap();
        assert!(t.iter().enumerate().all(|(i, s)| *s == Some(i)));
    }

    #[test]
    fn half_pixel_translation_is_not_lattice() {
        let p = SpatialParams {
            translate_x: 0.125,
            ..SpatialParams::identity()
        };
        assert!(lattice_table(&InverseMap::new(&p, 4, 4), 4, 4).is_none());
        let p = SpatialParams {
            translate_x: 0.25,
            ..SpatialParams::identity()
        };
        let t = lattice_table(&InverseMap::new(&p, 4, 4), 4, 4).unwrap();
        // shifted right by one pixel: column 0 is padding
        assert_eq!(t[0], None);
        assert_eq!(t[1], Some(0));
    }
}
