use nalgebra::DMatrix;

use super::StandardizedMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_PCA_COMPONENTS: usize = 10;

/// Principal component images of a standardized sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaTensor {
    pub n_y: usize,
    pub n_x: usize,
    /// `J x n_y x n_x`, channel-major.
    pub channels: Vec<f32>,
    /// First `J` singular values, descending.
    pub singular_values: Vec<f64>,
    /// Number of frames the decomposition was computed from.
    pub n_frames: usize,
}

impl PcaTensor {
    pub fn components(&self) -> usize {
        self.singular_values.len()
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let p = self.n_y * self.n_x;
        &self.channels[k * p..(k + 1) * p]
    }
}

/// Full-precision result of the decomposition, before narrowing to `f32`.
#[derive(Clone, Debug)]
pub struct PcaDecomposition {
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Temporal directions `v_k` as columns (`n_t x r`), sign-normalized.
    pub directions: DMatrix<f64>,
    /// Projections `A v_k` as columns (`P x r`).
    pub images: DMatrix<f64>,
}

/// Decomposes the `P x n_t` pixel-by-time arrangement of `std`.
///
/// Tall inputs are first reduced by a Householder QR so the SVD runs on the
/// small `n_t x n_t` triangular factor; the right singular vectors of `R`
/// are those of the full matrix.
pub fn decompose(std: &StandardizedMatrix) -> PcaDecomposition {
    let p = std.pixels();
    let n_t = std.n_t;
    // A[p, k] = S^[k, p]
    let a = DMatrix::from_fn(p, n_t, |i, k| std.data[k * p + i]);
    let svd = if p > n_t {
        a.clone().qr().r().svd(false, true)
    } else {
        a.clone().svd(false, true)
    };
    let v_t = svd.v_t.expect("v requested");
    let rank = svd.singular_values.len();
    // The reported singular values can drift when vectors are requested;
    // |A v_k| is exact for the converged directions.
    let mut directions = DMatrix::zeros(n_t, rank);
    for src in 0..rank {
        let mut v: Vec<f64> = v_t.row(src).iter().copied().collect();
        // largest-magnitude entry positive; first occurrence wins ties
        let mut arg = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[arg].abs() {
                arg = i;
            }
        }
        if v[arg] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, x) in v.into_iter().enumerate() {
            directions[(i, src)] = x;
        }
    }
    let projected = &a * &directions;
    let norms: Vec<f64> = projected.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let directions = directions.select_columns(&order);
    let images = projected.select_columns(&order);
    let singular_values: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    PcaDecomposition {
        singular_values,
        directions,
        images,
    }
}

/// First `components` principal component images, ordered by descending
/// singular value.
pub fn pca_images(std: &StandardizedMatrix, components: usize) -> Result<PcaTensor> {
    let max = std.n_t.min(std.pixels());
    if components == 0 || components > max {
        return Err(Error::InvalidArgument(format!(
            "{components} components requested, at most {max} available"
        )));
    }
    let dec = decompose(std);
    let p = std.pixels();
    let mut channels = Vec::with_capacity(components * p);
    for k in 0..components {
        channels.extend(dec.images.column(k).iter().map(|&v| v as f32));
    }
    Ok(PcaTensor {
        n_y: std.n_y,
        n_x: std.n_x,
        channels,
        singular_values: dec.singular_values[..components].to_vec(),
        n_frames: std.n_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::standardize_values;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_std(seed: u64, n_t: usize, n_y: usize, n_x: usize) -> StandardizedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n_t * n_y * n_x).map(|_| rng.random_range(-1.0..1.0)).collect();
        standardize_values(n_t, n_y, n_x, &vals)
    }

    #[test]
    fn rank_one_input_has_single_component() {
        let n_t = 7;
        let profile: Vec<f64> = (0..n_t).map(|k| (k as f64 * 0.9).sin() + 0.3).collect();
        let pattern = [1.0, -2.0, 0.5, 3.0, 0.25, -1.0];
        let mut data = vec![0.0; n_t * 6];
        for k in 0..n_t {
            for (p, s) in pattern.iter().enumerate() {
                data[k * 6 + p] = profile[k] * s;
            }
        }
        let m = StandardizedMatrix {
            n_t,
            n_y: 2,
            n_x: 3,
            data,
            pixel_means: vec![0.0; 6],
            pixel_stds: vec![1.0; 6],
        };
        let pca = pca_images(&m, 3).unwrap();
        let s0 = pca.singular_values[0];
        assert!(s0 > 0.0);
        assert!(pca.singular_values[1..].iter().all(|&s| s <= 1e-10 * s0));
        let ch = pca.channel(0);
        let ratio = f64::from(ch[0]) / pattern[0];
        for (c, s) in ch.iter().zip(pattern) {
            assert!((f64::from(*c) - ratio * s).abs() <= 1e-5 * ratio.abs());
        }
    }

    #[test]
    fn too_many_components_is_error() {
        let m = random_std(1, 4, 2, 2);
        assert!(pca_images(&m, 5).is_err());
        assert!(pca_images(&m, 0).is_err());
        assert_eq!(pca_images(&m, 4).unwrap().components(), 4);
    }

    #[test]
    fn singular_values_descend_and_sign_is_fixed() {
        let m = random_std(2, 9, 4, 5);
        let dec = decompose(&m);
        assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..dec.directions.ncols() {
            let col = dec.directions.column(k);
            let max = col.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn energy_and_reconstruction() {
        let m = random_std(3, 6, 5, 5);
        let dec = decompose(&m);
        let frob: f64 = m.data.iter().map(|v| v * v).sum();
        let energy: f64 = dec.singular_values.iter().map(|s| s * s).sum();
        assert!((energy - frob).abs() <= 1e-8 * frob);
        let recon = &dec.images * dec.directions.transpose();
        let p = m.pixels();
        let err: f64 = (0..p)
            .flat_map(|i| (0..m.n_t).map(move |k| (i, k)))
            .map(|(i, k)| (recon[(i, k)] - m.data[k * p + i]).powi(2))
            .sum();
        assert!(err.sqrt() <= 1e-8 * frob.sqrt());
    }
}
