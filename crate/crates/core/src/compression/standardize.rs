use crate::sequence::ThermalSequence;

/// Guard for pixels whose trace is constant.
pub const STD_EPSILON: f64 = 1e-8;

/// Pixel-wise standardized responses, `n_t` rows by `n_y * n_x` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizedMatrix {
    pub n_t: usize,
    pub n_y: usize,
    pub n_x: usize,
    /// Row-major `n_t x P`.
    pub data: Vec<f64>,
    pub pixel_means: Vec<f64>,
    pub pixel_stds: Vec<f64>,
}

impl StandardizedMatrix {
    pub fn pixels(&self) -> usize {
        self.n_y * self.n_x
    }

    pub fn get(&self, k: usize, p: usize) -> f64 {
        self.data[k * self.pixels() + p]
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..self.n_t).map(|k| self.get(k, p)).collect()
    }
}

/// Standardizes every pixel trace over time with its mean and sample
/// standard deviation (`n_t - 1` denominator).
pub fn standardize(seq: &ThermalSequence) -> StandardizedMatrix {
    let values: Vec<f64> = seq.frames().iter().map(|&v| f64::from(v)).collect();
    standardize_values(seq.n_t(), seq.n_y(), seq.n_x(), &values)
}

/// Same as [`standardize`] for a raw `n_t x (n_y * n_x)` row-major buffer.
pub fn standardize_values(
    n_t: usize,
    n_y: usize,
    n_x: usize,
    values: &[f64],
) -> StandardizedMatrix {
    let p = n_y * n_x;
    let mut means = vec![0.0; p];
    for k in 0..n_t {
        for (m, v) in means.iter_mut().zip(&values[k * p..(k + 1) * p]) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n_t as f64;
    }
    let mut vars = vec![0.0; p];
    for k in 0..n_t {
        for ((s, v), m) in vars.iter_mut().zip(&values[k * p..(k + 1) * p]).zip(&means) {
            let d = v - m;
            *s += d * d;
        }
    }
    let stds: Vec<f64> = vars
        .iter()
        .map(|s| (s / (n_t as f64 - 1.0)).sqrt())
        .collect();
    let mut data = vec![0.0; n_t * p];
    for k in 0..n_t {
        for i in 0..p {
            data[k * p + i] = (values[k * p + i] - means[i]) / stds[i].max(STD_EPSILON);
        }
    }
    StandardizedMatrix {
        n_t,
        n_y,
        n_x,
        data,
        pixel_means: means,
        pixel_stds: stds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(seed: u64, n_t: usize, n_y: usize, n_x: usize) -> ThermalSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n_t * n_y * n_x)
            .map(|_| rng.random_range(-3.0f32..5.0))
            .collect();
        ThermalSequence::new("r", (n_t, n_y, n_x), 10.0, 0, frames).unwrap()
    }

    #[test]
    fn columns_have_zero_mean_unit_std() {
        let s = standardize(&random_seq(1, 12, 3, 4));
        for p in 0..s.pixels() {
            let col = s.column(p);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            assert!(mean.abs() <= 1e-6);
            assert!((var.sqrt() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn constant_pixel_maps_to_zero_column() {
        let frames = vec![2.0f32, 1.0, 2.0, 3.0, 2.0, 7.0];
        let seq = ThermalSequence::new("c", (3, 1, 2), 10.0, 0, frames).unwrap();
        let s = standardize(&seq);
        assert_eq!(s.column(0), vec![0.0; 3]);
        assert_eq!(s.pixel_stds[0], 0.0);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let seq = random_seq(7, 5, 2, 2);
        let s = standardize(&seq);
        for p in 0..4 {
            let trace: Vec<f64> = seq.trace(p).iter().map(|&v| f64::from(v)).collect();
            let mean = trace.iter().sum::<f64>() / 5.0;
            let var = trace.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            for (k, v) in trace.iter().enumerate() {
                let expected = (v - mean) / var.sqrt();
                assert!((s.get(k, p) - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn standardization_is_idempotent() {
        let s = standardize(&random_seq(3, 9, 2, 3));
        let again = standardize_values(s.n_t, s.n_y, s.n_x, &s.data);
        for (a, b) in s.data.iter().zip(&again.data) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}
