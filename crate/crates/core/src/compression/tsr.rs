use crate::error::{Error, Result};
use crate::sequence::ThermalSequence;

pub const DEFAULT_TSR_DEGREE: usize = 5;
/// Floor applied to temperature rises before the logarithm.
pub const LOG_EPSILON: f64 = 1e-9;

/// Per-pixel log-log polynomial coefficients `a_0..a_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TsrTensor {
    pub n_y: usize,
    pub n_x: usize,
    pub degree: usize,
    /// `(degree + 1) x n_y x n_x`, channel-major; channel `i` holds `a_i`.
    pub channels: Vec<f32>,
    /// Times enter the fit as `ln(t / reference_time_s)`.
    pub reference_time_s: f64,
    pub epsilon: f64,
}

impl TsrTensor {
    pub fn coefficients(&self) -> usize {
        self.degree + 1
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        let p = self.n_y * self.n_x;
        &self.channels[i * p..(i + 1) * p]
    }
}

/// Householder QR of the log-time Vandermonde design, reusable across every
/// pixel that shares the same sample times.
#[derive(Clone, Debug)]
pub struct TsrSolver {
    rows: usize,
    cols: usize,
    /// Column-major `rows x cols`; R in the upper triangle, Householder
    /// vectors (without their implicit leading 1) below it.
    qr: Vec<f64>,
    tau: Vec<f64>,
}

impl TsrSolver {
    pub fn new(times: &[f64], degree: usize) -> Result<Self> {
        Self::with_reference(times, degree, 1.0)
    }

    pub fn with_reference(times: &[f64], degree: usize, reference_time_s: f64) -> Result<Self> {
        let rows = times.len();
        let cols = degree + 1;
        if rows < cols {
            return Err(Error::InvalidArgument(format!(
                "{rows} samples cannot determine {cols} coefficients"
            )));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidArgument(
                "sample times must be finite and positive".into(),
            ));
        }
        let mut qr = vec![0.0; rows * cols];
        for (r, t) in times.iter().enumerate() {
            let x = (t / reference_time_s).ln();
            let mut pow = 1.0;
            for c in 0..cols {
                qr[c * rows + r] = pow;
                pow *= x;
            }
        }
        let mut tau = vec![0.0; cols];
        for c in 0..cols {
            let col = &mut qr[c * rows..(c + 1) * rows];
            let norm = col[c..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                tau[c] = 0.0;
                continue;
            }
            let alpha = if col[c] > 0.0 { -norm } else { norm };
            let v0 = col[c] - alpha;
            for v in &mut col[c + 1..] {
                *v /= v0;
            }
            tau[c] = -v0 / alpha;
            col[c] = alpha;
            for c2 in c + 1..cols {
                let (head, tail) = qr.split_at_mut(c2 * rows);
                let v = &head[c * rows..(c + 1) * rows];
                let target = &mut tail[..rows];
                let mut dot = target[c];
                for r in c + 1..rows {
                    dot += v[r] * target[r];
                }
                let s = tau[c] * dot;
                target[c] -= s;
                for r in c + 1..rows {
                    target[r] -= s * v[r];
                }
            }
        }
        let solver = TsrSolver {
            rows,
            cols,
            qr,
            tau,
        };
        let diag: Vec<f64> = (0..cols).map(|c| solver.r(c, c).abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        if max == 0.0 || diag.iter().any(|&d| d <= 1e-12 * max) {
            return Err(Error::RankDeficient(format!(
                "log-time design of degree {degree} is singular"
            )));
        }
        Ok(solver)
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[j * self.rows + i]
    }

    pub fn degree(&self) -> usize {
        self.cols - 1
    }

    pub fn samples(&self) -> usize {
        self.rows
    }

    /// Least-squares coefficients for log responses `y`.
    pub fn solve_log(&self, y: &[f64]) -> Vec<f64> {
        self.solve_log_with_residual(y).0
    }

    /// Coefficients and the residual sum of squares.
    pub fn solve_log_with_residual(&self, y: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(y.len(), self.rows, "response length");
        let mut qty = y.to_vec();
        for c in 0..self.cols {
            let v = &self.qr[c * self.rows..(c + 1) * self.rows];
            let mut dot = qty[c];
            for r in c + 1..self.rows {
                dot += v[r] * qty[r];
            }
            let s = self.tau[c] * dot;
            qty[c] -= s;
            for r in c + 1..self.rows {
                qty[r] -= s * v[r];
            }
        }
        let residual = qty[self.cols..].iter().map(|v| v * v).sum();
        let mut coef = vec![0.0; self.cols];
        for i in (0..self.cols).rev() {
            let mut acc = qty[i];
            for j in i + 1..self.cols {
                acc -= self.r(i, j) * coef[j];
            }
            coef[i] = acc / self.r(i, i);
        }
        (coef, residual)
    }

    /// Fits raw temperature rises, flooring them at [`LOG_EPSILON`].
    pub fn fit(&self, delta_t: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = delta_t.iter().map(|d| d.max(LOG_EPSILON).ln()).collect();
        self.solve_log(&y)
    }
}

/// Fits `ln ΔT = Σ a_i ln(t)^i` for one pixel.
pub fn tsr_fit_pixel(times: &[f64], delta_t: &[f64], degree: usize) -> Result<Vec<f64>> {
    if times.len() != delta_t.len() {
        return Err(Error::Shape(format!(
            "{} times vs {} rises",
            times.len(),
            delta_t.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        // equal times make the design singular; anything else out of order is
        // a caller bug
        if times.windows(2).all(|w| w[1] >= w[0]) {
            return Err(Error::RankDeficient("repeated sample times".into()));
        }
        return Err(Error::InvalidArgument("times must increase".into()));
    }
    Ok(TsrSolver::new(times, degree)?.fit(delta_t))
}

/// TSR coefficient images of every pixel's post-pulse rise above the
/// reference (pulse) frame.
pub fn tsr_images(seq: &ThermalSequence, degree: usize) -> Result<TsrTensor> {
    let pulse = seq.pulse_frame();
    let post = seq.n_t() - pulse - 1;
    if post < degree + 2 {
        return Err(Error::InvalidArgument(format!(
            "{post} post-pulse frames, need at least {}",
            degree + 2
        )));
    }
    let t0 = seq.time_of(pulse);
    let times: Vec<f64> = (pulse + 1..seq.n_t()).map(|k| seq.time_of(k) - t0).collect();
    let solver = TsrSolver::new(&times, degree)?;
    let p = seq.pixels();
    let cold = seq.frame(pulse);
    let mut channels = vec![0.0f32; (degree + 1) * p];
    let mut rise = vec![0.0; post];
    for px in 0..p {
        for (i, k) in (pulse + 1..seq.n_t()).enumerate() {
            rise[i] = f64::from(seq.frames()[k * p + px]) - f64::from(cold[px]);
        }
        for (c, a) in solver.fit(&rise).into_iter().enumerate() {
            channels[c * p + px] = a as f32;
        }
    }
    Ok(TsrTensor {
        n_y: seq.n_y(),
        n_x: seq.n_x(),
        degree,
        channels,
        reference_time_s: 1.0,
        epsilon: LOG_EPSILON,
    })
}
