//! Sequence compression into the two network input modalities: principal
//! component images and thermographic signal reconstruction coefficients.

mod pca;
mod standardize;
mod tsr;

pub use pca::{decompose, pca_images, PcaDecomposition, PcaTensor, DEFAULT_PCA_COMPONENTS};
pub use standardize::{standardize, standardize_values, StandardizedMatrix, STD_EPSILON};
pub use tsr::{
    tsr_fit_pixel, tsr_images, TsrSolver, TsrTensor, DEFAULT_TSR_DEGREE, LOG_EPSILON,
};

use crate::error::Result;
use crate::sequence::ThermalSequence;

/// Both modalities of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Modalities {
    pub pca: PcaTensor,
    pub tsr: TsrTensor,
}

/// Standardize + PCA + TSR in one call.
pub fn compress(seq: &ThermalSequence, components: usize, degree: usize) -> Result<Modalities> {
    let std = standardize(seq);
    let pca = pca_images(&std, components)?;
    let tsr = tsr_images(seq, degree)?;
    Ok(Modalities { pca, tsr })
}
