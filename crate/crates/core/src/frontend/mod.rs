//! Fixed (non-plastic) early vision.
//!
//! The front end turns an RGB image into the feature maps consumed by the
//! competitive hierarchy:
//!
//! - an opponent-colour image (luminance, red-green, blue-yellow),
//! - phase-invariant Gabor energy for every (frequency, orientation) pair,
//! - a one-level undecimated Haar decomposition of each opponent channel,
//! - a fixed saliency map used to gate the side branch.
//!
//! Everything here is a pure function of its inputs; nothing is learned.

mod colour;
mod conv;
mod gabor;
mod haar;
mod saliency;

pub use colour::{opponent_transform, ColourTransform, OpponentImage, RgbImage};
pub use conv::{convolve_same_direct, reflect_index, GaborEnergyPlan};
pub use gabor::{
    build_gabor_bank, default_frequencies, gabor_energy, GaborBank, GaborKernel, StreamStack,
    GABOR_EPSILON, N_FREQUENCIES, N_ORIENTATIONS,
};
pub use haar::{haar_features, HaarStack, HAAR_CHANNELS};
pub use saliency::{saliency_map, sigmoid, symmetry_prior, SaliencyMap, SaliencyWeights};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Settings for the whole fixed front end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontEndConfig {
    pub colour: ColourTransform,
    pub frequencies: Vec<f64>,
    pub n_theta: usize,
    pub epsilon: f64,
    pub saliency: SaliencyWeights,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            colour: ColourTransform::hunt_pointer_estevez(),
            frequencies: default_frequencies().to_vec(),
            n_theta: N_ORIENTATIONS,
            epsilon: GABOR_EPSILON,
            saliency: SaliencyWeights::default(),
        }
    }
}

/// All fixed feature maps for one image.
#[derive(Clone, Debug)]
pub struct FrontEndOutput {
    pub opponent: OpponentImage,
    pub streams: StreamStack,
    pub haar: HaarStack,
    pub saliency: SaliencyMap,
}

/// A front end bound to one image size, with the Gabor spectra and the
/// symmetry prior precomputed.
#[derive(Clone)]
pub struct FrontEnd {
    config: FrontEndConfig,
    bank: GaborBank,
    plan: GaborEnergyPlan,
    prior: Array2<f64>,
}

impl FrontEnd {
    pub fn new(config: FrontEndConfig, height: usize, width: usize) -> Result<Self> {
        let bank = build_gabor_bank(&config.frequencies, config.n_theta)?;
        let plan = GaborEnergyPlan::new(&bank, height, width)?;
        let prior = symmetry_prior(height, width);
        Ok(Self {
            config,
            bank,
            plan,
            prior,
        })
    }

    pub fn config(&self) -> &FrontEndConfig {
        &self.config
    }

    pub fn bank(&self) -> &GaborBank {
        &self.bank
    }

    pub fn process(&self, img: &RgbImage) -> Result<FrontEndOutput> {
        let opponent = opponent_transform(img, &self.config.colour)?;
        let lum = opponent.luminance();
        let streams = self.plan.energy(&lum, self.config.epsilon)?;
        let haar = haar_features(&opponent)?;
        let mean_ori = streams.mean_map();
        let saliency = saliency_map(&lum, &mean_ori, &self.prior, &self.config.saliency)?;
        Ok(FrontEndOutput {
            opponent,
            streams,
            haar,
            saliency,
        })
    }
}
