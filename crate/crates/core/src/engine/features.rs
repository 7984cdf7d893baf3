//! Front-end precomputation: the fixed front end is evaluated once per image
//! and cached as pooled 8×8 stream inputs plus the saliency map.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frontend::{FrontEnd, FrontEndOutput, HAAR_CHANNELS, N_FREQUENCIES, N_ORIENTATIONS};
use crate::pathways::INPUT_POSITIONS;

/// Side of the pooled input grid.
pub const POOLED_SIDE: usize = 8;
/// Gabor stream used by the single-stream (Hebbian-only) configuration.
pub const SINGLE_STREAM_FREQUENCY: usize = 3;

/// Which front-end streams feed the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSelect {
    /// One stream per Gabor frequency plus the Haar stream.
    All,
    /// A single Gabor frequency stream.
    SingleGabor(usize),
}

impl StreamSelect {
    /// Input width of every selected stream.
    pub fn input_dims(self) -> Vec<usize> {
        match self {
            StreamSelect::All => {
                let mut d = vec![N_ORIENTATIONS * INPUT_POSITIONS; N_FREQUENCIES];
                d.push(HAAR_CHANNELS * INPUT_POSITIONS);
                d
            }
            StreamSelect::SingleGabor(_) => vec![N_ORIENTATIONS * INPUT_POSITIONS],
        }
    }

    pub fn n_streams(self) -> usize {
        self.input_dims().len()
    }
}

/// Average-pools an H×W map onto the 8×8 grid (H, W multiples of 8).
pub fn pool_to_grid(map: ArrayView2<'_, f64>) -> Array1<f64> {
    let (h, w) = map.dim();
    let (bh, bw) = (h / POOLED_SIDE, w / POOLED_SIDE);
    let scale = 1.0 / (bh * bw) as f64;
    let mut out = Array1::zeros(INPUT_POSITIONS);
    for gy in 0..POOLED_SIDE {
        for gx in 0..POOLED_SIDE {
            out[gy * POOLED_SIDE + gx] =
                map.slice(s![gy * bh..(gy + 1) * bh, gx * bw..(gx + 1) * bw]).sum() * scale;
        }
    }
    out
}

/// Pooled stream inputs of one image, channel-major over the 64 positions.
pub fn stream_inputs(fe: &FrontEndOutput, select: StreamSelect) -> Vec<Array1<f64>> {
    let gabor = |f: usize| {
        let maps = fe.streams.frequency_stream(f);
        let mut v = Vec::with_capacity(maps.dim().0 * INPUT_POSITIONS);
        for m in maps.axis_iter(Axis(0)) {
            v.extend(pool_to_grid(m));
        }
        Array1::from(v)
    };
    match select {
        StreamSelect::SingleGabor(f) => vec![gabor(f)],
        StreamSelect::All => {
            let mut out: Vec<Array1<f64>> = (0..fe.streams.n_frequencies).map(gabor).collect();
            let mut v = Vec::with_capacity(HAAR_CHANNELS * INPUT_POSITIONS);
            for c in 0..fe.haar.coeffs.dim().2 {
                v.extend(pool_to_grid(fe.haar.coeffs.slice(s![.., .., c])));
            }
            out.push(Array1::from(v));
            out
        }
    }
}

/// Cached front-end features for a set of images.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    /// Per stream, N × d_s.
    pub inputs: Vec<Array2<f64>>,
    /// N × (H·W) flattened saliency maps.
    pub saliency: Array2<f64>,
    pub map_shape: (usize, usize),
    pub labels: Vec<u8>,
    pub n_classes: usize,
}

/// One mini-batch gathered from a [`FeatureSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub saliency: Array2<f64>,
    pub map_shape: (usize, usize),
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn saliency_map(&self, b: usize) -> Array2<f64> {
        self.saliency
            .row(b)
            .to_owned()
            .into_shape_with_order(self.map_shape)
            .expect("saliency row matches map shape")
    }
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.iter().map(|x| x.select(Axis(0), idx)).collect(),
            saliency: self.saliency.select(Axis(0), idx),
            map_shape: self.map_shape,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// All records in order.
    pub fn all(&self) -> Batch {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    /// Copy with every label set to zero.
    pub fn with_zeroed_labels(&self) -> FeatureSet {
        FeatureSet {
            labels: vec![0; self.len()],
            ..self.clone()
        }
    }
}

/// Runs the front end over every image of `data` (in parallel, order kept).
pub fn extract_features(front: &FrontEnd, data: &Dataset, select: StreamSelect) -> Result<FeatureSet> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot extract features from an empty dataset".into()));
    }
    let per_image: Vec<(Vec<Array1<f64>>, Array1<f64>)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let img = data.image(i)?;
            let fe = front.process(&img)?;
            let sal = Array1::from_iter(fe.saliency.values.iter().copied());
            Ok((stream_inputs(&fe, select), sal))
        })
        .collect::<Result<_>>()?;
    let n = per_image.len();
    let dims = select.input_dims();
    let map_len = per_image[0].1.len();
    let mut inputs: Vec<Array2<f64>> = dims.iter().map(|&d| Array2::zeros((n, d))).collect();
    let mut saliency = Array2::zeros((n, map_len));
    for (i, (streams, sal)) in per_image.into_iter().enumerate() {
        for (dst, src) in inputs.iter_mut().zip(&streams) {
            dst.row_mut(i).assign(src);
        }
        saliency.row_mut(i).assign(&sal);
    }
    let side = crate::data::IMAGE_SIDE;
    Ok(FeatureSet {
        inputs,
        saliency,
        map_shape: (side, side),
        labels: data.labels.clone(),
        n_classes: data.n_classes(),
    })
}
