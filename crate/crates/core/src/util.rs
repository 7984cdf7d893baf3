//! Small numeric helpers shared across modules.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-norm cap applied to feedforward plastic matrices after each update.
/// Equal to the expected row norm of a Kaiming-uniform initialisation.
pub const MAX_ROW_NORM: f64 = std::f64::consts::SQRT_2;

/// An independent ChaCha8 stream for one weight group, so adding or removing
/// a group never shifts the draws of another.
pub fn group_rng(seed: u64, group: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(group);
    rng
}

/// Kaiming-uniform init for a `rows × cols` matrix: `U(±sqrt(6 / cols))`.
pub fn kaiming_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / cols.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Rescales any row whose L2 norm exceeds `cap` back onto the sphere of
/// radius `cap`.
pub fn cap_row_norms(w: &mut Array2<f64>, cap: f64) {
    for mut row in w.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        // The slack keeps the cap idempotent: a rescaled row may land a few
        // ulps above `cap` and must not be rescaled again.
        if n > cap * (1.0 + 1e-12) {
            row.mapv_inplace(|v| v * cap / n);
        }
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Errors if any entry is NaN or infinite.
pub fn check_finite(a: ArrayView2<'_, f64>, location: &str) -> Result<()> {
    if let Some(v) = a.iter().find(|v| !v.is_finite()) {
        return Err(Error::numerical(location, format!("non-finite value {v}")));
    }
    Ok(())
}

/// FNV-1a over the raw bit patterns; a cheap fingerprint for bit-identity checks.
pub fn checksum<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Serde adapter for `f64` that survives JSON: non-finite values are written
/// as the strings `"NaN"`, `"inf"` and `"-inf"`.
pub mod json_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
