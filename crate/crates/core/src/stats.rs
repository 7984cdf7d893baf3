//! Seed-level statistics: BCa bootstrap intervals, paired t-tests with Holm
//! correction, paired Cohen's d, noncentral-t power, status labels and the
//! pairwise interaction metric.
//!
//! Every function is pure; the bootstrap takes an explicit seed and draws from
//! its own [`CounterRng`] stream, independent of any training seed.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::data::{streams, CounterRng};
use crate::error::{Error, Result};

pub const DEFAULT_N_BOOT: usize = 10_000;
pub const BOOTSTRAP_SEED: u64 = 0xC0FFEE;
/// Smallest p-value ever reported (the zero-variance guard lands here).
pub const P_FLOOR: f64 = 1e-16;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

fn check_samples(x: &[f64], what: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!("{what}: need at least 2 samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite sample")));
    }
    Ok(())
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_samples(a, "paired samples")?;
    check_samples(b, "paired samples")?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Bootstrap distribution of the mean, sorted ascending.
pub fn bootstrap_means(samples: &[f64], n_boot: usize, seed: u64) -> Vec<f64> {
    let n = samples.len();
    let mut rng = CounterRng::new(seed, 0, streams::BOOTSTRAP);
    let mut out: Vec<f64> = (0..n_boot)
        .map(|_| {
            let s: f64 = (0..n).map(|_| samples[rng.below(n as u64) as usize]).sum();
            s / n as f64
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Plain percentile interval over the same bootstrap draws as [`bca_ci`].
pub fn percentile_ci(samples: &[f64], level: f64, n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    check_samples(samples, "percentile_ci")?;
    let boot = bootstrap_means(samples, n_boot, seed);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&boot, tail), quantile_sorted(&boot, 1.0 - tail)))
}

/// BCa bootstrap confidence interval for the mean.
///
/// Bias correction `z0 = Φ⁻¹(P*(θ* < θ̂) + ½P*(θ* = θ̂))`; acceleration from
/// the jackknife, `a = Σd³ / (6 (Σd²)^{3/2})` with `d = θ̄₍.₎ − θ₍ᵢ₎`.
/// All-identical samples give the degenerate interval `(v, v)`.
pub fn bca_ci(samples: &[f64], level: f64, n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    check_samples(samples, "bca_ci")?;
    if !(0.0 < level && level < 1.0) || n_boot < 2 {
        return Err(Error::InvalidInput(format!("bca_ci: level {level}, n_boot {n_boot}")));
    }
    let theta = mean(samples);
    if samples.iter().all(|&v| v == samples[0]) {
        return Ok((samples[0], samples[0]));
    }
    let boot = bootstrap_means(samples, n_boot, seed);
    let below = boot.iter().filter(|&&b| b < theta).count() as f64;
    let equal = boot.iter().filter(|&&b| b == theta).count() as f64;
    let b = n_boot as f64;
    let prop = ((below + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let norm = std_normal();
    let z0 = norm.inverse_cdf(prop);

    let n = samples.len() as f64;
    let total: f64 = samples.iter().sum();
    let jack: Vec<f64> = samples.iter().map(|v| (total - v) / (n - 1.0)).collect();
    let jbar = mean(&jack);
    let (num, den) = jack.iter().fold((0.0, 0.0), |(s3, s2), j| {
        let d = jbar - j;
        (s3 + d * d * d, s2 + d * d)
    });
    let accel = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };

    let adjust = |alpha: f64| {
        let z = norm.inverse_cdf(alpha);
        let w = z0 + z;
        norm.cdf(z0 + w / (1.0 - accel * w))
    };
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&boot, adjust(tail));
    let hi = quantile_sorted(&boot, adjust(1.0 - tail));
    Ok((lo, hi))
}

/// Paired two-sided t-test on `a − b` with `n − 1` degrees of freedom.
///
/// Zero-variance guard: if all differences are equal, `t = 0, p = 1` when they
/// are zero and `t = ±∞, p = P_FLOOR` otherwise.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let diff = check_paired(a, b)?;
    let m = mean(&diff);
    let sd = sample_sd(&diff);
    if sd == 0.0 {
        return Ok(if m == 0.0 { (0.0, 1.0) } else { (m.signum() * f64::INFINITY, P_FLOOR) });
    }
    let n = diff.len() as f64;
    let t = m / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(P_FLOOR, 1.0);
    Ok((t, p))
}

/// Holm step-down adjustment; output is in the input order.
pub fn holm_correct(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

/// Paired Cohen's d, `mean(a − b) / sd(a − b)`. Zero spread gives 0 for
/// identical groups and a signed infinity otherwise.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    let diff = check_paired(a, b)?;
    let m = mean(&diff);
    let sd = sample_sd(&diff);
    if sd == 0.0 {
        return Ok(if m == 0.0 { 0.0 } else { m.signum() * f64::INFINITY });
    }
    Ok(m / sd)
}

/// Power of the two-sided paired t-test at effect size `d` with `n` pairs.
///
/// Exact noncentral t with noncentrality `|d|·√n`: with `S = √(V/ν)`,
/// `V ~ χ²_ν`, power is `E_S[Φ(δ − t_c S) + Φ(−δ − t_c S)]`, integrated over
/// the density of `S` by composite Simpson. This stays accurate for the large
/// noncentralities where series expansions lose precision.
pub fn power_paired_t(d: f64, n: usize, alpha: f64) -> Result<f64> {
    if n < 2 || !(0.0 < alpha && alpha < 1.0) || d.is_nan() {
        return Err(Error::InvalidInput(format!("power: d {d}, n {n}, alpha {alpha}")));
    }
    if d.is_infinite() {
        return Ok(1.0);
    }
    let df = (n - 1) as f64;
    let t_crit = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .inverse_cdf(1.0 - alpha / 2.0);
    let delta = d.abs() * (n as f64).sqrt();
    if delta == 0.0 {
        return Ok(alpha);
    }
    let norm = std_normal();
    // Density of S = sqrt(V/ν): 2 (ν/2)^{ν/2} / Γ(ν/2) · s^{ν−1} · exp(−ν s²/2).
    let log_norm = std::f64::consts::LN_2 + (df / 2.0) * (df / 2.0).ln() - ln_gamma(df / 2.0);
    let density = |s: f64| {
        if s <= 0.0 {
            return if df == 1.0 { log_norm.exp() } else { 0.0 };
        }
        (log_norm + (df - 1.0) * s.ln() - df * s * s / 2.0).exp()
    };
    let integrand = |s: f64| {
        density(s) * (norm.cdf(delta - t_crit * s) + norm.cdf(-delta - t_crit * s))
    };
    let s_max = ((df + 12.0 * (2.0 * df).sqrt() + 60.0) / df).sqrt();
    let steps = 4000;
    let h = s_max / steps as f64;
    let mut acc = integrand(0.0) + integrand(s_max);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(k as f64 * h);
    }
    Ok((acc * h / 3.0).clamp(0.0, 1.0))
}

/// Super-additivity of two ablations: `I = Δ_{−A,−B} − (Δ_{−A} + Δ_{−B})`.
/// Positive when removing both costs less than the two single costs summed.
pub fn interaction_strength(delta_a: f64, delta_b: f64, delta_ab: f64) -> f64 {
    delta_ab - (delta_a + delta_b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Adequate,
    Borderline,
    Exploratory,
}

/// Adequate iff `d ≥ 2` and power > 0.80 (checked first); Borderline iff power
/// lies in [0.75, 0.85]; otherwise Exploratory. `d` is taken in magnitude.
pub fn status_label(d: f64, power: f64) -> Status {
    if d.abs() >= 2.0 && power > 0.80 {
        Status::Adequate
    } else if (0.75..=0.85).contains(&power) {
        Status::Borderline
    } else {
        Status::Exploratory
    }
}

/// Mean and BCa interval of one condition across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "crate::util::json_f64")]
    pub mean: f64,
    #[serde(with = "crate::util::json_f64")]
    pub ci_low: f64,
    #[serde(with = "crate::util::json_f64")]
    pub ci_high: f64,
}

pub fn summarise(values: &[f64], n_boot: usize, seed: u64) -> Result<Summary> {
    let m = mean(values);
    let (lo, hi) = if values.len() < 2 { (m, m) } else { bca_ci(values, 0.95, n_boot, seed)? };
    // BCa quantiles of a mean almost always straddle it; the clamp keeps the
    // reported interval well-formed in the rare discrete edge cases.
    Ok(Summary { mean: m, ci_low: lo.min(m), ci_high: hi.max(m) })
}

/// One row of an ablation table: condition minus reference, paired by seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    #[serde(with = "crate::util::json_f64")]
    pub mean: f64,
    #[serde(with = "crate::util::json_f64")]
    pub ci_low: f64,
    #[serde(with = "crate::util::json_f64")]
    pub ci_high: f64,
    #[serde(with = "crate::util::json_f64")]
    pub p_raw: f64,
    #[serde(with = "crate::util::json_f64")]
    pub p_holm: f64,
    #[serde(with = "crate::util::json_f64")]
    pub d: f64,
    #[serde(with = "crate::util::json_f64")]
    pub power: f64,
    pub status: Status,
}

/// Compares each condition against `reference` and Holm-corrects across the
/// whole set.
pub fn compare_conditions(
    reference: &[f64],
    conditions: &[(String, Vec<f64>)],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<StatReport>> {
    let mut rows = Vec::with_capacity(conditions.len());
    let mut p_raw = Vec::with_capacity(conditions.len());
    for (name, vals) in conditions {
        let diff: Vec<f64> = vals.iter().zip(reference).map(|(v, r)| v - r).collect();
        let s = summarise(&diff, n_boot, seed)?;
        let (_, p) = paired_t(vals, reference)?;
        let d = cohens_d(vals, reference)?;
        let power = power_paired_t(d, vals.len(), 0.05)?;
        p_raw.push(p);
        rows.push(StatReport {
            name: name.clone(),
            mean: s.mean,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            p_raw: p,
            p_holm: p,
            d,
            power,
            status: status_label(d, power),
        });
    }
    for (row, p) in rows.iter_mut().zip(holm_correct(&p_raw)) {
        row.p_holm = p;
    }
    Ok(rows)
}
