//! Depth-noise statistics and synthetic noise injection.
//!
//! Two kinds of sensor noise are tracked. *Zero noise* is a pixel whose true
//! depth is known but the sensor reported 0. *Delta noise* is a pixel whose
//! reported depth is off, so its back-projected surface lands on a voxel of
//! a different class.
//!
//! Injection draws all randomness from a ChaCha8 generator seeded with
//! `seed_from_u64(seed)`; zero noise uses stream 0 and delta noise stream 1,
//! so combining both with one seed keeps the two draws independent.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{DepthMap, LabelImage};
use crate::error::{Error, Result};
use crate::grid::{ClassVocabulary, IGNORE_LABEL};

/// Smallest depth a delta-noised pixel can take, in meters.
pub const MIN_NOISY_DEPTH: f64 = 1e-3;

/// Default delta-noise magnitude range in meters.
pub const DEFAULT_DELTA_RANGE: (f64, f64) = (0.08, 0.40);

const ZERO_STREAM: u64 = 0;
const DELTA_STREAM: u64 = 1;

/// Pooled pixel counts behind both noise statistics. Counts from several
/// image pairs can be merged before computing rates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseCounts {
    channels: usize,
    zero_hits: Vec<u64>,
    zero_support: Vec<u64>,
    delta_hits: Vec<u64>,
    delta_support: Vec<u64>,
}

impl NoiseCounts {
    /// Empty counts for classes `0..=num_classes`.
    pub fn new(num_classes: usize) -> Self {
        let channels = num_classes + 1;
        Self {
            channels,
            zero_hits: vec![0; channels],
            zero_support: vec![0; channels],
            delta_hits: vec![0; channels * channels],
            delta_support: vec![0; channels],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.channels - 1
    }

    fn check_label(&self, label: u8) -> Result<Option<usize>> {
        if label == IGNORE_LABEL {
            return Ok(None);
        }
        if label as usize >= self.channels {
            return Err(Error::ClassOutOfRange { class: label as usize, max: self.channels - 1 });
        }
        Ok(Some(label as usize))
    }

    /// Accumulates zero-noise counts: a pixel of clean class `c` with clean
    /// depth > 0 is in the support of `c`, and a hit when its noisy depth
    /// is 0. Pixels whose clean label is ignored are skipped.
    pub fn add_zero(&mut self, clean: &DepthMap, noisy: &DepthMap, clean_labels: &LabelImage) -> Result<()> {
        same_size(clean.size(), noisy.size(), "noisy depth")?;
        same_size(clean.size(), clean_labels.size(), "clean labels")?;
        for ((&d, &dn), &label) in clean.depths().iter().zip(noisy.depths()).zip(clean_labels.labels()) {
            if d == 0.0 {
                continue;
            }
            let Some(c) = self.check_label(label)? else {
                continue;
            };
            self.zero_support[c] += 1;
            if dn == 0.0 {
                self.zero_hits[c] += 1;
            }
        }
        Ok(())
    }

    /// Accumulates delta-noise counts over pixels where both depths are
    /// nonzero. The support of clean class `c` counts every such pixel; the
    /// hit `(c, c')` needs the noisy surface label `c'` to be a different,
    /// non-ignored class.
    pub fn add_delta(
        &mut self,
        clean: &DepthMap,
        noisy: &DepthMap,
        clean_labels: &LabelImage,
        noisy_labels: &LabelImage,
    ) -> Result<()> {
        same_size(clean.size(), noisy.size(), "noisy depth")?;
        same_size(clean.size(), clean_labels.size(), "clean labels")?;
        same_size(clean.size(), noisy_labels.size(), "noisy labels")?;
        let pixels = clean
            .depths()
            .iter()
            .zip(noisy.depths())
            .zip(clean_labels.labels().iter().zip(noisy_labels.labels()));
        for ((&d, &dn), (&lc, &ln)) in pixels {
            if d * dn == 0.0 {
                continue;
            }
            let Some(c) = self.check_label(lc)? else {
                continue;
            };
            self.delta_support[c] += 1;
            if let Some(cn) = self.check_label(ln)? {
                if cn != c {
                    self.delta_hits[c * self.channels + cn] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &NoiseCounts) -> Result<()> {
        if other.channels != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "merging counts over {} and {} classes",
                self.num_classes(),
                other.num_classes()
            )));
        }
        let pairs = [
            (&mut self.zero_hits, &other.zero_hits),
            (&mut self.zero_support, &other.zero_support),
            (&mut self.delta_hits, &other.delta_hits),
            (&mut self.delta_support, &other.delta_support),
        ];
        for (mine, theirs) in pairs {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> NoiseReport {
        let zero_rate = self
            .zero_hits
            .iter()
            .zip(&self.zero_support)
            .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
            .collect();
        let n = self.channels;
        let delta_confusion = (0..n * n)
            .map(|i| {
                let s = self.delta_support[i / n];
                (s > 0).then(|| self.delta_hits[i] as f64 / s as f64)
            })
            .collect();
        NoiseReport {
            channels: n,
            zero_rate,
            zero_support: self.zero_support.clone(),
            delta_confusion,
            delta_support: self.delta_support.clone(),
        }
    }
}

fn same_size(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what} is {b:?}, expected {a:?}")));
    }
    Ok(())
}

/// Per-class zero-noise rates and the class-to-class delta-noise confusion.
/// `None` marks a class with no supporting pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    channels: usize,
    pub zero_rate: Vec<Option<f64>>,
    pub zero_support: Vec<u64>,
    /// Row-major `(C + 1) x (C + 1)`, row = clean class, column = noisy class.
    pub delta_confusion: Vec<Option<f64>>,
    pub delta_support: Vec<u64>,
}

impl NoiseReport {
    pub fn num_classes(&self) -> usize {
        self.channels - 1
    }

    pub fn delta(&self, from: usize, to: usize) -> Option<f64> {
        self.delta_confusion[from * self.channels + to]
    }

    /// Two tables separated by a blank line: `class,name,rate,support` and
    /// `from,to,rate,support`. Undefined rates are empty fields.
    pub fn to_csv(&self, vocab: &ClassVocabulary) -> String {
        let fmt = |r: Option<f64>| r.map(|x| format!("{x:.6}")).unwrap_or_default();
        let name = |c: usize| vocab.name(c).unwrap_or("?");
        let mut out = String::from("# zero_rate\nclass,name,rate,support\n");
        for c in 0..self.channels {
            let _ = writeln!(out, "{c},{},{},{}", name(c), fmt(self.zero_rate[c]), self.zero_support[c]);
        }
        out.push_str("\n# delta_confusion\nfrom,to,rate,support\n");
        for from in 0..self.channels {
            for to in 0..self.channels {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    name(from),
                    name(to),
                    fmt(self.delta(from, to)),
                    self.delta_support[from]
                );
            }
        }
        out
    }
}

/// `Zero(c)` for every class over one image pair.
pub fn zero_noise_rates(
    clean: &DepthMap,
    noisy: &DepthMap,
    clean_labels: &LabelImage,
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    let mut counts = NoiseCounts::new(num_classes);
    counts.add_zero(clean, noisy, clean_labels)?;
    Ok(counts.report().zero_rate)
}

/// `Delta(c, c')` over one image pair, row-major `(C + 1) x (C + 1)`.
pub fn delta_noise_confusion(
    clean_labels: &LabelImage,
    noisy_labels: &LabelImage,
    clean: &DepthMap,
    noisy: &DepthMap,
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    let mut counts = NoiseCounts::new(num_classes);
    counts.add_delta(clean, noisy, clean_labels, noisy_labels)?;
    Ok(counts.report().delta_confusion)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidValue(format!("noise rate must be in [0, 1], got {rate}")));
    }
    Ok(())
}

/// Picks `round(rate * #valid)` distinct valid pixels, ascending.
fn pick_valid(depth: &DepthMap, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let valid: Vec<usize> =
        depth.depths().iter().enumerate().filter(|(_, &d)| d > 0.0).map(|(i, _)| i).collect();
    let k = (rate * valid.len() as f64).round() as usize;
    let mut picked: Vec<usize> = index::sample(rng, valid.len(), k).into_iter().map(|i| valid[i]).collect();
    picked.sort_unstable();
    picked
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zeroes `round(rate * #valid)` randomly chosen measured pixels.
pub fn inject_zero_noise(depth: &DepthMap, rate: f64, seed: u64) -> Result<DepthMap> {
    check_rate(rate)?;
    let mut rng = rng_for(seed, ZERO_STREAM);
    let mut depths = depth.depths().to_vec();
    for i in pick_valid(depth, rate, &mut rng) {
        depths[i] = 0.0;
    }
    let (w, h) = depth.size();
    DepthMap::new(w, h, depths)
}

/// Offsets `round(rate * #valid)` randomly chosen measured pixels by
/// `±u`, with the sign fair and `u` uniform in `offset_range`. Results are
/// clamped to at least [`MIN_NOISY_DEPTH`] so a shifted pixel stays valid.
pub fn inject_delta_noise(depth: &DepthMap, rate: f64, offset_range: (f64, f64), seed: u64) -> Result<DepthMap> {
    check_rate(rate)?;
    let (lo, hi) = offset_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidValue(format!(
            "delta offset range must satisfy 0 < min <= max, got ({lo}, {hi})"
        )));
    }
    let mut rng = rng_for(seed, DELTA_STREAM);
    let mut depths = depth.depths().to_vec();
    for i in pick_valid(depth, rate, &mut rng) {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let magnitude = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        depths[i] = (depths[i] + sign * magnitude).max(MIN_NOISY_DEPTH);
    }
    let (w, h) = depth.size();
    DepthMap::new(w, h, depths)
}
