//! Seeded synthetic data with planted concept ambiguity and rare patterns.
//!
//! Generative process, per example `i` and concept `k`:
//!
//! ```text
//! c_ik  ~ Bernoulli(0.5)
//! a_ik  ~ Beta(κ·base_k, κ·(1 − base_k)), clipped to [0, 0.95]
//! votes ~ m annotators, each "unknown" with probability a_ik
//! unknown_rate_ik = votes / m;  concept_ik = c_ik if unknown_rate_ik ≤ 0.5 else unknown
//! x_i   = Σ_k (1 − a_ik)(2c_ik − 1) u_k  +  γ Σ_k (a_ik − 0.5) w_k  +  σ ε,   ε ~ N(0, I_d)
//! y_i   = argmax_j (V c_i)_j   (ties to the lower index)
//! ```
//!
//! `u_k`, `w_k` and `r` are orthonormal; `V` has i.i.d. standard normal
//! entries. For the 5% of examples with the lowest index hash the `u_0` term
//! is carried on `r` instead (`RarePattern::Rotate`), a pattern the heads can
//! learn but see rarely. `RarePattern::SignFlip` negates the `u_0` coefficient
//! instead while keeping `c_i0`. `attenuation` scales `a_ik` inside the first
//! term and `flip_scale` optionally negates it with probability
//! `flip_scale · a_ik`; the defaults are 1 and 0.
//!
//! Ambiguity attenuates the concept signal, and the `w_k` cue makes its level
//! linearly readable. `AmbiguityModel::UniformJitter` with `cue_strength = 0`
//! gives the narrower jitter-only variant.
//!
//! Every stage draws from its own seeded stream, so changing `noise_seed`
//! alters only `ε` and never labels or concepts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{default_concept_names, ConceptValue, Dataset, Example};
use crate::error::{CredalError, Result};
use crate::linalg::{argmax, dot};

pub const AMBIGUITY_CAP: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AmbiguityModel {
    /// `a = clip(base + Uniform(−w, w), 0, 0.95)`.
    UniformJitter { half_width: f64 },
    /// `a ~ Beta(κ·base, κ·(1−base))`, clipped at 0.95.
    Beta { concentration: f64 },
}

/// How the rare examples express concept 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RarePattern {
    /// Negate the `u_0` coefficient. A linear probe cannot fit this.
    SignFlip,
    /// Carry the `u_0` coefficient on an extra direction `r` instead. Linear
    /// probes can fit it but see few examples of it.
    Rotate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub base_unknown: Vec<f64>,
    pub ambiguity: AmbiguityModel,
    pub annotators: usize,
    pub cue_strength: f64,
    pub noise_std: f64,
    pub rare_fraction: f64,
    pub rare_pattern: RarePattern,
    /// Scales how much ambiguity attenuates the concept signal; 1 gives `1 − a`.
    pub attenuation: f64,
    /// The embedding states the opposite concept value with probability
    /// `flip_scale · a`. Zero by default.
    pub flip_scale: f64,
    /// Overrides the seed of the embedding-noise stream only.
    pub noise_seed: Option<u64>,
}

impl SynthConfig {
    pub fn new(n: usize, d: usize, k: usize, n_classes: usize, seed: u64, base_unknown: Vec<f64>) -> Self {
        Self {
            n,
            d,
            k,
            n_classes,
            seed,
            base_unknown,
            ambiguity: AmbiguityModel::Beta { concentration: 2.0 },
            annotators: 5,
            cue_strength: 1.0,
            noise_std: 0.1,
            rare_fraction: 0.05,
            rare_pattern: RarePattern::Rotate,
            attenuation: 1.0,
            flip_scale: 0.0,
            noise_seed: None,
        }
    }

    fn directions_needed(&self) -> usize {
        let base = if self.cue_strength != 0.0 { 2 * self.k } else { self.k };
        base + usize::from(self.rare_pattern == RarePattern::Rotate)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CredalError::InvalidDimensions(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.d < self.k + 1 {
            return bad(format!("d = {} must be at least K + 1 = {}", self.d, self.k + 1));
        }
        if self.d < self.directions_needed() {
            return bad(format!(
                "d = {} too small for {} concept and cue directions",
                self.d,
                self.directions_needed()
            ));
        }
        if self.base_unknown.len() != self.k {
            return bad(format!(
                "base_unknown has {} entries for K = {}",
                self.base_unknown.len(),
                self.k
            ));
        }
        if self.base_unknown.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad("base_unknown entries must lie in [0, 1)".into());
        }
        if self.annotators == 0 {
            return bad("need at least one simulated annotator".into());
        }
        if !(0.0..=1.0).contains(&self.attenuation) || !(0.0..=1.0).contains(&self.flip_scale) {
            return bad("attenuation and flip_scale must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.rare_fraction) {
            return bad("rare_fraction must lie in [0, 1]".into());
        }
        match self.ambiguity {
            AmbiguityModel::Beta { concentration } if concentration <= 0.0 => {
                bad("Beta concentration must be positive".into())
            }
            AmbiguityModel::UniformJitter { half_width } if half_width < 0.0 => {
                bad("jitter half-width must be non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

/// Latent quantities the generator used, kept for tests and diagnostics.
#[derive(Clone, Debug)]
pub struct SyntheticTruth {
    pub ambiguity: Vec<Vec<f64>>,
    pub concepts: Vec<Vec<bool>>,
    pub rare: Vec<bool>,
    pub concept_to_label: Vec<Vec<f64>>,
    pub concept_directions: Vec<Vec<f64>>,
}

pub fn generate_synthetic(
    n: usize,
    d: usize,
    k: usize,
    n_classes: usize,
    seed: u64,
    base_unknown: &[f64],
) -> Result<Dataset> {
    let cfg = SynthConfig::new(n, d, k, n_classes, seed, base_unknown.to_vec());
    Ok(generate(&cfg)?.0)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

fn orthonormal_directions(count: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // two Gram-Schmidt passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, SyntheticTruth)> {
    cfg.validate()?;
    let (n, d, k) = (cfg.n, cfg.d, cfg.k);

    let mut geometry = stream(cfg.seed, 1);
    let dirs = orthonormal_directions(cfg.directions_needed(), d, &mut geometry);
    let (concept_dirs, rest) = dirs.split_at(k);
    let (cue_dirs, rare_dirs) = rest.split_at(if cfg.cue_strength != 0.0 { k } else { 0 });
    let v: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| (0..k).map(|_| geometry.sample(StandardNormal)).collect())
        .collect();

    let mut concept_rng = stream(cfg.seed, 2);
    let mut ambiguity_rng = stream(cfg.seed, 3);
    let mut noise_rng = stream(cfg.noise_seed.unwrap_or(cfg.seed), 4);
    let mut flip_rng = stream(cfg.seed, 5);

    let betas: Vec<Option<Beta<f64>>> = cfg
        .base_unknown
        .iter()
        .map(|&b| match cfg.ambiguity {
            AmbiguityModel::Beta { concentration } if b > 0.0 => {
                Some(Beta::new(concentration * b, concentration * (1.0 - b)).expect("valid beta"))
            }
            _ => None,
        })
        .collect();

    let n_rare = (cfg.rare_fraction * n as f64).round() as usize;
    let mut by_hash: Vec<(u64, usize)> = (0..n)
        .map(|i| (splitmix64(i as u64 ^ splitmix64(cfg.seed ^ 0x5241_5245)), i))
        .collect();
    by_hash.sort_unstable();
    let mut rare = vec![false; n];
    for &(_, i) in by_hash.iter().take(n_rare) {
        rare[i] = true;
    }

    let mut examples = Vec::with_capacity(n);
    let mut truth_a = Vec::with_capacity(n);
    let mut truth_c = Vec::with_capacity(n);
    for (i, &is_rare) in rare.iter().enumerate() {
        let c: Vec<bool> = (0..k).map(|_| concept_rng.random_bool(0.5)).collect();

        let mut a = vec![0.0; k];
        let mut unknown_rate = vec![0.0; k];
        for j in 0..k {
            let base = cfg.base_unknown[j];
            let raw = match (cfg.ambiguity, &betas[j]) {
                (AmbiguityModel::Beta { .. }, Some(beta)) => beta.sample(&mut ambiguity_rng),
                (AmbiguityModel::Beta { .. }, None) => 0.0,
                (AmbiguityModel::UniformJitter { half_width }, _) => {
                    if half_width > 0.0 {
                        base + ambiguity_rng.random_range(-half_width..half_width)
                    } else {
                        base
                    }
                }
            };
            a[j] = raw.clamp(0.0, AMBIGUITY_CAP);
            let votes = (0..cfg.annotators)
                .filter(|_| ambiguity_rng.random_bool(a[j]))
                .count();
            unknown_rate[j] = votes as f64 / cfg.annotators as f64;
        }

        let mut x: Vec<f64> = (0..d)
            .map(|_| {
                let e: f64 = noise_rng.sample(StandardNormal);
                cfg.noise_std * e
            })
            .collect();
        for j in 0..k {
            let mut sign = if c[j] { 1.0 } else { -1.0 };
            if cfg.flip_scale > 0.0 && flip_rng.random_bool(cfg.flip_scale * a[j]) {
                sign = -sign;
            }
            let mut coef = (1.0 - cfg.attenuation * a[j]) * sign;
            let mut dir = &concept_dirs[j];
            if j == 0 && is_rare {
                match cfg.rare_pattern {
                    RarePattern::Rotate => dir = &rare_dirs[0],
                    RarePattern::SignFlip => coef = -coef,
                }
            }
            x.iter_mut()
                .zip(dir)
                .for_each(|(xi, u)| *xi += coef * u);
            if cfg.cue_strength != 0.0 {
                let cue = cfg.cue_strength * (a[j] - 0.5);
                x.iter_mut()
                    .zip(&cue_dirs[j])
                    .for_each(|(xi, w)| *xi += cue * w);
            }
        }

        let cv: Vec<f64> = c.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let scores: Vec<f64> = v.iter().map(|row| dot(row, &cv)).collect();
        let label = argmax(&scores);

        let concepts = c
            .iter()
            .zip(&unknown_rate)
            .map(|(&ci, &r)| {
                if r <= 0.5 {
                    ConceptValue::from_bool(ci)
                } else {
                    ConceptValue::Unknown
                }
            })
            .collect();

        examples.push(Example {
            id: format!("syn-{i:06}"),
            embedding: x,
            label,
            concepts,
            unknown_rate,
            text: None,
        });
        truth_a.push(a);
        truth_c.push(c);
    }

    let ds = Dataset::new(examples, d, k, cfg.n_classes, default_concept_names(k))?;
    let truth = SyntheticTruth {
        ambiguity: truth_a,
        concepts: truth_c,
        rare,
        concept_to_label: v,
        concept_directions: concept_dirs.to_vec(),
    };
    Ok((ds, truth))
}
