//! Embedding arithmetic: normalization, cosine distance, and the long-term /
//! short-term update rules.
//!
//! The long-term embedding only absorbs detections whose occlusion score
//! clears a visibility threshold, so occluders cannot contaminate it. The
//! short-term embedding absorbs every matched detection, with a weight that
//! shrinks as visibility drops.

use crate::error::{Error, Result};

/// Norms below this are treated as the zero vector.
const NORM_EPS: f64 = 1e-12;

/// How the short-term update weight is derived from the occlusion score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    /// `beta = alpha * score` (default): barely-visible detections barely move
    /// the short-term embedding.
    VisibilityScaled,
    /// `beta = alpha` regardless of score, for ablations.
    Constant,
}

/// Parameters shared by both update rules.
#[derive(Debug, Clone, Copy)]
pub struct UpdateParams {
    /// Fixed long-term blend weight.
    pub alpha: f64,
    /// Minimum occlusion score for a detection to update the long-term
    /// embedding.
    pub occlusion_threshold: f64,
    pub beta_mode: BetaMode,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            occlusion_threshold: 0.5,
            beta_mode: BetaMode::VisibilityScaled,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.occlusion_threshold) {
            return Err(Error::invalid(format!(
                "occlusion threshold {} outside [0,1]",
                self.occlusion_threshold
            )));
        }
        Ok(())
    }

    fn beta(&self, score: f64) -> f64 {
        match self.beta_mode {
            BetaMode::VisibilityScaled => self.alpha * score,
            BetaMode::Constant => self.alpha,
        }
    }
}

/// `v / ||v||`. Errors on (near-)zero vectors.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < NORM_EPS {
        return Err(Error::invalid("cannot normalize a zero-length vector"));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// `1 - cos(a, b)`, in [0, 2]. Errors on zero vectors or dimension mismatch.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < NORM_EPS || nb < NORM_EPS {
        return Err(Error::invalid("cosine distance of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Long-term rule: when the score clears the threshold, blend in the
/// normalized detection embedding at weight alpha and renormalize; otherwise
/// return the input untouched (bit-for-bit).
pub fn update_long(
    long: &[f64],
    embedding: &[f64],
    occlusion_score: f64,
    params: &UpdateParams,
) -> Result<Vec<f64>> {
    if occlusion_score < params.occlusion_threshold {
        return Ok(long.to_vec());
    }
    blend(long, embedding, params.alpha)
}

/// Short-term rule: always blend, at weight `beta(score)`.
pub fn update_short(
    short: &[f64],
    embedding: &[f64],
    occlusion_score: f64,
    params: &UpdateParams,
) -> Result<Vec<f64>> {
    blend(short, embedding, params.beta(occlusion_score))
}

fn blend(base: &[f64], embedding: &[f64], weight: f64) -> Result<Vec<f64>> {
    if base.len() != embedding.len() {
        return Err(Error::invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            base.len(),
            embedding.len()
        )));
    }
    let unit = normalize(embedding)?;
    let mixed: Vec<f64> = base
        .iter()
        .zip(&unit)
        .map(|(f, e)| f + weight * e)
        .collect();
    normalize(&mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalize(v).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        let u = vec![0.6, 0.8];
        assert_eq!(normalize(&u).unwrap(), u);
        assert!(normalize(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let a = vec![1.0, 0.0];
        assert_eq!(cosine_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(cosine_distance(&a, &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&a, &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(cosine_distance(&a, &[0.0, 0.0]).is_err());
        assert!(cosine_distance(&a, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn update_long_occluded_is_identity() {
        let p = UpdateParams::default();
        let f = unit(&[0.3, -0.7, 0.64]);
        let out = update_long(&f, &[9.0, 9.0, 9.0], 0.0, &p).unwrap();
        assert_eq!(out, f); // bit-for-bit
        let out = update_long(&f, &[9.0, 9.0, 9.0], 0.49, &p).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn update_long_hand_arithmetic() {
        let p = UpdateParams::default();
        let out = update_long(&[1.0, 0.0], &[0.0, 2.0], 1.0, &p).unwrap();
        assert!((out[0] - 0.98058).abs() < 1e-5);
        assert!((out[1] - 0.19612).abs() < 1e-5);
    }

    #[test]
    fn update_long_parallel_fixed_point() {
        let p = UpdateParams::default();
        let f = unit(&[0.6, 0.8]);
        let out = update_long(&f, &[1.2, 1.6], 1.0, &p).unwrap();
        for (a, b) in out.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_short_zero_score_is_unmoved() {
        let p = UpdateParams::default();
        let f = unit(&[0.3, -0.7, 0.64]);
        let out = update_short(&f, &[9.0, 1.0, -4.0], 0.0, &p).unwrap();
        for (a, b) in out.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_short_full_visibility_matches_long_arithmetic() {
        let p = UpdateParams::default();
        let out = update_short(&[1.0, 0.0], &[0.0, 2.0], 1.0, &p).unwrap();
        assert!((out[0] - 0.98058).abs() < 1e-5);
        assert!((out[1] - 0.19612).abs() < 1e-5);
    }

    #[test]
    fn update_short_parallel_fixed_point() {
        let p = UpdateParams::default();
        let f = unit(&[-0.28, 0.96]);
        for s in [0.1, 0.5, 1.0] {
            let out = update_short(&f, &[-0.56, 1.92], s, &p).unwrap();
            for (a, b) in out.iter().zip(&f) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_beta_mode_ignores_score() {
        let p = UpdateParams {
            beta_mode: BetaMode::Constant,
            ..Default::default()
        };
        let f = unit(&[1.0, 0.0]);
        let a = update_short(&f, &[0.0, 1.0], 0.0, &p).unwrap();
        let b = update_short(&f, &[0.0, 1.0], 1.0, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_embedding_rejected_when_update_applies() {
        let p = UpdateParams::default();
        let f = unit(&[1.0, 0.0]);
        assert!(update_long(&f, &[0.0, 0.0], 1.0, &p).is_err());
        assert!(update_short(&f, &[0.0, 0.0], 1.0, &p).is_err());
        // Below the threshold the long update never touches the embedding.
        assert!(update_long(&f, &[0.0, 0.0], 0.2, &p).is_ok());
    }

    #[test]
    fn updates_preserve_unit_norm() {
        let p = UpdateParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let dim = rng.random_range(2..32usize);
            let f = unit(
                &(0..dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            );
            let e: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if e.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-6 {
                continue;
            }
            let s = rng.random_range(0.0..=1.0);
            let l = update_long(&f, &e, s, &p).unwrap();
            let sh = update_short(&f, &e, s, &p).unwrap();
            let nl = l.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ns = sh.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((nl - 1.0).abs() < 1e-6);
            assert!((ns - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn long_embedding_survives_occluder_stream() {
        // Alternate own-identity updates (score 1) with occluder updates
        // (score 0); the long-term embedding must equal the occluder-free run
        // exactly, while the short-term one is free to move.
        let p = UpdateParams::default();
        let anchor = unit(&[1.0, 0.0, 0.0, 0.0]);
        let occluder = unit(&[0.0, 1.0, 0.0, 0.0]);

        let mut with_occ = anchor.clone();
        let mut without = anchor.clone();
        for k in 0..100 {
            if k % 2 == 0 {
                with_occ = update_long(&with_occ, &anchor, 1.0, &p).unwrap();
                without = update_long(&without, &anchor, 1.0, &p).unwrap();
            } else {
                with_occ = update_long(&with_occ, &occluder, 0.0, &p).unwrap();
            }
        }
        assert_eq!(with_occ, without);
        assert_eq!(
            cosine_distance(&with_occ, &anchor).unwrap(),
            cosine_distance(&without, &anchor).unwrap()
        );
    }

    #[test]
    fn single_update_pulls_toward_detection() {
        let p = UpdateParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let f = unit(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3]);
            let e: Vec<f64> = vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let eu = match normalize(&e) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let before = cosine_distance(&f, &eu).unwrap();
            if !(1e-9..=2.0 - 1e-9).contains(&before) {
                continue; // parallel or antipodal: no strict pull
            }
            let after_l = cosine_distance(&update_long(&f, &e, 1.0, &p).unwrap(), &eu).unwrap();
            let s = rng.random_range(0.05..1.0);
            let after_s = cosine_distance(&update_short(&f, &e, s, &p).unwrap(), &eu).unwrap();
            assert!(after_l < before);
            assert!(after_s < before);
        }
    }
}
