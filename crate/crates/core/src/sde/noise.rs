//! Counter-indexed Brownian noise. A plan is a pure function of
//! `(master_seed, stream, path_index)`: the key is derived from the seed and
//! stream tag, the ChaCha stream number is the path index, and increments are
//! drawn in `(step, channel)` order. Policy randomization uses a sibling
//! stream so it never consumes Brownian draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{invalid, Result};

/// Stream tag of the state noise `B` in single-state simulators.
pub const STATE_STREAM: u32 = 0;

/// Stream tag of agent `i`'s observation channel (`i = 0` for a POMDP).
pub fn observation_stream(agent: usize) -> u32 {
    1 + agent as u32
}

/// Stream tag of agent `i`'s local state noise in coupled-team models.
pub fn agent_state_stream(agent: usize) -> u32 {
    64 + agent as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseId {
    pub master_seed: u64,
    pub stream: u32,
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    pub id: NoiseId,
    pub channels: usize,
    pub delta: f64,
    /// `inner_steps × channels`, row-major by step.
    pub increments: Vec<f64>,
    /// One uniform variate per macro step, for policy randomization.
    pub uniforms: Vec<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for a labelled sub-experiment of a run.
pub fn derive_seed(master_seed: u64, label: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(label ^ 0xD1B5_4A32_D192_ED03))
}

fn stream_rng(master_seed: u64, tag: u64, path_index: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(tag));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path_index);
    rng
}

impl NoisePlan {
    pub fn generate(grid: &TimeGrid, channels: usize, master_seed: u64, path_index: u64, stream: u32) -> Self {
        assert!(channels >= 1, "noise plan needs at least one channel");
        let delta = grid.delta();
        let scale = delta.sqrt();
        let mut rng = stream_rng(master_seed, 2 * stream as u64, path_index);
        let increments = (0..grid.inner_steps() * channels)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                scale * z
            })
            .collect();
        let mut urng = stream_rng(master_seed, 2 * stream as u64 + 1, path_index);
        let uniforms = (0..grid.macro_steps()).map(|_| urng.random::<f64>()).collect();
        Self {
            id: NoiseId {
                master_seed,
                stream,
                path_index,
            },
            channels,
            delta,
            increments,
            uniforms,
        }
    }

    /// All-zero increments; policy uniforms fixed at 0.5. For deterministic fixtures.
    pub fn zeros(grid: &TimeGrid, channels: usize) -> Self {
        Self {
            id: NoiseId {
                master_seed: 0,
                stream: u32::MAX,
                path_index: 0,
            },
            channels,
            delta: grid.delta(),
            increments: vec![0.0; grid.inner_steps() * channels],
            uniforms: vec![0.5; grid.macro_steps()],
        }
    }

    pub fn inner_steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    pub fn step(&self, j: usize) -> &[f64] {
        &self.increments[j * self.channels..(j + 1) * self.channels]
    }

    /// Sums consecutive blocks of `factor` increments: the same Brownian path
    /// seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.inner_steps() % factor != 0 {
            return Err(invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.inner_steps()
            )));
        }
        let c = self.channels;
        let steps = self.inner_steps() / factor;
        let mut increments = vec![0.0; steps * c];
        for s in 0..steps {
            for f in 0..factor {
                let src = self.step(s * factor + f);
                for ch in 0..c {
                    increments[s * c + ch] += src[ch];
                }
            }
        }
        Ok(Self {
            id: self.id,
            channels: c,
            delta: self.delta * factor as f64,
            increments,
            uniforms: self.uniforms.clone(),
        })
    }

    /// `B` at the macro-step boundaries `0, h, …, T` for channel-major use.
    pub fn macro_partial_sums(&self, inner_refine: usize) -> Vec<f64> {
        let c = self.channels;
        let steps = self.inner_steps() / inner_refine;
        let mut out = vec![0.0; (steps + 1) * c];
        for k in 0..steps {
            for ch in 0..c {
                let mut s = out[k * c + ch];
                for j in 0..inner_refine {
                    s += self.step(k * inner_refine + j)[ch];
                }
                out[(k + 1) * c + ch] = s;
            }
        }
        out
    }
}

/// `len` uniform variates in `[0, 1)` keyed like a noise plan.
pub fn uniform_vector(master_seed: u64, stream: u32, path_index: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(master_seed, 2 * stream as u64, path_index);
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Brownian increments for `(master_seed, path_index)` on the state stream.
pub fn sample_brownian(grid: &TimeGrid, channels: usize, master_seed: u64, path_index: u64) -> NoisePlan {
    NoisePlan::generate(grid, channels, master_seed, path_index, STATE_STREAM)
}

/// Monte Carlo sampling parameters shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// When set, plans are drawn at this inner refinement and coarsened to the
    /// requested grid, so runs at different `δ` share one Brownian path.
    #[serde(default)]
    pub refine_from: Option<usize>,
}

impl McConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            refine_from: None,
        }
    }

    pub fn with_refinement(mut self, finest_inner_refine: usize) -> Self {
        self.refine_from = Some(finest_inner_refine);
        self
    }

    pub fn plan(&self, grid: &TimeGrid, channels: usize, path_index: u64, stream: u32) -> Result<NoisePlan> {
        match self.refine_from {
            Some(fine) if fine != grid.inner_refine() => {
                if fine % grid.inner_refine() != 0 {
                    return Err(invalid(format!(
                        "refinement {fine} is not a multiple of {}",
                        grid.inner_refine()
                    )));
                }
                let fine_grid = grid.with_inner_refine(fine)?;
                NoisePlan::generate(&fine_grid, channels, self.seed, path_index, stream)
                    .coarsen(fine / grid.inner_refine())
            }
            _ => Ok(NoisePlan::generate(grid, channels, self.seed, path_index, stream)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_grid_has_one_increment_per_channel() {
        let g = TimeGrid::new(1.0, 1, 1).unwrap();
        let p = sample_brownian(&g, 3, 7, 0);
        assert_eq!(p.increments.len(), 3);
        assert_eq!(p.delta, 1.0);
        assert_eq!(p.uniforms.len(), 1);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let g = TimeGrid::new(1.0, 4, 8).unwrap();
        let a = sample_brownian(&g, 2, 99, 12);
        let b = sample_brownian(&g, 2, 99, 12);
        assert_eq!(a, b);
        let c = sample_brownian(&g, 2, 99, 13);
        assert_ne!(a.increments, c.increments);
        let d = NoisePlan::generate(&g, 2, 99, 12, 1);
        assert_ne!(a.increments, d.increments);
        assert_ne!(a.uniforms, d.uniforms);
    }

    #[test]
    fn first_increment_variance_is_delta() {
        let g = TimeGrid::new(1.0, 2, 4).unwrap();
        let n = 100_000;
        let sq: Vec<f64> = (0..n)
            .map(|i| sample_brownian(&g, 1, 5, i).increments[0].powi(2))
            .collect();
        let e = crate::EstimateWithError::from_samples(&sq);
        assert!(e.within(g.delta(), 3.0), "{e:?} vs {}", g.delta());
    }

    #[test]
    fn coarsening_preserves_endpoint() {
        let g = TimeGrid::new(1.0, 2, 8).unwrap();
        let fine = sample_brownian(&g, 2, 3, 4);
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.inner_steps(), 4);
        let a = fine.macro_partial_sums(8);
        let b = coarse.macro_partial_sums(2);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn refined_config_coarsens() {
        let g = TimeGrid::new(1.0, 2, 4).unwrap();
        let mc = McConfig::new(1, 11).with_refinement(16);
        let p = mc.plan(&g, 1, 0, STATE_STREAM).unwrap();
        let direct = NoisePlan::generate(&g.with_inner_refine(16).unwrap(), 1, 11, 0, STATE_STREAM)
            .coarsen(4)
            .unwrap();
        assert_eq!(p, direct);
    }
}
