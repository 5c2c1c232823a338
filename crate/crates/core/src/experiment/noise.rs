use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `N(0, (δ · max|u|)²)`
    #[default]
    Gaussian,
    /// `U[-δ, δ]`
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub delta: f64,
    pub seed: u64,
}

/// Add i.i.d. noise from a generator seeded with `model.seed`.
///
/// `reference_max` is `max|u|` over the exact observation; it scales the Gaussian
/// standard deviation and is ignored for uniform noise.
pub fn add_noise(observation: &[f64], model: &NoiseModel, reference_max: f64) -> Vec<f64> {
    if model.delta == 0.0 {
        return observation.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    match model.kind {
        NoiseKind::Gaussian => {
            let sigma = model.delta * reference_max.abs();
            if sigma == 0.0 {
                return observation.to_vec();
            }
            let dist = Normal::new(0.0, sigma).expect("finite positive sigma");
            observation
                .iter()
                .map(|v| v + dist.sample(&mut rng))
                .collect()
        }
        NoiseKind::Uniform => {
            let dist = Uniform::new_inclusive(-model.delta, model.delta);
            observation
                .iter()
                .map(|v| v + dist.sample(&mut rng))
                .collect()
        }
    }
}
