use crate::error::{Error, Result};

/// Exponential moving average of augmented rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    pub value: f64,
    pub decay: f64,
    pub initialized: bool,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Baseline { value: 0.0, decay, initialized: false }
    }
}

/// Adds the entropy bonus to `raw`, subtracts the baseline and updates it.
/// The first call seeds the baseline with the augmented reward and returns
/// the augmented reward unchanged.
pub fn shape_reward(raw: f64, baseline: &mut Baseline, entropy_sum: f64, entropy_weight: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::Parameter(format!("reward {raw} is not finite")));
    }
    let augmented = raw + entropy_weight * entropy_sum;
    if !baseline.initialized {
        baseline.value = augmented;
        baseline.initialized = true;
        return Ok(augmented);
    }
    let shaped = augmented - baseline.value;
    baseline.value = baseline.decay * baseline.value + (1.0 - baseline.decay) * augmented;
    Ok(shaped)
}
