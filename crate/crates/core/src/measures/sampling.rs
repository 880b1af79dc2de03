use rand::Rng;
use rand_distr::StandardNormal;

use super::{DisorderDistribution, Family};

/// Draws one realization of the disorder parameter.
///
/// Uncut Gaussians use the standard normal sampler; a cut Gaussian holding at
/// least half of the native mass is sampled by rejection. Every other case
/// goes through the quantile function restricted to the cut window, so the
/// cutoff is always honoured.
pub fn sample<R: Rng + ?Sized>(dist: &DisorderDistribution, rng: &mut R) -> f64 {
    if let Family::Gaussian { sigma } = *dist.family() {
        match dist.effective_cutoff() {
            None => return sigma * rng.sample::<f64, _>(StandardNormal),
            Some((lo, hi)) if dist.native_window_mass() >= 0.5 => loop {
                let x = sigma * rng.sample::<f64, _>(StandardNormal);
                if x >= lo && x <= hi {
                    return x;
                }
            },
            Some(_) => {}
        }
    }
    // open interval keeps tan() in the Cauchy quantile finite
    let u: f64 = rng.random::<f64>();
    let u = u.max(f64::MIN_POSITIVE);
    dist.quantile(u)
}
