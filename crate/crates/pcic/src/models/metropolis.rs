//! Seeded Gaussian random-walk Metropolis sampler.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::core::{PosteriorDraws, Provenance};
use crate::error::{Error, Result};

/// Acceptance-rate band outside which a warning is recorded in provenance.
const ACCEPTANCE_BAND: (f64, f64) = (0.05, 0.8);

/// Runs a Gaussian random-walk Metropolis chain on an unnormalized log
/// density and returns the post-burn-in draws thinned by `thin`.
///
/// `steps` counts all iterations including burn-in, so the number of
/// retained draws is `(steps - burn_in) / thin`. The recorded acceptance
/// rate covers the whole chain; rates outside [0.05, 0.8] add a warning to
/// the provenance rather than failing the run.
pub fn rw_metropolis<F>(
    logdensity: F,
    init: &[f64],
    steps: usize,
    proposal_scale: f64,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<PosteriorDraws>
where
    F: Fn(&[f64]) -> f64,
{
    if proposal_scale <= 0.0 {
        return Err(Error::Domain(format!(
            "proposal scale must be positive, got {proposal_scale}"
        )));
    }
    if thin == 0 {
        return Err(Error::Domain("thinning must be at least 1".to_string()));
    }
    if steps < burn_in + thin {
        return Err(Error::Dimension(format!(
            "{steps} steps cannot cover burn-in {burn_in} plus thinning {thin}"
        )));
    }
    let p = init.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = init.to_vec();
    let mut current_ld = logdensity(&current);
    if !current_ld.is_finite() {
        return Err(Error::Sampler(format!(
            "log density is not finite at the initial point ({current_ld})"
        )));
    }
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; p];
    let mut draws = Vec::with_capacity((steps - burn_in) / thin);
    for t in 1..=steps {
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            proposal[j] = current[j] + proposal_scale * z;
        }
        let proposal_ld = logdensity(&proposal);
        let lu: f64 = rng.random::<f64>().ln();
        if proposal_ld.is_finite() && lu < proposal_ld - current_ld {
            current.copy_from_slice(&proposal);
            current_ld = proposal_ld;
            accepted += 1;
        }
        if t > burn_in && (t - burn_in) % thin == 0 {
            draws.push(current.clone());
        }
    }
    let rate = accepted as f64 / steps as f64;
    let mut provenance = Provenance {
        sampler: "rw-metropolis".to_string(),
        seed,
        burn_in,
        thinning: thin,
        acceptance_rate: Some(rate),
        warnings: Vec::new(),
    };
    if rate < ACCEPTANCE_BAND.0 || rate > ACCEPTANCE_BAND.1 {
        provenance.warnings.push(format!(
            "acceptance rate {rate:.3} outside [{}, {}]",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        ));
    }
    PosteriorDraws::from_rows(draws, provenance)
}

/// Estimates a proposal scale from a 500-step pilot run: 2.38/sqrt(p) times
/// the mean componentwise standard deviation of the pilot chain.
pub fn pilot_proposal_scale<F>(logdensity: &F, init: &[f64], seed: u64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let p = init.len();
    let base = 2.38 / (p as f64).sqrt();
    let pilot = match rw_metropolis(logdensity, init, 500, 0.25, 0, 1, seed) {
        Ok(d) => d,
        Err(_) => return base * 0.1,
    };
    let m = pilot.count();
    let mean = crate::core::posterior_mean(&pilot);
    let mut avg_sd = 0.0;
    for j in 0..p {
        let var: f64 = (0..m)
            .map(|k| {
                let d = pilot.draw(k)[j] - mean[j];
                d * d
            })
            .sum::<f64>()
            / m as f64;
        avg_sd += var.sqrt();
    }
    avg_sd /= p as f64;
    base * avg_sd.max(1e-3)
}
