use crate::error::{Error, Result};
use crate::hitting::HittingModel;

use super::cloud::ParticleCloud;

/// Default probabilities below this are treated as zero.
const NEGLIGIBLE: f64 = 1e-18;

/// Smallest `x` beyond which `1 - H(eps, x)` is negligible.
pub(crate) fn tail_cutoff(hitting: &HittingModel, eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, eps.sqrt());
    while hitting.default_prob_unchecked(eps, hi) > NEGLIGIBLE {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hitting.default_prob_unchecked(eps, mid) > NEGLIGIBLE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Hitting-rate estimator `λ^ε = ε^{-1} Σ_alive w (1 - H(ε, x)) / Σ_alive w`,
/// optionally Richardson-extrapolated as `2λ^{ε/2} - λ^ε`.
pub fn intensity(cloud: &ParticleCloud, hitting: &HittingModel, eps: f64, richardson: bool) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if let Some(tab) = hitting.table() {
        if eps < tab.t_grid[0] {
            return Err(Error::param(
                "epsilon",
                format!("below the density-table resolution {}", tab.t_grid[0]),
            ));
        }
    }
    let rate = |e: f64| -> Result<f64> {
        let cut = tail_cutoff(hitting, e);
        let tail = hitting.tail_at(e);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..cloud.len() {
            if !cloud.alive[i] {
                continue;
            }
            let w = cloud.logw[i].exp();
            den += w;
            if cloud.x[i] < cut {
                num += w * tail.eval(hitting, cloud.x[i]);
            }
        }
        if den == 0.0 {
            return Err(Error::Absorbed { time: cloud.t });
        }
        Ok(num / den / e)
    };
    let l = rate(eps)?;
    if richardson {
        Ok((2.0 * rate(0.5 * eps)? - l).max(0.0))
    } else {
        Ok(l)
    }
}

/// Alive particles reweighted by `1 - H(ε, x)`: the conditional law of the
/// firm value given the observations and default in the next `ε`.
pub fn default_conditional_cloud(cloud: &ParticleCloud, hitting: &HittingModel, eps: f64) -> Result<ParticleCloud> {
    if !(eps > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let mut out = ParticleCloud {
        x: Vec::new(),
        logw: Vec::new(),
        alive: Vec::new(),
        dead_mass: 0.0,
        log_norm: 0.0,
        t: cloud.t,
        n_resamples: cloud.n_resamples,
    };
    for i in 0..cloud.len() {
        if !cloud.alive[i] {
            continue;
        }
        let p = hitting.default_prob_unchecked(eps, cloud.x[i]);
        if p > 0.0 {
            out.x.push(cloud.x[i]);
            out.logw.push(cloud.logw[i] + p.ln());
            out.alive.push(true);
        }
    }
    if out.x.is_empty() {
        if cloud.n_alive() == 0 {
            return Err(Error::Absorbed { time: cloud.t });
        }
        return Err(Error::Degenerate(format!(
            "every hitting probability over ε = {eps} underflows; use a larger ε"
        )));
    }
    out.renormalize();
    let total: f64 = out.logw.iter().map(|l| l.exp()).sum();
    for lw in out.logw.iter_mut() {
        *lw -= total.ln();
    }
    out.log_norm = 0.0;
    Ok(out)
}
