//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::Rng;

use super::param::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over probes of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Name, flat index, analytic and numeric gradient of the worst probe.
    pub worst: Option<(String, usize, f64, f64)>,
    pub probes: usize,
    /// Probes skipped because `θ ± ε` landed in a different linear piece of
    /// some ReLU, max-pool or L1 term than `θ`.
    pub kink_crossings: usize,
}

fn evaluate<F>(forward: &mut F, store: &ParamStore) -> Result<(f64, u64)>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    Ok((tape.value(loss).item(), tape.kink_signature()))
}

/// Probes `per_param` random coordinates of every trainable parameter (all
/// of them when fewer; probes that cross a kink are replaced while spare
/// coordinates remain) and compares the backward gradient against central
/// differences with step `eps`. Leaves parameter values untouched and
/// gradients zeroed.
pub fn grad_check<F, R>(
    mut forward: F,
    store: &mut ParamStore,
    eps: f64,
    per_param: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
    R: Rng + ?Sized,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    tape.backward(loss, store)?;
    let base_signature = tape.kink_signature();
    drop(tape);
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();
    store.zero_grads();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        probes: 0,
        kink_crossings: 0,
    };
    for id in store.ids().collect::<Vec<_>>() {
        if !store.get(id).trainable {
            continue;
        }
        let numel = store.get(id).value.numel();
        // Spare candidates replace probes lost to kink crossings.
        let candidates = numel.min(per_param + per_param / 2 + 8);
        let coords = sample(rng, numel, candidates).into_vec();
        let mut valid = 0;
        for i in coords {
            if valid == per_param {
                break;
            }
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + eps;
            let plus = evaluate(&mut forward, store);
            store.get_mut(id).value.data_mut()[i] = orig - eps;
            let minus = evaluate(&mut forward, store);
            store.get_mut(id).value.data_mut()[i] = orig;
            let ((lp, sp), (lm, sm)) = (plus?, minus?);
            if sp != base_signature || sm != base_signature {
                report.kink_crossings += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[id.0][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.probes += 1;
            valid += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((store.get(id).name.clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
