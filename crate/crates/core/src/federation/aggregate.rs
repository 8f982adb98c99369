use crate::error::{Error, Result};
use crate::federation::{GlobalParams, LocalUpdate};

/// Sample-count weighted mean of every parameter array (FedAvg).
///
/// Sums are carried in `f64` in ascending client-id order, so the result does
/// not depend on the order of `updates`.
pub fn aggregate(updates: &[LocalUpdate]) -> Result<GlobalParams> {
    let first = updates.first().ok_or_else(|| Error::invalid("no updates to aggregate"))?;
    for u in &updates[1..] {
        first.params.check_same_shape(&u.params)?;
    }
    let total: u64 = updates.iter().map(|u| u.weight).sum();
    if total == 0 {
        return Err(Error::invalid("aggregation weights sum to zero"));
    }
    let mut ordered: Vec<&LocalUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);

    let mut out = first.params.clone();
    for (li, layer) in out.layers.iter_mut().enumerate() {
        for (ai, dst) in layer.arrays_mut().into_iter().enumerate() {
            let mut acc = vec![0.0f64; dst.len()];
            for u in &ordered {
                let w = u.weight as f64;
                let src = u.params.layers[li].arrays()[ai];
                for (a, &v) in acc.iter_mut().zip(src) {
                    *a += w * v as f64;
                }
            }
            for (d, a) in dst.iter_mut().zip(acc) {
                *d = (a / total as f64) as f32;
            }
        }
    }
    Ok(out)
}
