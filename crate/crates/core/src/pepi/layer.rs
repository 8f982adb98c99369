use crate::error::{Error, Result};
use crate::nn::{Activation, Real};
use crate::pepi::SubMatrixPair;

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Vec<T>>,
    total: Vec<f64>,
    pre: Vec<Vec<T>>,
    activation: Activation,
}

impl<T> ForwardCache<T> {
    pub fn k(&self) -> usize {
        self.inputs.len()
    }
}

/// Gradients of the shared parameters, accumulated over all blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub s: Vec<f64>,
    pub o: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PairGrads {
    pub fn zeros<T: Real>(pair: &SubMatrixPair<T>) -> Self {
        let n = pair.in_dim() * pair.out_dim();
        Self { s: vec![0.0; n], o: vec![0.0; n], bias: vec![0.0; pair.out_dim()] }
    }
}

fn check_blocks<T>(blocks: &[Vec<T>], len: usize, what: &str) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::shape(format!("{what}: need at least one block")));
    }
    if let Some((i, b)) = blocks.iter().enumerate().find(|(_, b)| b.len() != len) {
        return Err(Error::shape(format!("{what}: block {i} has length {}, expected {len}", b.len())));
    }
    Ok(())
}

/// `out_k = act((S - O) h_k + O * total + bias)` with `total = sum_j h_j`.
///
/// Sums run over blocks in ascending index order and are carried in `f64`.
pub fn pepi_layer_forward<T: Real>(
    pair: &SubMatrixPair<T>,
    blocks: &[Vec<T>],
    activation: Activation,
) -> Result<(Vec<Vec<T>>, ForwardCache<T>)> {
    let (b, a) = (pair.in_dim(), pair.out_dim());
    check_blocks(blocks, b, "pepi forward")?;

    let mut total = vec![0.0f64; b];
    for h in blocks {
        for (t, &v) in total.iter_mut().zip(h) {
            *t += v.as_f64();
        }
    }
    let (s, o) = (pair.s(), pair.o());
    // shared term O * total + bias
    let shared: Vec<f64> = o
        .chunks_exact(b)
        .zip(pair.bias())
        .map(|(row, &bias)| row.iter().zip(&total).map(|(&w, &t)| w.as_f64() * t).sum::<f64>() + bias.as_f64())
        .collect();
    let diff: Vec<f64> = s.iter().zip(o).map(|(&x, &y)| x.as_f64() - y.as_f64()).collect();

    let mut outputs = Vec::with_capacity(blocks.len());
    let mut pre = Vec::with_capacity(blocks.len());
    for h in blocks {
        let z: Vec<T> = diff
            .chunks_exact(b)
            .zip(&shared)
            .map(|(row, &c)| T::cast_from(row.iter().zip(h).map(|(&w, &x)| w * x.as_f64()).sum::<f64>() + c))
            .collect();
        outputs.push(z.iter().map(|&v| activation.apply(v)).collect());
        pre.push(z);
    }
    debug_assert_eq!(outputs.first().map(Vec::len), Some(a));
    Ok((outputs, ForwardCache { inputs: blocks.to_vec(), total, pre, activation }))
}

/// Returns parameter gradients and per-block input gradients.
pub fn pepi_layer_backward<T: Real>(
    pair: &SubMatrixPair<T>,
    cache: &ForwardCache<T>,
    out_grads: &[Vec<T>],
) -> Result<(PairGrads, Vec<Vec<T>>)> {
    let mut grads = PairGrads::zeros(pair);
    let input_grads = backward_accumulate(pair, cache, out_grads, &mut grads)?;
    Ok((grads, input_grads))
}

/// Like [`pepi_layer_backward`] but adds into existing accumulators.
pub(crate) fn backward_accumulate<T: Real>(
    pair: &SubMatrixPair<T>,
    cache: &ForwardCache<T>,
    out_grads: &[Vec<T>],
    acc: &mut PairGrads,
) -> Result<Vec<Vec<T>>> {
    let (b, a) = (pair.in_dim(), pair.out_dim());
    let k = cache.inputs.len();
    if out_grads.len() != k {
        return Err(Error::shape(format!("pepi backward: {} gradient blocks for K = {k}", out_grads.len())));
    }
    check_blocks(out_grads, a, "pepi backward")?;
    if cache.inputs.first().map(Vec::len) != Some(b) {
        return Err(Error::shape("pepi backward: cache does not belong to this layer"));
    }
    if acc.s.len() != a * b || acc.o.len() != a * b || acc.bias.len() != a {
        return Err(Error::shape("pepi backward: accumulator has wrong size"));
    }

    // g_k = dL/dout_k * act'(pre_k)
    let g: Vec<Vec<f64>> = out_grads
        .iter()
        .zip(&cache.pre)
        .map(|(og, pre)| {
            og.iter()
                .zip(pre)
                .map(|(&d, &z)| (d * cache.activation.derivative(z)).as_f64())
                .collect()
        })
        .collect();
    let mut g_total = vec![0.0f64; a];
    for gk in &g {
        for (t, &v) in g_total.iter_mut().zip(gk) {
            *t += v;
        }
    }

    let inputs: Vec<Vec<f64>> = cache.inputs.iter().map(|h| h.iter().map(|v| v.as_f64()).collect()).collect();
    let mut row = vec![0.0f64; b];
    for i in 0..a {
        if g.iter().all(|gk| gk[i] == 0.0) {
            continue;
        }
        acc.bias[i] += g_total[i];
        // row = sum_k g_k[i] * h_k
        row.iter_mut().for_each(|v| *v = 0.0);
        for (gk, h) in g.iter().zip(&inputs) {
            let gi = gk[i];
            if gi != 0.0 {
                for (r, &x) in row.iter_mut().zip(h) {
                    *r += gi * x;
                }
            }
        }
        let s_row = &mut acc.s[i * b..(i + 1) * b];
        let o_row = &mut acc.o[i * b..(i + 1) * b];
        // dO = sum_k g_k (total - h_k)^T = G total^T - dS
        for j in 0..b {
            s_row[j] += row[j];
            o_row[j] += g_total[i] * cache.total[j] - row[j];
        }
    }

    // dh_k = (S - O)^T g_k + O^T G
    let (s, o) = (pair.s(), pair.o());
    let mut o_t_g = vec![0.0f64; b];
    for (i, &gt) in g_total.iter().enumerate() {
        if gt != 0.0 {
            for (d, &w) in o_t_g.iter_mut().zip(&o[i * b..(i + 1) * b]) {
                *d += w.as_f64() * gt;
            }
        }
    }
    let input_grads = g
        .iter()
        .map(|gk| {
            let mut d = o_t_g.clone();
            for (i, &gi) in gk.iter().enumerate() {
                if gi != 0.0 {
                    let rs = &s[i * b..(i + 1) * b];
                    let ro = &o[i * b..(i + 1) * b];
                    for ((dv, &sv), &ov) in d.iter_mut().zip(rs).zip(ro) {
                        *dv += (sv.as_f64() - ov.as_f64()) * gi;
                    }
                }
            }
            d.into_iter().map(T::cast_from).collect()
        })
        .collect();
    Ok(input_grads)
}

/// Output block of the target view.
pub fn pi_readout<T: Clone>(blocks: &[Vec<T>], target_index: usize) -> Result<Vec<T>> {
    blocks
        .get(target_index)
        .cloned()
        .ok_or_else(|| Error::invalid(format!("target index {target_index} out of range for K = {}", blocks.len())))
}
