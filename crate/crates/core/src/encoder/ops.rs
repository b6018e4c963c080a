//! Row-major dense kernels and their backward passes.
//!
//! Activations are `[rows × cols]` slices; weights are `[in × out]` so that a
//! linear map is `y = x·W + b`.

pub(crate) fn linear(x: &[f64], rows: usize, inp: usize, w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inp);
    debug_assert_eq!(w.len(), inp * out);
    let mut y = vec![0.0; rows * out];
    for r in 0..rows {
        let yr = &mut y[r * out..(r + 1) * out];
        yr.copy_from_slice(b);
        for (i, &xi) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yo, &wio) in yr.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                *yo += xi * wio;
            }
        }
    }
    y
}

/// Accumulates into `dx`, `dw` and `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    rows: usize,
    inp: usize,
    w: &[f64],
    out: usize,
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    for r in 0..rows {
        let dyr = &dy[r * out..(r + 1) * out];
        let xr = &x[r * inp..(r + 1) * inp];
        for (dbo, &d) in db.iter_mut().zip(dyr) {
            *dbo += d;
        }
        for i in 0..inp {
            let wi = &w[i * out..(i + 1) * out];
            let mut acc = 0.0;
            for (&d, &wio) in dyr.iter().zip(wi) {
                acc += d * wio;
            }
            dx[r * inp + i] += acc;
            let xi = xr[i];
            if xi != 0.0 {
                for (dwio, &d) in dw[i * out..(i + 1) * out].iter_mut().zip(dyr) {
                    *dwio += xi * d;
                }
            }
        }
    }
}

/// Per-row statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerNormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(
    x: &[f64],
    rows: usize,
    dim: usize,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormCache) {
    let mut y = vec![0.0; rows * dim];
    let mut xhat = vec![0.0; rows * dim];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let mean = xr.iter().sum::<f64>() / dim as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..dim {
            let h = (xr[c] - mean) * rs;
            xhat[r * dim + c] = h;
            y[r * dim + c] = gain[c] * h + bias[c];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward(
    dy: &[f64],
    cache: &LayerNormCache,
    rows: usize,
    dim: usize,
    gain: &[f64],
    dx: &mut [f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) {
    let mut dxhat = vec![0.0; dim];
    for r in 0..rows {
        let dyr = &dy[r * dim..(r + 1) * dim];
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for c in 0..dim {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xh[c];
        }
        mean_d /= dim as f64;
        mean_dx /= dim as f64;
        let rs = cache.rstd[r];
        for c in 0..dim {
            dx[r * dim + c] += rs * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
pub(crate) fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

pub(crate) fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

/// Numerically stable softmax of one row in place; `-inf` entries become 0.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - m).exp() };
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
