//! Row-major dense kernels used by the tiny encoder.

/// `y[r, o] = b[o] + sum_i x[r, i] * w[i, o]`
pub(crate) fn linear(x: &[f64], rows: usize, w: &[f64], n_in: usize, n_out: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * n_in);
    debug_assert_eq!(w.len(), n_in * n_out);
    let mut y = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yo, &wio) in yr.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *yo += xi * wio;
            }
        }
    }
    y
}

/// Accumulates `dw`, `db` and returns `dx` for [`linear`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    w: &[f64],
    n_in: usize,
    n_out: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        let xr = &x[r * n_in..(r + 1) * n_in];
        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
        for i in 0..n_in {
            let wi = &w[i * n_out..(i + 1) * n_out];
            let dwi = &mut dw[i * n_out..(i + 1) * n_out];
            let xi = xr[i];
            let mut acc = 0.0;
            for o in 0..n_out {
                dwi[o] += xi * dyr[o];
                acc += dyr[o] * wi[o];
            }
            dxr[i] = acc;
        }
    }
    dx
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], rows: usize, dim: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * dim];
    let mut xhat = vec![0.0; rows * dim];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let mean = xr.iter().sum::<f64>() / dim as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..dim {
            let h = (xr[j] - mean) * is;
            xhat[r * dim + j] = h;
            y[r * dim + j] = g[j] * h + b[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    cache: &LnCache,
    rows: usize,
    dim: usize,
    g: &[f64],
    dy: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * dim];
    let n = dim as f64;
    for r in 0..rows {
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        let dyr = &dy[r * dim..(r + 1) * dim];
        let mut sum = 0.0;
        let mut sum_xh = 0.0;
        let mut dxhat = vec![0.0; dim];
        for j in 0..dim {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            sum += dxhat[j];
            sum_xh += dxhat[j] * xh[j];
        }
        let is = cache.inv_std[r];
        for j in 0..dim {
            dx[r * dim + j] = is / n * (n * dxhat[j] - sum - xh[j] * sum_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Gradient w.r.t. logits given the gradient w.r.t. softmax outputs.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs.iter().zip(dprobs).map(|(p, d)| p * (d - dot)).collect()
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
