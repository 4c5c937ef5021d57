//! Batched forward/backward kernels for each layer kind.
//!
//! Tensors are batch-major: sequences are `[batch, length, channels]` and
//! vectors are `[batch, features]`, all row-major.

use crate::linalg::{accumulate_column_sums, add_row_bias, gemm, Op};

/// Zero padding on each side of a stride-1 "same" convolution. Odd
/// leftovers go to the end.
pub fn same_padding(filter_size: usize) -> (usize, usize) {
    let total = filter_size - 1;
    let left = total / 2;
    (left, total - left)
}

/// Unrolls every length-`filter_size` patch of the zero-padded input into one
/// row of a `[batch·length, filter_size·channels]` matrix.
pub fn im2col(x: &[f64], batch: usize, len: usize, ch: usize, filter_size: usize) -> Vec<f64> {
    let (left, _) = same_padding(filter_size);
    let width = filter_size * ch;
    let mut patches = vec![0.0; batch * len * width];
    for b in 0..batch {
        let xb = &x[b * len * ch..(b + 1) * len * ch];
        for t in 0..len {
            let row = &mut patches[(b * len + t) * width..(b * len + t + 1) * width];
            for j in 0..filter_size {
                let src = t as isize - left as isize + j as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let src = src as usize;
                row[j * ch..(j + 1) * ch].copy_from_slice(&xb[src * ch..(src + 1) * ch]);
            }
        }
    }
    patches
}

/// Scatter-adds patch gradients back onto the input positions they came from.
pub fn col2im(dpatches: &[f64], batch: usize, len: usize, ch: usize, filter_size: usize) -> Vec<f64> {
    let (left, _) = same_padding(filter_size);
    let width = filter_size * ch;
    let mut dx = vec![0.0; batch * len * ch];
    for b in 0..batch {
        let dxb = &mut dx[b * len * ch..(b + 1) * len * ch];
        for t in 0..len {
            let row = &dpatches[(b * len + t) * width..(b * len + t + 1) * width];
            for j in 0..filter_size {
                let dst = t as isize - left as isize + j as isize;
                if dst < 0 || dst >= len as isize {
                    continue;
                }
                let dst = dst as usize;
                for (d, g) in dxb[dst * ch..(dst + 1) * ch].iter_mut().zip(&row[j * ch..(j + 1) * ch]) {
                    *d += g;
                }
            }
        }
    }
    dx
}

/// `[batch, len, ch] -> [batch, len, filters]`; returns output and patches.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward(
    x: &[f64],
    batch: usize,
    len: usize,
    ch: usize,
    filter_size: usize,
    filters: usize,
    kernel: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let patches = im2col(x, batch, len, ch, filter_size);
    let rows = batch * len;
    let mut out = vec![0.0; rows * filters];
    gemm(
        rows,
        filter_size * ch,
        filters,
        &patches,
        Op::N,
        kernel,
        Op::N,
        0.0,
        &mut out,
    );
    add_row_bias(&mut out, bias);
    (out, patches)
}

/// Accumulates kernel/bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    patches: &[f64],
    dy: &[f64],
    batch: usize,
    len: usize,
    ch: usize,
    filter_size: usize,
    filters: usize,
    kernel: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let rows = batch * len;
    let width = filter_size * ch;
    if let Some((dk, db)) = grads {
        gemm(width, rows, filters, patches, Op::T, dy, Op::N, 1.0, dk);
        accumulate_column_sums(db, dy);
    }
    if !want_dx {
        return None;
    }
    let mut dpatches = vec![0.0; rows * width];
    gemm(rows, filters, width, dy, Op::N, kernel, Op::T, 0.0, &mut dpatches);
    Some(col2im(&dpatches, batch, len, ch, filter_size))
}

pub fn dense_forward(x: &[f64], batch: usize, n_in: usize, units: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; batch * units];
    gemm(batch, n_in, units, x, Op::N, weight, Op::N, 0.0, &mut out);
    add_row_bias(&mut out, bias);
    out
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    n_in: usize,
    units: usize,
    weight: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
    want_dx: bool,
) -> Option<Vec<f64>> {
    if let Some((dw, db)) = grads {
        gemm(n_in, batch, units, x, Op::T, dy, Op::N, 1.0, dw);
        accumulate_column_sums(db, dy);
    }
    if !want_dx {
        return None;
    }
    let mut dx = vec![0.0; batch * n_in];
    gemm(batch, units, n_in, dy, Op::N, weight, Op::T, 0.0, &mut dx);
    Some(dx)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one recurrent direction. Gate blocks are ordered
/// (update, reset, candidate) along the `3·units` axis.
#[derive(Clone, Copy)]
pub struct GruWeights<'a> {
    pub input: &'a [f64],
    pub recurrent: &'a [f64],
    pub bias: &'a [f64],
    pub in_dim: usize,
    pub units: usize,
}

/// Per-step activations kept for backpropagation through time, stored in
/// processing order as `[steps, batch, units]`.
#[derive(Clone, Debug)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    batch: usize,
    len: usize,
    reverse: bool,
}

/// One update of the gated recurrent cell for a batch:
/// `h' = (1 − z)⊙h + z⊙ñ`, `ñ = tanh(Wₙx + r⊙(Uₙh) + bₙ)`.
///
/// `xg` holds `W x + b` for the batch (`[batch, 3·units]`), `hg` holds `U h`.
/// Writes `h'` and the gate values.
#[allow(clippy::too_many_arguments)]
fn gru_cell(
    xg: &[f64],
    hg: &[f64],
    h: &[f64],
    units: usize,
    h_out: &mut [f64],
    z_out: &mut [f64],
    r_out: &mut [f64],
    n_out: &mut [f64],
    hn_out: &mut [f64],
) {
    let batch = h.len() / units;
    let g3 = 3 * units;
    for b in 0..batch {
        let xr = &xg[b * g3..(b + 1) * g3];
        let hr = &hg[b * g3..(b + 1) * g3];
        for j in 0..units {
            let k = b * units + j;
            let z = sigmoid(xr[j] + hr[j]);
            let r = sigmoid(xr[units + j] + hr[units + j]);
            let hn = hr[2 * units + j];
            let n = (xr[2 * units + j] + r * hn).tanh();
            h_out[k] = (1.0 - z) * h[k] + z * n;
            z_out[k] = z;
            r_out[k] = r;
            n_out[k] = n;
            hn_out[k] = hn;
        }
    }
}

/// Single step of the cell on explicit vectors, used by the public
/// cell API and tests.
pub fn gru_step(x: &[f64], h: &[f64], w: GruWeights<'_>) -> Vec<f64> {
    let batch = h.len() / w.units;
    let g3 = 3 * w.units;
    let mut xg = vec![0.0; batch * g3];
    gemm(batch, w.in_dim, g3, x, Op::N, w.input, Op::N, 0.0, &mut xg);
    add_row_bias(&mut xg, w.bias);
    let mut hg = vec![0.0; batch * g3];
    gemm(batch, w.units, g3, h, Op::N, w.recurrent, Op::N, 0.0, &mut hg);
    let n = batch * w.units;
    let (mut out, mut z, mut r, mut c, mut hn) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    gru_cell(&xg, &hg, h, w.units, &mut out, &mut z, &mut r, &mut c, &mut hn);
    out
}

/// Runs one direction over `[batch, len, in_dim]`, starting from a zero state.
/// Returns the hidden state at every original time index (`[batch, len, units]`).
pub fn gru_sequence_forward(
    x: &[f64],
    batch: usize,
    len: usize,
    w: GruWeights<'_>,
    reverse: bool,
    keep_cache: bool,
) -> (Vec<f64>, Option<GruCache>) {
    let units = w.units;
    let g3 = 3 * units;
    let mut xg = vec![0.0; batch * len * g3];
    gemm(batch * len, w.in_dim, g3, x, Op::N, w.input, Op::N, 0.0, &mut xg);
    add_row_bias(&mut xg, w.bias);

    let bu = batch * units;
    let mut out = vec![0.0; batch * len * units];
    let mut h = vec![0.0; bu];
    let mut h_next = vec![0.0; bu];
    let mut hg = vec![0.0; batch * g3];
    let mut xg_t = vec![0.0; batch * g3];
    let cap = if keep_cache { len * bu } else { bu };
    let (mut zs, mut rs, mut ns, mut hns) = (vec![0.0; cap], vec![0.0; cap], vec![0.0; cap], vec![0.0; cap]);
    let mut h_prevs = if keep_cache { vec![0.0; len * bu] } else { Vec::new() };

    for s in 0..len {
        let t = if reverse { len - 1 - s } else { s };
        for b in 0..batch {
            xg_t[b * g3..(b + 1) * g3].copy_from_slice(&xg[(b * len + t) * g3..(b * len + t + 1) * g3]);
        }
        gemm(batch, units, g3, &h, Op::N, w.recurrent, Op::N, 0.0, &mut hg);
        let off = if keep_cache { s * bu } else { 0 };
        gru_cell(
            &xg_t,
            &hg,
            &h,
            units,
            &mut h_next,
            &mut zs[off..off + bu],
            &mut rs[off..off + bu],
            &mut ns[off..off + bu],
            &mut hns[off..off + bu],
        );
        if keep_cache {
            h_prevs[off..off + bu].copy_from_slice(&h);
        }
        for b in 0..batch {
            out[(b * len + t) * units..(b * len + t + 1) * units].copy_from_slice(&h_next[b * units..(b + 1) * units]);
        }
        std::mem::swap(&mut h, &mut h_next);
    }

    let cache = keep_cache.then(|| GruCache {
        x: x.to_vec(),
        h_prev: h_prevs,
        z: zs,
        r: rs,
        n: ns,
        hn: hns,
        batch,
        len,
        reverse,
    });
    (out, cache)
}

/// Backpropagation through time for one direction.
///
/// `dout` is the gradient w.r.t. the hidden state at every original time
/// index (`[batch, len, units]`, zeros where a state was not used).
pub fn gru_sequence_backward(
    cache: &GruCache,
    dout: &[f64],
    w: GruWeights<'_>,
    grads: Option<(&mut [f64], &mut [f64], &mut [f64])>,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (batch, len, units) = (cache.batch, cache.len, w.units);
    let g3 = 3 * units;
    let bu = batch * units;
    let mut dxg = vec![0.0; batch * len * g3];
    let mut dh = vec![0.0; bu];
    let mut dh_prev = vec![0.0; bu];
    let mut dhg = vec![0.0; batch * g3];
    let (dwx, mut dwh, db) = match grads {
        Some((a, b, c)) => (Some(a), Some(b), Some(c)),
        None => (None, None, None),
    };

    for s in (0..len).rev() {
        let t = if cache.reverse { len - 1 - s } else { s };
        for b in 0..batch {
            for j in 0..units {
                dh[b * units + j] += dout[(b * len + t) * units + j];
            }
        }
        let off = s * bu;
        for b in 0..batch {
            for j in 0..units {
                let k = b * units + j;
                let (z, r, n, hn) = (cache.z[off + k], cache.r[off + k], cache.n[off + k], cache.hn[off + k]);
                let hp = cache.h_prev[off + k];
                let g = dh[k];
                let dz = g * (n - hp);
                let dn = g * z;
                dh_prev[k] = g * (1.0 - z);
                let dn_pre = dn * (1.0 - n * n);
                let dr = dn_pre * hn;
                let dr_pre = dr * r * (1.0 - r);
                let dz_pre = dz * z * (1.0 - z);
                let row = (b * len + t) * g3;
                dxg[row + j] = dz_pre;
                dxg[row + units + j] = dr_pre;
                dxg[row + 2 * units + j] = dn_pre;
                dhg[b * g3 + j] = dz_pre;
                dhg[b * g3 + units + j] = dr_pre;
                dhg[b * g3 + 2 * units + j] = dn_pre * r;
            }
        }
        if let Some(dwh) = dwh.as_deref_mut() {
            gemm(
                units,
                batch,
                g3,
                &cache.h_prev[off..off + bu],
                Op::T,
                &dhg,
                Op::N,
                1.0,
                dwh,
            );
        }
        gemm(batch, g3, units, &dhg, Op::N, w.recurrent, Op::T, 1.0, &mut dh_prev);
        std::mem::swap(&mut dh, &mut dh_prev);
    }

    let rows = batch * len;
    if let Some(dwx) = dwx {
        gemm(w.in_dim, rows, g3, &cache.x, Op::T, &dxg, Op::N, 1.0, dwx);
    }
    if let Some(db) = db {
        accumulate_column_sums(db, &dxg);
    }
    if !want_dx {
        return None;
    }
    let mut dx = vec![0.0; rows * w.in_dim];
    gemm(rows, g3, w.in_dim, &dxg, Op::N, w.input, Op::T, 0.0, &mut dx);
    Some(dx)
}
