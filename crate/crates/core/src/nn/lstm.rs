//! Bidirectional LSTM over a full sequence, returning the concatenated final
//! hidden states. Gate layout inside each `4 * hidden` block is input, forget,
//! candidate, output.

use super::tensor::Tensor;

pub(crate) struct LstmCache {
    hidden: usize,
    len: usize,
    /// Per direction, `(B, L, 4h)` post-activation gates in processing order.
    gates: [Vec<f64>; 2],
    /// Per direction, `(B, L, h)` cell states.
    cells: [Vec<f64>; 2],
    /// Per direction, `(B, L, h)` tanh of the cell states.
    cell_tanh: [Vec<f64>; 2],
    /// Per direction, `(B, L, h)` hidden states.
    hiddens: [Vec<f64>; 2],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Position in the input sequence visited at processing step `step`.
fn position(direction: usize, step: usize, len: usize) -> usize {
    if direction == 0 {
        step
    } else {
        len - 1 - step
    }
}

pub(crate) fn forward(input: &Tensor, params: &[Tensor], hidden: usize) -> (Tensor, LstmCache) {
    let (batch, len, features) = (input.dim(0), input.dim(1), input.dim(2));
    let h4 = 4 * hidden;
    let x = input.data();
    let mut out = vec![0.0; batch * 2 * hidden];
    let mut cache = LstmCache {
        hidden,
        len,
        gates: [vec![0.0; batch * len * h4], vec![0.0; batch * len * h4]],
        cells: [vec![0.0; batch * len * hidden], vec![0.0; batch * len * hidden]],
        cell_tanh: [vec![0.0; batch * len * hidden], vec![0.0; batch * len * hidden]],
        hiddens: [vec![0.0; batch * len * hidden], vec![0.0; batch * len * hidden]],
    };
    let mut z = vec![0.0; h4];
    for dir in 0..2 {
        let w_in = params[3 * dir].data();
        let w_rec = params[3 * dir + 1].data();
        let bias = params[3 * dir + 2].data();
        for b in 0..batch {
            let mut h = vec![0.0; hidden];
            let mut c = vec![0.0; hidden];
            for step in 0..len {
                let t = position(dir, step, len);
                let x_t = &x[(b * len + t) * features..(b * len + t + 1) * features];
                z.copy_from_slice(bias);
                for (e, &xe) in x_t.iter().enumerate() {
                    if xe != 0.0 {
                        let row = &w_in[e * h4..(e + 1) * h4];
                        z.iter_mut().zip(row).for_each(|(zj, w)| *zj += xe * w);
                    }
                }
                for (j, &hj) in h.iter().enumerate() {
                    if hj != 0.0 {
                        let row = &w_rec[j * h4..(j + 1) * h4];
                        z.iter_mut().zip(row).for_each(|(zj, w)| *zj += hj * w);
                    }
                }
                let at = (b * len + step) * hidden;
                let gates = &mut cache.gates[dir][(b * len + step) * h4..(b * len + step + 1) * h4];
                for j in 0..hidden {
                    let i_g = sigmoid(z[j]);
                    let f_g = sigmoid(z[hidden + j]);
                    let g_g = z[2 * hidden + j].tanh();
                    let o_g = sigmoid(z[3 * hidden + j]);
                    gates[j] = i_g;
                    gates[hidden + j] = f_g;
                    gates[2 * hidden + j] = g_g;
                    gates[3 * hidden + j] = o_g;
                    c[j] = f_g * c[j] + i_g * g_g;
                    let tc = c[j].tanh();
                    h[j] = o_g * tc;
                    cache.cells[dir][at + j] = c[j];
                    cache.cell_tanh[dir][at + j] = tc;
                    cache.hiddens[dir][at + j] = h[j];
                }
            }
            out[b * 2 * hidden + dir * hidden..b * 2 * hidden + (dir + 1) * hidden].copy_from_slice(&h);
        }
    }
    let out = Tensor::new(vec![batch, 2 * hidden], out).expect("bilstm output shape");
    (out, cache)
}

/// Backpropagation through time for both directions.
pub(crate) fn backward(
    input: &Tensor,
    params: &[Tensor],
    cache: &LstmCache,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Vec<Tensor>) {
    let (batch, features) = (input.dim(0), input.dim(2));
    let (hidden, len) = (cache.hidden, cache.len);
    let h4 = 4 * hidden;
    let x = input.data();
    let mut grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut dx = need_input_grad.then(|| vec![0.0; x.len()]);
    let mut dz = vec![0.0; h4];
    let mut dh_prev = vec![0.0; hidden];
    for dir in 0..2 {
        let w_in = params[3 * dir].data();
        let w_rec = params[3 * dir + 1].data();
        let (left, right) = grads.split_at_mut(3 * dir + 1);
        let dw_in = left[3 * dir].data_mut();
        let (dw_rec_t, db_t) = right.split_at_mut(1);
        let dw_rec = dw_rec_t[0].data_mut();
        let db = db_t[0].data_mut();
        for b in 0..batch {
            let g = grad_out.row(b);
            let mut dh = g[dir * hidden..(dir + 1) * hidden].to_vec();
            let mut dc = vec![0.0; hidden];
            for step in (0..len).rev() {
                let t = position(dir, step, len);
                let at = (b * len + step) * hidden;
                let gates = &cache.gates[dir][(b * len + step) * h4..(b * len + step + 1) * h4];
                let tc = &cache.cell_tanh[dir][at..at + hidden];
                for j in 0..hidden {
                    let (i_g, f_g, g_g, o_g) = (
                        gates[j],
                        gates[hidden + j],
                        gates[2 * hidden + j],
                        gates[3 * hidden + j],
                    );
                    let c_prev = if step > 0 { cache.cells[dir][at - hidden + j] } else { 0.0 };
                    let d_o = dh[j] * tc[j];
                    let d_c = dc[j] + dh[j] * o_g * (1.0 - tc[j] * tc[j]);
                    dz[j] = d_c * g_g * i_g * (1.0 - i_g);
                    dz[hidden + j] = d_c * c_prev * f_g * (1.0 - f_g);
                    dz[2 * hidden + j] = d_c * i_g * (1.0 - g_g * g_g);
                    dz[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
                    dc[j] = d_c * f_g;
                }
                db.iter_mut().zip(&dz).for_each(|(d, z)| *d += z);
                let x_t = &x[(b * len + t) * features..(b * len + t + 1) * features];
                for (e, &xe) in x_t.iter().enumerate() {
                    let row = &mut dw_in[e * h4..(e + 1) * h4];
                    if xe != 0.0 {
                        row.iter_mut().zip(&dz).for_each(|(w, z)| *w += xe * z);
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let dx_t = &mut dx[(b * len + t) * features..(b * len + t + 1) * features];
                    for (e, d) in dx_t.iter_mut().enumerate() {
                        let row = &w_in[e * h4..(e + 1) * h4];
                        *d += row.iter().zip(&dz).map(|(w, z)| w * z).sum::<f64>();
                    }
                }
                for j in 0..hidden {
                    let h_prev = if step > 0 { cache.hiddens[dir][at - hidden + j] } else { 0.0 };
                    let row = &w_rec[j * h4..(j + 1) * h4];
                    dh_prev[j] = row.iter().zip(&dz).map(|(w, z)| w * z).sum();
                    if h_prev != 0.0 {
                        let drow = &mut dw_rec[j * h4..(j + 1) * h4];
                        drow.iter_mut().zip(&dz).for_each(|(w, z)| *w += h_prev * z);
                    }
                }
                std::mem::swap(&mut dh, &mut dh_prev);
            }
        }
    }
    let dx = dx.map(|d| Tensor::new(input.shape().to_vec(), d).expect("bilstm input grad shape"));
    (dx, grads)
}
