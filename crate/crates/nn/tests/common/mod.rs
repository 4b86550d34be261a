#![allow(dead_code)]

//! Scalar-loop reference implementations that never touch the tape.

use aerial_nn::{Activation, Linear, Mlp, ParameterStore};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(store: &ParameterStore, id: aerial_nn::ParamId) -> Mat {
    let t = store.get(id);
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

pub fn linear_ref(store: &ParameterStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = to_mat(store, l.weight);
    let b = store.get(l.bias).data();
    (0..l.outputs)
        .map(|j| b[j] + (0..l.inputs).map(|i| x[i] * w[i][j]).sum::<f64>())
        .collect()
}

pub fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Identity => v,
        Activation::Relu => if v > 0.0 { v } else { 0.0 },
        Activation::Tanh => v.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Elu => if v > 0.0 { v } else { v.exp() - 1.0 },
    }
}

pub fn mlp_ref(store: &ParameterStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, &a) in m.layers.iter().zip(&m.activations) {
        h = linear_ref(store, l, &h).into_iter().map(|v| act(a, v)).collect();
    }
    h
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention over one group of rows, summed over heads.
pub fn attention_ref(store: &ParameterStore, att: &aerial_nn::Attention, rows: &Mat) -> Mat {
    let n = rows.len();
    let mut out = vec![vec![0.0; att.width]; n];
    for head in &att.heads {
        let q: Mat = rows.iter().map(|r| mlp_ref(store, &head.query, r)).collect();
        let k: Mat = rows.iter().map(|r| mlp_ref(store, &head.key, r)).collect();
        let v: Mat = rows.iter().map(|r| mlp_ref(store, &head.value, r)).collect();
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| dot(&q[i], &k[j]) / (att.width as f64).sqrt())
                .collect();
            let p = softmax(&logits);
            for j in 0..n {
                for c in 0..att.width {
                    out[i][c] += p[j] * v[j][c];
                }
            }
        }
    }
    out
}

pub fn rec_embed_ref(store: &ParameterStore, e: &aerial_nn::RecEmbed, rows: &Mat) -> Vec<f64> {
    let att = attention_ref(store, &e.attention, rows);
    let post: Mat = att.iter().map(|r| mlp_ref(store, &e.post, r)).collect();
    let mut mean = vec![0.0; post[0].len()];
    for r in &post {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / rows.len() as f64;
        }
    }
    mean
}

pub fn mixer_ref(store: &ParameterStore, m: &aerial_nn::Mixer, q: &[f64], cond: &[f64]) -> f64 {
    let w1: Vec<f64> = mlp_ref(store, &m.hyper_w1, cond).into_iter().map(f64::abs).collect();
    let b1 = mlp_ref(store, &m.hyper_b1, cond);
    let w2: Vec<f64> = mlp_ref(store, &m.hyper_w2, cond).into_iter().map(f64::abs).collect();
    let v = mlp_ref(store, &m.value, cond)[0];
    let e = m.embed;
    let mut total = v;
    for j in 0..e {
        let mut h = b1[j];
        for (i, qi) in q.iter().enumerate() {
            h += qi * w1[i * e + j];
        }
        total += act(Activation::Elu, h) * w2[j];
    }
    total
}

pub fn gru_ref(store: &ParameterStore, cell: &aerial_nn::GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hd = cell.hidden;
    let w_ih = to_mat(store, cell.w_ih);
    let w_hh = to_mat(store, cell.w_hh);
    let b_ih = store.get(cell.b_ih).data();
    let b_hh = store.get(cell.b_hh).data();
    let gi = |c: usize| b_ih[c] + (0..x.len()).map(|i| x[i] * w_ih[i][c]).sum::<f64>();
    let gh = |c: usize| b_hh[c] + (0..hd).map(|i| h[i] * w_hh[i][c]).sum::<f64>();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    (0..hd)
        .map(|j| {
            let r = sig(gi(j) + gh(j));
            let z = sig(gi(hd + j) + gh(hd + j));
            let n = (gi(2 * hd + j) + r * gh(2 * hd + j)).tanh();
            (1.0 - z) * n + z * h[j]
        })
        .collect()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
