use aerial_core::RngStream;

use super::expect_cols;
use crate::error::NnError;
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};

/// Gated recurrent unit with gates laid out `[reset | update | candidate]`
/// along the columns of each weight:
///
/// ```text
/// r  = σ(x W_ir + b_ir + h W_hr + b_hr)
/// z  = σ(x W_iz + b_iz + h W_hz + b_hz)
/// n  = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let g = 3 * hidden;
        Ok(Self {
            w_ih: store.add_uniform(&format!("{name}.w_ih"), &[inputs, g], hidden, rng)?,
            w_hh: store.add_uniform(&format!("{name}.w_hh"), &[hidden, g], hidden, rng)?,
            b_ih: store.add_uniform(&format!("{name}.b_ih"), &[1, g], hidden, rng)?,
            b_hh: store.add_uniform(&format!("{name}.b_hh"), &[1, g], hidden, rng)?,
            inputs,
            hidden,
        })
    }

    pub fn step(&self, tape: &mut Tape, store: &ParameterStore, x: Var, h: Var) -> Result<Var, NnError> {
        expect_cols(tape, x, self.inputs, "gru input")?;
        expect_cols(tape, h, self.hidden, "gru hidden")?;
        if tape.value(x).rows() != tape.value(h).rows() {
            return Err(NnError::ShapeMismatch {
                op: "gru rows",
                left: tape.value(x).shape().to_vec(),
                right: tape.value(h).shape().to_vec(),
            });
        }
        let hd = self.hidden;
        let w_ih = tape.param(store, self.w_ih);
        let w_hh = tape.param(store, self.w_hh);
        let b_ih = tape.param(store, self.b_ih);
        let b_hh = tape.param(store, self.b_hh);
        let gi = tape.matmul(x, w_ih);
        let gi = tape.add_row(gi, b_ih);
        let gh = tape.matmul(h, w_hh);
        let gh = tape.add_row(gh, b_hh);

        let gi_rz = tape.slice_cols(gi, 0, 2 * hd);
        let gh_rz = tape.slice_cols(gh, 0, 2 * hd);
        let rz = tape.add(gi_rz, gh_rz);
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, hd);
        let z = tape.slice_cols(rz, hd, hd);

        let gi_n = tape.slice_cols(gi, 2 * hd, hd);
        let gh_n = tape.slice_cols(gh, 2 * hd, hd);
        let rn = tape.mul(r, gh_n);
        let n = tape.add(gi_n, rn);
        let n = tape.tanh(n);

        let keep = tape.mul(z, h);
        let one_minus_z = tape.one_minus(z);
        let fresh = tape.mul(one_minus_z, n);
        Ok(tape.add(fresh, keep))
    }
}

pub fn gru_step(
    cell: &GruCell,
    tape: &mut Tape,
    store: &ParameterStore,
    x: Var,
    h: Var,
) -> Result<Var, NnError> {
    cell.step(tape, store, x, h)
}
