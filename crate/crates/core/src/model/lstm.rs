use crate::error::Result;
use crate::grad::{Bindings, Tape, Var};

/// Parameter slots of one projected LSTM layer. Gate columns are ordered
/// input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmSlots {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub w_proj: usize,
}

/// Runs a layer over a packed time-major sequence: step `t` holds the
/// first `active[t]` batch rows, and `active` is non-increasing. Returns
/// one `[active[t] × projection]` output per step.
pub(crate) fn run_layer(tape: &mut Tape, b: &Bindings, slots: &LstmSlots, seq: Var, active: &[usize]) -> Result<Vec<Var>> {
    let pre = tape.matmul(seq, b.var(slots.w_ih))?;
    run_layer_projected(tape, b, slots, pre, active)
}

/// Same as [`run_layer`] with the input contribution `x·W_ih` precomputed.
pub(crate) fn run_layer_projected(
    tape: &mut Tape,
    b: &Bindings,
    slots: &LstmSlots,
    input_pre: Var,
    active: &[usize],
) -> Result<Vec<Var>> {
    let pre = tape.add_row(input_pre, b.var(slots.bias))?;
    let gates_width = tape.value(pre).cols();
    let h = gates_width / 4;
    let mut outputs = Vec::with_capacity(active.len());
    let mut state: Option<(Var, Var)> = None;
    let mut offset = 0;
    for &rows in active {
        let mut z = tape.slice_rows(pre, offset, offset + rows)?;
        offset += rows;
        if let Some((r, c)) = state {
            // finished sequences drop off the bottom of the batch
            if tape.value(r).rows() > rows {
                state = Some((tape.slice_rows(r, 0, rows)?, tape.slice_rows(c, 0, rows)?));
            }
        }
        if let Some((r, _)) = state {
            let rec = tape.matmul(r, b.var(slots.w_hh))?;
            z = tape.add(z, rec)?;
        }
        let i = tape.slice_cols(z, 0, h)?;
        let f = tape.slice_cols(z, h, 2 * h)?;
        let g = tape.slice_cols(z, 2 * h, 3 * h)?;
        let o = tape.slice_cols(z, 3 * h, 4 * h)?;
        let i = tape.sigmoid(i)?;
        let f = tape.sigmoid(f)?;
        let g = tape.tanh(g)?;
        let o = tape.sigmoid(o)?;
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fc = tape.mul(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c)?;
        let m = tape.mul(o, tc)?;
        let r = tape.matmul(m, b.var(slots.w_proj))?;
        outputs.push(r);
        state = Some((r, c));
    }
    Ok(outputs)
}
