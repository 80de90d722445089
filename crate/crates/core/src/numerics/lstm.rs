use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Graph handles for one LSTM cell: input weights `[in, 4h]`, recurrent
/// weights `[h, 4h]` and bias `[4h]`, gate blocks ordered (i, f, g, o).
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// One step: c' = f⊙c + i⊙g, h' = o⊙tanh(c').
pub fn lstm_cell(g: &mut Graph<'_>, x: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let hidden = g.shape(h).last();
    let gate_width = g.shape(p.w_hidden).last();
    if gate_width != 4 * hidden || g.shape(c) != g.shape(h) {
        return Err(Error::Shape {
            op: "lstm_cell",
            lhs: g.shape(h).to_vec(),
            rhs: g.shape(p.w_hidden).to_vec(),
        });
    }
    let xi = g.matmul(x, p.w_input)?;
    let hh = g.matmul(h, p.w_hidden)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add(pre, p.bias)?;
    let axis = g.shape(pre).rank() - 1;
    let i_pre = g.slice(pre, axis, 0, hidden)?;
    let f_pre = g.slice(pre, axis, hidden, hidden)?;
    let g_pre = g.slice(pre, axis, 2 * hidden, hidden)?;
    let o_pre = g.slice(pre, axis, 3 * hidden, hidden)?;
    let i = g.sigmoid(i_pre)?;
    let f = g.sigmoid(f_pre)?;
    let cand = g.tanh(g_pre)?;
    let o = g.sigmoid(o_pre)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}
