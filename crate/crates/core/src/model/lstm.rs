//! Stacked LSTM built from tape primitives. Gate order within the fused
//! `4·hidden` axis is input, forget, candidate, output.

use raincast_tensor::{Tape, Tensor, Var};

use super::ModelError;

/// One layer: `wx [in, 4h]`, `wh [h, 4h]`, `b [4h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl LstmWeights {
    pub fn hidden(&self) -> usize {
        self.wh.shape()[0]
    }
}

/// Runs one layer over `xs`, one `[batch, in]` node per step, and returns
/// the hidden state of every step.
pub fn lstm_layer(tape: &mut Tape, xs: &[Var], w: [Var; 3], hidden: usize) -> Result<Vec<Var>, ModelError> {
    let projected: Vec<Var> = xs
        .iter()
        .map(|&x| tape.linear(x, w[0], w[2]))
        .collect::<Result<_, _>>()?;
    recur(tape, &projected, w[1], hidden)
}

/// Like [`lstm_layer`] for an input sequence `x [batch, time, in]`, projecting
/// all steps with one matrix product.
pub fn lstm_layer_projected(tape: &mut Tape, x: Var, w: [Var; 3], hidden: usize) -> Result<Vec<Var>, ModelError> {
    let &[batch, steps, features] = tape.shape(x) else {
        return Err(ModelError::ShapeMismatch(format!("lstm input {:?}", tape.shape(x))));
    };
    let flat = tape.reshape(x, vec![batch * steps, features])?;
    let z = tape.linear(flat, w[0], w[2])?;
    let z = tape.reshape(z, vec![batch, steps, 4 * hidden])?;
    let projected: Vec<Var> = (0..steps)
        .map(|t| tape.slice_time(z, t))
        .collect::<Result<_, _>>()?;
    recur(tape, &projected, w[1], hidden)
}

fn recur(tape: &mut Tape, projected: &[Var], wh: Var, hidden: usize) -> Result<Vec<Var>, ModelError> {
    let mut out = Vec::with_capacity(projected.len());
    let mut state: Option<(Var, Var)> = None;
    for &zx in projected {
        let z = match state {
            Some((h, _)) => {
                let zh = tape.matmul(h, wh)?;
                tape.add(zx, zh)?
            }
            None => zx,
        };
        let i = tape.slice_cols(z, 0, hidden)?;
        let i = tape.sigmoid(i);
        let g = tape.slice_cols(z, 2 * hidden, hidden)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(z, 3 * hidden, hidden)?;
        let o = tape.sigmoid(o);
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let f = tape.slice_cols(z, hidden, hidden)?;
                let f = tape.sigmoid(f);
                let fc = tape.mul(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        out.push(h);
        state = Some((h, c));
    }
    Ok(out)
}

/// Feeds `seq [time, features]` through the stack and returns the last
/// layer's final hidden state.
pub fn lstm_stack_forward(seq: &Tensor, layers: &[LstmWeights]) -> Result<Tensor, ModelError> {
    let &[steps, features] = seq.shape() else {
        return Err(ModelError::ShapeMismatch(format!("sequence {:?}", seq.shape())));
    };
    if steps == 0 || layers.is_empty() {
        return Err(ModelError::ShapeMismatch("empty sequence or stack".into()));
    }
    let mut tape = Tape::new();
    let x = tape.constant(vec![1, steps, features], seq.data().to_vec())?;
    let mut hs: Option<Vec<Var>> = None;
    for layer in layers {
        let w = [tape.leaf(&layer.wx), tape.leaf(&layer.wh), tape.leaf(&layer.b)];
        hs = Some(match hs {
            None => lstm_layer_projected(&mut tape, x, w, layer.hidden())?,
            Some(prev) => lstm_layer(&mut tape, &prev, w, layer.hidden())?,
        });
    }
    let last = *hs.unwrap().last().unwrap();
    let t = tape.to_tensor(last);
    Ok(Tensor::new(vec![t.len()], t.into_data())?)
}
