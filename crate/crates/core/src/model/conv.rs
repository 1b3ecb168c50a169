//! Factorized (2+1)D convolution: a spatial `1×h×w` pass followed by a
//! temporal `t×1×1` pass, with no nonlinearity in between.

use raincast_tensor::{Padding, Tape, Tensor, Var};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conv2Plus1DSpec {
    pub t_k: usize,
    pub h_k: usize,
    pub w_k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub spatial_padding: Padding,
    pub temporal_padding: Padding,
}

/// Weight counts of a (2+1)D block next to the full 3D kernel it replaces.
/// Biases are not counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub spatial: usize,
    pub temporal: usize,
    pub factorized: usize,
    pub full_3d: usize,
}

impl Conv2Plus1DSpec {
    pub fn cube(k: usize, c_in: usize, c_out: usize) -> Self {
        Self {
            t_k: k,
            h_k: k,
            w_k: k,
            c_in,
            c_out,
            spatial_padding: Padding::Same,
            temporal_padding: Padding::Valid,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if [self.t_k, self.h_k, self.w_k, self.c_in, self.c_out].contains(&0) {
            return Err(ModelError::InvalidSpec(format!("zero extent in {self:?}")));
        }
        Ok(())
    }

    /// Output `(time, height, width)` for an input of the given extents.
    pub fn output_dims(&self, t: usize, h: usize, w: usize) -> Option<(usize, usize, usize)> {
        let out = |n: usize, k: usize, p: Padding| match p {
            Padding::Same => Some(n),
            Padding::Valid => n.checked_sub(k - 1).filter(|&m| m > 0),
        };
        Some((
            out(t, self.t_k, self.temporal_padding)?,
            out(h, self.h_k, self.spatial_padding)?,
            out(w, self.w_k, self.spatial_padding)?,
        ))
    }
}

pub fn param_count(spec: &Conv2Plus1DSpec) -> ParamCount {
    let spatial = spec.h_k * spec.w_k * spec.c_in * spec.c_out;
    let temporal = spec.t_k * spec.c_out * spec.c_out;
    ParamCount {
        spatial,
        temporal,
        factorized: spatial + temporal,
        full_3d: spec.t_k * spec.h_k * spec.w_k * spec.c_in * spec.c_out,
    }
}

/// Weights of one block: spatial `[h_k, w_k, c_in, c_out]` + `[c_out]`,
/// temporal `[t_k, c_out, c_out]` + `[c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2Plus1DWeights {
    pub spatial_w: Tensor,
    pub spatial_b: Tensor,
    pub temporal_w: Tensor,
    pub temporal_b: Tensor,
}

/// Records one block on the tape. `x` is `[batch, time, height, width, c_in]`.
pub fn conv2plus1d(tape: &mut Tape, x: Var, spec: &Conv2Plus1DSpec, w: [Var; 4]) -> Result<Var, ModelError> {
    let y = tape.conv2d_spatial(x, w[0], w[1], spec.spatial_padding)?;
    Ok(tape.conv1d_temporal(y, w[2], w[3], spec.temporal_padding)?)
}

/// Applies one block to a single `[time, height, width, c_in]` input.
pub fn conv2plus1d_forward(input: &Tensor, spec: &Conv2Plus1DSpec, weights: &Conv2Plus1DWeights) -> Result<Tensor, ModelError> {
    spec.validate()?;
    let s = input.shape();
    if s.len() != 4 || s[3] != spec.c_in {
        return Err(ModelError::ShapeMismatch(format!("input {s:?} for c_in {}", spec.c_in)));
    }
    let expect = [
        (&weights.spatial_w, vec![spec.h_k, spec.w_k, spec.c_in, spec.c_out]),
        (&weights.spatial_b, vec![spec.c_out]),
        (&weights.temporal_w, vec![spec.t_k, spec.c_out, spec.c_out]),
        (&weights.temporal_b, vec![spec.c_out]),
    ];
    for (t, shape) in &expect {
        if t.shape() != shape.as_slice() {
            return Err(ModelError::ShapeMismatch(format!("weight {:?}, expected {shape:?}", t.shape())));
        }
    }
    let mut tape = Tape::new();
    let mut batched = vec![1];
    batched.extend_from_slice(s);
    let x = tape.constant(batched, input.data().to_vec())?;
    let w = [
        tape.leaf(&weights.spatial_w),
        tape.leaf(&weights.spatial_b),
        tape.leaf(&weights.temporal_w),
        tape.leaf(&weights.temporal_b),
    ];
    let y = conv2plus1d(&mut tape, x, spec, w)?;
    let out = tape.to_tensor(y);
    Ok(Tensor::new(out.shape()[1..].to_vec(), out.into_data())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let c = param_count(&Conv2Plus1DSpec::cube(3, 5, 5));
        assert_eq!((c.factorized, c.full_3d), (12 * 25, 27 * 25));
        let c = param_count(&Conv2Plus1DSpec::cube(1, 1, 1));
        assert_eq!((c.factorized, c.full_3d), (2, 1));
        let c = param_count(&Conv2Plus1DSpec::cube(3, 2, 4));
        assert_eq!((c.spatial, c.temporal, c.full_3d), (72, 48, 216));
    }

    #[test]
    fn delta_kernels_are_identity() {
        let spec = Conv2Plus1DSpec {
            temporal_padding: Padding::Same,
            ..Conv2Plus1DSpec::cube(3, 1, 1)
        };
        let mut sw = vec![0.0; 9];
        sw[4] = 1.0;
        let weights = Conv2Plus1DWeights {
            spatial_w: Tensor::new(vec![3, 3, 1, 1], sw).unwrap(),
            spatial_b: Tensor::zeros(vec![1]),
            temporal_w: Tensor::new(vec![3, 1, 1], vec![0.0, 1.0, 0.0]).unwrap(),
            temporal_b: Tensor::zeros(vec![1]),
        };
        let input = Tensor::new(vec![4, 3, 5, 1], (0..60).map(|i| (i as f64).sin()).collect()).unwrap();
        let out = conv2plus1d_forward(&input, &spec, &weights).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn valid_padding_shrinks_all_axes() {
        let spec = Conv2Plus1DSpec {
            spatial_padding: Padding::Valid,
            ..Conv2Plus1DSpec::cube(3, 1, 2)
        };
        assert_eq!(spec.output_dims(6, 7, 8), Some((4, 5, 6)));
        let weights = Conv2Plus1DWeights {
            spatial_w: Tensor::filled(vec![3, 3, 1, 2], 0.1),
            spatial_b: Tensor::zeros(vec![2]),
            temporal_w: Tensor::filled(vec![3, 2, 2], 0.1),
            temporal_b: Tensor::zeros(vec![2]),
        };
        let out = conv2plus1d_forward(&Tensor::filled(vec![6, 7, 8, 1], 1.0), &spec, &weights).unwrap();
        assert_eq!(out.shape(), &[4, 5, 6, 2]);
    }
}
