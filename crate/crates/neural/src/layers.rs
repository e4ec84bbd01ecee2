//! Layers built on the tape: affine, MLP, gated recurrent cell.

use rand_chacha::ChaCha8Rng;

use crate::{NeuralError, ParamId, ParamSet, Tape, Tensor, Var};

/// Parameters bound on a tape, indexed by [`ParamId`].
pub type Bound = [Var];

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.push_uniform(format!("{name}.w"), &[out_dim, in_dim], rng);
        let b = params.push_uniform(format!("{name}.b"), &[out_dim], rng);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NeuralError> {
        let wx = tape.matvec(p[self.w.0], x)?;
        tape.add(wx, p[self.b.0])
    }
}

/// Affine layers with `tanh` between them; the last layer is left affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`; needs at least two entries.
    pub fn new(params: &mut ParamSet, name: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(params, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NeuralError> {
        let got = tape.value(x).len();
        if got != self.in_dim() {
            return Err(NeuralError::ShapeMismatch {
                op: "mlp_forward",
                expected: vec![self.in_dim()],
                got: vec![got],
            });
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }
}

/// Recurrent cell type. Only the two-gate cell is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellKind {
    #[default]
    Gated,
}

/// Two-gate recurrent cell:
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r * h) + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GatedCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GatedCell {
    pub fn new(params: &mut ParamSet, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let (i, h) = (input_dim, hidden_dim);
        let mut mk = |s: &str, shape: &[usize]| params.push_uniform(format!("{name}.{s}"), shape, rng);
        Self {
            input_dim,
            hidden_dim,
            wz: mk("wz", &[h, i]),
            uz: mk("uz", &[h, h]),
            bz: mk("bz", &[h]),
            wr: mk("wr", &[h, i]),
            ur: mk("ur", &[h, h]),
            br: mk("br", &[h]),
            wh: mk("wh", &[h, i]),
            uh: mk("uh", &[h, h]),
            bh: mk("bh", &[h]),
        }
    }

    fn gate(&self, tape: &mut Tape, p: &Bound, (w, u, b): (ParamId, ParamId, ParamId), x: Var, h: Var) -> Result<Var, NeuralError> {
        let wx = tape.matvec(p[w.0], x)?;
        let uh = tape.matvec(p[u.0], h)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, p[b.0])
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Result<Var, NeuralError> {
        let got = tape.value(x).len();
        if got != self.input_dim {
            return Err(NeuralError::ShapeMismatch {
                op: "recurrent_forward",
                expected: vec![self.input_dim],
                got: vec![got],
            });
        }
        let z = self.gate(tape, p, (self.wz, self.uz, self.bz), x, h)?;
        let z = tape.sigmoid(z)?;
        let r = self.gate(tape, p, (self.wr, self.ur, self.br), x, h)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let cand = self.gate(tape, p, (self.wh, self.uh, self.bh), x, rh)?;
        let cand = tape.tanh(cand)?;
        let keep = tape.one_minus(z)?;
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }

    /// Runs the cell over `seq` starting from `h0` (zeros when `None`) and
    /// returns every hidden state.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, seq: &[Var], h0: Option<Var>) -> Result<Vec<Var>, NeuralError> {
        if seq.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let mut h = match h0 {
            Some(h) => h,
            None => tape.input(Tensor::zeros(&[self.hidden_dim])),
        };
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            h = self.step(tape, p, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_mlp_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(&mut ps, "m", &[3, 4, 2], &mut rng);
        for t in ps.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::with_params(&ps);
        let p = tape.bind_all();
        let x = tape.input(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let y = mlp.forward(&mut tape, &p, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_affine_head() {
        let mut ps = ParamSet::new();
        let w = ps.push("m.0.w", Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let b = ps.push("m.0.b", Tensor::vector(vec![0.0]));
        let mlp = Mlp {
            layers: vec![Linear { w, b, in_dim: 1, out_dim: 1 }],
        };
        let mut tape = Tape::with_params(&ps);
        let p = tape.bind_all();
        let x = tape.input(Tensor::vector(vec![0.5]));
        let y = mlp.forward(&mut tape, &p, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5]);
    }

    #[test]
    fn mlp_rejects_wrong_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(&mut ps, "m", &[3, 2], &mut rng);
        let mut tape = Tape::with_params(&ps);
        let p = tape.bind_all();
        let x = tape.input(Tensor::vector(vec![1.0]));
        assert!(matches!(mlp.forward(&mut tape, &p, x), Err(NeuralError::ShapeMismatch { .. })));
    }

    #[test]
    fn frozen_cell_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let cell = GatedCell::new(&mut ps, "g", 2, 3, &mut rng);
        for t in ps.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        ps.get_mut(cell.bz).data_mut().iter_mut().for_each(|v| *v = -1e3);
        let mut tape = Tape::with_params(&ps);
        let p = tape.bind_all();
        let seq: Vec<Var> = (0..4).map(|k| tape.input(Tensor::vector(vec![k as f64, 1.0]))).collect();
        let hs = cell.forward(&mut tape, &p, &seq, None).unwrap();
        assert_eq!(hs.len(), 4);
        for h in hs {
            assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_step_gives_one_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let cell = GatedCell::new(&mut ps, "g", 2, 3, &mut rng);
        let mut tape = Tape::with_params(&ps);
        let p = tape.bind_all();
        let x = tape.input(Tensor::vector(vec![0.1, 0.2]));
        assert_eq!(cell.forward(&mut tape, &p, &[x], None).unwrap().len(), 1);
        assert!(matches!(cell.forward(&mut tape, &p, &[], None), Err(NeuralError::EmptySequence)));
    }
}
