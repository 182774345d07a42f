use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// One direction of an LSTM. Gates are packed column-wise in the order
/// input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct LstmCell {
    /// `d_in × 4d_h`
    pub w: ParamId,
    /// `d_h × 4d_h`
    pub u: ParamId,
    /// `1 × 4d_h`
    pub b: ParamId,
}

impl LstmCell {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, d_in: usize, d_h: usize, rng: &mut R) -> Result<Self> {
        Ok(LstmCell {
            w: store.insert_uniform(format!("{prefix}.w"), vec![d_in, 4 * d_h], rng)?,
            u: store.insert_uniform(format!("{prefix}.u"), vec![d_h, 4 * d_h], rng)?,
            b: store.insert_uniform(format!("{prefix}.b"), vec![1, 4 * d_h], rng)?,
        })
    }

    fn bind(store: &ParamStore, prefix: &str, d_in: usize, d_h: usize) -> Result<Self> {
        let get = |suffix: &str, shape: [usize; 2]| -> Result<ParamId> {
            let name = format!("{prefix}.{suffix}");
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if store.tensor(id).shape() != shape {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    store.tensor(id).shape()
                )));
            }
            Ok(id)
        };
        Ok(LstmCell {
            w: get("w", [d_in, 4 * d_h])?,
            u: get("u", [d_h, 4 * d_h])?,
            b: get("b", [1, 4 * d_h])?,
        })
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.w, self.u, self.b]
    }
}

/// Hidden and cell state of one direction, each `1 × d_h`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Clone, Debug)]
pub struct BiLstmLayer {
    pub d_in: usize,
    pub d_h: usize,
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstmLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, d_in: usize, d_h: usize, rng: &mut R) -> Result<Self> {
        if d_in == 0 || d_h == 0 {
            return Err(Error::Config("BiLSTM dimensions must be positive".into()));
        }
        Ok(BiLstmLayer {
            d_in,
            d_h,
            fwd: LstmCell::new(store, &format!("{prefix}.fwd"), d_in, d_h, rng)?,
            bwd: LstmCell::new(store, &format!("{prefix}.bwd"), d_in, d_h, rng)?,
        })
    }

    /// Looks up the parameters of a layer created under `prefix`.
    pub fn bind(store: &ParamStore, prefix: &str, d_in: usize, d_h: usize) -> Result<Self> {
        Ok(BiLstmLayer {
            d_in,
            d_h,
            fwd: LstmCell::bind(store, &format!("{prefix}.fwd"), d_in, d_h)?,
            bwd: LstmCell::bind(store, &format!("{prefix}.bwd"), d_in, d_h)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.d_h
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.fwd.params().into_iter().chain(self.bwd.params()).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmOutput {
    /// `T × 2d_h`, row `t` is forward state at `t` followed by backward
    /// state at `t`.
    pub hidden: Var,
    /// Forward state after the last position.
    pub fwd_final: LstmState,
    /// Backward state after the first position.
    pub bwd_final: LstmState,
}

fn check_state(g: &Graph<'_>, s: &LstmState, d_h: usize) -> Result<()> {
    for v in [s.h, s.c] {
        if g.value(v).len() != d_h {
            return Err(Error::Shape(format!(
                "initial state of width {} for hidden size {d_h}",
                g.value(v).len()
            )));
        }
    }
    Ok(())
}

/// Runs one direction over `order`, returning the per-position hidden rows
/// (indexed by position) and the final state.
fn run_direction<'p>(
    g: &mut Graph<'p>,
    store: &'p ParamStore,
    cell: &LstmCell,
    d_h: usize,
    x: Var,
    order: impl Iterator<Item = usize>,
    init: LstmState,
) -> Result<(Vec<Option<Var>>, LstmState)> {
    let w = g.param(store, cell.w);
    let u = g.param(store, cell.u);
    let b = g.param(store, cell.b);
    let xw = g.matmul(x, w)?;
    let xw = g.add_row_broadcast(xw, b)?;
    let steps = g.shape(x)[0];
    let mut rows = vec![None; steps];
    let mut state = init;
    for t in order {
        let xt = g.row(xw, t)?;
        let hu = g.matmul(state.h, u)?;
        let pre = g.add(xt, hu)?;
        let i = g.slice_cols(pre, 0, d_h)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(pre, d_h, d_h)?;
        let f = g.sigmoid(f);
        let o = g.slice_cols(pre, 2 * d_h, d_h)?;
        let o = g.sigmoid(o);
        let cand = g.slice_cols(pre, 3 * d_h, d_h)?;
        let cand = g.tanh(cand);
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        state = LstmState { h, c };
        rows[t] = Some(h);
    }
    Ok((rows, state))
}

/// Bidirectional LSTM over the rows of `x` (`T×d_in`). `init`, when given,
/// seeds the forward and backward directions respectively; otherwise both
/// start from zero hidden and cell states.
pub fn run_bilstm<'p>(
    g: &mut Graph<'p>,
    store: &'p ParamStore,
    layer: &BiLstmLayer,
    x: Var,
    init: Option<(LstmState, LstmState)>,
) -> Result<BiLstmOutput> {
    let (steps, d_in) = match g.shape(x) {
        [t, d] => (*t, *d),
        s => return Err(Error::Shape(format!("BiLSTM input must be T×d, got {s:?}"))),
    };
    if steps == 0 {
        return Err(Error::Domain("BiLSTM over an empty sequence".into()));
    }
    if d_in != layer.d_in {
        return Err(Error::Shape(format!(
            "BiLSTM expects input width {}, got {d_in}",
            layer.d_in
        )));
    }
    let d_h = layer.d_h;
    let (fwd_init, bwd_init) = match init {
        Some((f, b)) => {
            check_state(g, &f, d_h)?;
            check_state(g, &b, d_h)?;
            (f, b)
        }
        None => {
            let zero = LstmState {
                h: g.zeros(vec![1, d_h])?,
                c: g.zeros(vec![1, d_h])?,
            };
            (zero, zero)
        }
    };
    let (fwd_rows, fwd_final) = run_direction(g, store, &layer.fwd, d_h, x, 0..steps, fwd_init)?;
    let (bwd_rows, bwd_final) = run_direction(g, store, &layer.bwd, d_h, x, (0..steps).rev(), bwd_init)?;
    let fwd_rows: Vec<Var> = fwd_rows.into_iter().map(|r| r.expect("every step visited")).collect();
    let bwd_rows: Vec<Var> = bwd_rows.into_iter().map(|r| r.expect("every step visited")).collect();
    let fwd = g.concat_rows(&fwd_rows)?;
    let bwd = g.concat_rows(&bwd_rows)?;
    let hidden = g.concat_cols(&[fwd, bwd])?;
    Ok(BiLstmOutput {
        hidden,
        fwd_final,
        bwd_final,
    })
}
