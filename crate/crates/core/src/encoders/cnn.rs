use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// 1-d convolution over `T×d_in` sequences, zero padded to keep length `T`,
/// followed by `tanh`. Filters have shape `window×d_in×d_out`.
pub fn cnn_encode(g: &mut Graph<'_>, filters: Var, bias: Var, x: Var) -> Result<Var> {
    let (window, d_in, d_out) = match g.shape(filters) {
        [w, i, o] => (*w, *i, *o),
        s => return Err(Error::Shape(format!("filters must be w×d_in×d_out, got {s:?}"))),
    };
    if window % 2 == 0 {
        return Err(Error::Config(format!("convolution window {window} must be odd")));
    }
    match g.shape(x) {
        [t, d] if *t >= 1 && *d == d_in => {}
        s => {
            return Err(Error::Shape(format!(
                "convolution input must be T×{d_in}, got {s:?}"
            )))
        }
    }
    if g.value(bias).len() != d_out {
        return Err(Error::Shape(format!("bias of {} for {d_out} filters", g.value(bias).len())));
    }
    let windows = g.unfold(x, window)?;
    let flat = g.reshape(filters, vec![window * d_in, d_out])?;
    let pre = g.matmul(windows, flat)?;
    let pre = g.add_row_broadcast(pre, bias)?;
    Ok(g.tanh(pre))
}

#[derive(Clone, Debug)]
pub struct CnnLayer {
    pub window: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub filters: ParamId,
    pub bias: ParamId,
}

impl CnnLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        window: usize,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if window.is_multiple_of(2) {
            return Err(Error::Config(format!("convolution window {window} must be odd")));
        }
        Ok(CnnLayer {
            window,
            d_in,
            d_out,
            filters: store.insert_uniform(format!("{prefix}.filters"), vec![window, d_in, d_out], rng)?,
            bias: store.insert_uniform(format!("{prefix}.bias"), vec![d_out], rng)?,
        })
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let find = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Format(format!("missing parameter {prefix}.{s}")))
        };
        let filters = find("filters")?;
        let bias = find("bias")?;
        let (window, d_in, d_out) = match store.tensor(filters).shape() {
            [w, i, o] => (*w, *i, *o),
            s => return Err(Error::Format(format!("{prefix}.filters has shape {s:?}"))),
        };
        Ok(CnnLayer {
            window,
            d_in,
            d_out,
            filters,
            bias,
        })
    }

    pub fn encode<'p>(&self, g: &mut Graph<'p>, store: &'p ParamStore, x: Var) -> Result<Var> {
        let f = g.param(store, self.filters);
        let b = g.param(store, self.bias);
        cnn_encode(g, f, b, x)
    }
}
