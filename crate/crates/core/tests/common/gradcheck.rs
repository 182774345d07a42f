//! Central finite-difference gradient checks.

use kbqa::tensor::{Gradients, Graph, ParamStore, Var};
use kbqa::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
/// Coordinates where both gradients are smaller than this count as agreeing.
pub const NEGLIGIBLE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default)]
pub struct CheckStats {
    pub total: usize,
    pub passed: usize,
    pub worst: f64,
}

impl CheckStats {
    pub fn merge(&mut self, o: CheckStats) {
        self.total += o.total;
        self.passed += o.passed;
        self.worst = self.worst.max(o.worst);
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    if a.abs() < NEGLIGIBLE && n.abs() < NEGLIGIBLE {
        return 0.0;
    }
    (a - n).abs() / a.abs().max(n.abs())
}

/// Compares the analytic gradient of `loss` with central differences over
/// every parameter coordinate of `target`.
pub fn check<T>(
    target: &mut T,
    store: impl Fn(&mut T) -> &mut ParamStore,
    loss: impl Fn(&T, bool) -> (f64, Option<Gradients>),
) -> CheckStats {
    let (_, grads) = loss(target, true);
    let grads = grads.expect("analytic gradient requested");
    let ids: Vec<_> = store(target).ids().collect();
    let mut stats = CheckStats::default();
    for id in ids {
        let n = store(target).tensor(id).numel();
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for (k, &want) in analytic.iter().enumerate() {
            let orig = store(target).tensor(id).values()[k];
            store(target).tensor_mut(id).values_mut()[k] = orig + STEP;
            let (fp, _) = loss(target, false);
            store(target).tensor_mut(id).values_mut()[k] = orig - STEP;
            let (fm, _) = loss(target, false);
            store(target).tensor_mut(id).values_mut()[k] = orig;
            let numeric = (fp - fm) / (2.0 * STEP);
            let err = relative_error(want, numeric);
            stats.total += 1;
            if err <= TOLERANCE {
                stats.passed += 1;
            }
            stats.worst = stats.worst.max(err);
        }
    }
    stats
}

pub type Build = dyn for<'p> Fn(&mut Graph<'p>, &'p ParamStore) -> Result<Var>;

/// Reduces the output of `build` to a scalar by a fixed random projection,
/// optionally returning gradients.
pub fn projected(store: &ParamStore, build: &Build, want: bool) -> (f64, Option<Gradients>) {
    let mut g = Graph::new();
    let out = build(&mut g, store).expect("graph builds");
    let n = g.value(out).len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shape = g.shape(out).to_vec();
    let w = g.constant(shape, w).unwrap();
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    let value = g.scalar(loss);
    let grads = want.then(|| g.backward(loss).unwrap());
    (value, grads)
}

/// Gradient check of a graph over the parameters in `store`.
pub fn check_graph(store: &mut ParamStore, build: &Build) -> CheckStats {
    check(store, |s| s, |s, want| projected(s, build, want))
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
