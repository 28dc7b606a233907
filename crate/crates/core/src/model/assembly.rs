use matting_nn::{Graph, Init, ParamId, ParamStore, Shape, Var};
use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};

/// The two non-negative assembly scalars and the ε guarding their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyWeights {
    pub raw_aspp: f64,
    pub raw_sed: f64,
    pub epsilon: f64,
}

impl AssemblyWeights {
    pub fn new(raw_aspp: f64, raw_sed: f64, epsilon: f64) -> Result<Self> {
        if !(raw_aspp >= 0.0 && raw_sed >= 0.0 && raw_aspp.is_finite() && raw_sed.is_finite()) {
            return Err(MattingError::InvalidArgument(format!(
                "assembly weights must be finite and non-negative, got ({raw_aspp}, {raw_sed})"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(MattingError::InvalidArgument(
                "epsilon must be positive".into(),
            ));
        }
        Ok(Self {
            raw_aspp,
            raw_sed,
            epsilon,
        })
    }

    /// `(a/(a+b) + ε, b/(a+b) + ε)`. A zero sum is replaced by ε.
    pub fn normalized(&self) -> (f64, f64) {
        let sum = self.raw_aspp + self.raw_sed;
        let denom = if sum > 0.0 { sum } else { self.epsilon };
        (
            self.raw_aspp / denom + self.epsilon,
            self.raw_sed / denom + self.epsilon,
        )
    }
}

/// Raw scalar that maps to 1 under softplus.
pub fn softplus_inverse_of_one() -> f32 {
    (std::f32::consts::E - 1.0).ln()
}

/// Learnable scalars parameterized through softplus so the effective raw
/// weights stay positive.
#[derive(Clone, Debug)]
pub struct Assembly {
    raw_aspp: ParamId,
    raw_sed: ParamId,
    epsilon: f64,
}

impl Assembly {
    pub fn new(store: &mut ParamStore, prefix: &str, epsilon: f64) -> Result<Self> {
        let init = Init::Constant(softplus_inverse_of_one());
        let s = Shape::scalar();
        Ok(Self {
            raw_aspp: store.add_param(format!("{prefix}.w_aspp"), s, init, true)?,
            raw_sed: store.add_param(format!("{prefix}.w_sed"), s, init, true)?,
            epsilon,
        })
    }

    pub fn weights(&self, store: &ParamStore) -> AssemblyWeights {
        let sp = |id| matting_nn::graph::softplus(store.value(id).data()[0]) as f64;
        AssemblyWeights {
            raw_aspp: sp(self.raw_aspp),
            raw_sed: sp(self.raw_sed),
            epsilon: self.epsilon,
        }
    }

    /// Channel concatenation of the two inputs scaled by their normalized
    /// weights.
    pub fn forward(&self, g: &mut Graph, f_aspp: Var, f_sed: Var) -> Result<Var> {
        let (a, s) = (g.shape(f_aspp), g.shape(f_sed));
        if (a.n, a.h, a.w) != (s.n, s.h, s.w) {
            return Err(MattingError::shape("assembly inputs", a, s));
        }
        let wa = g.param(self.raw_aspp);
        let ws = g.param(self.raw_sed);
        let wa = g.softplus(wa);
        let ws = g.softplus(ws);
        let norm = g.pair_normalize(wa, ws, self.epsilon as f32)?;
        let fa = g.scale_by(f_aspp, norm, 0)?;
        let fs = g.scale_by(f_sed, norm, 1)?;
        Ok(g.concat(&[fa, fs])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_normalizations() {
        let eps = 1e-8;
        let n = AssemblyWeights::new(0.5, 0.5, eps).unwrap().normalized();
        assert_eq!(n, (0.5 + eps, 0.5 + eps));
        let n = AssemblyWeights::new(1.0, 0.0, eps).unwrap().normalized();
        assert_eq!(n, (1.0 + eps, eps));
        let n = AssemblyWeights::new(3.0, 1.0, eps).unwrap().normalized();
        assert!((n.0 - (0.75 + eps)).abs() < 1e-15 && (n.1 - (0.25 + eps)).abs() < 1e-15);
        let n = AssemblyWeights::new(0.0, 0.0, eps).unwrap().normalized();
        assert_eq!(n, (eps, eps));
        assert!(AssemblyWeights::new(-1.0, 0.0, eps).is_err());
    }

    #[test]
    fn initial_raw_weights_are_equal_and_unit() {
        let mut store = ParamStore::new(0);
        let a = Assembly::new(&mut store, "ia", 1e-8).unwrap();
        let w = a.weights(&store);
        assert!((w.raw_aspp - 1.0).abs() < 1e-6 && w.raw_aspp == w.raw_sed);
    }
}
