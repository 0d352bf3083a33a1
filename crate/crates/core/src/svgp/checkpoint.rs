//! JSON checkpoint of a fitted state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Likelihood, SvgpState};
use crate::error::{Error, Result};
use crate::gaussian::Kernel;
use crate::interdomain::InducingFeature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub kernel: Kernel,
    pub features: Vec<InducingFeature>,
    pub q_mean: Vec<f64>,
    /// Lower factor, one inner vector per row.
    pub q_chol: Vec<Vec<f64>>,
    pub likelihood: Likelihood,
}

impl From<&SvgpState> for Checkpoint {
    fn from(s: &SvgpState) -> Self {
        Checkpoint {
            kernel: s.kernel.clone(),
            features: s.features.clone(),
            q_mean: s.q_mean.iter().copied().collect(),
            q_chol: s.q_chol.row_iter().map(|r| r.iter().copied().collect()).collect(),
            likelihood: s.likelihood,
        }
    }
}

impl Checkpoint {
    pub fn into_state(self) -> Result<SvgpState> {
        let m = self.q_chol.len();
        if self.q_chol.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("q_chol must be square".into()));
        }
        let chol = DMatrix::from_row_iterator(m, m, self.q_chol.into_iter().flatten());
        SvgpState::new(self.features, DVector::from_vec(self.q_mean), chol, self.kernel, self.likelihood)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint fields always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad checkpoint: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(vals: &[f64]) -> SvgpState {
        let k = Kernel::squared_exponential(vals[0].abs() + 0.1, vec![vals[1].abs() + 0.1], vals[2]).unwrap();
        let feats = vec![
            InducingFeature::point(vec![vals[3]]),
            InducingFeature::window(vec![vals[4]], vec![vals[5].abs() + 1e-3]).unwrap(),
        ];
        let chol = DMatrix::from_row_slice(2, 2, &[vals[6].abs() + 1e-3, 0.0, vals[7], vals[0].abs() + 1e-3]);
        SvgpState::new(feats, DVector::from_vec(vec![vals[1], vals[2]]), chol, k, Likelihood::Poisson { bin_width: 0.25 })
            .unwrap()
    }

    #[test]
    fn layout_is_row_major() {
        let s = state(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let c = Checkpoint::from(&s);
        assert_eq!(c.q_chol, vec![vec![7.001, 0.0], vec![8.0, 1.001]]);
        let json = c.to_json();
        assert!(json.contains(r#""type": "gwindow""#));
        assert!(json.contains(r#""kind": "poisson""#));
    }

    #[test]
    fn rejects_ragged_and_unknown() {
        let mut c = Checkpoint::from(&state(&[1.0; 8]));
        c.q_chol[1].pop();
        assert!(c.into_state().is_err());
        let json = Checkpoint::from(&state(&[1.0; 8])).to_json().replacen('{', r#"{"extra": 1,"#, 1);
        assert!(Checkpoint::from_json(&json).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_faithful(vals in proptest::collection::vec(-1e3..1e3f64, 8)) {
            let s = state(&vals);
            let back = Checkpoint::from_json(&Checkpoint::from(&s).to_json()).unwrap().into_state().unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
