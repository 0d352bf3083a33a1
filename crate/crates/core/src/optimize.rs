//! Parameter packing, finite-difference gradients and a monotone ascent
//! routine for the variational objectives.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cox::{cox_elbo, CoxModel};
use crate::error::{Error, Result};
use crate::interdomain::InducingFeature;
use crate::svgp::{collapsed_bound, elbo, Likelihood, SvgpState};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Map from an unconstrained coordinate to the model's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    SoftplusDiag,
}

impl Transform {
    /// Unconstrained to constrained. Positive transforms never return zero.
    pub fn forward(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp().max(f64::MIN_POSITIVE),
            Transform::SoftplusDiag => {
                let v = if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
                v.max(f64::MIN_POSITIVE)
            }
        }
    }

    /// Constrained to unconstrained.
    pub fn inverse(self, c: f64) -> Result<f64> {
        if !c.is_finite() {
            return Err(Error::InvalidArgument(format!("parameter value {c} is not finite")));
        }
        match self {
            Transform::Identity => Ok(c),
            Transform::Log | Transform::SoftplusDiag if c <= 0.0 => {
                Err(Error::InvalidArgument(format!("positive parameter has value {c}")))
            }
            Transform::Log => Ok(c.ln()),
            Transform::SoftplusDiag => Ok(c + (-(-c).exp_m1()).ln()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockName {
    QMean,
    QCholDiag,
    QCholOffdiag,
    LogLengthscales,
    LogVariance,
    LogNoise,
    FeatureCenters,
    LogWidths,
}

impl BlockName {
    pub fn transform(self) -> Transform {
        match self {
            BlockName::QMean | BlockName::QCholOffdiag | BlockName::FeatureCenters => Transform::Identity,
            BlockName::QCholDiag => Transform::SoftplusDiag,
            BlockName::LogLengthscales | BlockName::LogVariance | BlockName::LogNoise | BlockName::LogWidths => {
                Transform::Log
            }
        }
    }
}

/// The variational parameters.
pub const VARIATIONAL_BLOCKS: [BlockName; 3] = [BlockName::QMean, BlockName::QCholDiag, BlockName::QCholOffdiag];
/// Kernel and noise hyperparameters.
pub const HYPER_BLOCKS: [BlockName; 3] = [BlockName::LogLengthscales, BlockName::LogVariance, BlockName::LogNoise];
/// Inducing feature parameters.
pub const FEATURE_BLOCKS: [BlockName; 2] = [BlockName::FeatureCenters, BlockName::LogWidths];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: BlockName,
    pub offset: usize,
    pub len: usize,
    pub transform: Transform,
}

/// Flat unconstrained vector with a named block layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: Vec<Block>,
    values: Vec<f64>,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVector {
    pub fn new() -> Self {
        ParamVector {
            layout: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Unconstrained vector with a single identity block.
    pub fn from_values(values: Vec<f64>) -> Self {
        ParamVector {
            layout: vec![Block {
                name: BlockName::FeatureCenters,
                offset: 0,
                len: values.len(),
                transform: Transform::Identity,
            }],
            values,
        }
    }

    /// Appends a block given its constrained values.
    pub fn push_block(&mut self, name: BlockName, constrained: &[f64]) -> Result<()> {
        if self.block(name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate parameter block {name:?}")));
        }
        let transform = name.transform();
        let raw = constrained.iter().map(|c| transform.inverse(*c)).collect::<Result<Vec<_>>>()?;
        self.layout.push(Block {
            name,
            offset: self.values.len(),
            len: raw.len(),
            transform,
        });
        self.values.extend(raw);
        Ok(())
    }

    /// Rebuilds from a layout and raw values; the layout must tile the values.
    pub fn from_flat(layout: Vec<Block>, values: Vec<f64>) -> Result<Self> {
        let mut next = 0;
        for b in &layout {
            if b.offset != next {
                return Err(Error::InvalidArgument(format!("block {:?} does not start at {next}", b.name)));
            }
            next += b.len;
        }
        if next != values.len() {
            return Err(Error::DimensionMismatch {
                what: "layout vs values",
                left: (next, 1),
                right: (values.len(), 1),
            });
        }
        Ok(ParamVector { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &[Block] {
        &self.layout
    }

    /// Same layout with new raw values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.layout.clone(), values)
    }

    pub fn block(&self, name: BlockName) -> Option<&Block> {
        self.layout.iter().find(|b| b.name == name)
    }

    pub fn raw(&self, name: BlockName) -> Option<&[f64]> {
        self.block(name).map(|b| &self.values[b.offset..b.offset + b.len])
    }

    /// Constrained values of a block.
    pub fn unpack(&self, name: BlockName) -> Option<Vec<f64>> {
        self.block(name)
            .map(|b| self.values[b.offset..b.offset + b.len].iter().map(|u| b.transform.forward(*u)).collect())
    }
}

/// Central differences with step `h·(1 + |x_i|)` per coordinate.
pub fn numeric_grad<F: FnMut(&ParamVector) -> f64 + ?Sized>(objective: &mut F, x: &ParamVector, h: f64) -> Result<Vec<f64>> {
    let mut probe = x.values.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x.values[i];
        let step = h * (1.0 + xi.abs());
        probe[i] = xi + step;
        let up = objective(&x.with_values(probe.clone())?);
        probe[i] = xi - step;
        let down = objective(&x.with_values(probe.clone())?);
        probe[i] = xi;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFiniteObjective { coordinate: i });
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial per-parameter step.
    pub step: f64,
    /// Relative improvement below which the ascent stops.
    pub tol: f64,
    /// Finite-difference step scale.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 2000,
            step: 0.05,
            tol: 1e-8,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step", self.step), ("tol", self.tol), ("fd_step", self.fd_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("optimizer {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    /// Backtracking factor applied to the accepted step.
    pub step_scale: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub x: ParamVector,
    pub objective: f64,
    /// Starting point first, then one row per accepted step.
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl OptimizeResult {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

const MAX_HALVINGS: usize = 40;
const STEP_GROW: f64 = 1.2;
const STEP_SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1.0;

pub fn maximize<F: FnMut(&ParamVector) -> f64>(
    objective: F,
    x0: &ParamVector,
    config: &OptimizerConfig,
) -> Result<OptimizeResult> {
    maximize_with_callback(objective, x0, config, |_, _| Ok(()))
}

/// Sign-based ascent with per-parameter step sizes: a step grows while its
/// gradient keeps its sign and shrinks when it flips. Each proposal is
/// halved until the objective does not decrease, so the trace is monotone.
/// `on_accept` sees every accepted point.
pub fn maximize_with_callback<F, C>(
    mut objective: F,
    x0: &ParamVector,
    config: &OptimizerConfig,
    mut on_accept: C,
) -> Result<OptimizeResult>
where
    F: FnMut(&ParamVector) -> f64,
    C: FnMut(&ParamVector, &TraceRow) -> Result<()>,
{
    config.validate()?;
    let mut x = x0.clone();
    let mut f = objective(&x);
    if !f.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let n = x.len();
    let mut steps = vec![config.step; n];
    let mut prev_grad = vec![0.0; n];
    let mut grad = numeric_grad(&mut objective, &x, config.fd_step)?;
    let first = TraceRow {
        iter: 0,
        objective: f,
        step_scale: 0.0,
        grad_norm: norm(&grad),
    };
    on_accept(&x, &first)?;
    let mut trace = vec![first];
    let mut converged = false;

    for iter in 1..=config.max_iters {
        for i in 0..n {
            let s = grad[i] * prev_grad[i];
            if s > 0.0 {
                steps[i] = (steps[i] * STEP_GROW).min(MAX_STEP);
            } else if s < 0.0 {
                steps[i] = (steps[i] * STEP_SHRINK).max(MIN_STEP);
            }
        }
        let direction: Vec<f64> = (0..n).map(|i| steps[i] * grad[i].signum() * (grad[i] != 0.0) as u8 as f64).collect();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = x.values.iter().zip(&direction).map(|(v, d)| v + scale * d).collect();
            let cand = x.with_values(cand)?;
            let fc = objective(&cand);
            if fc.is_finite() && fc >= f {
                accepted = Some((cand, fc));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        if scale < 1.0 {
            for s in steps.iter_mut() {
                *s = (*s * scale).max(MIN_STEP);
            }
        }
        let delta = fc - f;
        x = cand;
        f = fc;
        prev_grad = grad;
        grad = numeric_grad(&mut objective, &x, config.fd_step)?;
        let row = TraceRow {
            iter,
            objective: f,
            step_scale: scale,
            grad_norm: norm(&grad),
        };
        on_accept(&x, &row)?;
        trace.push(row);
        if delta < config.tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }
    Ok(OptimizeResult {
        x,
        objective: f,
        trace,
        converged,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Packs chosen parts of an [`SvgpState`]; the rest comes from a template.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgpParameterization {
    pub template: SvgpState,
    pub free: Vec<BlockName>,
}

impl SvgpParameterization {
    pub fn new(template: SvgpState, free: &[BlockName]) -> Result<Self> {
        let mut seen = HashSet::new();
        for b in free {
            if !seen.insert(*b) {
                return Err(Error::InvalidArgument(format!("block {b:?} listed twice")));
            }
        }
        let has_windows = template
            .features
            .iter()
            .any(|f| matches!(f, InducingFeature::GaussianWindow { .. }));
        let has_noise = matches!(template.likelihood, Likelihood::GaussianNoise { .. });
        let free = free
            .iter()
            .copied()
            .filter(|b| match b {
                BlockName::LogWidths => has_windows,
                BlockName::LogNoise => has_noise,
                _ => true,
            })
            .collect();
        Ok(SvgpParameterization { template, free })
    }

    pub fn pack(&self, s: &SvgpState) -> Result<ParamVector> {
        let mut p = ParamVector::new();
        let m = s.num_inducing();
        for b in &self.free {
            let v: Vec<f64> = match b {
                BlockName::QMean => s.q_mean.iter().copied().collect(),
                BlockName::QCholDiag => s.q_chol.diagonal().iter().copied().collect(),
                BlockName::QCholOffdiag => (0..m).flat_map(|i| (0..i).map(move |j| (i, j))).map(|ij| s.q_chol[ij]).collect(),
                BlockName::LogLengthscales => s.kernel.lengthscales.clone(),
                BlockName::LogVariance => vec![s.kernel.variance],
                BlockName::LogNoise => match s.likelihood {
                    Likelihood::GaussianNoise { noise_var } => vec![noise_var],
                    _ => unreachable!("filtered at construction"),
                },
                BlockName::FeatureCenters => s.features.iter().flat_map(|f| f.location().to_vec()).collect(),
                BlockName::LogWidths => s
                    .features
                    .iter()
                    .filter_map(|f| match f {
                        InducingFeature::GaussianWindow { widths, .. } => Some(widths.clone()),
                        InducingFeature::Point { .. } => None,
                    })
                    .flatten()
                    .collect(),
            };
            p.push_block(*b, &v)?;
        }
        Ok(p)
    }

    pub fn unpack(&self, p: &ParamVector) -> Result<SvgpState> {
        let mut s = self.template.clone();
        let m = s.num_inducing();
        let d = s.kernel.input_dim();
        for b in &self.free {
            let v = p
                .unpack(*b)
                .ok_or_else(|| Error::InvalidArgument(format!("parameter block {b:?} missing")))?;
            let expect = |n: usize| -> Result<()> {
                if v.len() == n {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        what: "parameter block length",
                        left: (v.len(), 1),
                        right: (n, 1),
                    })
                }
            };
            match b {
                BlockName::QMean => {
                    expect(m)?;
                    s.q_mean = DVector::from_vec(v);
                }
                BlockName::QCholDiag => {
                    expect(m)?;
                    for (i, x) in v.into_iter().enumerate() {
                        s.q_chol[(i, i)] = x;
                    }
                }
                BlockName::QCholOffdiag => {
                    expect(m * (m - 1) / 2)?;
                    let mut it = v.into_iter();
                    for i in 0..m {
                        for j in 0..i {
                            s.q_chol[(i, j)] = it.next().expect("length checked");
                        }
                    }
                }
                BlockName::LogLengthscales => {
                    expect(d)?;
                    s.kernel.lengthscales = v;
                }
                BlockName::LogVariance => {
                    expect(1)?;
                    s.kernel.variance = v[0];
                }
                BlockName::LogNoise => {
                    expect(1)?;
                    s.likelihood = Likelihood::GaussianNoise { noise_var: v[0] };
                }
                BlockName::FeatureCenters => {
                    expect(m * d)?;
                    for (f, c) in s.features.iter_mut().zip(v.chunks(d)) {
                        match f {
                            InducingFeature::Point { loc } => loc.copy_from_slice(c),
                            InducingFeature::GaussianWindow { center, .. } => center.copy_from_slice(c),
                        }
                    }
                }
                BlockName::LogWidths => {
                    let mut it = v.chunks(d);
                    for f in s.features.iter_mut() {
                        if let InducingFeature::GaussianWindow { widths, .. } = f {
                            let w = it.next().ok_or_else(|| Error::InvalidArgument("too few window widths".into()))?;
                            widths.copy_from_slice(w);
                        }
                    }
                    if it.next().is_some() {
                        return Err(Error::InvalidArgument("too many window widths".into()));
                    }
                }
            }
        }
        s.validate()?;
        Ok(s)
    }
}

/// Uncollapsed ELBO as a function of the free parameters; failures map to NaN.
pub fn elbo_objective<'a>(
    param: &'a SvgpParameterization,
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
) -> impl FnMut(&ParamVector) -> f64 + 'a {
    move |p| param.unpack(p).and_then(|s| elbo(&s, x, y)).unwrap_or(f64::NAN)
}

/// Collapsed bound for Gaussian noise as a function of the free
/// hyperparameter and feature blocks.
pub fn collapsed_objective<'a>(
    param: &'a SvgpParameterization,
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
) -> impl FnMut(&ParamVector) -> f64 + 'a {
    move |p| {
        param
            .unpack(p)
            .and_then(|s| match s.likelihood {
                Likelihood::GaussianNoise { noise_var } => collapsed_bound(&s.features, &s.kernel, x, y, noise_var),
                _ => Err(Error::InvalidArgument("collapsed bound needs Gaussian noise".into())),
            })
            .unwrap_or(f64::NAN)
    }
}

pub fn cox_objective<'a>(param: &'a SvgpParameterization, model: &'a CoxModel) -> impl FnMut(&ParamVector) -> f64 + 'a {
    move |p| param.unpack(p).and_then(|s| cox_elbo(&s, model)).unwrap_or(f64::NAN)
}
