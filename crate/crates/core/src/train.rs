//! Training and prediction for deep ensembles of mean-variance networks and
//! for the evidential (NIG) head.
//!
//! Every member trains with Adam on per-epoch shuffled mini-batches. All
//! randomness comes from the member seed: initial weights from one stream,
//! the shuffle order from another. Given the same data, configuration and
//! seed a run is bit-for-bit repeatable.

use std::fmt::Write as _;
use std::path::PathBuf;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{text_enum, Dataset, Dimensionality};
use crate::error::{Error, Result};
use crate::losses::{
    beta_nll_with_grad, de_aleatoric, nig_loss_with_grad, st_width, BetaSchedule, GaussianHead,
    LossConfig, NigHead,
};
use crate::nn::{clip_grad_norm, AdamConfig, AdamState, HeadActivation, Network, NetworkSpec, ParamStore, Tape};
use crate::rng::{stream_rng, TRAIN_SHUFFLE};

/// Rows per forward pass when predicting; bounds im2col memory for images.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    De,
    Der,
}

text_enum!(Method { De => "de", Der => "der" });

impl Method {
    pub const ALL: [Method; 2] = [Method::De, Method::Der];
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub method: Method,
    pub ensemble_size: usize,
    pub loss_config: LossConfig,
    /// β-NLL exponent per epoch; `None` keeps `loss_config.beta_weight`.
    pub beta_schedule: Option<BetaSchedule>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn new(method: Method, dim: Dimensionality) -> Self {
        Self {
            epochs: 100,
            batch_size: default_batch_size(dim),
            lr: 1e-3,
            seed: 0,
            method,
            ensemble_size: 10,
            loss_config: LossConfig::default(),
            beta_schedule: None,
            clip_norm: Some(10.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be > 0, got {c}")));
            }
        }
        self.loss_config
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        AdamState::new(AdamConfig::with_lr(self.lr), 0).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn beta_at(&self, epoch: usize) -> f64 {
        match self.beta_schedule {
            Some(s) => s.value(epoch, self.epochs),
            None => self.loss_config.beta_weight,
        }
    }
}

pub fn default_batch_size(dim: Dimensionality) -> usize {
    match dim {
        Dimensionality::D0 => 128,
        Dimensionality::D2 => 32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Ensemble member index; `None` for evidential runs and ensemble means.
    pub member: Option<usize>,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,val_mse,val_loss\n");
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch, r.val_mse, r.val_loss).unwrap();
        }
        out
    }

    /// Epoch-wise mean of several equally long traces.
    pub fn mean_of(traces: &[TrainTrace]) -> Result<TrainTrace> {
        let Some(first) = traces.first() else {
            return Err(Error::invalid("no traces to average"));
        };
        if traces.iter().any(|t| t.records.len() != first.records.len()) {
            return Err(Error::Shape("traces differ in length".into()));
        }
        let k = traces.len() as f64;
        let records = (0..first.records.len())
            .map(|i| {
                let mean = |f: fn(&EpochRecord) -> f64| traces.iter().map(|t| f(&t.records[i])).sum::<f64>() / k;
                EpochRecord {
                    epoch: first.records[i].epoch,
                    member: None,
                    train_loss: mean(|r| r.train_loss),
                    val_loss: mean(|r| r.val_loss),
                    val_mse: mean(|r| r.val_mse),
                }
            })
            .collect();
        Ok(TrainTrace {
            records,
            checkpoints: traces.iter().flat_map(|t| t.checkpoints.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub method: Method,
    pub dataset: String,
    pub mean: Vec<f64>,
    pub sigma_al: Vec<f64>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `sigma_al` one value per line, as written to `sigma_al.csv`.
    pub fn sigma_csv(&self) -> String {
        let mut out = String::from("sigma_al\n");
        for s in &self.sigma_al {
            writeln!(out, "{s}").unwrap();
        }
        out
    }
}

/// Per-epoch progress callback.
pub type Observer<'a> = &'a (dyn Fn(&EpochRecord) + Sync);

fn check_heads(spec: &NetworkSpec, expected: &[HeadActivation], what: &str) -> Result<()> {
    let got: Vec<HeadActivation> = spec.heads.iter().map(|h| h.activation).collect();
    if got != expected {
        return Err(Error::invalid(format!(
            "{what} needs head activations {expected:?}, network has {got:?}"
        )));
    }
    Ok(())
}

const MVE_HEADS: [HeadActivation; 2] = [HeadActivation::Linear, HeadActivation::Softplus];
const NIG_HEADS: [HeadActivation; 4] = [
    HeadActivation::Linear,
    HeadActivation::Softplus,
    HeadActivation::SoftplusPlusOne,
    HeadActivation::Softplus,
];

enum Objective {
    Mve { nll_const: f64 },
    Nig { lambda: f64 },
}

impl Objective {
    fn for_method(method: Method, loss: &LossConfig) -> Self {
        match method {
            Method::De => Objective::Mve {
                nll_const: loss.nll_const,
            },
            Method::Der => Objective::Nig {
                lambda: loss.lambda_reg,
            },
        }
    }

    /// Mean loss over the rows of `out` and its gradient with respect to
    /// the head outputs.
    fn evaluate(&self, out: ArrayView2<f64>, targets: &[f64], beta: f64) -> Result<(f64, Array2<f64>)> {
        match *self {
            Objective::Mve { nll_const } => {
                let heads: Vec<GaussianHead> = out
                    .rows()
                    .into_iter()
                    .map(|r| GaussianHead { mu: r[0], sigma2: r[1] })
                    .collect();
                let (loss, g) = beta_nll_with_grad(&heads, targets, beta, nll_const)?;
                Ok((loss, Array2::from_shape_vec((g.len(), 2), g.concat()).expect("two heads")))
            }
            Objective::Nig { lambda } => {
                let heads: Vec<NigHead> = out.rows().into_iter().map(nig_head).collect();
                let (loss, g) = nig_loss_with_grad(&heads, targets, lambda)?;
                Ok((loss, Array2::from_shape_vec((g.len(), 4), g.concat()).expect("four heads")))
            }
        }
    }
}

fn nig_head(r: ndarray::ArrayView1<f64>) -> NigHead {
    NigHead {
        gamma: r[0],
        nu: r[1],
        alpha: r[2],
        nig_beta: r[3],
    }
}

/// Pixel fluxes are ~1e-3 on average with peaks near 1.
const IMAGE_INPUT_GAIN: f64 = 10.0;

/// `(mean, std)` of `m` and `x` for `y ~ U[0, 2]` and `x ~ U[0.5, 10]`.
const LINE_INPUT_MOMENTS: [(f64, f64); 2] = [(0.315_340, 0.408_934), (5.25, 2.742_414)];

/// Dataset inputs under the fixed affine standardisation the networks see.
/// The constants depend only on the generator, never on a particular
/// sample, so trained parameters apply to any split.
pub fn model_inputs(d: &Dataset) -> Array2<f64> {
    let mut x = d.inputs();
    match d.dimensionality() {
        Dimensionality::D0 => {
            for (mut col, (mean, std)) in x.columns_mut().into_iter().zip(LINE_INPUT_MOMENTS) {
                col.mapv_inplace(|v| (v - mean) / std);
            }
        }
        Dimensionality::D2 => x.mapv_inplace(|v| v * IMAGE_INPUT_GAIN),
    }
    x
}

/// Inputs and trained labels of a split, materialised once.
struct Prepared {
    x: Array2<f64>,
    y: Vec<f64>,
}

impl Prepared {
    fn new(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::invalid(format!("dataset {} is empty", d.identity())));
        }
        Ok(Self {
            x: model_inputs(d),
            y: d.targets(),
        })
    }
}

fn forward_chunked(network: &Network, params: &ParamStore, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), network.n_heads()));
    for start in (0..x.nrows()).step_by(PREDICT_CHUNK) {
        let end = (start + PREDICT_CHUNK).min(x.nrows());
        let y = network.forward(params, x.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&y);
    }
    Ok(out)
}

fn mse(pred: impl Iterator<Item = f64>, targets: &[f64]) -> f64 {
    pred.zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / targets.len() as f64
}

fn diverged(epoch: usize, batch: usize, detail: impl Into<String>) -> Error {
    Error::Divergence {
        epoch,
        batch,
        detail: detail.into(),
    }
}

fn fit(
    network: &Network,
    objective: &Objective,
    train: &Prepared,
    val: &Prepared,
    cfg: &TrainConfig,
    member_seed: u64,
    member: Option<usize>,
    observer: Option<Observer>,
) -> Result<(ParamStore, TrainTrace)> {
    let mut params = network.init_params(member_seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), params.len())?;
    let mut shuffle = stream_rng(member_seed, TRAIN_SHUFFLE);
    let mut order: Vec<usize> = (0..train.y.len()).collect();
    let mut tape = Tape::new();
    let mut trace = TrainTrace::default();

    for epoch in 0..cfg.epochs {
        let beta = cfg.beta_at(epoch);
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = train.x.select(Axis(0), idx);
            let yb: Vec<f64> = idx.iter().map(|&i| train.y[i]).collect();
            let out = network.forward_train(&params, xb.view(), &mut tape)?;
            if out.iter().any(|v| !v.is_finite()) {
                return Err(diverged(epoch, batch, "non-finite network output"));
            }
            let (loss, grad) = objective
                .evaluate(out.view(), &yb, beta)
                .map_err(|e| diverged(epoch, batch, e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged(epoch, batch, format!("loss is {loss}")));
            }
            network.backward(&mut params, &tape, grad.view())?;
            let norm = match cfg.clip_norm {
                Some(c) => clip_grad_norm(&mut params, c),
                None => params.grad_norm(),
            };
            if !norm.is_finite() {
                return Err(diverged(epoch, batch, "non-finite gradient"));
            }
            adam.step(&mut params)?;
            loss_sum += loss * idx.len() as f64;
        }

        let out = forward_chunked(network, &params, val.x.view())?;
        let (val_loss, _) = objective
            .evaluate(out.view(), &val.y, beta)
            .map_err(|e| diverged(epoch, 0, format!("validation: {e}")))?;
        let record = EpochRecord {
            epoch,
            member,
            train_loss: loss_sum / train.y.len() as f64,
            val_loss,
            val_mse: mse(out.column(0).iter().copied(), &val.y),
        };
        if let Some(obs) = observer {
            obs(&record);
        }
        trace.records.push(record);
    }
    Ok((params, trace))
}

/// Trains one mean-variance network on β-NLL.
pub fn train_mve(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    member_seed: u64,
) -> Result<(ParamStore, TrainTrace)> {
    train_mve_observed(train, val, spec, cfg, member_seed, None)
}

pub fn train_mve_observed(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    member_seed: u64,
    observer: Option<Observer>,
) -> Result<(ParamStore, TrainTrace)> {
    cfg.validate()?;
    check_heads(spec, &MVE_HEADS, "a mean-variance network")?;
    let network = Network::new(spec.clone())?;
    let objective = Objective::for_method(Method::De, &cfg.loss_config);
    fit(
        &network,
        &objective,
        &Prepared::new(train)?,
        &Prepared::new(val)?,
        cfg,
        member_seed,
        None,
        observer,
    )
}

/// Trains `cfg.ensemble_size` members with member seeds `seed + k`.
pub fn train_de(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(Vec<ParamStore>, Vec<TrainTrace>)> {
    train_de_observed(train, val, spec, cfg, None)
}

pub fn train_de_observed(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<(Vec<ParamStore>, Vec<TrainTrace>)> {
    cfg.validate()?;
    if cfg.method != Method::De {
        return Err(Error::Config("train_de needs method = de".into()));
    }
    check_heads(spec, &MVE_HEADS, "a deep ensemble")?;
    let network = Network::new(spec.clone())?;
    let objective = Objective::for_method(Method::De, &cfg.loss_config);
    let (train, val) = (Prepared::new(train)?, Prepared::new(val)?);
    let members: Vec<(ParamStore, TrainTrace)> = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k as u64);
            fit(&network, &objective, &train, &val, cfg, seed, Some(k), observer)
        })
        .collect::<Result<_>>()?;
    Ok(members.into_iter().unzip())
}

/// Ensemble prediction: mean of member `μ`, `σ_al = sqrt(mean σ_k²)`.
pub fn predict_de(members: &[ParamStore], spec: &NetworkSpec, data: &Dataset) -> Result<PredictionSet> {
    if members.is_empty() {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    check_heads(spec, &MVE_HEADS, "a deep ensemble")?;
    let network = Network::new(spec.clone())?;
    let x = model_inputs(data);
    let outs: Vec<Array2<f64>> = members
        .iter()
        .map(|p| forward_chunked(&network, p, x.view()))
        .collect::<Result<_>>()?;
    let k = members.len() as f64;
    let mut mean = Vec::with_capacity(x.nrows());
    let mut sigma_al = Vec::with_capacity(x.nrows());
    let mut vars = vec![0.0; members.len()];
    for i in 0..x.nrows() {
        mean.push(outs.iter().map(|o| o[[i, 0]]).sum::<f64>() / k);
        for (v, o) in vars.iter_mut().zip(&outs) {
            *v = o[[i, 1]];
        }
        sigma_al.push(de_aleatoric(&vars)?);
    }
    Ok(PredictionSet {
        method: Method::De,
        dataset: data.identity(),
        mean,
        sigma_al,
    })
}

/// Trains the evidential network on the NIG loss with member seed `cfg.seed`.
pub fn train_der(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(ParamStore, TrainTrace)> {
    train_der_observed(train, val, spec, cfg, None)
}

pub fn train_der_observed(
    train: &Dataset,
    val: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<(ParamStore, TrainTrace)> {
    cfg.validate()?;
    if cfg.method != Method::Der {
        return Err(Error::Config("train_der needs method = der".into()));
    }
    check_heads(spec, &NIG_HEADS, "an evidential network")?;
    let network = Network::new(spec.clone())?;
    let objective = Objective::for_method(Method::Der, &cfg.loss_config);
    fit(
        &network,
        &objective,
        &Prepared::new(train)?,
        &Prepared::new(val)?,
        cfg,
        cfg.seed,
        None,
        observer,
    )
}

/// Evidential prediction: mean `γ`, `σ_al = w_St`.
pub fn predict_der(params: &ParamStore, spec: &NetworkSpec, data: &Dataset) -> Result<PredictionSet> {
    check_heads(spec, &NIG_HEADS, "an evidential network")?;
    let network = Network::new(spec.clone())?;
    let out = forward_chunked(&network, params, model_inputs(data).view())?;
    let heads: Vec<NigHead> = out.rows().into_iter().map(nig_head).collect();
    Ok(PredictionSet {
        method: Method::Der,
        dataset: data.identity(),
        mean: heads.iter().map(|h| h.gamma).collect(),
        sigma_al: heads.iter().map(st_width).collect(),
    })
}

/// Validation MSE of a prediction against the split's trained labels.
pub fn prediction_mse(preds: &PredictionSet, data: &Dataset) -> Result<f64> {
    let y = data.targets();
    if y.len() != preds.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", preds.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::invalid("empty prediction set"));
    }
    Ok(mse(preds.mean.iter().copied(), &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GenerateOptions, Injection, NoiseLevel, NoiseSpec, SplitSizes};
    use crate::losses::{st_log_pdf, student_t_log_pdf};
    use crate::nn::{build_mlp, build_mlp_0d, mve_heads, nig_heads};

    fn zero_noise(n: usize) -> crate::data::DataSplits {
        let noise = NoiseSpec::with_sigma(Injection::Output, NoiseLevel::Low, 0.0).unwrap();
        let sizes = SplitSizes::new(n, (n / 4).min(2000), (n / 4).min(2000));
        generate(Dimensionality::D0, noise, 11, sizes, &GenerateOptions::custom_sizes()).unwrap()
    }

    fn small_cfg(method: Method, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            ensemble_size: 3,
            ..TrainConfig::new(method, Dimensionality::D0)
        }
    }

    #[test]
    fn mve_learns_clean_map() {
        let d = zero_noise(90_000);
        let cfg = small_cfg(Method::De, 20);
        let (_, trace) = train_mve(&d.train, &d.val, &build_mlp_0d(mve_heads()), &cfg, 1).unwrap();
        assert_eq!(trace.records.len(), 20);
        assert_eq!(trace.last().unwrap().epoch, 19);
        assert!(trace.last().unwrap().val_mse < 1e-3, "{:?}", trace.last());
    }

    #[test]
    fn der_learns_clean_map() {
        let d = zero_noise(90_000);
        let cfg = small_cfg(Method::Der, 20);
        let (_, trace) = train_der(&d.train, &d.val, &build_mlp_0d(nig_heads()), &cfg).unwrap();
        assert!(trace.last().unwrap().val_mse < 1e-3, "{:?}", trace.last());
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let d = zero_noise(400);
        let spec = build_mlp_0d(mve_heads());
        let cfg = TrainConfig {
            lr: 0.0,
            ..small_cfg(Method::De, 1)
        };
        let (p, _) = train_mve(&d.train, &d.val, &spec, &cfg, 5).unwrap();
        let init = Network::new(spec).unwrap().init_params(5);
        assert_eq!(p.values, init.values);
    }

    #[test]
    fn runs_are_bit_identical() {
        let d = zero_noise(400);
        let spec = build_mlp(2, &[8], mve_heads());
        let cfg = small_cfg(Method::De, 3);
        let a = train_mve(&d.train, &d.val, &spec, &cfg, 9).unwrap();
        let b = train_mve(&d.train, &d.val, &spec, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = train_mve(&d.train, &d.val, &spec, &cfg, 10).unwrap();
        assert_ne!(a.0.values, c.0.values);
    }

    #[test]
    fn ensemble_members_match_single_runs() {
        let d = zero_noise(400);
        let spec = build_mlp(2, &[8], mve_heads());
        let cfg = TrainConfig {
            seed: 40,
            ..small_cfg(Method::De, 2)
        };
        let (members, traces) = train_de(&d.train, &d.val, &spec, &cfg).unwrap();
        assert_eq!(members.len(), 3);
        for (k, (p, t)) in members.iter().zip(&traces).enumerate() {
            let (single, single_trace) = train_mve(&d.train, &d.val, &spec, &cfg, 40 + k as u64).unwrap();
            assert_eq!(p.values, single.values);
            assert_eq!(t.records.len(), single_trace.records.len());
            assert!(t.records.iter().all(|r| r.member == Some(k)));
        }
        assert_ne!(members[0].values, members[1].values);

        let one = TrainConfig {
            ensemble_size: 1,
            ..cfg.clone()
        };
        let (m1, _) = train_de(&d.train, &d.val, &spec, &one).unwrap();
        assert_eq!(m1[0].values, members[0].values);
    }

    #[test]
    fn identical_members_predict_like_one() {
        let d = zero_noise(400);
        let spec = build_mlp(2, &[8], mve_heads());
        let p = Network::new(spec.clone()).unwrap().init_params(2);
        let one = predict_de(std::slice::from_ref(&p), &spec, &d.test).unwrap();
        let three = predict_de(&[p.clone(), p.clone(), p], &spec, &d.test).unwrap();
        for i in 0..one.len() {
            assert!((one.mean[i] - three.mean[i]).abs() < 1e-15);
            assert!((one.sigma_al[i] - three.sigma_al[i]).abs() < 1e-15);
        }
        assert!(three.sigma_al.iter().all(|s| *s > 0.0));
        assert_eq!(one.len(), d.test.len());
        assert!(predict_de(&[], &spec, &d.test).is_err());
    }

    #[test]
    fn der_head_width_prediction() {
        // zero weights: gamma = 0, nu = ln2, alpha = 1 + ln2, beta = ln2; bias
        // the last layer so that (nu, alpha, beta) = (1, 2, 2)
        let d = zero_noise(40);
        let spec = build_mlp(2, &[4], nig_heads());
        let mut p = Network::new(spec.clone()).unwrap().zero_params();
        let inv_softplus = |v: f64| (v.exp() - 1.0).ln();
        let n = p.len();
        p.values[n - 3] = inv_softplus(1.0);
        p.values[n - 2] = inv_softplus(1.0);
        p.values[n - 1] = inv_softplus(2.0);
        let preds = predict_der(&p, &spec, &d.test).unwrap();
        for s in &preds.sigma_al {
            assert!((s - 2f64.sqrt()).abs() < 1e-12, "{s}");
        }
        assert_eq!(preds, predict_der(&p, &spec, &d.test).unwrap());
    }

    #[test]
    fn unregularised_der_loss_is_student_t_nll() {
        let d = zero_noise(200);
        let spec = build_mlp(2, &[6], nig_heads());
        let network = Network::new(spec).unwrap();
        let p = network.init_params(3);
        let out = network.forward(&p, model_inputs(&d.val).view()).unwrap();
        let y = d.val.targets();
        let (loss, _) = Objective::Nig { lambda: 0.0 }.evaluate(out.view(), &y, 0.0).unwrap();
        let direct: f64 = out
            .rows()
            .into_iter()
            .zip(&y)
            .map(|(r, y)| {
                let h = nig_head(r);
                -student_t_log_pdf(*y, h.gamma, h.scale2(), 2.0 * h.alpha)
            })
            .sum::<f64>()
            / y.len() as f64;
        assert!((loss - direct).abs() < 1e-12);
        let via_st: f64 = out.rows().into_iter().zip(&y).map(|(r, y)| -st_log_pdf(*y, &nig_head(r))).sum::<f64>() / y.len() as f64;
        assert_eq!(loss, via_st);
    }

    #[test]
    fn head_invariants_hold_during_training() {
        let d = zero_noise(800);
        let spec = build_mlp(2, &[16], nig_heads());
        let cfg = TrainConfig {
            lr: 1e-2,
            ..small_cfg(Method::Der, 3)
        };
        let (p, _) = train_der(&d.train, &d.val, &spec, &cfg).unwrap();
        let out = Network::new(spec).unwrap().forward(&p, model_inputs(&d.test).view()).unwrap();
        for r in out.rows() {
            assert!(r[1] > 0.0 && r[2] > 1.0 && r[3] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let d = zero_noise(40);
        let spec = build_mlp_0d(mve_heads());
        for cfg in [
            TrainConfig { epochs: 0, ..small_cfg(Method::De, 1) },
            TrainConfig { batch_size: 0, ..small_cfg(Method::De, 1) },
            TrainConfig { ensemble_size: 0, ..small_cfg(Method::De, 1) },
            TrainConfig { lr: -1.0, ..small_cfg(Method::De, 1) },
        ] {
            assert!(matches!(train_de(&d.train, &d.val, &spec, &cfg), Err(Error::Config(_))));
        }
        assert!(train_der(&d.train, &d.val, &spec, &small_cfg(Method::Der, 1)).is_err());
        assert!(train_de(&d.train, &d.val, &spec, &small_cfg(Method::Der, 1)).is_err());
    }

    #[test]
    fn divergence_is_reported_with_position() {
        let mut d = zero_noise(400);
        if let crate::data::Samples::Line(s) = &mut d.train.samples {
            s[17].y_noisy = Some(f64::NAN);
        }
        let spec = build_mlp(2, &[8], mve_heads());
        match train_mve(&d.train, &d.val, &spec, &small_cfg(Method::De, 2), 0) {
            Err(Error::Divergence { epoch: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_and_mean() {
        let rec = |epoch, v: f64| EpochRecord {
            epoch,
            member: Some(0),
            train_loss: v,
            val_loss: v,
            val_mse: v * 2.0,
        };
        let a = TrainTrace {
            records: vec![rec(0, 1.0), rec(1, 0.5)],
            checkpoints: vec![],
        };
        let b = TrainTrace {
            records: vec![rec(0, 3.0), rec(1, 1.5)],
            checkpoints: vec![],
        };
        assert_eq!(a.to_csv(), "epoch,val_mse,val_loss\n0,2,1\n1,1,0.5\n");
        let m = TrainTrace::mean_of(&[a, b]).unwrap();
        assert_eq!(m.records[1].val_loss, 1.0);
        assert_eq!(m.records[0].val_mse, 4.0);
        assert!(TrainTrace::mean_of(&[]).is_err());
    }
}
