//! Replication loop: data generation, method fits and per-replication records.

use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, SweepPoint, TuningRule};
use crate::baselines::{
    ideal_lasso_lambda, lasso_cd, subset_on_components, threshold_select, LassoConfig, LassoProblem,
    SUBSET_K_MAX,
};
use crate::datagen::{draw_beta, draw_design_gaussian, draw_design_uniform, draw_response, draw_stein, Dataset, ModelKind};
use crate::error::{Error, Result};
use crate::graphops::{check_budget, GramSource, Sidedness};
use crate::matrixgen::{sqrt_factor, sym_sqrt_factor, CorrMatrix, SqrtFactor};
use crate::rng::{stream, StreamRole, SHARED_REP};
use crate::ups::{hamming, refine_from_inner, ups_from_inner, HammingLoss, SelectionResult, UpsOptions, UpsTuning, REFINE_RATIO};

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFit {
    pub hamming: HammingLoss,
    pub signals: usize,
    pub survivors: usize,
    pub refinement_rounds: usize,
    /// First standard-deviation ratio seen by the refinement loop.
    pub first_refine_ratio: Option<f64>,
    pub oversize_components: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub sweep_idx: usize,
    pub rep: usize,
    pub method: Method,
    /// `Err` holds the failure message; failed replications are excluded from the means.
    pub outcome: std::result::Result<RepFit, String>,
}

impl RepRecord {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Quantities shared by every replication of a sweep point.
struct PointSetup {
    omega: Arc<CorrMatrix>,
    /// Factor used for the design (symmetric root for the uniform design).
    design_factor: Option<SqrtFactor>,
    stein_factor: Option<SqrtFactor>,
}

fn setup_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<PointSetup> {
    let mut rng = stream(cfg.seed, point.index as u32, SHARED_REP, StreamRole::Omega);
    let omega = Arc::new(cfg.omega_spec.build(point.p, &mut rng)?);
    let design_factor = match cfg.model {
        ModelKind::Stein => None,
        ModelKind::RandomDesignGaussian => Some(sqrt_factor(&omega)?),
        ModelKind::RandomDesignUniform => Some(sym_sqrt_factor(&omega)?),
    };
    let stein_factor = if cfg.model.is_stein() || cfg.methods.contains(&Method::UpsStein) {
        Some(sqrt_factor(&omega)?)
    } else {
        None
    };
    if !cfg.model.is_stein() && !check_budget(point.n, point.p, cfg.flop_ceiling) {
        warn!(
            "sweep point {} ({}={}): n={} p={} exceeds the flop ceiling {:e}",
            point.index, point.key, point.value, point.n, point.p, cfg.flop_ceiling
        );
    }
    Ok(PointSetup {
        omega,
        design_factor,
        stein_factor,
    })
}

/// Observations of one replication.
struct RepData {
    beta: Vec<f64>,
    x: Option<DMatrix<f64>>,
    y: Vec<f64>,
    /// `X'Y` for random designs, `Ỹ` for the Stein model.
    inner: Vec<f64>,
}

fn draw_rep(cfg: &ExperimentConfig, point: &SweepPoint, setup: &PointSetup, rep: usize) -> Result<RepData> {
    let (s, r) = (point.index as u32, rep as u32);
    let prior = cfg.prior.at(point.tau);
    let beta = draw_beta(point.p, point.eps, &prior, &mut stream(cfg.seed, s, r, StreamRole::Beta))?;
    match cfg.model {
        ModelKind::Stein => {
            let factor = setup.stein_factor.as_ref().expect("Stein factor is built for the Stein model");
            let y = draw_stein(&setup.omega, factor, &beta, &mut stream(cfg.seed, s, r, StreamRole::Stein))?;
            Ok(RepData {
                inner: y.clone(),
                beta,
                x: None,
                y,
            })
        }
        kind => {
            let factor = setup.design_factor.as_ref().expect("design factor is built for random designs");
            let mut rng = stream(cfg.seed, s, r, StreamRole::Design);
            let x = if kind == ModelKind::RandomDesignGaussian {
                draw_design_gaussian(point.n, factor, &mut rng)
            } else {
                draw_design_uniform(point.n, factor, &mut rng)
            };
            let y = draw_response(&x, &beta, &mut stream(cfg.seed, s, r, StreamRole::Noise))?;
            let inner = x.tr_mul(&nalgebra::DVector::from_column_slice(&y)).as_slice().to_vec();
            Ok(RepData {
                beta,
                x: Some(x),
                y,
                inner,
            })
        }
    }
}

struct FitContext<'a> {
    cfg: &'a ExperimentConfig,
    point: &'a SweepPoint,
    setup: &'a PointSetup,
    data: &'a RepData,
    rep: usize,
}

impl FitContext<'_> {
    fn sidedness(&self) -> Sidedness {
        if self.cfg.prior.at(self.point.tau).is_two_sided() {
            Sidedness::TwoSided
        } else {
            Sidedness::OneSided
        }
    }

    fn options(&self) -> UpsOptions {
        UpsOptions {
            k_max: self.cfg.k_max,
            sidedness: self.sidedness(),
        }
    }

    fn source(&self) -> GramSource<'_> {
        match &self.data.x {
            Some(x) => GramSource::Design {
                x,
                threshold: self.cfg.gram_threshold_for(self.point.p),
            },
            None => GramSource::Known(&self.setup.omega),
        }
    }

    fn tuning(&self, inner: &[f64]) -> Result<UpsTuning> {
        match self.cfg.tuning {
            TuningRule::Ideal => Ok(UpsTuning::ideal(self.point.p, self.point.params.vartheta, self.point.tau)),
            TuningRule::FixedQ => UpsTuning::estimated(inner, self.point.params.q, self.sidedness()),
        }
    }

    fn lasso_lambda(&self) -> f64 {
        let prm = &self.point.params;
        match self.cfg.tuning {
            TuningRule::Ideal => ideal_lasso_lambda(prm.vartheta, prm.r, self.cfg.omega_spec.lasso_a(), self.point.tau),
            TuningRule::FixedQ => crate::calib::threshold_of(self.point.p, prm.q),
        }
    }

    fn fit(&self, method: Method) -> Result<SelectionResult> {
        let inner = &self.data.inner;
        let fit = match method {
            Method::UpsIdeal => {
                let tuning = UpsTuning::ideal(self.point.p, self.point.params.vartheta, self.point.tau);
                ups_from_inner(inner, &self.source(), &tuning, self.options())?
            }
            Method::UpsEstimated => {
                let tuning = UpsTuning::estimated(inner, self.point.params.q, self.sidedness())?;
                ups_from_inner(inner, &self.source(), &tuning, self.options())?
            }
            Method::UpsRefined => {
                if self.data.x.is_none() {
                    return Err(Error::invalid("ups_refined needs a random design"));
                }
                let tuning = self.tuning(inner)?;
                refine_from_inner(inner, &self.source(), &tuning, self.options())?
            }
            Method::Lasso => {
                let config = LassoConfig::new(self.lasso_lambda());
                let problem = match &self.data.x {
                    Some(x) => LassoProblem::Design { x, y: &self.data.y },
                    None => LassoProblem::SparseGram {
                        gram: self.setup.omega.as_sparse(),
                        c: inner,
                    },
                };
                let lf = lasso_cd(problem, &config)?;
                if !lf.converged {
                    return Err(Error::invalid(format!(
                        "lasso did not converge in {} sweeps (KKT violation {:e})",
                        lf.sweeps, lf.kkt_violation
                    )));
                }
                let mut res = SelectionResult::empty(inner.len(), "lasso");
                res.penalty = Some(config.lambda);
                res.survivor_count = lf.beta.iter().filter(|&&b| b != 0.0).count();
                res.beta_hat = lf.beta;
                res
            }
            Method::Soft => threshold_select(inner, self.lasso_lambda(), false),
            Method::Hard => threshold_select(inner, self.tuning(inner)?.t, true),
            Method::SubsetComponents => {
                let tuning = self.tuning(inner)?;
                subset_on_components(
                    inner,
                    &self.source(),
                    tuning.t,
                    tuning.lambda,
                    self.sidedness(),
                    self.cfg.k_max.min(SUBSET_K_MAX),
                )?
            }
            Method::UpsStein => {
                let factor = self
                    .setup
                    .stein_factor
                    .as_ref()
                    .expect("Stein factor is built when ups_stein is requested");
                let y = if self.data.x.is_some() {
                    let mut rng = stream(self.cfg.seed, self.point.index as u32, self.rep as u32, StreamRole::Stein);
                    draw_stein(&self.setup.omega, factor, &self.data.beta, &mut rng)?
                } else {
                    inner.clone()
                };
                let tuning = self.tuning(&y)?;
                let mut res = ups_from_inner(&y, &GramSource::Known(&self.setup.omega), &tuning, self.options())?;
                res.method_label = "ups_stein".into();
                res
            }
        };
        if !fit.component_failures.is_empty() {
            return Err(Error::invalid(format!(
                "{} component fit(s) failed: {}",
                fit.component_failures.len(),
                fit.component_failures[0]
            )));
        }
        Ok(fit)
    }
}

fn run_rep(cfg: &ExperimentConfig, point: &SweepPoint, setup: &PointSetup, rep: usize) -> Vec<RepRecord> {
    let record = |method, outcome| RepRecord {
        sweep_idx: point.index,
        rep,
        method,
        outcome,
    };
    let data = match draw_rep(cfg, point, setup, rep) {
        Ok(d) => d,
        Err(e) => {
            let msg = format!("data generation failed: {e}");
            return cfg.methods.iter().map(|&m| record(m, Err(msg.clone()))).collect();
        }
    };
    let ctx = FitContext {
        cfg,
        point,
        setup,
        data: &data,
        rep,
    };
    let signals = data.beta.iter().filter(|&&b| b != 0.0).count();
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = ctx.fit(method).and_then(|fit| {
                let loss = hamming(&fit.beta_hat, &data.beta)?;
                Ok(RepFit {
                    hamming: loss,
                    signals,
                    survivors: fit.survivor_count,
                    refinement_rounds: fit.refinement_rounds,
                    first_refine_ratio: fit.refinement_ratios.first().copied(),
                    oversize_components: fit.oversize_components,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                })
            });
            record(method, outcome.map_err(|e| e.to_string()))
        })
        .collect()
}

/// Runs replications `reps` of every sweep point. Records come back sorted by
/// sweep point, replication and method, independent of scheduling.
pub fn run_reps(cfg: &ExperimentConfig, reps: Range<usize>) -> Result<Vec<RepRecord>> {
    cfg.validate()?;
    if reps.end > u32::MAX as usize {
        return Err(Error::invalid("replication index out of range"));
    }
    let points = cfg.sweep_points()?;
    let mut records = Vec::new();
    for point in &points {
        let setup = setup_point(cfg, point)?;
        let batch: Vec<Vec<RepRecord>> = reps
            .clone()
            .into_par_iter()
            .map(|rep| run_rep(cfg, point, &setup, rep))
            .collect();
        records.extend(batch.into_iter().flatten());
    }
    records.sort_by(|a, b| (a.sweep_idx, a.rep, a.method).cmp(&(b.sweep_idx, b.rep, b.method)));
    Ok(records)
}

/// Whether a first refinement ratio counts as the stopping rule accepting a round.
pub fn refinement_accepted(ratio: f64) -> bool {
    ratio <= REFINE_RATIO
}

/// The dataset of replication `rep` at sweep point `sweep_idx`, identical to
/// the one [`run_reps`] fits.
pub fn generate_dataset(cfg: &ExperimentConfig, sweep_idx: usize, rep: usize) -> Result<(Dataset, SweepPoint)> {
    let point = sweep_point(cfg, sweep_idx)?;
    let setup = setup_point(cfg, &point)?;
    let data = draw_rep(cfg, &point, &setup, rep)?;
    let dataset = Dataset {
        beta: data.beta,
        x: data.x,
        y: data.y,
        kind: cfg.model,
        seed: cfg.seed,
        omega: setup.omega,
    };
    Ok((dataset, point))
}

/// Fits `method` to a dataset produced for replication `rep` of `cfg` at `sweep_idx`.
pub fn fit_dataset(
    cfg: &ExperimentConfig,
    sweep_idx: usize,
    rep: usize,
    dataset: &Dataset,
    method: Method,
) -> Result<SelectionResult> {
    let point = sweep_point(cfg, sweep_idx)?;
    if dataset.p() != point.p {
        return Err(Error::DimensionMismatch(format!(
            "dataset has p = {}, sweep point has p = {}",
            dataset.p(),
            point.p
        )));
    }
    let stein_factor = if method == Method::UpsStein {
        Some(sqrt_factor(&dataset.omega)?)
    } else {
        None
    };
    let setup = PointSetup {
        omega: dataset.omega.clone(),
        design_factor: None,
        stein_factor,
    };
    let data = RepData {
        beta: dataset.beta.clone(),
        x: dataset.x.clone(),
        y: dataset.y.clone(),
        inner: dataset.inner_products(),
    };
    let ctx = FitContext {
        cfg,
        point: &point,
        setup: &setup,
        data: &data,
        rep,
    };
    let mut fit = ctx.fit(method)?;
    fit.method_label = method.as_str().into();
    Ok(fit)
}

fn sweep_point(cfg: &ExperimentConfig, sweep_idx: usize) -> Result<SweepPoint> {
    cfg.validate()?;
    let mut points = cfg.sweep_points()?;
    if sweep_idx >= points.len() {
        return Err(Error::invalid(format!(
            "sweep index {sweep_idx} out of range ({} points)",
            points.len()
        )));
    }
    Ok(points.swap_remove(sweep_idx))
}
