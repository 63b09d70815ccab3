//! Experiment configuration and the built-in experiment definitions.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calib::PhaseParams;
use crate::datagen::{ModelKind, SignalPrior};
use crate::error::{Error, Result};
use crate::graphops::DEFAULT_FLOP_CEILING;
use crate::matrixgen::{pentadiagonal, random_sparse, tridiagonal, CorrMatrix};
use crate::ups::K_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Exp1,
    Exp2a,
    Exp2b,
    Exp2c,
    Exp3a,
    Exp3b,
    Exp3c,
    Exp4a,
    Exp4b,
    Custom,
}

impl ExperimentId {
    pub const BUILTIN: [ExperimentId; 9] = [
        ExperimentId::Exp1,
        ExperimentId::Exp2a,
        ExperimentId::Exp2b,
        ExperimentId::Exp2c,
        ExperimentId::Exp3a,
        ExperimentId::Exp3b,
        ExperimentId::Exp3c,
        ExperimentId::Exp4a,
        ExperimentId::Exp4b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2a => "exp2a",
            ExperimentId::Exp2b => "exp2b",
            ExperimentId::Exp2c => "exp2c",
            ExperimentId::Exp3a => "exp3a",
            ExperimentId::Exp3b => "exp3b",
            ExperimentId::Exp3c => "exp3c",
            ExperimentId::Exp4a => "exp4a",
            ExperimentId::Exp4b => "exp4b",
            ExperimentId::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentId::BUILTIN
            .iter()
            .chain([ExperimentId::Custom].iter())
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    PointMass,
    Uniform,
    TwoSidedMixture,
}

/// Prior shape; its center is the calibrated `tau` of each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    #[serde(default)]
    pub half_width: f64,
}

impl PriorSpec {
    pub fn point_mass() -> Self {
        PriorSpec {
            kind: PriorKind::PointMass,
            half_width: 0.0,
        }
    }

    pub fn at(&self, tau: f64) -> SignalPrior {
        match self.kind {
            PriorKind::PointMass => SignalPrior::PointMass { tau },
            PriorKind::Uniform => SignalPrior::Uniform {
                center: tau,
                half_width: self.half_width,
            },
            PriorKind::TwoSidedMixture => SignalPrior::TwoSidedMixture {
                center: tau,
                half_width: self.half_width,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaSpec {
    Identity,
    Tridiagonal { a: f64 },
    Pentadiagonal { a1: f64, a2: f64 },
    RandomSparse { avg_offdiag_per_row: f64, magnitude: f64 },
}

impl OmegaSpec {
    pub fn build<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Result<CorrMatrix> {
        match *self {
            OmegaSpec::Identity => Ok(CorrMatrix::identity(p)),
            OmegaSpec::Tridiagonal { a } => tridiagonal(p, a),
            OmegaSpec::Pentadiagonal { a1, a2 } => pentadiagonal(p, a1, a2),
            OmegaSpec::RandomSparse {
                avg_offdiag_per_row,
                magnitude,
            } => random_sparse(p, avg_offdiag_per_row, magnitude, rng),
        }
    }

    /// Correlation level used in the ideal lasso penalty.
    pub fn lasso_a(&self) -> f64 {
        match *self {
            OmegaSpec::Identity => 0.0,
            OmegaSpec::Tridiagonal { a } => a,
            OmegaSpec::Pentadiagonal { a1, .. } => a1,
            OmegaSpec::RandomSparse { magnitude, .. } => magnitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    UpsIdeal,
    UpsEstimated,
    UpsRefined,
    Lasso,
    Soft,
    Hard,
    SubsetComponents,
    /// UPS on a Stein observation drawn with the same coefficients, paired
    /// with the random-design fits of the same replication.
    UpsStein,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::UpsIdeal,
        Method::UpsEstimated,
        Method::UpsRefined,
        Method::Lasso,
        Method::Soft,
        Method::Hard,
        Method::SubsetComponents,
        Method::UpsStein,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::UpsIdeal => "ups_ideal",
            Method::UpsEstimated => "ups_estimated",
            Method::UpsRefined => "ups_refined",
            Method::Lasso => "lasso",
            Method::Soft => "soft",
            Method::Hard => "hard",
            Method::SubsetComponents => "subset_components",
            Method::UpsStein => "ups_stein",
        }
    }
}

/// How penalties and thresholds of the non-ideal methods are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningRule {
    /// Oracle thresholds computed from the calibration exponents.
    Ideal,
    /// `sqrt(2 q ln p)` thresholds with `q` from the parameters.
    FixedQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    P,
    N,
    Theta,
    Vartheta,
    R,
    Q,
    /// Sets `r` through `tau = sqrt(2 r ln p)`.
    Tau,
}

impl SweepField {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepField::P => "p",
            SweepField::N => "n",
            SweepField::Theta => "theta",
            SweepField::Vartheta => "vartheta",
            SweepField::R => "r",
            SweepField::Q => "q",
            SweepField::Tau => "tau",
        }
    }

    /// Application order when several axes are combined.
    fn rank(self) -> u8 {
        match self {
            SweepField::P => 0,
            SweepField::N => 1,
            SweepField::Theta => 2,
            SweepField::Vartheta => 3,
            SweepField::R => 4,
            SweepField::Q => 5,
            SweepField::Tau => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub field: SweepField,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: ExperimentId,
    pub p: usize,
    pub params: PhaseParams,
    pub prior: PriorSpec,
    pub omega_spec: OmegaSpec,
    pub model: ModelKind,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    /// Axes combined as a cartesian product, first axis outermost.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default = "default_tuning")]
    pub tuning: TuningRule,
    /// Sample size overriding `round(p^theta)`.
    #[serde(default)]
    pub n_override: Option<usize>,
    /// Signal fraction overriding `p^(-vartheta)`.
    #[serde(default)]
    pub eps_override: Option<f64>,
    /// Regularization threshold for the empirical Gram matrix; `1 / ln p` when absent.
    #[serde(default)]
    pub gram_threshold: Option<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_ceiling")]
    pub flop_ceiling: f64,
}

fn default_tuning() -> TuningRule {
    TuningRule::Ideal
}

fn default_k_max() -> usize {
    K_MAX
}

fn default_ceiling() -> f64 {
    DEFAULT_FLOP_CEILING
}

/// Fully resolved parameters of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub key: String,
    pub value: String,
    pub p: usize,
    pub n: usize,
    pub params: PhaseParams,
    pub tau: f64,
    pub eps: f64,
}

impl SweepPoint {
    pub fn s_expected(&self) -> f64 {
        self.p as f64 * self.eps
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.p < 2 {
            return Err(Error::invalid("p must be at least 2"));
        }
        if self.k_max > 62 {
            return Err(Error::invalid("k_max above 62 is not supported"));
        }
        if let Some(eps) = self.eps_override {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::invalid(format!("eps_override = {eps} not in [0,1]")));
            }
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::invalid(format!("sweep axis {} has no values", axis.field.as_str())));
            }
        }
        self.params.validate()?;
        for point in self.sweep_points()? {
            point.params.validate()?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expands the sweep into resolved points (a single point without a sweep).
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let mut combos: Vec<Vec<(SweepField, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push((axis.field, v));
                        c
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .enumerate()
            .map(|(index, combo)| self.resolve(index, &combo))
            .collect()
    }

    fn resolve(&self, index: usize, combo: &[(SweepField, f64)]) -> Result<SweepPoint> {
        let mut p = self.p;
        let mut n_axis = None;
        let mut params = self.params;
        let mut ordered = combo.to_vec();
        ordered.sort_by_key(|(f, _)| f.rank());
        for &(field, v) in &ordered {
            match field {
                SweepField::P => {
                    if !(v >= 2.0 && v.fract() == 0.0) {
                        return Err(Error::invalid(format!("swept p = {v} is not an integer >= 2")));
                    }
                    p = v as usize;
                }
                SweepField::N => {
                    if !(v >= 1.0 && v.fract() == 0.0) {
                        return Err(Error::invalid(format!("swept n = {v} is not a positive integer")));
                    }
                    n_axis = Some(v as usize);
                }
                SweepField::Theta => params.theta = v,
                SweepField::Vartheta => params.vartheta = v,
                SweepField::R => params.r = v,
                SweepField::Q => params.q = v,
                SweepField::Tau => params.r = crate::calib::r_of_tau(p, v),
            }
        }
        let size = crate::calib::calibrate(p, &params)?;
        let n = if self.model.is_stein() {
            p
        } else {
            n_axis.or(self.n_override).unwrap_or(size.n)
        };
        let key = combo.iter().map(|(f, _)| f.as_str()).collect::<Vec<_>>().join(";");
        let value = combo.iter().map(|&(_, v)| fmt_value(v)).collect::<Vec<_>>().join(";");
        Ok(SweepPoint {
            index,
            key,
            value,
            p,
            n,
            params,
            tau: size.tau,
            eps: self.eps_override.unwrap_or(size.eps),
        })
    }

    pub fn gram_threshold_for(&self, p: usize) -> f64 {
        self.gram_threshold
            .unwrap_or_else(|| crate::graphops::default_threshold(p))
    }
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step).round() as usize;
    (0..=count).map(|k| start + step * k as f64).collect()
}

/// The built-in experiments. `Desk` keeps every exponent and shrinks the
/// random-design dimensions so a run fits on a workstation.
pub fn builtin_config(id: ExperimentId, scale: Scale) -> Result<ExperimentConfig> {
    let desk = scale == Scale::Desk;
    let base = |id, p, params: PhaseParams, omega_spec, model, methods: Vec<Method>| ExperimentConfig {
        experiment_id: id,
        p,
        params,
        prior: PriorSpec::point_mass(),
        omega_spec,
        model,
        methods,
        reps: 100,
        seed: 20_120_517,
        sweep: Vec::new(),
        tuning: TuningRule::Ideal,
        n_override: None,
        eps_override: None,
        gram_threshold: None,
        k_max: K_MAX,
        flop_ceiling: DEFAULT_FLOP_CEILING,
    };
    let axis = |field, values: Vec<f64>| SweepAxis { field, values };
    let random_sparse = OmegaSpec::RandomSparse {
        avg_offdiag_per_row: 4.0,
        magnitude: 0.1,
    };
    let cfg = match id {
        ExperimentId::Exp1 => {
            let mut c = base(
                id,
                10_000,
                PhaseParams::new(0.5, 0.5, 3.0, 1.0).with_a(0.45),
                OmegaSpec::Tridiagonal { a: 0.45 },
                ModelKind::Stein,
                vec![Method::UpsIdeal, Method::Lasso],
            );
            c.sweep = vec![
                axis(SweepField::Vartheta, vec![0.25, 0.5, 0.65]),
                axis(SweepField::Tau, range(5.0, 12.0, 1.0)),
            ];
            c
        }
        ExperimentId::Exp2a | ExperimentId::Exp2b | ExperimentId::Exp2c => {
            let (omega, prior, model, a) = match id {
                ExperimentId::Exp2a => (
                    OmegaSpec::Pentadiagonal { a1: 0.4, a2: 0.1 },
                    PriorSpec {
                        kind: PriorKind::Uniform,
                        half_width: 0.5,
                    },
                    ModelKind::RandomDesignGaussian,
                    0.4,
                ),
                ExperimentId::Exp2b => (
                    random_sparse,
                    PriorSpec {
                        kind: PriorKind::Uniform,
                        half_width: 1.0,
                    },
                    ModelKind::RandomDesignGaussian,
                    0.1,
                ),
                _ => (
                    random_sparse,
                    PriorSpec {
                        kind: PriorKind::TwoSidedMixture,
                        half_width: 0.5,
                    },
                    ModelKind::RandomDesignUniform,
                    0.1,
                ),
            };
            let mut c = base(
                id,
                if desk { 2500 } else { 10_000 },
                PhaseParams::new(0.65, 0.91, 1.0, 1.0).with_a(a),
                omega,
                model,
                vec![Method::UpsIdeal, Method::Lasso],
            );
            c.prior = prior;
            c.sweep = vec![axis(SweepField::Tau, range(1.0, 7.0, 1.0))];
            if desk {
                c.reps = 30;
            }
            c
        }
        ExperimentId::Exp3a => {
            let mut c = base(
                id,
                10_000,
                PhaseParams::new(0.5, 0.5, 3.0, 1.0).with_a(0.45),
                OmegaSpec::Pentadiagonal { a1: 0.45, a2: 0.05 },
                ModelKind::Stein,
                vec![Method::UpsEstimated, Method::Lasso],
            );
            c.tuning = TuningRule::FixedQ;
            c.sweep = vec![
                axis(SweepField::Vartheta, vec![0.2, 0.5, 0.65]),
                axis(SweepField::Q, vec![0.7, 0.8, 0.9, 1.0, 1.1]),
            ];
            c
        }
        ExperimentId::Exp3b | ExperimentId::Exp3c => {
            let mut c = base(
                id,
                if desk { 2500 } else { 10_000 },
                PhaseParams::new(0.5, 0.8, 3.0, 1.0).with_a(0.45),
                OmegaSpec::Pentadiagonal { a1: 0.45, a2: 0.05 },
                ModelKind::RandomDesignGaussian,
                vec![Method::UpsRefined, Method::UpsEstimated, Method::Lasso],
            );
            c.tuning = TuningRule::FixedQ;
            c.sweep = if id == ExperimentId::Exp3b {
                vec![
                    axis(SweepField::Vartheta, vec![0.5, 0.65]),
                    axis(SweepField::Q, vec![0.7, 0.8, 0.9, 1.0, 1.1]),
                ]
            } else {
                vec![
                    axis(SweepField::Vartheta, vec![0.5, 0.65]),
                    axis(SweepField::Tau, range(6.0, 9.0, 0.5)),
                ]
            };
            if desk {
                c.reps = 30;
            }
            c
        }
        ExperimentId::Exp4a => {
            let mut c = base(
                id,
                100,
                PhaseParams::new(0.5, 0.5, 3.0, 1.0).with_a(0.1),
                random_sparse,
                ModelKind::Stein,
                vec![Method::UpsEstimated, Method::Lasso],
            );
            c.tuning = TuningRule::FixedQ;
            let ps: &[f64] = if desk {
                &[1e2, 1e3, 1e4, 1e5]
            } else {
                &[1e2, 1e3, 1e4, 1e5, 1e6]
            };
            c.sweep = vec![axis(SweepField::P, ps.to_vec())];
            c
        }
        ExperimentId::Exp4b => {
            let mut c = base(
                id,
                if desk { 2500 } else { 10_000 },
                PhaseParams::new(0.5, 0.5, 3.0, 1.0).with_a(0.1),
                random_sparse,
                ModelKind::RandomDesignGaussian,
                vec![Method::UpsEstimated, Method::UpsStein],
            );
            c.prior = PriorSpec {
                kind: PriorKind::TwoSidedMixture,
                half_width: 0.5,
            };
            c.tuning = TuningRule::FixedQ;
            let ns: &[f64] = if desk {
                &[300.0, 900.0, 2700.0]
            } else {
                &[300.0, 900.0, 2700.0, 8100.0, 24_300.0]
            };
            c.sweep = vec![axis(SweepField::N, ns.to_vec())];
            if desk {
                c.reps = 30;
            }
            c
        }
        ExperimentId::Custom => return Err(Error::UnknownExperiment("custom has no built-in definition".into())),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        let c = builtin_config(ExperimentId::Exp1, Scale::Paper).unwrap();
        assert_eq!(c.p, 10_000);
        assert_eq!(c.sweep_points().unwrap().len(), 24);
        let c = builtin_config(ExperimentId::Exp3a, Scale::Paper).unwrap();
        assert_eq!(c.sweep[1].field, SweepField::Q);
        assert_eq!(c.sweep[1].values, vec![0.7, 0.8, 0.9, 1.0, 1.1]);
        let c = builtin_config(ExperimentId::Exp4a, Scale::Paper).unwrap();
        assert_eq!(c.sweep[0].values, vec![1e2, 1e3, 1e4, 1e5, 1e6]);
        assert!(builtin_config(ExperimentId::Custom, Scale::Paper).is_err());
        assert!(ExperimentId::parse("exp9").is_err());
        assert_eq!(ExperimentId::parse("exp2b").unwrap(), ExperimentId::Exp2b);
    }

    #[test]
    fn every_builtin_validates_at_both_scales() {
        for id in ExperimentId::BUILTIN {
            for scale in [Scale::Paper, Scale::Desk] {
                let c = builtin_config(id, scale).unwrap();
                assert!(!c.sweep_points().unwrap().is_empty());
            }
        }
        let d = builtin_config(ExperimentId::Exp2a, Scale::Desk).unwrap();
        assert_eq!((d.p, d.reps), (2500, 30));
        assert_eq!(d.sweep_points().unwrap()[0].n, 1236);
    }

    #[test]
    fn sweep_resolution() {
        let c = builtin_config(ExperimentId::Exp1, Scale::Paper).unwrap();
        let pts = c.sweep_points().unwrap();
        assert_eq!(pts[0].key, "vartheta;tau");
        assert_eq!(pts[0].value, "0.25;5");
        assert!((pts[0].tau - 5.0).abs() < 1e-12);
        assert_eq!(pts[0].n, 10_000);
        assert_eq!(pts[9].params.vartheta, 0.5);

        let c = builtin_config(ExperimentId::Exp4b, Scale::Desk).unwrap();
        let ns: Vec<usize> = c.sweep_points().unwrap().iter().map(|p| p.n).collect();
        assert_eq!(ns, vec![300, 900, 2700]);

        let c = builtin_config(ExperimentId::Exp4a, Scale::Desk).unwrap();
        let pts = c.sweep_points().unwrap();
        assert_eq!(pts[3].p, 100_000);
        assert!((pts[3].tau - (6.0 * 1e5f64.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_json_round_trip() {
        let c = builtin_config(ExperimentId::Exp2c, Scale::Desk).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = builtin_config(ExperimentId::Exp1, Scale::Paper).unwrap();
        c.reps = 0;
        assert!(c.validate().is_err());
        let mut c = builtin_config(ExperimentId::Exp1, Scale::Paper).unwrap();
        c.sweep[0].values = vec![1.5];
        assert!(c.validate().is_err());
    }
}
