//! Derivative-free tuning of the controller gains.
//!
//! Two optimizers work on the same normalized search box (`[0, 1]` per
//! dimension, mapped linearly or logarithmically onto the parameter range):
//!
//! * simulated annealing: Metropolis chain with Gaussian proposals whose
//!   width shrinks with the temperature `T0·cooling^iter`;
//! * exhaustive grid (labelled `grid`), evaluated in parallel and reduced
//!   deterministically by grid index.
//!
//! Every objective evaluation runs the closed loop from a fresh state.
//! Failed runs are scored with [`PENALTY`] instead of aborting the search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::CtrlParams;
use crate::engine::{run_closed_loop, ControllerConfig, LoopConfig};
use crate::error::{Error, Result};

/// Score assigned to runs that fail (divergence, degenerate metrics).
pub const PENALTY: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TunedParam {
    #[serde(rename = "Kp")]
    Kp,
    #[serde(rename = "Ki")]
    Ki,
    #[serde(rename = "k_alpha")]
    KAlpha,
    #[serde(rename = "k_beta")]
    KBeta,
}

impl TunedParam {
    pub fn name(self) -> &'static str {
        match self {
            TunedParam::Kp => "Kp",
            TunedParam::Ki => "Ki",
            TunedParam::KAlpha => "k_alpha",
            TunedParam::KBeta => "k_beta",
        }
    }

    /// Gains span decades; the initialization constants do not.
    pub fn default_scale(self) -> Scale {
        match self {
            TunedParam::Kp | TunedParam::Ki => Scale::Log,
            TunedParam::KAlpha | TunedParam::KBeta => Scale::Linear,
        }
    }

    pub fn get(self, p: &CtrlParams) -> f64 {
        match self {
            TunedParam::Kp => p.kp,
            TunedParam::Ki => p.ki,
            TunedParam::KAlpha => p.k_alpha,
            TunedParam::KBeta => p.k_beta,
        }
    }

    pub fn set(self, p: &mut CtrlParams, v: f64) {
        match self {
            TunedParam::Kp => p.kp = v,
            TunedParam::Ki => p.ki = v,
            TunedParam::KAlpha => p.k_alpha = v,
            TunedParam::KBeta => p.k_beta = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// One search dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub param: TunedParam,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
}

impl Dimension {
    pub fn new(param: TunedParam, min: f64, max: f64) -> Self {
        Self {
            param,
            min,
            max,
            scale: None,
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale.unwrap_or_else(|| self.param.default_scale())
    }

    /// Maps a unit coordinate onto the parameter range.
    pub fn value(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        match self.scale() {
            Scale::Linear => self.min + z * (self.max - self.min),
            Scale::Log => self.min * (self.max / self.min).powf(z),
        }
    }

    fn validate(&self) -> Result<()> {
        let field = format!("tune.space.{}", self.param.name());
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::param(
                field,
                format!("need finite min < max, got [{}, {}]", self.min, self.max),
            ));
        }
        if self.scale() == Scale::Log && self.min <= 0.0 {
            return Err(Error::param(field, "log scale needs min > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Objective {
    /// Mean squared tracking error over the metric window.
    SqError,
    /// |FF(v_B)| in percent.
    FfPercentAbs,
    Weighted { w_err: f64, w_ff: f64 },
    /// `Σ (x_i − center_i)²` over the searched parameters, without running
    /// the loop. Used to check optimizers and configurations.
    Quadratic { center: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Anneal {
        iters: usize,
        #[serde(rename = "T0")]
        t0: f64,
        cooling: f64,
        #[serde(default)]
        seed: u64,
    },
    Grid {
        points_per_dim: usize,
        /// Evaluate the axis neighbours of the grid optimum at half spacing.
        #[serde(default)]
        refine: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub base_config: LoopConfig,
    pub search_space: Vec<Dimension>,
    pub objective: Objective,
    pub optimizer: Optimizer,
    /// Maximum number of objective evaluations.
    pub budget: usize,
}

impl TuneSpec {
    pub fn validate(&self) -> Result<()> {
        validate_space(&self.search_space)?;
        if self.budget == 0 {
            return Err(Error::param("tune.budget", "must be >= 1"));
        }
        match &self.optimizer {
            Optimizer::Anneal { t0, cooling, .. } => {
                if !(*t0 > 0.0 && t0.is_finite()) {
                    return Err(Error::param("tune.optimizer.T0", "must be > 0"));
                }
                if !(*cooling > 0.0 && *cooling < 1.0) {
                    return Err(Error::param(
                        "tune.optimizer.cooling",
                        format!("must lie in (0, 1), got {cooling}"),
                    ));
                }
            }
            Optimizer::Grid { points_per_dim, .. } => {
                if *points_per_dim == 0 {
                    return Err(Error::param("tune.optimizer.points_per_dim", "must be >= 1"));
                }
                let size = grid_size(*points_per_dim, self.search_space.len());
                if size.is_none_or(|s| s > self.budget) {
                    return Err(Error::param(
                        "tune.budget",
                        format!(
                            "grid of {points_per_dim}^{} points exceeds the budget of {}",
                            self.search_space.len(),
                            self.budget
                        ),
                    ));
                }
            }
        }
        match &self.objective {
            Objective::Weighted { w_err, w_ff } => {
                if !(*w_err >= 0.0 && *w_ff >= 0.0) {
                    return Err(Error::param("tune.objective", "weights must be >= 0"));
                }
            }
            Objective::Quadratic { center } if center.len() != self.search_space.len() => {
                return Err(Error::param(
                    "tune.objective.center",
                    "needs one coordinate per search dimension",
                ));
            }
            _ => {}
        }
        match &self.base_config.controller {
            ControllerConfig::Cpi(_) => Ok(()),
            _ => Err(Error::Configuration(
                "tuning needs a `cpi` controller in the base configuration".into(),
            )),
        }
    }

    /// Base gains with the searched parameters replaced by `point`.
    pub fn params_at(&self, point: &[f64]) -> CtrlParams {
        let mut p = *self
            .base_config
            .controller
            .ctrl_params()
            .expect("validated: cpi controller");
        for (d, v) in self.search_space.iter().zip(point) {
            d.param.set(&mut p, *v);
        }
        p
    }

    /// Base configuration with the gains at `point`.
    pub fn config_at(&self, point: &[f64]) -> LoopConfig {
        let mut cfg = self.base_config.clone();
        cfg.controller = ControllerConfig::Cpi(self.params_at(point));
        cfg
    }

    fn score(&self, point: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { center } => {
                point.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum()
            }
            obj => objective(&self.config_at(point), obj),
        }
    }
}

fn grid_size(points: usize, dims: usize) -> Option<usize> {
    (0..dims).try_fold(1usize, |acc, _| acc.checked_mul(points))
}

fn validate_space(space: &[Dimension]) -> Result<()> {
    if space.is_empty() {
        return Err(Error::param("tune.space", "needs at least one dimension"));
    }
    for (i, d) in space.iter().enumerate() {
        d.validate()?;
        if space[..i].iter().any(|o| o.param == d.param) {
            return Err(Error::param(
                format!("tune.space.{}", d.param.name()),
                "listed twice",
            ));
        }
    }
    Ok(())
}

/// Scores one closed-loop run. Never fails: errors and non-finite metrics
/// map to [`PENALTY`].
pub fn objective(cfg: &LoopConfig, objective: &Objective) -> f64 {
    let metrics = match run_closed_loop(cfg) {
        Ok(r) => r.metrics,
        Err(_) => return PENALTY,
    };
    let sq = metrics.rmse_tracking * metrics.rmse_tracking;
    let ff = metrics.ff_vb_percent.abs();
    let score = match objective {
        Objective::SqError => sq,
        Objective::FfPercentAbs => ff,
        Objective::Weighted { w_err, w_ff } => w_err * sq + w_ff * ff,
        Objective::Quadratic { .. } => PENALTY,
    };
    if score.is_finite() {
        score.min(PENALTY)
    } else {
        PENALTY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Parameter values in search-space order.
    pub point: Vec<f64>,
    pub score: f64,
}

/// Result of a search over a box of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_point: Vec<f64>,
    pub best_score: f64,
    pub evaluations: usize,
    pub history: Vec<Evaluation>,
}

impl SearchResult {
    /// Running minimum of the history scores.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |best, e| {
                *best = best.min(e.score);
                Some(*best)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_params: CtrlParams,
    pub best_score: f64,
    pub evaluations: usize,
    pub history: Vec<Evaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSettings {
    pub iters: usize,
    pub t0: f64,
    pub cooling: f64,
    pub seed: u64,
}

/// Simulated annealing over `space`, minimizing `f`. The chain starts at
/// the centre of the normalized box and uses at most `budget` evaluations.
/// Returns the best point ever evaluated.
pub fn anneal_box<F>(space: &[Dimension], f: F, settings: AnnealSettings, budget: usize) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64,
{
    validate_space(space)?;
    if budget == 0 {
        return Err(Error::param("budget", "must be >= 1"));
    }
    if !(settings.cooling > 0.0 && settings.cooling < 1.0) {
        return Err(Error::param("cooling", "must lie in (0, 1)"));
    }
    if !(settings.t0 > 0.0) {
        return Err(Error::param("T0", "must be > 0"));
    }
    let to_point = |z: &[f64]| -> Vec<f64> {
        space.iter().zip(z).map(|(d, &zi)| d.value(zi)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut z = vec![0.5; space.len()];
    let mut point = to_point(&z);
    let mut score = f(&point);
    let mut history = vec![Evaluation {
        point: point.clone(),
        score,
    }];
    let (mut best_point, mut best_score) = (point.clone(), score);

    let total = budget.min(settings.iters.saturating_add(1));
    for iter in 0..total - 1 {
        let temperature = settings.t0 * settings.cooling.powi(iter as i32);
        let width = 0.1 * temperature / settings.t0;
        let z_new: Vec<f64> = z
            .iter()
            .map(|&zi| {
                let step: f64 = rng.sample(StandardNormal);
                (zi + width * step).clamp(0.0, 1.0)
            })
            .collect();
        let p_new = to_point(&z_new);
        let s_new = f(&p_new);
        history.push(Evaluation {
            point: p_new.clone(),
            score: s_new,
        });
        let delta = s_new - score;
        let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
        if accept {
            z = z_new;
            point = p_new;
            score = s_new;
        }
        if score < best_score {
            best_score = score;
            best_point = point.clone();
        }
    }
    Ok(SearchResult {
        best_point,
        best_score,
        evaluations: history.len(),
        history,
    })
}

/// Unit coordinates of grid point `index` (first dimension most significant).
fn grid_coords(index: usize, points: usize, dims: usize) -> Vec<f64> {
    let mut z = vec![0.0; dims];
    let mut rest = index;
    for d in (0..dims).rev() {
        let j = rest % points;
        rest /= points;
        z[d] = if points == 1 {
            0.5
        } else {
            j as f64 / (points - 1) as f64
        };
    }
    z
}

/// Exhaustive grid over `space`. Points are evaluated in parallel; the
/// reduction runs in index order so ties resolve to the lexicographically
/// smallest point.
pub fn grid_box<F>(space: &[Dimension], f: F, points_per_dim: usize, refine: bool, budget: usize) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    validate_space(space)?;
    if points_per_dim == 0 {
        return Err(Error::param("points_per_dim", "must be >= 1"));
    }
    let dims = space.len();
    let size = grid_size(points_per_dim, dims)
        .filter(|s| *s <= budget)
        .ok_or_else(|| {
            Error::param(
                "budget",
                format!("grid of {points_per_dim}^{dims} points exceeds the budget of {budget}"),
            )
        })?;
    let to_point = |z: &[f64]| -> Vec<f64> {
        space.iter().zip(z).map(|(d, &zi)| d.value(zi)).collect()
    };
    let mut history: Vec<Evaluation> = (0..size)
        .into_par_iter()
        .map(|i| {
            let point = to_point(&grid_coords(i, points_per_dim, dims));
            let score = f(&point);
            Evaluation { point, score }
        })
        .collect();

    let best_of = |h: &[Evaluation]| {
        let mut best = 0;
        for (i, e) in h.iter().enumerate() {
            let b = &h[best];
            if e.score < b.score
                || (e.score == b.score && lex_less(&e.point, &b.point))
            {
                best = i;
            }
        }
        best
    };
    let mut best = best_of(&history);

    if refine && points_per_dim > 1 {
        let centre = grid_coords(best, points_per_dim, dims);
        let half = 0.5 / (points_per_dim - 1) as f64;
        let mut extra = Vec::new();
        for d in 0..dims {
            for sign in [-1.0, 1.0] {
                let mut z = centre.clone();
                z[d] += sign * half;
                if (0.0..=1.0).contains(&z[d]) {
                    extra.push(z);
                }
            }
        }
        let room = budget - size;
        extra.truncate(room);
        let refined: Vec<Evaluation> = extra
            .into_par_iter()
            .map(|z| {
                let point = to_point(&z);
                let score = f(&point);
                Evaluation { point, score }
            })
            .collect();
        history.extend(refined);
        best = best_of(&history);
    }

    Ok(SearchResult {
        best_point: history[best].point.clone(),
        best_score: history[best].score,
        evaluations: history.len(),
        history,
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn into_tune_result(spec: &TuneSpec, r: SearchResult) -> TuneResult {
    TuneResult {
        best_params: spec.params_at(&r.best_point),
        best_score: r.best_score,
        evaluations: r.evaluations,
        history: r.history,
    }
}

/// Simulated annealing on the controller gains.
pub fn anneal(spec: &TuneSpec) -> Result<TuneResult> {
    spec.validate()?;
    let Optimizer::Anneal {
        iters,
        t0,
        cooling,
        seed,
    } = spec.optimizer
    else {
        return Err(Error::Configuration("optimizer is not `anneal`".into()));
    };
    let settings = AnnealSettings {
        iters,
        t0,
        cooling,
        seed,
    };
    let r = anneal_box(&spec.search_space, |p| spec.score(p), settings, spec.budget)?;
    Ok(into_tune_result(spec, r))
}

/// Exhaustive grid search on the controller gains.
pub fn grid_search(spec: &TuneSpec) -> Result<TuneResult> {
    spec.validate()?;
    let Optimizer::Grid {
        points_per_dim,
        refine,
    } = spec.optimizer
    else {
        return Err(Error::Configuration("optimizer is not `grid`".into()));
    };
    let r = grid_box(
        &spec.search_space,
        |p| spec.score(p),
        points_per_dim,
        refine,
        spec.budget,
    )?;
    Ok(into_tune_result(spec, r))
}

/// Dispatches on the configured optimizer.
pub fn tune(spec: &TuneSpec) -> Result<TuneResult> {
    match spec.optimizer {
        Optimizer::Anneal { .. } => anneal(spec),
        Optimizer::Grid { .. } => grid_search(spec),
    }
}
