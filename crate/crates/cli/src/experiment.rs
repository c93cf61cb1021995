//! Experiment presets: the cells each experiment runs and the data they use.

use std::path::Path;
use std::time::Instant;

use seboost::data::{gen_regression, load_idx};
use seboost::{
    Activation, BaselineConfig, BoostConfig, BoostError, DataError, Dataset, Method, Mlp, MlpSpec, Seboost,
    TraceRecord,
};

use crate::config::{Architecture, ExperimentConfig, ExperimentKind, DEFAULT_ANCHOR_PERIODS};

/// One training run configuration; combined with a seed it yields one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub baseline: BaselineConfig,
    pub boost: BoostConfig,
}

impl Cell {
    pub fn boosted(&self) -> bool {
        self.boost.boosting_enabled
    }
}

/// Learning rates from the paper's figure captions.
pub fn preset_lr(kind: ExperimentKind, method: Method) -> f64 {
    match (kind, method) {
        (ExperimentKind::Regression, Method::SgdMomentum) => 0.5,
        (ExperimentKind::Regression, Method::Nag) => 0.1,
        (ExperimentKind::Regression, Method::AdaGrad) => 0.05,
        (_, Method::SgdMomentum) => 0.1,
        (_, Method::Nag | Method::AdaGrad) => 0.01,
    }
}

/// The paper's experiments ran on Torch7, whose `optim.sgd` dampens momentum
/// by default and whose `optim.nag` does not.
pub fn preset_dampening(method: Method, momentum: f64) -> f64 {
    match method {
        Method::SgdMomentum => momentum,
        Method::Nag | Method::AdaGrad => 0.0,
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

/// Expand a config into its cells, in a stable order.
pub fn build_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let kind = cfg.experiment;
    let baseline_for = |method: Method, lr: Option<f64>| BaselineConfig {
        momentum: cfg.baseline.momentum,
        dampening: cfg.baseline.dampening.unwrap_or(preset_dampening(method, cfg.baseline.momentum)),
        adagrad_epsilon: cfg.baseline.adagrad_epsilon,
        ..BaselineConfig::new(method, lr.or(cfg.baseline.lr).unwrap_or_else(|| preset_lr(kind, method)))
    };
    let plain = |boost: &BoostConfig| BoostConfig {
        boosting_enabled: false,
        ..boost.clone()
    };
    let boosted = |boost: BoostConfig| BoostConfig {
        boosting_enabled: true,
        ..boost
    };
    let template = &cfg.boost;
    let single = cfg.baseline.method.unwrap_or(Method::SgdMomentum);
    let mut cells = Vec::new();
    let push_pair = |cells: &mut Vec<Cell>, suffix: &str, baseline: BaselineConfig, boost: &BoostConfig| {
        let name = baseline.method.name();
        cells.push(Cell {
            name: format!("{name}{suffix}"),
            baseline,
            boost: plain(boost),
        });
        if template.boosting_enabled {
            cells.push(Cell {
                name: format!("seboost-{name}{suffix}"),
                baseline,
                boost: boosted(boost.clone()),
            });
        }
    };

    match kind {
        ExperimentKind::Regression | ExperimentKind::Autoencoder => {
            let methods = cfg.baseline.method.map_or(Method::ALL.to_vec(), |m| vec![m]);
            for method in methods {
                push_pair(&mut cells, "", baseline_for(method, None), template);
            }
        }
        ExperimentKind::SweepLr => {
            for &lr in &cfg.sweep {
                push_pair(&mut cells, &format!("-lr{}", fmt_value(lr)), baseline_for(single, Some(lr)), template);
            }
        }
        ExperimentKind::SweepEll | ExperimentKind::SweepM | ExperimentKind::EnrichmentStudy => {
            let baseline = baseline_for(single, None);
            let name = single.name();
            cells.push(Cell {
                name: name.to_string(),
                baseline,
                boost: plain(template),
            });
            let variants: Vec<(String, BoostConfig)> = match kind {
                ExperimentKind::SweepEll => cfg
                    .sweep
                    .iter()
                    .map(|&v| {
                        let boost = BoostConfig {
                            ell: v as usize,
                            ..template.clone()
                        };
                        (format!("-ell{}", fmt_value(v)), boost)
                    })
                    .collect(),
                ExperimentKind::SweepM => cfg
                    .sweep
                    .iter()
                    .map(|&v| {
                        let boost = BoostConfig {
                            max_directions: v as usize,
                            ..template.clone()
                        };
                        (format!("-M{}", fmt_value(v)), boost)
                    })
                    .collect(),
                _ => {
                    let periods = if template.anchor_periods.is_empty() {
                        DEFAULT_ANCHOR_PERIODS.to_vec()
                    } else {
                        template.anchor_periods.clone()
                    };
                    let mu = template.enrich_momentum.unwrap_or(0.9);
                    let with = |anchors: bool, momentum: bool| BoostConfig {
                        anchor_periods: if anchors { periods.clone() } else { Vec::new() },
                        enrich_momentum: momentum.then_some(mu),
                        ..template.clone()
                    };
                    vec![
                        (String::new(), with(false, false)),
                        ("-anchors".into(), with(true, false)),
                        ("-momentum".into(), with(false, true)),
                        ("-anchors-momentum".into(), with(true, true)),
                    ]
                }
            };
            if template.boosting_enabled {
                for (suffix, boost) in variants {
                    cells.push(Cell {
                        name: format!("seboost-{name}{suffix}"),
                        baseline,
                        boost: boosted(boost),
                    });
                }
            }
        }
    }
    cells
}

/// Network and data shared by every cell of an experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: MlpSpec,
    pub weight_decay: f64,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn regression_spec() -> MlpSpec {
    MlpSpec::new(vec![6, 12, 8, 4, 1], Activation::Linear).expect("valid layer sizes")
}

pub fn autoencoder_spec(arch: Architecture) -> MlpSpec {
    let sizes = match arch {
        Architecture::Small => vec![784, 64, 784],
        Architecture::Full => vec![784, 200, 100, 64, 100, 200, 784],
    };
    MlpSpec::new(sizes, Activation::Tanh).expect("valid layer sizes")
}

/// Build the experiment's network and train/test split.
pub fn load_problem(cfg: &ExperimentConfig) -> Result<Problem, DataError> {
    let d = &cfg.data;
    let (spec, train, test) = if cfg.experiment.uses_mnist() {
        let all = load_mnist(&d.mnist_path)?;
        let (train, test) = all.subset(d.train_size + d.test_size, d.data_seed)?.split(d.train_size)?;
        let mut spec = autoencoder_spec(d.architecture);
        if all.input_dim() != spec.input_dim() {
            // non-28x28 inputs: keep the bottleneck, match the image size
            let mut sizes = spec.layer_sizes().to_vec();
            let last = sizes.len() - 1;
            sizes[0] = all.input_dim();
            sizes[last] = all.input_dim();
            spec = MlpSpec::new(sizes, Activation::Tanh).expect("valid layer sizes");
        }
        (spec, train, test)
    } else {
        let all = gen_regression(d.train_size + d.test_size, d.data_seed)?;
        let (train, test) = all.split(d.train_size)?;
        (regression_spec(), train, test)
    };
    Ok(Problem {
        spec,
        weight_decay: cfg.weight_decay,
        train,
        test,
    })
}

fn load_mnist(path: &Path) -> Result<Dataset, DataError> {
    log::info!("loading {}", path.display());
    load_idx(path)
}

/// Baseline steps for `epochs` passes over `train_len` rows.
pub fn total_steps(epochs: usize, train_len: usize, batch_size: usize) -> usize {
    (epochs * train_len).div_ceil(batch_size).max(1)
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell: String,
    pub seed: u64,
    pub boosted: bool,
    pub train_len: usize,
    pub batch_size: usize,
    pub records: Vec<TraceRecord>,
}

impl CellRun {
    pub fn file_stem(&self) -> String {
        format!("{}_seed{}", self.cell, self.seed)
    }
}

/// Train one cell from the seed's initialization.
pub fn run_cell(problem: &Problem, cell: &Cell, seed: u64, epochs: usize) -> Result<CellRun, BoostError> {
    let objective = Mlp::new(problem.spec.clone(), problem.weight_decay)?;
    let boost = BoostConfig {
        seed,
        ..cell.boost.clone()
    };
    let batch_size = boost.baseline_batch_size;
    let steps = total_steps(epochs, problem.train.len(), batch_size);
    let started = Instant::now();
    let mut run = Seboost::new(
        objective,
        cell.baseline,
        boost,
        problem.spec.init(seed),
        problem.train.clone(),
        problem.test.clone(),
    )?;
    let records = run.run(steps)?;
    log::info!(
        "{} seed {seed}: {} steps, {} boosts, final train loss {:.6} ({:.1}s)",
        cell.name,
        steps,
        run.boosts_done(),
        records.last().map_or(f64::NAN, |r| r.train_loss),
        started.elapsed().as_secs_f64()
    );
    Ok(CellRun {
        cell: cell.name.clone(),
        seed,
        boosted: cell.boosted(),
        train_len: problem.train.len(),
        batch_size,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn names(cells: &[Cell]) -> Vec<&str> {
        cells.iter().map(|c| c.name.as_str()).collect()
    }

    #[test]
    fn regression_cells() {
        let cfg = parse_config(r#"{"experiment":"regression"}"#).unwrap();
        let cells = build_cells(&cfg);
        assert_eq!(
            names(&cells),
            ["sgd", "seboost-sgd", "nag", "seboost-nag", "adagrad", "seboost-adagrad"]
        );
        assert_eq!(cells[1].baseline.lr, 0.5);
        assert_eq!(cells[3].baseline.lr, 0.1);
        assert_eq!(cells[5].baseline.lr, 0.05);
        assert!(cells[1].boosted() && !cells[0].boosted());
        assert_eq!((cells[1].boost.ell, cells[1].boost.max_directions), (100, 50));
        assert_eq!(cells[1].baseline.dampening, 0.9);
        assert_eq!(cells[3].baseline.dampening, 0.0);
    }

    #[test]
    fn sweep_cells() {
        let cfg = parse_config(r#"{"experiment":"sweep_ell"}"#).unwrap();
        let cells = build_cells(&cfg);
        assert_eq!(
            names(&cells),
            ["sgd", "seboost-sgd-ell50", "seboost-sgd-ell100", "seboost-sgd-ell200", "seboost-sgd-ell500"]
        );
        assert_eq!(cells[4].boost.ell, 500);
        let cfg = parse_config(r#"{"experiment":"sweep_lr","sweep":[0.05,0.5]}"#).unwrap();
        assert_eq!(
            names(&build_cells(&cfg)),
            ["sgd-lr0.05", "seboost-sgd-lr0.05", "sgd-lr0.5", "seboost-sgd-lr0.5"]
        );
    }

    #[test]
    fn enrichment_cells() {
        let cfg = parse_config(r#"{"experiment":"enrichment_study"}"#).unwrap();
        let cells = build_cells(&cfg);
        assert_eq!(cells.len(), 5);
        let anchors = cells.iter().find(|c| c.name == "seboost-sgd-anchors").unwrap();
        assert_eq!(anchors.boost.anchor_periods, DEFAULT_ANCHOR_PERIODS.to_vec());
        assert_eq!(anchors.boost.enrich_momentum, None);
        let both = cells.iter().find(|c| c.name == "seboost-sgd-anchors-momentum").unwrap();
        assert_eq!(both.boost.enrich_momentum, Some(0.9));
    }

    #[test]
    fn disabled_boosting_keeps_plain_cells() {
        let cfg = parse_config(r#"{"experiment":"autoencoder","boost":{"enabled":false}}"#).unwrap();
        assert_eq!(names(&build_cells(&cfg)), ["sgd", "nag", "adagrad"]);
    }

    #[test]
    fn steps_cover_epochs() {
        assert_eq!(total_steps(20, 18000, 100), 3600);
        assert_eq!(total_steps(1, 150, 100), 2);
    }
}
