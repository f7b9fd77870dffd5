//! The four-point quadratic demo with prior-free and prior-guided ensembles.

use nalgebra::DVector;
use rbfgen::priors::{Direction, GaussianTarget, Statistic};
use rbfgen::rbf::evaluate_surrogate;
use rbfgen::svg::{Plot, Series};
use rbfgen::training::{fit_rbfgen, mean_and_interval, sample_null_space, LossHistory, Standardizer};
use rbfgen::{Bounds, Dataset, PriorKind, PriorTerm, ProbeGrid, RbfSystem, Result};

use crate::config::Demo1dConfig;

pub const DEMO_X: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

pub fn demo_truth(x: f64) -> f64 {
    20.0 * x * x + 20.0 * x + 1.0
}

pub fn demo_dataset() -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = DEMO_X.iter().map(|&x| vec![x]).collect();
    Dataset::from_rows(&rows, DEMO_X.iter().map(|&x| demo_truth(x)).collect(), Bounds::uniform(1, 0.0, 1.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoVariant {
    PriorFree,
    PointValue,
    Curvature,
    Monotone,
}

impl DemoVariant {
    pub const ALL: [DemoVariant; 4] = [
        DemoVariant::PriorFree,
        DemoVariant::PointValue,
        DemoVariant::Curvature,
        DemoVariant::Monotone,
    ];

    pub fn file_stem(&self) -> &'static str {
        match self {
            DemoVariant::PriorFree => "a_prior_free",
            DemoVariant::PointValue => "b_point_value",
            DemoVariant::Curvature => "c_curvature",
            DemoVariant::Monotone => "d_monotone",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            DemoVariant::PriorFree => "(a) prior-free relaxed ensemble",
            DemoVariant::PointValue => "(b) point-value prior",
            DemoVariant::Curvature => "(c) curvature prior",
            DemoVariant::Monotone => "(d) monotonicity prior",
        }
    }
}

/// Prior terms of a variant in original response units.
pub fn demo_priors(variant: DemoVariant, cfg: &Demo1dConfig) -> Result<Vec<PriorTerm>> {
    let p = &cfg.priors;
    match variant {
        DemoVariant::PriorFree => Ok(Vec::new()),
        DemoVariant::PointValue => Ok(vec![PriorTerm::new(
            "kl_point",
            PriorKind::Kl {
                statistic: Statistic::Point,
                target: GaussianTarget {
                    mean: demo_truth(p.point_x),
                    std: p.point_std,
                },
            },
            1.0,
            ProbeGrid::points(vec![vec![p.point_x]]),
        )?]),
        DemoVariant::Curvature => {
            let target = GaussianTarget {
                mean: p.curvature_target.unwrap_or(40.0),
                std: p.curvature_std,
            };
            p.curvature_at
                .iter()
                .enumerate()
                .map(|(i, &at)| {
                    PriorTerm::new(
                        format!("kl_curv_{i}"),
                        PriorKind::Kl {
                            statistic: Statistic::Curvature,
                            target,
                        },
                        1.0 / p.curvature_at.len() as f64,
                        ProbeGrid::curvature_stencil(&[at], 0, p.curvature_step),
                    )
                })
                .collect()
        }
        DemoVariant::Monotone => Ok(vec![PriorTerm::new(
            "mono",
            PriorKind::Mono {
                direction: Direction::NonDecreasing,
            },
            1.0,
            ProbeGrid::slice(&[0.0], 0, 0.0, 1.0, p.mono_points),
        )?]),
    }
}

/// Ensemble of one variant over standardized responses.
#[derive(Debug, Clone)]
pub struct DemoRun {
    pub variant: DemoVariant,
    pub system: RbfSystem,
    pub standardizer: Standardizer,
    pub members: Vec<DVector<f64>>,
    pub loss: Option<LossHistory>,
}

impl DemoRun {
    /// Member values at `x` in original units.
    pub fn values(&self, x: f64) -> Vec<f64> {
        self.members
            .iter()
            .map(|w| self.standardizer.inverse(evaluate_surrogate(&self.system, w, &[x])))
            .collect()
    }

    /// Member curves on `grid`, one row per member.
    pub fn curves(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        let per_x: Vec<Vec<f64>> = grid.iter().map(|&x| self.values(x)).collect();
        (0..self.members.len())
            .map(|m| per_x.iter().map(|v| v[m]).collect())
            .collect()
    }
}

pub fn run_variant(variant: DemoVariant, cfg: &Demo1dConfig) -> Result<DemoRun> {
    let data = demo_dataset()?;
    let train = &cfg.train_cfg;
    if variant == DemoVariant::PriorFree {
        let standardizer = Standardizer::fit(&data.y);
        let system = cfg.basis.build(&standardizer.apply(&data))?;
        let members = sample_null_space(&system, train.ensemble_size, cfg.untrained_scale, train.seed);
        return Ok(DemoRun {
            variant,
            system,
            standardizer,
            members,
            loss: None,
        });
    }
    let priors = demo_priors(variant, cfg)?;
    let ens = fit_rbfgen(&data, &priors, &cfg.basis, train)?;
    Ok(DemoRun {
        variant,
        system: ens.system,
        standardizer: ens.standardizer,
        members: ens.samples,
        loss: Some(ens.loss_history),
    })
}

/// Equispaced grid of `count` points on `[0, 1]`.
pub fn unit_grid(count: usize) -> Vec<f64> {
    (0..count).map(|i| i as f64 / (count - 1) as f64).collect()
}

/// Share of curves whose mean downward step exceeds `tol`.
pub fn violation_fraction(curves: &[Vec<f64>], tol: f64) -> f64 {
    if curves.is_empty() {
        return 0.0;
    }
    let bad = curves
        .iter()
        .filter(|c| {
            let gaps = (c.len() - 1).max(1) as f64;
            c.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum::<f64>() / gaps > tol
        })
        .count();
    bad as f64 / curves.len() as f64
}

/// `x,true,mean,lower,upper,m1..mM`.
pub fn curves_csv(run: &DemoRun, grid: &[f64]) -> String {
    let curves = run.curves(grid);
    let mut out = String::from("x,true,mean,lower,upper");
    for m in 1..=curves.len() {
        out.push_str(&format!(",m{m}"));
    }
    out.push('\n');
    for (i, &x) in grid.iter().enumerate() {
        let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let (mean, lo, hi) = mean_and_interval(column.clone(), 0.95);
        out.push_str(&format!("{x},{},{mean},{lo},{hi}", demo_truth(x)));
        for v in column {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn overlay_svg(run: &DemoRun, grid: &[f64], max_members: usize) -> String {
    let curves = run.curves(grid);
    let mut plot = Plot::new(run.variant.title(), "x", "f(x)");
    for c in curves.iter().take(max_members) {
        plot.push(Series::faint(grid.iter().copied().zip(c.iter().copied()).collect(), "#4c72b0"));
    }
    let mean: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, curves.iter().map(|c| c[i]).sum::<f64>() / curves.len().max(1) as f64))
        .collect();
    plot.push(Series::line("true f", grid.iter().map(|&x| (x, demo_truth(x))).collect(), "black"))
        .push(Series::line("ensemble mean", mean, "#dd8452"))
        .push(Series::scatter(
            "data",
            DEMO_X.iter().map(|&x| (x, demo_truth(x))).collect(),
            "#c44e52",
        ));
    plot.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use crate::config::RunConfig;

    fn quick() -> Demo1dConfig {
        match parse_config_str(
            r#"{"command":"demo1d","outDir":"o","trainCfg":{"iterations":20,"hidden":[8],"ensembleSize":10}}"#,
        )
        .unwrap()
        {
            RunConfig::Demo1d(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn dataset_holds_the_endpoints() {
        let d = demo_dataset().unwrap();
        assert_eq!(d.y[0], 1.0);
        assert_eq!(d.y[3], 41.0);
        assert!((demo_truth(0.3) - 8.8).abs() < 1e-12);
    }

    #[test]
    fn point_prior_targets_true_value() {
        let priors = demo_priors(DemoVariant::PointValue, &quick()).unwrap();
        match &priors[0].kind {
            PriorKind::Kl { target, .. } => assert!((target.mean - 8.8).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_variant_interpolates_the_data() {
        let cfg = quick();
        for v in DemoVariant::ALL {
            let run = run_variant(v, &cfg).unwrap();
            for &x in &DEMO_X {
                for value in run.values(x) {
                    assert!((value - demo_truth(x)).abs() <= 1e-8 * 41.0, "{v:?} at {x}: {value}");
                }
            }
        }
    }

    #[test]
    fn violation_fraction_counts_decreasing_curves() {
        let curves = vec![vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.999]];
        assert_eq!(violation_fraction(&curves, 1e-3), 0.25);
    }
}
