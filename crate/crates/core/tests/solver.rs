//! Multigrid solver behaviour on the unit-square hierarchy.

use edgmg::experiment::run_iteration_study;
use edgmg::{
    build_figure1_coarse, EdgProblem, ExperimentConfig, LuFactorization, PenaltyLaw, Point2, RhsCase, SmootherConfig,
};

fn one(_: Point2) -> f64 {
    1.0
}

fn counts(config: &ExperimentConfig) -> Vec<usize> {
    let table = run_iteration_study(config).unwrap();
    assert!(table.all_converged());
    table.rows.iter().map(|r| r.iterations).collect()
}

#[test]
fn multigrid_agrees_with_direct_solve() {
    let tol = 1e-10;
    for p in 1..=3 {
        for law in [PenaltyLaw::inv_h(), PenaltyLaw::constant()] {
            let problem =
                EdgProblem::build(build_figure1_coarse(), 3, p, law, SmootherConfig::gauss_seidel(1), &one).unwrap();
            let level = &problem.levels[3];
            let direct = LuFactorization::new(&level.matrix.to_dense()).unwrap().solve(&level.rhs).unwrap();
            let (x, report) = problem.mg.solve(3, &level.rhs, &vec![0.0; level.n_dofs()], tol).unwrap();
            assert!(report.converged);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = x.iter().zip(&direct).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            // the error is bounded by the condition number times the residual
            assert!(err < 1e3 * tol, "p={p} {law:?}: relative error {err:e}");
        }
    }
}

#[test]
fn residual_history_decreases_geometrically() {
    let problem = EdgProblem::build(
        build_figure1_coarse(),
        4,
        2,
        PenaltyLaw::inv_h(),
        SmootherConfig::gauss_seidel(2),
        &one,
    )
    .unwrap();
    let level = &problem.levels[4];
    let (_, report) = problem.mg.solve(4, &level.rhs, &vec![0.0; level.n_dofs()], 1e-10).unwrap();
    let h = &report.residual_history;
    for w in h.windows(2) {
        assert!(w[1] < 0.6 * w[0], "history {h:?}");
    }
}

#[test]
fn more_smoothing_never_needs_more_iterations() {
    for p in 1..=3 {
        for penalty in [PenaltyLaw::inv_h(), PenaltyLaw::constant()] {
            let base = ExperimentConfig {
                degree: p,
                levels: 4,
                penalty,
                ..ExperimentConfig::default()
            };
            let m1 = counts(&ExperimentConfig {
                smoother: SmootherConfig::gauss_seidel(1),
                ..base.clone()
            });
            let m2 = counts(&ExperimentConfig {
                smoother: SmootherConfig::gauss_seidel(2),
                ..base
            });
            for (a, b) in m1.iter().zip(&m2) {
                assert!(b <= a, "p={p} {penalty:?}: m=1 {m1:?}, m=2 {m2:?}");
            }
        }
    }
}

#[test]
fn counts_barely_depend_on_the_load() {
    for p in 1..=3 {
        let base = ExperimentConfig {
            degree: p,
            levels: 4,
            ..ExperimentConfig::default()
        };
        let constant = counts(&base);
        let sine = counts(&ExperimentConfig {
            rhs: RhsCase::ManufacturedSine,
            ..base
        });
        for (a, b) in constant.iter().zip(&sine) {
            assert!(a.abs_diff(*b) <= 1, "p={p}: f=1 {constant:?}, sine {sine:?}");
        }
    }
}

#[test]
fn symmetric_smoother_converges_faster_per_cycle() {
    for p in 1..=3 {
        let base = ExperimentConfig {
            degree: p,
            levels: 4,
            ..ExperimentConfig::default()
        };
        let gs = counts(&base);
        let sgs = counts(&ExperimentConfig {
            smoother: SmootherConfig::symmetric_gauss_seidel(1),
            ..base
        });
        for (a, b) in gs.iter().zip(&sgs) {
            assert!(b <= a, "p={p}: gs {gs:?}, sgs {sgs:?}");
        }
    }
}

#[test]
fn damped_jacobi_smoother_converges() {
    let config = ExperimentConfig {
        degree: 1,
        levels: 3,
        smoother: SmootherConfig::jacobi(2, 0.8),
        ..ExperimentConfig::default()
    };
    let c = counts(&config);
    assert!(c.iter().all(|&k| k > 0 && k < 40), "{c:?}");
}
