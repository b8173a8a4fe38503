use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use edgmg::{
    build_figure1_coarse, CondensedLevel, EdgProblem, MeshHierarchy, PenaltyLaw, Point2, ReferenceElement,
    SmootherConfig, TransferOperator,
};

const LEVEL: usize = 4;

fn one(_: Point2) -> f64 {
    1.0
}

fn assembly(c: &mut Criterion) {
    let hierarchy = MeshHierarchy::build(build_figure1_coarse(), LEVEL);
    let mut group = c.benchmark_group("assemble");
    for p in 1..=3 {
        let reference = ReferenceElement::new(p).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| CondensedLevel::build(hierarchy.level(LEVEL), &reference, PenaltyLaw::inv_h(), &one).unwrap())
        });
    }
    group.finish();
}

fn injection(c: &mut Criterion) {
    let hierarchy = MeshHierarchy::build(build_figure1_coarse(), LEVEL);
    let mut group = c.benchmark_group("injection_build");
    for p in 1..=3 {
        let reference = ReferenceElement::new(p).unwrap();
        let coarse = CondensedLevel::build(hierarchy.level(LEVEL - 1), &reference, PenaltyLaw::inv_h(), &one).unwrap();
        let fine = CondensedLevel::build(hierarchy.level(LEVEL), &reference, PenaltyLaw::inv_h(), &one).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| TransferOperator::build(&hierarchy, LEVEL, &coarse, &fine.dofs, &reference).unwrap())
        });
    }
    group.finish();
}

fn v_cycle(c: &mut Criterion) {
    let mut group = c.benchmark_group("v_cycle");
    for p in 1..=3 {
        for m in 1..=2 {
            let problem = EdgProblem::build(
                build_figure1_coarse(),
                LEVEL,
                p,
                PenaltyLaw::inv_h(),
                SmootherConfig::gauss_seidel(m),
                &one,
            )
            .unwrap();
            let rhs = problem.levels[LEVEL].rhs.clone();
            group.bench_with_input(BenchmarkId::new(format!("p{p}"), m), &m, |b, _| {
                b.iter(|| problem.mg.v_cycle(LEVEL, black_box(&rhs)))
            });
        }
    }
    group.finish();
}

fn nested_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("nested_solve");
    group.sample_size(10);
    for p in 1..=3 {
        let problem = EdgProblem::build(
            build_figure1_coarse(),
            LEVEL,
            p,
            PenaltyLaw::inv_h(),
            SmootherConfig::gauss_seidel(1),
            &one,
        )
        .unwrap();
        let loads = problem.loads();
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| problem.mg.nested_solve(black_box(&loads), 1e-6).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, injection, v_cycle, nested_solve);
criterion_main!(benches);
