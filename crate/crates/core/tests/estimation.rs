mod common;

use common::*;
use fairsynth_core::estimation::{
    fit_independence_given_overlap, fit_independent, fit_latent_nb, fit_marginal_preservation, log_likelihood,
    EmConfig, JointModel, Side, Structure,
};
use fairsynth_core::freq::Smoothing;
use fairsynth_core::metrics::cramers_v;
use fairsynth_core::sampling::sample;
use fairsynth_core::seed;
use proptest::prelude::*;

fn fit_all(toy: &Toy) -> Vec<(Oracle, JointModel)> {
    let o = toy.overlap_names();
    let s = Smoothing::off();
    vec![
        (Oracle::IndepOverlap, fit_independence_given_overlap(&toy.internal, &toy.external, &o, s).unwrap()),
        (
            Oracle::MarginalInternal,
            fit_marginal_preservation(&toy.internal, &toy.external, &o, Side::Internal, s).unwrap(),
        ),
        (
            Oracle::MarginalExternal,
            fit_marginal_preservation(&toy.internal, &toy.external, &o, Side::External, s).unwrap(),
        ),
        (Oracle::Independent, fit_independent(&toy.internal, &toy.external).unwrap()),
    ]
}

fn roles_strategy(n: usize) -> impl Strategy<Value = Vec<Role>> {
    prop::collection::vec(0usize..3, n)
        .prop_filter("needs an overlap", |v| v.contains(&1))
        .prop_map(|v| {
            v.into_iter()
                .map(|r| [Role::InternalOnly, Role::Overlap, Role::ExternalOnly][r])
                .collect()
        })
}

fn toy_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<Role>, u64)> {
    (2usize..=4)
        .prop_flat_map(|n| (prop::collection::vec(2usize..=3, n), roles_strategy(n), any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Non-binary cardinalities and mixed overlaps against hand evaluation.
    #[test]
    fn dense_joints_match_row_counts((cards, roles, s) in toy_strategy()) {
        let mut rng = seed::rng(s);
        let toy = random_toy(&cards, roles, 40, 55, &mut rng);
        for (kind, model) in fit_all(&toy) {
            let dense = model.dense_joint().unwrap();
            prop_assert!((dense.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (i, x) in cells(&cards).iter().enumerate() {
                prop_assert!((dense[i] - oracle_cell(kind, &toy, x)).abs() < 1e-12, "{kind:?} at {x:?}");
            }
        }
    }

    /// The preserved side's marginal is reproduced exactly.
    #[test]
    fn preservation_is_exact((cards, roles, s) in toy_strategy()) {
        let mut rng = seed::rng(s);
        let toy = random_toy(&cards, roles, 30, 70, &mut rng);
        let o = toy.overlap_names();
        for (side, data, attrs) in [
            (Side::Internal, &toy.internal, toy.internal_attrs()),
            (Side::External, &toy.external, toy.external_attrs()),
        ] {
            let m = fit_marginal_preservation(&toy.internal, &toy.external, &o, side, Smoothing::off()).unwrap();
            let eval = m.marginal_evaluator(&attrs).unwrap();
            for x in cells(&cards) {
                let row: Vec<usize> = attrs.iter().map(|&a| x[a]).collect();
                prop_assert!((eval.prob(&row) - freq(data, &x, &attrs)).abs() < 1e-12);
            }
        }
    }

    /// Marginal evaluation agrees with summing the dense joint.
    #[test]
    fn marginals_sum_the_joint((cards, roles, s) in toy_strategy(), mask in 1u32..16) {
        let mut rng = seed::rng(s);
        let toy = random_toy(&cards, roles, 25, 25, &mut rng);
        let keep: Vec<usize> = (0..cards.len()).filter(|&a| mask & (1 << a) != 0).collect();
        prop_assume!(!keep.is_empty());
        let mut models: Vec<JointModel> = fit_all(&toy).into_iter().map(|(_, m)| m).collect();
        models.push(random_mixture(&toy.schema, 3, &mut rng));
        for m in models {
            let dense = m.dense_joint().unwrap();
            let eval = m.marginal_evaluator(&keep).unwrap();
            let all = cells(&cards);
            for x in &all {
                let row: Vec<usize> = keep.iter().map(|&a| x[a]).collect();
                let want: f64 = all
                    .iter()
                    .zip(&dense)
                    .filter(|(y, _)| keep.iter().all(|&a| y[a] == x[a]))
                    .map(|(_, p)| p)
                    .sum();
                prop_assert!((eval.prob(&row) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_is_the_average((cards, roles, s) in toy_strategy()) {
        let mut rng = seed::rng(s);
        let toy = random_toy(&cards, roles, 33, 81, &mut rng);
        let m = fit_independence_given_overlap(&toy.internal, &toy.external, &toy.overlap_names(), Smoothing::off())
            .unwrap();
        let Structure::IndepOverlap { overlap, .. } = m.structure() else { panic!() };
        let o = toy.overlap();
        for x in cells(&cards) {
            let row: Vec<usize> = o.iter().map(|&a| x[a]).collect();
            let want = 0.5 * (freq(&toy.internal, &x, &o) + freq(&toy.external, &x, &o));
            prop_assert!((overlap.prob(&row) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn mixture_is_recovered() {
    let mut rng = seed::rng(11);
    let schema = schema(&[2, 3, 2, 2, 3]);
    // well separated components
    let truth = loop {
        let m = random_mixture(&schema, 2, &mut rng);
        let Structure::LatentNb(nb) = m.structure() else { unreachable!() };
        if nb.weights.iter().all(|&w| w > 0.25) {
            break m;
        }
    };
    let data = sample(&truth, 50_000, 5).unwrap();
    let half: Vec<usize> = (0..25_000).collect();
    let rest: Vec<usize> = (25_000..50_000).collect();
    let internal = data.select_rows(&half).project(&[0, 1, 2]).unwrap();
    let external = data.select_rows(&rest).project(&[2, 3, 4]).unwrap();
    let cfg = EmConfig {
        k: 2,
        seed: 3,
        ..EmConfig::default()
    };
    let fit = fit_latent_nb(&internal, &external, &["x2"], &cfg).unwrap();
    let d = tvd(&fit.model.dense_joint().unwrap(), &truth.dense_joint().unwrap());
    assert!(d < 0.02, "TVD {d}");
}

#[test]
fn mean_log_likelihood_approaches_negative_entropy() {
    let mut rng = seed::rng(12);
    let toy = random_toy(&[2, 3, 2, 2], vec![Role::InternalOnly, Role::Overlap, Role::ExternalOnly, Role::ExternalOnly], 400, 400, &mut rng);
    for (_, model) in fit_all(&toy) {
        let p = model.dense_joint().unwrap();
        let entropy: f64 = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        let s = sample(&model, 100_000, 9).unwrap();
        let ll = log_likelihood(&model, &s).unwrap();
        assert_eq!(ll.floored, 0);
        let mean = ll.value / s.n_rows() as f64;
        assert!((mean + entropy).abs() < 0.01, "{mean} vs {}", -entropy);
    }
}

#[test]
fn independent_model_has_no_association() {
    let mut rng = seed::rng(13);
    let toy = random_toy(&[2, 3, 2, 3], vec![Role::InternalOnly, Role::InternalOnly, Role::Overlap, Role::ExternalOnly], 500, 500, &mut rng);
    let model = fit_independent(&toy.internal, &toy.external).unwrap();
    let s = sample(&model, 100_000, 4).unwrap();
    let names = ["x0", "x1", "x2", "x3"];
    for i in 0..4 {
        for j in i + 1..4 {
            let v = cramers_v(&s, names[i], names[j]).unwrap();
            assert!(v < 0.02, "V({}, {}) = {v}", names[i], names[j]);
        }
    }
}

#[test]
fn em_trace_is_monotone_with_overlap_of_two() {
    let mut rng = seed::rng(14);
    let toy = random_toy(
        &[3, 2, 2, 3, 2],
        vec![Role::InternalOnly, Role::Overlap, Role::Overlap, Role::ExternalOnly, Role::ExternalOnly],
        600,
        300,
        &mut rng,
    );
    let cfg = EmConfig {
        k: 4,
        restarts: 3,
        seed: 1,
        ..EmConfig::default()
    };
    let fit = fit_latent_nb(&toy.internal, &toy.external, &toy.overlap_names(), &cfg).unwrap();
    for run in &fit.runs {
        assert!(run.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }
    let ll = log_likelihood(&fit.model, &toy.internal).unwrap().value
        + log_likelihood(&fit.model, &toy.external).unwrap().value;
    let last = *fit.runs[fit.best].trace.last().unwrap();
    assert!((ll - last).abs() < 1e-6 * ll.abs());
}
