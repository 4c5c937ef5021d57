mod support;

use nilm_core::checkpoint;
use nilm_core::config::CaseConfig;
use nilm_core::data::NormStats;
use nilm_core::data::{AlignedHousehold, PowerSeries};
use nilm_core::models::{build_model, ArchitectureSpec, FreezePolicy};
use nilm_core::pipeline::{
    disaggregate, downstream_finetune, pretext_train, run_case, train_zsl, Scheme, Stage, StageSettings, TrainedModel,
};
use nilm_core::rng::{stream, Stream};
use nilm_core::Error;
use support::fixtures::{case_toml, desk_house, quick_settings, write_corpus};

fn frozen(name: &str) -> bool {
    !(name.starts_with("dense.") || name.starts_with("output."))
}

fn pretext(spec: &ArchitectureSpec, house: &AlignedHousehold, settings: &StageSettings) -> TrainedModel {
    pretext_train(spec, &[house], settings, "test").unwrap()
}

#[test]
fn pssl_freezes_feature_layers_bitwise() {
    let target = desk_house(3, 1);
    let sources = [desk_house(3, 2), desk_house(3, 3)];
    let refs: Vec<&AlignedHousehold> = sources.iter().collect();
    for spec in [ArchitectureSpec::s2p(79).unwrap(), ArchitectureSpec::bigru(5).unwrap()] {
        let pre = pretext(&spec, &target, &quick_settings(1, 256, 4));
        let tuned =
            downstream_finetune(&pre, &spec, "fridge", Scheme::Pssl, &refs, &quick_settings(3, 256, 5)).unwrap();
        assert_eq!(tuned.stages[1].freeze, FreezePolicy::Partial);
        assert_eq!(tuned.stages[1].report.history.len(), 3);
        for (a, b) in pre.model.net.params.iter().zip(tuned.model.net.params.iter()) {
            assert_eq!(a.name, b.name);
            let same = a
                .value
                .data()
                .iter()
                .zip(b.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            assert_eq!(same, frozen(&a.name), "{} {}", spec.kind, a.name);
        }
    }
}

fn changed_fraction<'a>(pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>) -> f64 {
    let (mut changed, mut total) = (0usize, 0usize);
    for (a, b) in pairs {
        for (x, y) in a.iter().zip(b) {
            total += 1;
            changed += usize::from(x.to_bits() != y.to_bits());
        }
    }
    changed as f64 / total as f64
}

fn fssl_pair(spec: &ArchitectureSpec) -> (TrainedModel, TrainedModel) {
    let target = desk_house(3, 11);
    let sources = [desk_house(3, 12)];
    let refs: Vec<&AlignedHousehold> = sources.iter().collect();
    let pre = pretext(spec, &target, &quick_settings(1, 256, 4));
    let tuned = downstream_finetune(&pre, spec, "fridge", Scheme::Fssl, &refs, &quick_settings(1, 256, 6)).unwrap();
    assert_eq!(tuned.model.trainable_count(), tuned.model.param_count());
    (pre, tuned)
}

#[test]
fn fssl_moves_nearly_every_bigru_parameter() {
    let (pre, tuned) = fssl_pair(&ArchitectureSpec::bigru(5).unwrap());
    let pairs = pre
        .model
        .net
        .params
        .iter()
        .zip(tuned.model.net.params.iter())
        .map(|(a, b)| (a.value.data(), b.value.data()));
    let frac = changed_fraction(pairs);
    assert!(frac >= 0.99, "{frac}");
}

/// In S2p the 1024-unit ReLU dense layer keeps units that are inactive on
/// every training window; their weights get zero gradient and stay put.
#[test]
fn fssl_moves_s2p_features_and_every_live_dense_unit() {
    let (pre, tuned) = fssl_pair(&ArchitectureSpec::s2p(79).unwrap());
    let (p, t) = (&pre.model.net.params, &tuned.model.net.params);
    let convs = p.iter().zip(t.iter()).filter(|(a, _)| a.name.starts_with("conv"));
    let frac = changed_fraction(convs.map(|(a, b)| (a.value.data(), b.value.data())));
    assert!(frac >= 0.99, "conv {frac}");

    let bits = |s: &nilm_core::nn::ParamStore, n: &str, i: usize| s.get(n).unwrap().value.data()[i].to_bits();
    let (mut live, mut dead) = (0, 0);
    for j in 0..1024 {
        let bias_moved = bits(p, "dense.bias", j) != bits(t, "dense.bias", j);
        let out_moved = bits(p, "output.weight", j) != bits(t, "output.weight", j);
        assert_eq!(bias_moved, out_moved, "unit {j}");
        let column_moved =
            (0..3950).any(|i| bits(p, "dense.weight", i * 1024 + j) != bits(t, "dense.weight", i * 1024 + j));
        assert_eq!(bias_moved, column_moved, "unit {j}");
        if bias_moved {
            live += 1
        } else {
            dead += 1
        }
    }
    assert!(live > dead, "{live} live, {dead} dead");
}

#[test]
fn stage_order_and_scheme_rules() {
    let spec = ArchitectureSpec::bigru(5).unwrap();
    let house = desk_house(2, 21);
    let settings = quick_settings(1, 128, 1);
    let pre = pretext(&spec, &house, &settings);
    assert_eq!(pre.last_stage(), Some(Stage::Pretext));
    assert!(pre.check_stage_order().is_ok());

    let err = disaggregate(&pre, &house.aggregate).unwrap_err();
    assert!(matches!(err, Error::Pipeline(_)));

    let ssl = downstream_finetune(&pre, &spec, "kettle", Scheme::Fssl, &[&house], &settings).unwrap();
    let order: Vec<Stage> = ssl.stages.iter().map(|s| s.stage).collect();
    assert_eq!(order, vec![Stage::Pretext, Stage::Downstream]);
    assert!(downstream_finetune(&ssl, &spec, "kettle", Scheme::Fssl, &[&house], &settings).is_err());
    assert!(downstream_finetune(&pre, &spec, "kettle", Scheme::Zsl, &[&house], &settings).is_err());

    let other = ArchitectureSpec::bigru(10).unwrap();
    let err = downstream_finetune(&pre, &other, "kettle", Scheme::Fssl, &[&house], &settings).unwrap_err();
    assert!(matches!(err, Error::Pipeline(_)));

    let zsl = train_zsl(&spec, "kettle", &[&house], &settings, "test").unwrap();
    assert_eq!(zsl.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), vec![Stage::Zsl]);

    let mut broken = ssl.clone();
    broken.stages.reverse();
    assert!(broken.check_stage_order().is_err());
    assert!(disaggregate(&broken, &house.aggregate).is_err());
}

#[test]
fn pretext_requires_data() {
    let spec = ArchitectureSpec::bigru(5).unwrap();
    assert!(matches!(
        pretext_train(&spec, &[], &quick_settings(1, 8, 0), "x"),
        Err(Error::Pipeline(_))
    ));
    let house = desk_house(1, 3);
    let err = train_zsl(&spec, "toaster", &[&house], &quick_settings(1, 8, 0), "x").unwrap_err();
    assert!(matches!(err, Error::Pipeline(_)));
}

#[test]
fn pretext_improves_on_initialization() {
    let house = desk_house(7, 31);
    let spec = ArchitectureSpec::s2p(79).unwrap();
    let pre = pretext(&spec, &house, &quick_settings(2, 512, 2));
    let r = &pre.stages[0].report;
    assert!(
        r.best_val_loss < r.initial_val_loss,
        "{} vs {}",
        r.best_val_loss,
        r.initial_val_loss
    );
}

#[test]
fn zsl_replays_bit_for_bit() {
    let spec = ArchitectureSpec::bigru(5).unwrap();
    let house = desk_house(2, 41);
    let settings = quick_settings(2, 128, 9);
    let a = train_zsl(&spec, "fridge", &[&house], &settings, "d").unwrap();
    let b = train_zsl(&spec, "fridge", &[&house], &settings, "d").unwrap();
    assert_eq!(a.model.net.params.snapshot(), b.model.net.params.snapshot());
    assert_eq!(a.stages, b.stages);
}

fn zero_model(spec: ArchitectureSpec) -> TrainedModel {
    let mut model = build_model(&spec, &mut stream(0, Stream::Init)).unwrap();
    for p in model.net.params.iter_mut() {
        p.value.fill(0.0);
    }
    let house = desk_house(1, 1);
    let mut trained = train_zsl(&spec, "fridge", &[&house], &quick_settings(1, 8, 0), "z").unwrap();
    trained.model = model;
    trained.target_stats = NormStats { mean: 0.0, std: 1.0 };
    trained
}

#[test]
fn zero_network_gives_zero_estimate_of_full_length() {
    for spec in [ArchitectureSpec::s2p(79).unwrap(), ArchitectureSpec::bigru(5).unwrap()] {
        let m = zero_model(spec);
        let agg = desk_house(1, 7).aggregate;
        let est = disaggregate(&m, &agg).unwrap();
        assert_eq!(est.len(), agg.len());
        assert_eq!((est.start, est.period), (agg.start, agg.period));
        assert!(est.values.iter().all(|v| *v == 0.0));
        assert!(est.valid.iter().all(|v| *v));
    }
}

#[test]
fn short_runs_and_gaps_come_out_invalid() {
    let m = zero_model(ArchitectureSpec::bigru(5).unwrap());
    let mut valid = vec![true; 20];
    valid[3] = false;
    valid[10] = false;
    let agg = PowerSeries::new(0, 60, vec![100.0; 20], valid.clone()).unwrap();
    let est = disaggregate(&m, &agg).unwrap();
    let mut expected = valid;
    expected[..3].iter_mut().for_each(|v| *v = false);
    assert_eq!(est.valid, expected);
}

#[test]
fn midpoint_estimate_shifts_with_the_aggregate() {
    let house = desk_house(2, 51);
    let spec = ArchitectureSpec::s2p(79).unwrap();
    let model = train_zsl(&spec, "fridge", &[&house], &quick_settings(1, 128, 3), "s").unwrap();
    let agg = desk_house(1, 52).aggregate;
    let k = 17;
    let n = agg.len() - k;
    let a = PowerSeries::from_values(agg.start, agg.values[k..].to_vec());
    let b = PowerSeries::from_values(agg.start, agg.values[..n].to_vec());
    let ea = disaggregate(&model, &a).unwrap();
    let eb = disaggregate(&model, &b).unwrap();
    let half = 39;
    for t in half..n - half - k {
        assert_eq!(ea.values[t].to_bits(), eb.values[t + k].to_bits(), "t={t}");
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let house = desk_house(2, 61);
    let spec = ArchitectureSpec::bigru(5).unwrap();
    let pre = pretext(&spec, &house, &quick_settings(1, 64, 1));
    let m = downstream_finetune(
        &pre,
        &spec,
        "fridge",
        Scheme::Pssl,
        &[&house],
        &quick_settings(1, 64, 2),
    )
    .unwrap();
    let path = dir.path().join("m.json");
    checkpoint::save(&m, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.model.net.params.snapshot(), m.model.net.params.snapshot());
    assert_eq!(back.stages, m.stages);
    assert_eq!(back.aggregate_stats, m.aggregate_stats);
    assert_eq!(back.target_stats, m.target_stats);
    assert_eq!(back.scheme, Some(Scheme::Pssl));
    let again = dir.path().join("n.json");
    checkpoint::save(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    let e1 = disaggregate(&m, &house.aggregate).unwrap();
    let e2 = disaggregate(&back, &house.aggregate).unwrap();
    assert_eq!(e1, e2);

    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replacen("nilm-checkpoint/1", "nilm-checkpoint/9", 1);
    std::fs::write(&path, text).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn case_run_keeps_test_labels_out_of_training() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), 3, 70);
    let config =
        CaseConfig::from_toml(&case_toml(3, "\"bigru\"", "\"fridge\", \"kettle\"", 1, 128), dir.path()).unwrap();
    let out = dir.path().join("out");
    let outcome = run_case(&config, &out).unwrap();
    assert_eq!(outcome.cells.len(), 6);
    assert_eq!(outcome.failures(), 0);

    let test_file = dir.path().join("house_1.csv").display().to_string();
    for r in outcome.access_log.records() {
        if r.path == test_file && r.channel != "aggregate" {
            assert_eq!(r.stage, "evaluation", "{r:?}");
        }
        if r.stage == "pretext" {
            assert_eq!(r.channel, "aggregate");
        }
    }
    assert!(outcome.access_log.records().iter().any(|r| r.stage == "evaluation"));
    for name in [
        "results.csv",
        "results.md",
        "cells.csv",
        "energy.csv",
        "losses.csv",
        "access_log.csv",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let estimates = std::fs::read_dir(out.join("estimates")).unwrap().count();
    assert_eq!(estimates, 6);
}

#[test]
fn failing_cell_does_not_stop_the_case() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), 2, 80);
    let toml = case_toml(2, "\"bigru\"", "\"fridge\", \"toaster\"", 1, 64)
        .replace("schemes = [\"zsl\", \"fssl\", \"pssl\"]", "schemes = [\"zsl\"]");
    let config = CaseConfig::from_toml(&toml, dir.path()).unwrap();
    let outcome = run_case(&config, &dir.path().join("out")).unwrap();
    assert_eq!(outcome.cells.len(), 2);
    assert_eq!(outcome.failures(), 1);
    let md = outcome.report.to_markdown();
    assert!(md.contains("toaster"));
}
