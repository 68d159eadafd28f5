use diagnet::augment::{expand_dataset, AugmentConfig};
use diagnet::datakit::{generate_two_annuli, normalize_features};
use diagnet::dfo::DfoConfig;
use diagnet::model::MlpSpec;
use diagnet::objective::LossConfig;
use diagnet::signedgraph::{build, validate, GraphConfig};
use diagnet::trainer::{evaluate, fit, TrainConfig};

fn setup(seed: u64) -> (diagnet::augment::ExpandedDataset, diagnet::signedgraph::SignedGraph) {
    let ds = generate_two_annuli(50, 1.0, 2.0, 0.5, 0.1, seed).unwrap();
    let (ds, _) = normalize_features(&ds).unwrap();
    let ex = expand_dataset(
        &ds,
        &AugmentConfig {
            rng_seed: seed,
            ..AugmentConfig::default()
        },
        &DfoConfig {
            rng_seed: seed + 100,
            ..DfoConfig::default()
        },
    )
    .unwrap();
    let g = build(&ex, &GraphConfig::default()).unwrap();
    (ex, g)
}

#[test]
fn objective_falls_over_the_first_ten_epochs() {
    let mut falling = 0;
    let mut trace = Vec::new();
    for seed in 0..10 {
        let (ex, g) = setup(seed);
        assert!(validate(&g, &ex).is_empty());
        let cfg = TrainConfig {
            epochs: 10,
            eval_every: 1,
            init_seed: seed,
            rng_seed: seed,
            ..TrainConfig::default()
        };
        let (_, report) = fit(&ex, &g, &MlpSpec::new(2, 2), &LossConfig::default(), &cfg, None).unwrap();
        let first = report.records.first().unwrap().loss.j_total;
        let last = report.records.last().unwrap().loss.j_total;
        falling += usize::from(last < first);
        trace.push((first, last));
    }
    assert!(falling >= 9, "J fell in {falling}/10 seeds: {trace:?}");
}

#[test]
fn reports_are_reproducible_and_sized() {
    let (ex, g) = setup(3);
    let cfg = TrainConfig {
        epochs: 25,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let spec = MlpSpec::new(2, 2);
    let test = ex.originals().unwrap();
    let a = fit(&ex, &g, &spec, &LossConfig::default(), &cfg, Some(&test)).unwrap();
    let b = fit(&ex, &g, &spec, &LossConfig::default(), &cfg, Some(&test)).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.records, b.1.records);
    let epochs: Vec<usize> = a.1.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, vec![10, 20, 25]);
    let last = a.1.records.last().unwrap();
    assert_eq!(Some(evaluate(&spec, &a.0, &test).unwrap().accuracy), last.test_accuracy);
    assert!(last.test_auc.is_some());
}
