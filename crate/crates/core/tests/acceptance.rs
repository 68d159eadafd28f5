//! Acceptance suite. Every test prints one `ACCEPTANCE <id> PASS|FAIL` line
//! with the measured quantities before asserting.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use diagnet::augment::{expand_dataset_recorded, AugmentConfig, ExpandedClass, ExpandedDataset, Polarity, Provenance, Radii};
use diagnet::datakit::{generate_two_annuli, normalize_features, LabeledDataset};
use diagnet::dfo::DfoConfig;
use diagnet::geometry::{angular_cosine_distance, DistanceKind};
use diagnet::metrics::{roc_auc, roc_auc_pairwise};
use diagnet::model::{self, MlpSpec, Mode, Params};
use diagnet::objective::{graph_regularizer_edges, LossConfig};
use diagnet::seeding::derive_seed;
use diagnet::signedgraph::{build, Edge, GraphConfig};
use diagnet::trainer::{evaluate, fit, fit_baseline, full_batch_objective, TrainConfig};

fn verdict(id: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- 1

fn tiny_instance(rng: &mut ChaCha8Rng) -> ExpandedDataset {
    let mut class = |center: [f64; 2]| ExpandedClass {
        originals: (0..4)
            .map(|_| vec![center[0] + 0.4 * gaussian(rng), center[1] + 0.4 * gaussian(rng)])
            .collect(),
        positives: vec![vec![center[0] + 0.3 * gaussian(rng), center[1] + 0.3 * gaussian(rng)]],
        negatives: vec![vec![0.5 * (center[0] + center[1]), 0.5 * (center[0] + center[1])]],
    };
    ExpandedDataset {
        feature_names: vec!["x0".into(), "x1".into()],
        classes: vec![class([1.5, 0.3]), class([0.2, 1.4])],
    }
}

/// Which side of every ReLU, hinge and zero-norm boundary the instance sits
/// on. A finite difference is only meaningful when this does not change
/// across the step.
fn kink_pattern(ex: &ExpandedDataset, spec: &MlpSpec, params: &Params, mask_seed: u64, edges: &[Edge]) -> Vec<bool> {
    let traces: Vec<_> = ex
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let seed = derive_seed(mask_seed, &[k as u64]);
            model::forward(spec, params, &n.features, Mode::Train { seed }).unwrap()
        })
        .collect();
    let mut pattern: Vec<bool> = traces.iter().flat_map(|t| t.pre.iter().flatten().map(|z| *z > 0.0)).collect();
    pattern.extend(traces.iter().map(|t| t.embedding().iter().any(|v| *v != 0.0)));
    pattern.extend(edges.iter().filter(|e| e.phi < 0).map(|e| {
        angular_cosine_distance(traces[e.i].embedding(), traces[e.j].embedding()) < 1.0
    }));
    pattern
}

fn a1_gradient_matches_finite_differences() {
    let started = Instant::now();
    let spec = MlpSpec {
        input_dim: 2,
        hidden_dims: vec![8, 4],
        class_count: 2,
        dropout_rate: 0.5,
        weight_decay: 0.0,
    };
    let lc = LossConfig {
        lambda: 1.0,
        margin_m: 1.0,
        ..LossConfig::default()
    };
    let gcfg = GraphConfig {
        n_plus: 1,
        n_minus: 2,
        distance: DistanceKind::AngularCosine,
    };
    let step = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut probes, mut straddling, mut instances) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while probes < 240 {
        instances += 1;
        let mask_seed = instances;
        let ex = tiny_instance(&mut rng);
        assert_eq!(ex.len(), 12);
        let graph = build(&ex, &gcfg).unwrap();
        let mut params = model::init(&spec, instances).unwrap();
        for layer in &mut params.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..1.0);
            }
        }
        let here = kink_pattern(&ex, &spec, &params, mask_seed, &graph.edges);
        let (_, _, grad) = full_batch_objective(&ex, &graph, &spec, &params, &lc, Some(mask_seed)).unwrap();
        for _ in 0..60 {
            let k = rng.random_range(0..params.len());
            let theta = params.get(k);
            let mut up_p = params.clone();
            up_p.set(k, theta + step);
            let mut down_p = params.clone();
            down_p.set(k, theta - step);
            if kink_pattern(&ex, &spec, &up_p, mask_seed, &graph.edges) != here
                || kink_pattern(&ex, &spec, &down_p, mask_seed, &graph.edges) != here
            {
                straddling += 1;
                continue;
            }
            let (up, _, _) = full_batch_objective(&ex, &graph, &spec, &up_p, &lc, Some(mask_seed)).unwrap();
            let (down, _, _) = full_batch_objective(&ex, &graph, &spec, &down_p, &lc, Some(mask_seed)).unwrap();
            let numeric = (up - down) / (2.0 * step);
            let analytic = grad.get(k);
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale < 1e-10 { 0.0 } else { (analytic - numeric).abs() / scale };
            worst = worst.max(rel);
            probes += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-4 && secs < 10.0;
    verdict(
        "1",
        pass,
        &format!(
            "{probes} probes over {instances} instances ({straddling} straddling a kink skipped), max relative error {worst:.2e}, {secs:.2}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn random_expanded(rng: &mut ChaCha8Rng) -> ExpandedDataset {
    let classes = rng.random_range(2..=4);
    let dim = rng.random_range(2..=5);
    let budget = 500 / classes;
    let point = |rng: &mut ChaCha8Rng| (0..dim).map(|_| gaussian(rng)).collect::<Vec<f64>>();
    let mut out = Vec::new();
    for _ in 0..classes {
        let n = rng.random_range(2..=budget.min(80) - 20);
        let mut originals: Vec<Vec<f64>> = (0..n).map(|_| point(rng)).collect();
        // exact duplicates exercise the index tie-break
        for _ in 0..rng.random_range(0..3) {
            let copy = originals[rng.random_range(0..originals.len())].clone();
            originals.push(copy);
        }
        let positives = (0..rng.random_range(0..=8)).map(|_| point(rng)).collect();
        let negatives = (0..rng.random_range(0..=8)).map(|_| point(rng)).collect();
        out.push(ExpandedClass {
            originals,
            positives,
            negatives,
        });
    }
    ExpandedDataset {
        feature_names: (0..dim).map(|d| format!("f{d}")).collect(),
        classes: out,
    }
}

/// Straight from the definitions: scan every other node, keep those in the
/// pool, then pick the k smallest by (distance, index) one at a time.
fn brute_force_edges(ex: &ExpandedDataset, n_plus: usize, n_minus: usize, kind: DistanceKind) -> Vec<Edge> {
    let nodes = ex.nodes();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for (phi, k) in [(1i8, n_plus), (-1i8, n_minus)] {
            let mut cands: Vec<(f64, usize)> = Vec::new();
            for j in 0..nodes.len() {
                if j == i {
                    continue;
                }
                let same = nodes[j].class == nodes[i].class;
                let neg_neighbor = nodes[j].provenance == Provenance::NegativeNeighbor;
                let eligible = if phi > 0 { same && !neg_neighbor } else { !same || neg_neighbor };
                if eligible {
                    cands.push((kind.distance(&nodes[i].features, &nodes[j].features), j));
                }
            }
            for _ in 0..k.min(cands.len()) {
                let mut best = 0;
                for c in 1..cands.len() {
                    let (d, j) = cands[c];
                    let (bd, bj) = cands[best];
                    if d < bd || (d == bd && j < bj) {
                        best = c;
                    }
                }
                let (_, j) = cands.swap_remove(best);
                edges.push(Edge { i, j, phi });
            }
        }
    }
    edges
}

fn a2_graph_matches_brute_force() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut matched = 0;
    let mut largest = 0;
    for trial in 0..20 {
        let ex = random_expanded(&mut rng);
        largest = largest.max(ex.len());
        let kind = if trial % 2 == 0 {
            DistanceKind::AngularCosine
        } else {
            DistanceKind::Euclidean
        };
        let cfg = GraphConfig {
            n_plus: rng.random_range(0..=4),
            n_minus: rng.random_range(0..=6),
            distance: kind,
        };
        let g = build(&ex, &cfg).unwrap();
        matched += usize::from(g.edges == brute_force_edges(&ex, cfg.n_plus, cfg.n_minus, kind));
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = matched == 20 && largest <= 500 && secs < 30.0;
    verdict(
        "2",
        pass,
        &format!("{matched}/20 graphs identical (largest N={largest}), {secs:.2}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn a3_auc_matches_pairwise_estimator() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut exact = 0;
    for trial in 0..100 {
        let n = rng.random_range(2..=1000);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        labels.shuffle(&mut rng);
        // every third vector is coarsely quantized so ties are common
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = gaussian(&mut rng);
                if trial % 3 == 0 {
                    (s * 2.0).round() / 2.0
                } else {
                    s
                }
            })
            .collect();
        let fast = roc_auc(&scores, &labels).unwrap();
        let slow = roc_auc_pairwise(&scores, &labels).unwrap();
        exact += usize::from(fast == slow);
    }
    let pass = exact == 100;
    verdict("3", pass, &format!("{exact}/100 score vectors bit-identical"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn mean_pairwise_angular(points: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            sum += angular_cosine_distance(&points[i], &points[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

fn annuli_100(seed: u64) -> LabeledDataset {
    let ds = generate_two_annuli(100, 1.0, 2.0, 0.5, 0.1, seed).unwrap();
    normalize_features(&ds).unwrap().0
}

fn positive_spread(ds: &LabeledDataset, gamma: f64, radii: Option<Radii>, seed: u64) -> f64 {
    let cfg = AugmentConfig {
        gamma,
        radii,
        rng_seed: seed,
        ..AugmentConfig::default()
    };
    let dfo = DfoConfig {
        rng_seed: derive_seed(seed, &[0xDF]),
        ..DfoConfig::default()
    };
    let out = expand_dataset_recorded(ds, &cfg, &dfo).unwrap();
    let per_class: Vec<f64> = out.expanded.classes.iter().map(|c| mean_pairwise_angular(&c.positives)).collect();
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

fn a4_augmentation_contracts() {
    let started = Instant::now();
    let mut optimal = 0;
    let mut searches = 0;
    let mut counts_ok = true;
    let mut wins = 0;
    let mut spreads = Vec::new();
    for seed in 0..10 {
        let ds = annuli_100(seed);
        let cfg = AugmentConfig {
            rng_seed: seed,
            ..AugmentConfig::default()
        };
        let dfo = DfoConfig {
            rng_seed: derive_seed(seed, &[0xDF]),
            ..DfoConfig::default()
        };
        let out = expand_dataset_recorded(&ds, &cfg, &dfo).unwrap();
        for (class, records) in out.expanded.classes.iter().zip(&out.records) {
            counts_ok &= class.originals.len() == 100 && class.positives.len() == 20 && class.negatives.len() == 20;
            for r in records {
                let extremum = match r.polarity {
                    Polarity::Positive => r.evaluated.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Polarity::Negative => r.evaluated.iter().copied().fold(f64::INFINITY, f64::min),
                };
                searches += 1;
                optimal += usize::from(r.objective == extremum && r.evaluated.len() == cfg.budget_t);
            }
        }
        let on = positive_spread(&ds, 1e-2, None, seed);
        let off = positive_spread(&ds, 0.0, None, seed);
        wins += usize::from(on > off);
        spreads.push((on, off));
    }
    let secs = started.elapsed().as_secs_f64();
    let a = optimal == searches;
    let b = wins >= 8;
    let c = counts_ok;
    verdict("4a", a, &format!("{optimal}/{searches} accepted neighbors equal their run's extremum"));
    verdict(
        "4b",
        b,
        &format!("gamma=1e-2 spread larger in {wins}/10 seeds at the default radii (on, off): {spreads:.4?}"),
    );
    verdict("4c", c, "20 positives and 20 negatives per 100-sample class");
    verdict("4-runtime", secs < 300.0, &format!("{secs:.1}s"));
    assert!(a && c && secs < 300.0);
    assert!(b, "spacing penalty had no measurable effect at the default radii");
}

/// The spacing mechanism itself, with a radius large enough for the hinge to
/// engage. Not a substitute for 4b, which uses the default radii.
fn a4_spacing_with_engaged_radius() {
    let radii = Radii {
        r1: 0.05,
        r2: 0.05,
        r3: 0.15,
    };
    let mut wins = 0;
    for seed in 0..10 {
        let ds = annuli_100(seed);
        wins += usize::from(positive_spread(&ds, 1e-2, Some(radii), seed) > positive_spread(&ds, 0.0, Some(radii), seed));
    }
    verdict("4b-engaged-radius", wins >= 8, &format!("r1=0.05: spread larger in {wins}/10 seeds"));
    assert!(wins >= 8);
}

// ---------------------------------------------------------------- 5

fn a5_ablation_direction() {
    let started = Instant::now();
    let (n_train, n_test, noise) = (20, 500, 0.3);
    let (mut base_sum, mut full_sum) = (0.0, 0.0);
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let train = generate_two_annuli(n_train, 1.0, 2.0, 0.5, noise, 1000 + seed).unwrap();
        let test = generate_two_annuli(n_test, 1.0, 2.0, 0.5, noise, 5000 + seed).unwrap();
        let (train, scaler) = normalize_features(&train).unwrap();
        let test = scaler.apply_dataset(&test).unwrap();
        let spec = MlpSpec::new(2, 2);
        let tcfg = TrainConfig {
            init_seed: seed,
            rng_seed: seed,
            eval_every: 50,
            ..TrainConfig::default()
        };
        let (pb, _) = fit_baseline(&train, &spec, &tcfg, None).unwrap();
        let base = evaluate(&spec, &pb, &test).unwrap().accuracy;

        let acfg = AugmentConfig {
            rng_seed: seed,
            ..AugmentConfig::default()
        };
        let dfo = DfoConfig {
            rng_seed: derive_seed(seed, &[0xDF]),
            ..DfoConfig::default()
        };
        let ex = expand_dataset_recorded(&train, &acfg, &dfo).unwrap().expanded;
        let graph = build(&ex, &GraphConfig::default()).unwrap();
        let (pf, _) = fit(&ex, &graph, &spec, &LossConfig::default(), &tcfg, None).unwrap();
        let full = evaluate(&spec, &pf, &test).unwrap().accuracy;
        base_sum += base;
        full_sum += full;
        rows.push((base, full));
    }
    let (base, full) = (base_sum / 10.0, full_sum / 10.0);
    let secs = started.elapsed().as_secs_f64();
    let in_band = (0.80..=0.92).contains(&base);
    let pass = full - base >= 0.02 && in_band && secs < 1200.0;
    verdict(
        "5",
        pass,
        &format!(
            "baseline {base:.4} (band 0.80-0.92: {in_band}), full pipeline {full:.4}, gain {:+.2} points, {secs:.1}s; per seed {rows:.3?}",
            100.0 * (full - base)
        ),
    );
    assert!(in_band, "baseline accuracy {base} outside the calibration band");
    assert!(pass);
}

// ---------------------------------------------------------------- 6

fn a6_lambda_zero_is_plain_training() {
    let ds = annuli_100(6).subset(&(0..200).step_by(5).collect::<Vec<_>>()).unwrap();
    let ex = expand_dataset_recorded(
        &ds,
        &AugmentConfig {
            rng_seed: 6,
            budget_t: 50,
            ..AugmentConfig::default()
        },
        &DfoConfig {
            budget: 50,
            rng_seed: 7,
            ..DfoConfig::default()
        },
    )
    .unwrap()
    .expanded;
    let graph = build(&ex, &GraphConfig::default()).unwrap();
    let spec = MlpSpec::new(2, 2);
    let tcfg = TrainConfig {
        epochs: 40,
        batch_nodes: 8,
        init_seed: 3,
        rng_seed: 4,
        eval_every: 5,
        ..TrainConfig::default()
    };
    let lc = LossConfig {
        lambda: 0.0,
        ..LossConfig::default()
    };
    let (p, r) = fit(&ex, &graph, &spec, &lc, &tcfg, None).unwrap();
    let (pb, rb) = fit_baseline(&ex.labeled().unwrap(), &spec, &tcfg, None).unwrap();
    let bits = |p: &Params| p.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let same_params = bits(&p) == bits(&pb);
    let same_report = r.records == rb.records;
    let pass = same_params && same_report;
    verdict(
        "6",
        pass,
        &format!("{} parameters bitwise equal: {same_params}; loss history equal: {same_report}", p.len()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn a7_regularizer_invariants() {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut min_value = f64::INFINITY;
    let mut max_drift: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(2..20);
        let d = rng.random_range(1..6);
        let emb: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gaussian(&mut rng)).collect()).collect();
        let edges: Vec<Edge> = (0..rng.random_range(1..40))
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                Edge {
                    i,
                    j,
                    phi: if rng.random_bool(0.5) { 1 } else { -1 },
                }
            })
            .collect();
        let (v, _) = graph_regularizer_edges(&emb, &edges, &cfg).unwrap();
        min_value = min_value.min(v);
        for alpha in [1e-3, 0.5, 7.0, 1e4] {
            let scaled: Vec<Vec<f64>> = emb.iter().map(|h| h.iter().map(|x| alpha * x).collect()).collect();
            let (vs, _) = graph_regularizer_edges(&scaled, &edges, &cfg).unwrap();
            max_drift = max_drift.max((vs - v).abs());
        }
    }
    // positive edges between coincident points, negative edges between antipodes
    let h = vec![0.3, -1.2, 0.7];
    let anti: Vec<f64> = h.iter().map(|x| -x).collect();
    let constructed = vec![h.clone(), h.clone(), anti.clone(), anti];
    let edges = vec![
        Edge { i: 0, j: 1, phi: 1 },
        Edge { i: 2, j: 3, phi: 1 },
        Edge { i: 0, j: 2, phi: -1 },
        Edge { i: 1, j: 3, phi: -1 },
        Edge { i: 3, j: 0, phi: -1 },
    ];
    let (zero, _) = graph_regularizer_edges(&constructed, &edges, &cfg).unwrap();
    let pass = min_value >= 0.0 && zero == 0.0 && max_drift <= 1e-10;
    verdict(
        "7",
        pass,
        &format!("min J_g {min_value:.3e}, constructed J_g {zero:e}, max scaling drift {max_drift:.2e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

fn diagnet(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_diagnet")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "diagnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn a8_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| -> PathBuf { dir.path().join(name) };
    let s = |path: &PathBuf| path.to_str().unwrap().to_owned();
    let run_dir = p("run");

    diagnet(&["gen-data", "--kind", "two-annuli", "--n", "30", "--seed", "7", "--noise", "0.3", "-o", &s(&p("data.csv"))]);
    diagnet(&["split", "--input", &s(&p("data.csv")), "--train-out", &s(&p("train.csv")), "--test-out", &s(&p("test.csv")), "--seed", "1"]);
    diagnet(&["augment", "--input", &s(&p("train.csv")), "-o", &s(&p("expanded.csv")), "--seed", "2", "--budget", "60"]);
    diagnet(&[
        "train", "--input", &s(&p("expanded.csv")), "--test", &s(&p("test.csv")), "--out-dir", &s(&run_dir),
        "--seed", "3", "--epochs", "15", "--eval-every", "5",
    ]);
    diagnet(&[
        "grid", "--input", &s(&p("expanded.csv")), "--test", &s(&p("test.csv")), "-o", &s(&p("grid.csv")),
        "--seed", "4", "--repeats", "2", "--n-plus", "0,1", "--n-minus", "4", "--lambda", "0,1", "--epochs", "5",
    ]);
    diagnet(&["eval", "--model", &s(&run_dir.join("model.txt")), "--input", &s(&p("test.csv")), "-o", &s(&p("eval.json"))]);

    let cases: Vec<(&str, PathBuf, Vec<PathBuf>)> = vec![
        ("gen-data", p("data.csv.manifest.json"), vec![p("data.csv")]),
        ("split", p("train.csv.manifest.json"), vec![p("train.csv"), p("test.csv")]),
        ("augment", p("expanded.csv.manifest.json"), vec![p("expanded.csv")]),
        (
            "train",
            run_dir.join("manifest.json"),
            ["model.txt", "report.csv", "graph.edges", "graph.nodes.csv"].iter().map(|f| run_dir.join(f)).collect(),
        ),
        ("grid", p("grid.csv.manifest.json"), vec![p("grid.csv")]),
        ("eval", p("eval.json.manifest.json"), vec![p("eval.json")]),
    ];
    let mut identical = 0;
    let mut failures = Vec::new();
    for (name, manifest, outputs) in &cases {
        let originals: Vec<Vec<u8>> = outputs.iter().map(|o| read(o)).collect();
        let replay_dir = dir.path().join(format!("replay-{name}"));
        diagnet(&["replay", "--manifest", &s(manifest), "--out-dir", &s(&replay_dir)]);
        let same = outputs
            .iter()
            .zip(&originals)
            .all(|(o, bytes)| read(&replay_dir.join(o.file_name().unwrap())) == *bytes);
        // in place, from the manifest alone
        diagnet(&["replay", "--manifest", &s(manifest)]);
        let same_in_place = outputs.iter().zip(&originals).all(|(o, bytes)| read(o) == *bytes);
        if same && same_in_place {
            identical += 1;
        } else {
            failures.push(*name);
        }
    }
    let pass = identical == cases.len();
    verdict(
        "8",
        pass,
        &format!("{identical}/{} commands replayed byte-identically; differing: {failures:?}", cases.len()),
    );
    assert!(pass);
}

fn main() {
    let checks: [(&str, fn()); 9] = [
        ("a1_gradient_matches_finite_differences", a1_gradient_matches_finite_differences),
        ("a2_graph_matches_brute_force", a2_graph_matches_brute_force),
        ("a3_auc_matches_pairwise_estimator", a3_auc_matches_pairwise_estimator),
        ("a4_augmentation_contracts", a4_augmentation_contracts),
        ("a4_spacing_with_engaged_radius", a4_spacing_with_engaged_radius),
        ("a5_ablation_direction", a5_ablation_direction),
        ("a6_lambda_zero_is_plain_training", a6_lambda_zero_is_plain_training),
        ("a7_regularizer_invariants", a7_regularizer_invariants),
        ("a8_replay_reproduces_outputs", a8_replay_reproduces_outputs),
    ];
    std::panic::set_hook(Box::new(|info| {
        let location = info.location().map(|l| format!("{}:{}", l.file(), l.line())).unwrap_or_default();
        let payload = info.payload();
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_default();
        eprintln!("check failed at {location}: {message}");
    }));
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, check)| std::panic::catch_unwind(check).is_err())
        .map(|(name, _)| *name)
        .collect();
    println!("acceptance: {} passed, {} failed {failed:?}", checks.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
