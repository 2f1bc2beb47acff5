//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codecomp::baselines::{em_fit, EmConfig};
use codecomp::concepts::{
    extract_human_mentions, synthesize_human_mention, Lexicons, RuleBasedHumanDetector, SynthRule, TaskPreset, Token,
};
use codecomp::context::{ContextVector, ProviderSpec};
use codecomp::corpus::{sample_labeled, stratified_folds, Document, Label, SampleSpec};
use codecomp::cotrain::{
    aggregate, cotrain_fit, cotrain_variant_name, mil_example_score, single_view_name, CoConfig, Example, COMBINED,
};
use codecomp::eval::{ablation_table, CoDecompSpec, ExperimentSpec, FeatureCache};
use codecomp::learners::{loss_gradient, nb_predict_proba, train_logreg, train_nb, LogRegModel, TrainConfig};
use codecomp::synthetic::{generate, SyntheticConfig};

fn criterion_1() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let j = rng.random_range(1..=3);
        let mut probs: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
        if rng.random_bool(0.1) {
            probs[0] = 0.5;
        }
        let pos: f64 = probs.iter().product();
        let neg: f64 = probs.iter().map(|p| 1.0 - p).product();
        ensure!(aggregate(&probs) == (pos >= neg), "disagrees on {probs:?}");
        if j == 1 {
            ensure!(aggregate(&probs) == (probs[0] >= 0.5), "single view {probs:?}");
        }
    }
    Ok("10000 cases".into())
}

fn criterion_2() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=8);
        // Coarse values make ties common.
        let probs: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect();
        let mut best = 0;
        for i in 1..n {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        let got = mil_example_score(&probs)?;
        ensure!(got == (probs[best], best), "{probs:?}: got {got:?}, expected index {best}");
    }
    Ok("10000 cases".into())
}

fn criterion_3() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=20);
        let n = rng.random_range(1..=5);
        let x: Vec<ContextVector> = (0..n)
            .map(|_| ContextVector::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let cfg = TrainConfig {
            l2_lambda: rng.random_range(0.0..0.1),
            ..TrainConfig::default()
        };
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let loss_at = |w: &[f64], b: f64| -> f64 {
            let m = LogRegModel::from_parameters(w.to_vec(), b, cfg.clone());
            loss_gradient(&m, &x, &y).unwrap().0
        };
        let (_, grad) = loss_gradient(&LogRegModel::from_parameters(w.clone(), b, cfg.clone()), &x, &y)?;
        let mut analytic = grad.weights.clone();
        analytic.push(grad.bias);
        let mut numeric = Vec::with_capacity(dim + 1);
        for i in 0..dim {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            numeric.push((loss_at(&up, b) - loss_at(&down, b)) / (2.0 * h));
        }
        numeric.push((loss_at(&w, b + h) - loss_at(&w, b - h)) / (2.0 * h));
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / (norm(&analytic) + norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
        ensure!(rel < 1e-4, "relative error {rel:e} at dim {dim}");
    }
    Ok(format!("worst relative error {worst:.2e}"))
}

fn criterion_4() -> Result<String> {
    let vocab: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    let train_docs: Vec<Vec<usize>> = vec![
        vec![0, 1, 2, 0],
        vec![3, 4, 5],
        vec![6, 7, 0, 1],
        vec![8, 9, 2],
        vec![1, 1, 4, 6, 9],
        vec![5, 3, 7, 8],
    ];
    let labels = [true, false, true, false, true, false];
    let alpha = 0.5;
    let as_words = |d: &[usize]| -> Vec<String> { d.iter().map(|&i| vocab[i].clone()).collect() };
    let docs: Vec<Vec<String>> = train_docs.iter().map(|d| as_words(d)).collect();
    let model = train_nb(&docs, &labels, alpha)?;

    let mut counts = [[0.0f64; 10]; 2];
    let mut totals = [0.0f64; 2];
    let mut class_n = [0.0f64; 2];
    for (d, &l) in train_docs.iter().zip(&labels) {
        let c = usize::from(l);
        class_n[c] += 1.0;
        for &t in d {
            counts[c][t] += 1.0;
            totals[c] += 1.0;
        }
    }
    let mut checked = 0usize;
    let mut doc: Vec<usize> = Vec::new();
    for len in 0..=5u32 {
        for code in 0..10usize.pow(len) {
            doc.clear();
            let mut c = code;
            for _ in 0..len {
                doc.push(c % 10);
                c /= 10;
            }
            let mut joint = [0.0; 2];
            for (k, j) in joint.iter_mut().enumerate() {
                *j = class_n[k] / labels.len() as f64;
                for &t in &doc {
                    *j *= (counts[k][t] + alpha) / (totals[k] + alpha * 10.0);
                }
            }
            let expected = joint[1] / (joint[0] + joint[1]);
            let got = nb_predict_proba(&model, &as_words(&doc));
            ensure!((got - expected).abs() < 1e-9, "{doc:?}: {got} vs {expected}");
            checked += 1;
        }
    }
    Ok(format!("{checked} documents"))
}

fn em_fixture() -> (Vec<Document>, Vec<Document>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pos_words = ["fever", "cough", "sick", "flu", "bed"];
    let neg_words = ["shot", "news", "vaccine", "season", "report"];
    let shared = ["the", "today", "so", "my", "with"];
    let mut docs = Vec::new();
    for i in 0..40 {
        let positive = i % 3 == 0;
        let words: Vec<&str> = (0..rng.random_range(3..8))
            .map(|_| {
                let pool: &[&str] = match rng.random_range(0..10) {
                    0..=4 => &shared,
                    5..=7 => {
                        if positive {
                            &pos_words
                        } else {
                            &neg_words
                        }
                    }
                    _ => {
                        if positive {
                            &neg_words
                        } else {
                            &pos_words
                        }
                    }
                };
                pool[rng.random_range(0..pool.len())]
            })
            .collect();
        let label = (i < 10).then_some(Label::from_bool(positive));
        docs.push(Document::new(format!("em{i:02}"), words.join(" "), label));
    }
    let unlabeled = docs.split_off(10);
    (docs, unlabeled)
}

fn criterion_5() -> Result<String> {
    let (labeled, unlabeled) = em_fixture();
    let cfg = EmConfig {
        max_iterations: 25,
        convergence_tolerance: 0.0,
        ..EmConfig::default()
    };
    let fit = em_fit(&labeled, &unlabeled, &cfg)?;
    let ll = &fit.log_likelihoods;
    ensure!(ll.len() >= 2, "only {} objective values", ll.len());
    for (i, w) in ll.windows(2).enumerate() {
        ensure!(w[1] >= w[0] - 1e-9, "decrease at step {}: {} -> {}", i + 1, w[0], w[1]);
    }
    Ok(format!("{} iterations, {:.4} -> {:.4}", fit.iterations, ll[0], ll[ll.len() - 1]))
}

fn criterion_6() -> Result<String> {
    let corpus = generate(&SyntheticConfig {
        n_docs: 2013,
        positive_rate: 0.11,
        seed: 6,
        ..SyntheticConfig::default()
    })?;
    ensure!(corpus.count_label(Label::Positive) == 221, "positive count");
    let plan = stratified_folds(&corpus, 10, 606)?;
    plan.check_partition(&corpus)?;
    let mut per_fold = [0usize; 10];
    let mut seen = BTreeSet::new();
    for doc in corpus.iter() {
        let f = plan.fold_of(&doc.id).ok_or_else(|| anyhow::anyhow!("{} unassigned", doc.id))?;
        ensure!(seen.insert(doc.id.clone()), "duplicate {}", doc.id);
        if doc.gold_label == Some(Label::Positive) {
            per_fold[f] += 1;
        }
    }
    ensure!(per_fold.iter().all(|&n| (21..=23).contains(&n)), "per-fold positives {per_fold:?}");
    ensure!(stratified_folds(&corpus, 10, 606)? == plan, "not deterministic");
    Ok(format!("per-fold positives {per_fold:?}"))
}

fn view_training_set(labeled: &[Example], j: usize) -> (Vec<ContextVector>, Vec<bool>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for ex in labeled {
        for (v, l) in ex.views[j].instances.iter().zip(&ex.views[j].labels) {
            if let Some(t) = l.as_target() {
                x.push(v.clone());
                y.push(t);
            }
        }
    }
    (x, y)
}

fn criterion_7() -> Result<String> {
    let corpus = generate(&SyntheticConfig {
        n_docs: 500,
        seed: 7,
        ..SyntheticConfig::default()
    })?;
    let lex = Lexicons::builtin();
    let preset = TaskPreset::builtin("synthetic-two-view", &lex)?;
    let cache = FeatureCache::build(&corpus, &preset, &ProviderSpec::default(), &lex)?;
    let (labeled, unlabeled) = sample_labeled(&corpus, SampleSpec { n_labeled: 60, seed: 7 })?;
    let l: Vec<Example> = labeled.iter().map(|d| cache.example(d)).collect::<codecomp::Result<_>>()?;
    let u: Vec<Example> = unlabeled
        .documents
        .iter()
        .map(|d| cache.unlabeled_example(&d.id))
        .collect::<codecomp::Result<_>>()?;
    let names = vec!["alpha".to_string(), "beta".to_string()];
    let train = TrainConfig {
        learning_rate: 1.0,
        ..TrainConfig::default()
    };
    let co = CoConfig {
        iterations: 25,
        promotions_per_view: 1,
        ..CoConfig::default()
    };
    let fit = cotrain_fit(&l, &u, &names, &co, &train)?;
    let total = l.len() + u.len();
    let mut moved = 0;
    for it in &fit.log {
        ensure!(it.labeled_before + it.unlabeled_before == total, "pool before iteration {}", it.iteration);
        ensure!(it.labeled_after + it.unlabeled_after == total, "pool after iteration {}", it.iteration);
        let delta = it.labeled_after - it.labeled_before;
        ensure!(delta <= 4, "iteration {} moved {delta}", it.iteration);
        ensure!(it.unlabeled_before - it.unlabeled_after == delta, "iteration {} lost documents", it.iteration);
        let ids: BTreeSet<&str> = it.promotions.iter().map(|p| p.doc_id.as_str()).collect();
        ensure!(ids.len() == delta, "iteration {}: {} ids for {delta} moves", it.iteration, ids.len());
        moved += delta;
    }

    let base = cotrain_fit(&l, &u, &names, &CoConfig { iterations: 0, ..co }, &train)?.model;
    let oracle: Vec<LogRegModel> = (0..2)
        .map(|j| {
            let (x, y) = view_training_set(&l, j);
            train_logreg(&x, &y, &train)
        })
        .collect::<codecomp::Result<_>>()?;
    for doc in corpus.iter() {
        let views = cache.vectors(&doc.id)?;
        let probs: Vec<f64> = views
            .iter()
            .zip(&oracle)
            .map(|(inst, m)| {
                inst.iter()
                    .map(|v| m.predict_proba(v).unwrap())
                    .fold(None, |best: Option<f64>, p| Some(best.map_or(p, |b| b.max(p))))
                    .unwrap_or(0.5)
            })
            .collect();
        let pos: f64 = probs.iter().product();
        let neg: f64 = probs.iter().map(|p| 1.0 - p).product();
        let pred = base.predict(views)?;
        ensure!(pred.probs == probs, "{}: probs {:?} vs {:?}", doc.id, pred.probs, probs);
        ensure!(pred.positive == (pos >= neg), "{}: decision differs", doc.id);
    }
    Ok(format!("{} iterations, {moved} documents moved", fit.log.len()))
}

fn criterion_8() -> Result<String> {
    let corpus = generate(&SyntheticConfig {
        n_docs: 2000,
        seed: 8,
        ..SyntheticConfig::default()
    })?;
    let lex = Lexicons::builtin();
    let spec = CoDecompSpec {
        preset: TaskPreset::builtin("synthetic-two-view", &lex)?,
        provider: ProviderSpec::Hashed { window: 3, dim: 64 },
        co: CoConfig::default(),
        train: TrainConfig {
            learning_rate: 1.0,
            ..TrainConfig::default()
        },
    };
    let experiment = ExperimentSpec {
        k_folds: 10,
        n_labeled: 100,
        repetitions: 5,
        master_seed: 8,
    };
    let table = ablation_table(&corpus, &spec, &lex, &experiment, &[25])?;
    let f1 = |name: &str| -> Result<f64> {
        match table.row(name) {
            Some(r) => Ok(r.metrics.f1),
            None => bail!("missing row {name}"),
        }
    };
    let alpha = f1(&single_view_name("alpha"))?;
    let beta = f1(&single_view_name("beta"))?;
    let combined = f1(COMBINED)?;
    let cotrained = f1(&cotrain_variant_name(25))?;
    let detail = format!("alpha {alpha:.3}, beta {beta:.3}, combined {combined:.3}, +25-itr {cotrained:.3}");
    ensure!(combined >= alpha.max(beta) - 0.01, "combined below single views: {detail}");
    ensure!(cotrained >= combined, "co-training below combined: {detail}");
    Ok(detail)
}

fn toks(words: &[&str]) -> Vec<Token> {
    let mut pos = 0;
    words
        .iter()
        .map(|w| {
            let t = Token::new(*w, pos, pos + w.len());
            pos += w.len() + 1;
            t
        })
        .collect()
}

fn criterion_9() -> Result<String> {
    let lex = Lexicons::builtin();
    let cases: [(&[&str], &[&str], SynthRule); 5] = [
        (&["went", "to", "the", "doctor"], &["i", "went", "to", "the", "doctor"], SynthRule::PastTense),
        (&["sick", "of", "this"], &["i", "am", "sick", "of", "this"], SynthRule::Adjective),
        (&["diagnosed", "with", "flu"], &["i", "have", "diagnosed", "with", "flu"], SynthRule::PastParticiple),
        (&["feeling", "awful"], &["i", "am", "feeling", "awful"], SynthRule::PresentContinuous),
        (&["is", "feeling", "sick"], &["i", "am", "feeling", "sick"], SynthRule::LeadingIs),
    ];
    for (input, expected, rule) in cases {
        let s = synthesize_human_mention(&toks(input), &lex);
        let got: Vec<&str> = s.tokens.iter().map(|t| t.text.as_str()).collect();
        ensure!(got == expected, "{input:?} -> {got:?}");
        ensure!(s.rule == Some(rule), "{input:?} fired {:?}", s.rule);
        ensure!(s.mention == Some(0..1), "{input:?} mention {:?}", s.mention);
    }
    let unchanged = synthesize_human_mention(&toks(&["the", "earthquake", "hit"]), &lex);
    ensure!(unchanged.mention.is_none() && unchanged.rule.is_none(), "rule fired on a plain sentence");

    let det = RuleBasedHumanDetector::new(&lex);
    let surfaces = |words: &[&str]| -> Vec<String> {
        extract_human_mentions("d", "human", &toks(words), &det)
            .into_iter()
            .map(|m| m.surface)
            .collect()
    };
    ensure!(surfaces(&["it", "hurts"]).is_empty(), "\"it\" marked");
    ensure!(surfaces(&["my", "head", "hurts"]) == ["my"], "pronoun rule");
    ensure!(surfaces(&["@mary", "says", "hi"]) == ["@mary"], "handle rule");
    ensure!(surfaces(&["the", "doctor", "called"]) == ["doctor"], "dictionary rule");
    ensure!(surfaces(&["@mary", "and", "my", "friend"]) == ["@mary", "my", "friend"], "combined rules");
    Ok("5 synthesizer rules, 3 detector rules".into())
}

fn criterion_10() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let bin = env!("CARGO_BIN_EXE_codecomp");
    let corpus = dir.path().join("corpus.jsonl");
    let run = |args: &[&str]| -> Result<()> {
        let out = Command::new(bin).args(args).output()?;
        ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        Ok(())
    };
    let corpus_arg = corpus.to_str().unwrap();
    run(&["synth", "--docs", "300", "--seed", "10", "--out", corpus_arg])?;
    let mut compared = 0;
    for model in ["codecomp", "nb", "em"] {
        let mut outputs = Vec::new();
        for attempt in ["a", "b"] {
            let out = dir.path().join(format!("{model}-{attempt}"));
            run(&[
                "evaluate", "--model", model, "--task", "synthetic-two-view", "--corpus", corpus_arg, "--out",
                out.to_str().unwrap(), "--folds", "3", "--reps", "2", "--n-labeled", "40", "--iters", "3",
                "--seed", "10",
            ])?;
            let json = fs::read(out.join(format!("evaluate_{model}.json")))?;
            let csv = fs::read(out.join(format!("evaluate_{model}.csv")))?;
            outputs.push((json, csv));
        }
        ensure!(outputs[0] == outputs[1], "{model} reports differ between runs");
        compared += 2;
    }
    Ok(format!("{compared} report files byte-identical"))
}

type Criterion = (&'static str, Option<Duration>, fn() -> Result<String>);

fn main() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria: [Criterion; 10] = [
        ("aggregation oracle", secs(1), criterion_1),
        ("MIL oracle", secs(1), criterion_2),
        ("gradient check", secs(5), criterion_3),
        ("naive Bayes oracle", secs(5), criterion_4),
        ("EM monotonicity", secs(5), criterion_5),
        ("fold protocol", secs(1), criterion_6),
        ("co-training bookkeeping", secs(10), criterion_7),
        ("directional ablation", secs(120), criterion_8),
        ("rule fidelity", secs(1), criterion_9),
        ("reproducibility", None, criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let result = match outcome {
            Ok(Ok(detail)) => match limit {
                Some(l) if elapsed > *l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
                _ => Ok(detail),
            },
            Ok(Err(e)) => Err(format!("{e:#}")),
            Err(_) => Err("panicked".to_string()),
        };
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
