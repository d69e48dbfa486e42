//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the PASS/FAIL lines are always printed.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transcript_risk::ablation::{
    run_grid, summarize_grid, CellStatus, FixedClock, GridOptions, GridSpec, ModelSpec, RecordStore, RunRecord,
};
use transcript_risk::backend::{ChatBackend, MockBackend, MockRule};
use transcript_risk::corpus::synthetic::{generate, SyntheticConfig};
use transcript_risk::corpus::{stratified_split, Corpus, Fractions, Label, Split, Stratum};
use transcript_risk::embeddings::{
    loss, loss_and_gradient, pool, sigmoid, train_logistic, LabeledSlices, Pooling, TrainOptions,
};
use transcript_risk::parser::{parse_completion, Fallback, ParseStatus};
use transcript_risk::prompt::{render_assistant, render_prompt, sample_demos, Mode, Role};
use transcript_risk::stats::{
    fit_ablation_model, fit_design, fit_ols, t_cdf, t_sf, two_sided_p, CategoricalTerm, DataTable, DesignSpec, Matrix,
};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {took:?}, budget {budget:?}"))?;
    Ok(took)
}

fn mellowmax_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_max_gap = 0f64;
    let mut worst_mean_gap = 0f64;
    for case in 0..200 {
        let len = rng.gen_range(1..=32);
        let probs: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = probs.iter().sum::<f64>() / len as f64;
        for omega in [-5.0, 0.1, 1.0, 5.0, 500.0] {
            let v = pool(&probs, &Pooling::Mellowmax(omega)).map_err(|e| e.to_string())?;
            ensure(lo <= v && v <= hi, || {
                format!("case {case}: mm_{omega} = {v} outside [{lo}, {hi}]")
            })?;
        }
        let mm500 = pool(&probs, &Pooling::Mellowmax(500.0)).unwrap();
        let mm_tiny = pool(&probs, &Pooling::Mellowmax(1e-6)).unwrap();
        worst_max_gap = worst_max_gap.max((mm500 - hi).abs());
        worst_mean_gap = worst_mean_gap.max((mm_tiny - mean).abs());
    }
    ensure(worst_mean_gap < 1e-6, || {
        format!("max |mm_1e-6 - mean| = {worst_mean_gap:e}")
    })?;
    let closed = pool(&[0.0, 1.0], &Pooling::Mellowmax(1.0)).unwrap();
    let expected = ((1.0 + std::f64::consts::E) / 2.0).ln();
    ensure((closed - expected).abs() < 1e-9, || {
        format!("mm_1([0,1]) = {closed}, expected {expected}")
    })?;
    ensure(worst_max_gap < 1e-3, || {
        format!(
            "max |mm_500 - max| = {worst_max_gap:.3e} over the random lists; with the 1/n average the gap \
             reaches ln(n)/500 (ln 2/500 = {:.3e}) whenever one value is far above the rest",
            std::f64::consts::LN_2 / 500.0
        )
    })?;
    let took = within_budget(start, Duration::from_secs(1))?;
    Ok(format!(
        "worst max gap {worst_max_gap:.2e}, worst mean gap {worst_mean_gap:.2e}, {took:?}"
    ))
}

fn random_dataset(rng: &mut ChaCha8Rng) -> (LabeledSlices<f64>, Vec<f64>, f64) {
    let d = rng.gen_range(1..=16);
    let n = rng.gen_range(2..=64);
    let mut labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Label::AtRisk
            } else {
                Label::NoRisk
            }
        })
        .collect();
    labels[0] = Label::AtRisk;
    labels[1] = Label::NoRisk;
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias = rng.gen_range(-1.0..1.0);
    (LabeledSlices::new(vectors, labels).unwrap(), weights, bias)
}

fn logistic_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0f64;
    for case in 0..50 {
        let (data, weights, bias) = random_dataset(&mut rng);
        let lambda = rng.gen_range(0.0..0.1);
        let (_, gw, gb) = loss_and_gradient(&weights, bias, &data, lambda);
        let mut analytic = gw.clone();
        analytic.push(gb);
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..weights.len() {
            let (mut plus, mut minus) = (weights.clone(), weights.clone());
            plus[j] += h;
            minus[j] -= h;
            numeric.push((loss(&plus, bias, &data, lambda) - loss(&minus, bias, &data, lambda)) / (2.0 * h));
        }
        numeric.push((loss(&weights, bias + h, &data, lambda) - loss(&weights, bias - h, &data, lambda)) / (2.0 * h));
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt())
            .max(1e-8);
        let rel = diff / scale;
        worst = worst.max(rel);
        ensure(rel < 1e-4, || format!("case {case}: relative gradient error {rel:e}"))?;

        let model = train_logistic(
            &data,
            &TrainOptions {
                l2_lambda: lambda,
                max_iters: 200,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let history = &model.meta.loss_history;
        ensure(history.windows(2).all(|w| w[1] <= w[0]), || {
            format!("case {case}: loss increased")
        })?;
    }
    ensure(sigmoid(0.0_f64) == 0.5, || "sigmoid(0) != 0.5".into())?;
    ensure(sigmoid(0.0_f32) == 0.5, || "sigmoid(0) != 0.5 in f32".into())?;
    let took = within_budget(start, Duration::from_secs(5))?;
    Ok(format!("worst relative error {worst:.2e}, {took:?}"))
}

/// Solves `XᵀX β = Xᵀy` by Gaussian elimination with partial pivoting.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in a.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (x, &v) in row.iter_mut().zip(&pivot_row).skip(col) {
                *x -= f * v;
            }
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][p] - s) / a[i][i];
    }
    beta
}

fn ols_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_coef = 0f64;
    let mut worst_fitted = 0f64;
    for case in 0..100 {
        let p = rng.gen_range(1..=6);
        let n = rng.gen_range((p + 9).max(12)..=50);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.gen_range(-1.0..1.0)));
                r
            })
            .collect();
        let truth: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let fit = fit_ols(&x, &y).map_err(|e| format!("case {case}: {e}"))?;
        let oracle = normal_equations(&rows, &y);
        for (a, b) in fit.coef.iter().zip(&oracle) {
            worst_coef = worst_coef.max((a - b).abs());
        }
        ensure(worst_coef < 1e-8, || {
            format!("case {case}: coefficient gap {worst_coef:e}")
        })?;

        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..p {
            let dot: f64 = rows
                .iter()
                .zip(&y)
                .zip(&fit.fitted)
                .map(|((r, yi), fi)| r[j] * (yi - fi))
                .sum();
            ensure(dot.abs() < 1e-8 * y_norm, || format!("case {case}: Xᵀr[{j}] = {dot:e}"))?;
        }

        // Same data plus a three-level factor, coded against two different references.
        let levels: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let mut table = DataTable::new(n).with_numeric("y", y.clone()).unwrap();
        let mut numeric_terms = Vec::new();
        for j in 1..p {
            let name = format!("x{j}");
            table = table.with_numeric(&name, rows.iter().map(|r| r[j]).collect()).unwrap();
            numeric_terms.push(name);
        }
        let table = table.with_categorical("g", levels).unwrap();
        let spec = |reference: &str| DesignSpec {
            response: "y".into(),
            numeric_terms: numeric_terms.clone(),
            categorical_terms: vec![CategoricalTerm {
                name: "g".into(),
                reference: Some(reference.into()),
            }],
            interactions: vec![],
            intercept: true,
        };
        let fa = fit_design(&table, &spec("a")).map_err(|e| e.to_string())?;
        let fc = fit_design(&table, &spec("c")).map_err(|e| e.to_string())?;
        for (a, c) in fa.fit.fitted.iter().zip(&fc.fit.fitted) {
            worst_fitted = worst_fitted.max((a - c).abs());
        }
        ensure(worst_fitted < 1e-10, || {
            format!("case {case}: fitted values moved by {worst_fitted:e}")
        })?;
    }
    Ok(format!(
        "worst coefficient gap {worst_coef:.1e}, worst fitted gap {worst_fitted:.1e}"
    ))
}

/// Two-sided p by composite Simpson integration of the t density.
fn simpson_two_sided(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma_lanczos((df + 1.0) / 2.0) - ln_gamma_lanczos(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let steps = 20_000;
    let h = t / steps as f64;
    let mut s = density(0.0) + density(t);
    for i in 1..steps {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn ln_gamma_lanczos(x: f64) -> f64 {
    // g = 7, n = 9 coefficients.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn t_distribution() -> Outcome {
    let p = two_sided_p(2.0_f64, 10);
    ensure((p - 0.0734).abs() < 5e-4, || format!("p(2, 10) = {p}"))?;
    let integrated = simpson_two_sided(2.0, 10.0);
    ensure((p - integrated).abs() < 5e-4, || {
        format!("p(2, 10) = {p}, integration gives {integrated}")
    })?;
    for df in [1, 2, 5, 10, 30, 1000] {
        ensure(t_sf(0.0_f64, df) == 0.5, || {
            format!("t_sf(0, {df}) = {}", t_sf(0.0_f64, df))
        })?;
    }
    for t in [-50.0_f64, -3.0, -0.5, 0.25, 1.0, 2.0, 10.0, 1e3] {
        let closed = 0.5 + t.atan() / std::f64::consts::PI;
        let got = t_cdf(t, 1);
        ensure((got - closed).abs() < 1e-10, || {
            format!("Cauchy cdf at {t}: {got} vs {closed}")
        })?;
    }
    Ok(format!("p(2, 10) = {p:.6}, integration {integrated:.6}"))
}

fn shot_count_direction() -> Outcome {
    let start = Instant::now();
    let ks = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let models: [(&str, f64, [f64; 7]); 4] = [
        ("gemma", 2.0, [0.52, 0.55, 0.52, 0.54, 0.53, 0.57, 0.57]),
        ("gemma", 9.0, [0.52, 0.57, 0.57, 0.60, 0.60, 0.59, 0.64]),
        ("gemma", 27.0, [0.53, 0.57, 0.56, 0.58, 0.58, 0.61, 0.61]),
        ("qwen", 7.0, [0.52, 0.55, 0.57, 0.60, 0.61, 0.59, 0.58]),
    ];
    let (mut acc, mut k, mut size, mut kind) = (vec![], vec![], vec![], vec![]);
    for (t, s, means) in models {
        for (i, m) in means.iter().enumerate() {
            acc.push(*m);
            k.push(ks[i]);
            size.push(s);
            kind.push(t.to_string());
        }
    }
    let table = DataTable::new(acc.len())
        .with_numeric("accuracy", acc)
        .and_then(|t| t.with_numeric("example_count", k))
        .and_then(|t| t.with_numeric("model_size", size))
        .and_then(|t| t.with_categorical("model_type", kind))
        .map_err(|e| e.to_string())?;
    let fitted = fit_ablation_model(&table).map_err(|e| e.to_string())?;
    let beta = fitted
        .fit
        .coefficient("example_count")
        .ok_or("no example_count column")?;
    ensure(beta > 0.0, || {
        format!("example_count coefficient {beta} is not positive")
    })?;
    let took = within_budget(start, Duration::from_secs(1))?;
    Ok(format!("example_count β = {beta:.6}, {took:?}"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_transcript-risk"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let config = r#"
[corpus]
path = "split.jsonl"

[backend]
kind = "mock"

[[backend.mock.rules]]
contains = "hopeless"
completion = "[[ ## answer ## ]]\nyes\n\n[[ ## completed ## ]]"

[run]
k = 4
seed = 11
"#;
    fs::write(dir.join("run.toml"), config).map_err(|e| e.to_string())?;
    run_cli(&["synth", "--out", "corpus.jsonl", "--n", "12", "--seed", "5"], dir)?;
    run_cli(
        &[
            "split",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "split.jsonl",
            "--seed",
            "5",
            "--run-dir",
            "s",
        ],
        dir,
    )?;
    run_cli(&["--config", "run.toml", "classify", "--run-dir", "a"], dir)?;
    run_cli(&["--config", "run.toml", "classify", "--run-dir", "b"], dir)?;
    for file in ["predictions.jsonl", "report.json", "report.txt"] {
        let a = fs::read(dir.join("a").join(file)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.join("b").join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs between identical runs"))?;
    }

    let corpus = transcript_risk::corpus::load_corpus(&dir.join("split.jsonl"), "jsonl".parse().unwrap())
        .map_err(|e| e.to_string())?;
    let target = corpus.in_split(Split::Dev).next().ok_or("no dev subject")?;
    let k = 4;
    let bundles: Vec<_> = [11, 12]
        .iter()
        .map(|&seed| {
            let demos = sample_demos(&corpus, k, seed, false).unwrap();
            render_prompt(target, &demos, Mode::FewShot, seed).unwrap()
        })
        .collect();
    ensure(bundles[0].demo_ids != bundles[1].demo_ids, || {
        "demo seed change kept the same demos".into()
    })?;
    for b in &bundles {
        ensure(b.messages.len() == 2 + 2 * k, || {
            format!("{} messages for k = {k}", b.messages.len())
        })?;
    }
    let roles = |b: &transcript_risk::prompt::PromptBundle| b.messages.iter().map(|m| m.role).collect::<Vec<Role>>();
    ensure(roles(&bundles[0]) == roles(&bundles[1]), || {
        "role sequence changed with the seed".into()
    })?;
    Ok(format!("demos {:?} vs {:?}", bundles[0].demo_ids, bundles[1].demo_ids))
}

fn golden_subject() -> transcript_risk::corpus::SubjectRecord {
    generate(SyntheticConfig::small(12, 7)).subjects()[0].clone()
}

fn prompt_golden() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/zero_shot.txt");
    let rendered = render_prompt(&golden_subject(), &[], Mode::ZeroShot, 0)
        .map_err(|e| e.to_string())?
        .to_text();
    let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(rendered == golden, || {
        "zero-shot render differs from the golden file".into()
    })?;
    for needle in [
        "[[ ## context ## ]]",
        "[[ ## question ## ]]",
        "Is this patient at risk of suicide?",
    ] {
        ensure(golden.contains(needle), || format!("golden file lacks {needle:?}"))?;
    }
    Ok(format!("{} bytes", golden.len()))
}

fn split_exactness() -> Outcome {
    let fractions = Fractions::new(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0).map_err(|e| e.to_string())?;
    for seed in 0..10u64 {
        let corpus = generate(SyntheticConfig::full_scale(seed));
        let split = stratified_split(&corpus, fractions, &[Stratum::Label], seed).map_err(|e| e.to_string())?;
        for (s, size, per_label) in [(Split::Train, 400, 200), (Split::Dev, 100, 50), (Split::Test, 100, 50)] {
            ensure(split.split_size(s) == size, || {
                format!("seed {seed}: {s} has {}", split.split_size(s))
            })?;
            for label in [Label::AtRisk, Label::NoRisk] {
                let n = split.label_count(Some(s), label);
                ensure(n == per_label, || format!("seed {seed}: {s} {label:?} = {n}"))?;
            }
        }
    }
    Ok("10 seeds, 400/100/100 with balanced labels".into())
}

fn prompt_chars(corpus: &Corpus, k: usize, seeds: &[u64]) -> (usize, usize) {
    let (mut lo, mut hi) = (usize::MAX, 0);
    for &seed in seeds {
        let demos = sample_demos(corpus, k, seed, false).unwrap();
        for s in corpus.in_split(Split::Dev) {
            let n = render_prompt(s, &demos, Mode::FewShot, seed).unwrap().char_len();
            lo = lo.min(n);
            hi = hi.max(n);
        }
    }
    (lo, hi)
}

fn ablation_robustness() -> Outcome {
    let corpus = generate(SyntheticConfig::small(60, 9));
    let corpus = stratified_split(
        &corpus,
        Fractions::new(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0).unwrap(),
        &[Stratum::Label],
        9,
    )
    .map_err(|e| e.to_string())?;
    let seeds = [1, 2, 3];
    let (_, small_hi) = prompt_chars(&corpus, 4, &seeds);
    let (big_lo, _) = prompt_chars(&corpus, 32, &seeds);
    ensure(small_hi < big_lo, || "k = 4 and k = 32 prompt sizes overlap".into())?;
    let limit = small_hi + 1;

    let spec = GridSpec {
        shot_counts: vec![0, 4, 32],
        models: vec![
            ModelSpec {
                name: "small".into(),
                model_type: "gemma".into(),
                size_b: 2.0,
            },
            ModelSpec {
                name: "large".into(),
                model_type: "gemma".into(),
                size_b: 27.0,
            },
        ],
        seeds: seeds.to_vec(),
        mode: Mode::FewShot,
        balanced_demos: false,
    };
    let factory = move |m: &ModelSpec| -> Result<Arc<dyn ChatBackend>, _> {
        let rules = vec![MockRule::new(
            "hopeless",
            "[[ ## answer ## ]]\nyes\n\n[[ ## completed ## ]]",
        )];
        let limit = (m.name == "small").then_some(limit);
        Ok(Arc::new(
            MockBackend::new(rules, "[[ ## answer ## ]]\nno\n\n[[ ## completed ## ]]")
                .with_model_name(m.name.clone())
                .with_context_limit(limit),
        ))
    };
    let clock = FixedClock(DateTime::from_timestamp(1_700_000_000, 0).unwrap());
    let mut store = RecordStore::in_memory();
    let records =
        run_grid(&spec, &corpus, &factory, &mut store, &GridOptions::default(), &clock).map_err(|e| e.to_string())?;
    ensure(records.len() == 18, || format!("{} records", records.len()))?;
    for r in &records {
        let expected = if r.model_name == "small" && r.k == 32 {
            CellStatus::ContextOverflow
        } else {
            CellStatus::Ok
        };
        ensure(r.status == expected, || {
            format!("k={} {} seed={}: {:?}", r.k, r.model_name, r.seed, r.status)
        })?;
        ensure((r.status == CellStatus::Ok) == r.accuracy.is_some(), || {
            "metrics present on a non-Ok cell".into()
        })?;
    }
    let summary = summarize_grid(&records);
    let na = summary.get(32, "small").ok_or("missing summary cell")?.display();
    ensure(na == "N/A", || format!("overflow cell shows {na:?}"))?;

    let cell = |seed, acc| RunRecord {
        seed,
        accuracy: Some(acc),
        f1: Some(acc),
        ..records[0].clone()
    };
    let triple = summarize_grid(&[cell(1, 0.53), cell(2, 0.60), cell(3, 0.67)]);
    let shown = triple.cells[0].display();
    ensure(shown == "0.60 (.07)", || {
        format!("{{0.53, 0.60, 0.67}} shows {shown:?}")
    })?;
    Ok(format!("overflow cell N/A, others Ok; {shown}"))
}

fn parser_round_trip() -> Outcome {
    for label in [Label::AtRisk, Label::NoRisk] {
        for mode in [Mode::FewShot, Mode::FewShotCot] {
            let rationale = mode
                .is_cot()
                .then_some("The teenager describes coping with support from friends.");
            let text = render_assistant(label, rationale);
            let r = parse_completion("s", &text, mode, Fallback::Error).map_err(|e| e.to_string())?;
            ensure(r.predicted == label && r.parse_status == ParseStatus::Clean, || {
                format!("{label:?}/{mode:?} parsed as {:?} ({:?})", r.predicted, r.parse_status)
            })?;
        }
    }
    let adversarial = [
        "",
        "   \n\t ",
        "maybe",
        "yes and no",
        "[[ ## answer ## ]]",
        "[[ ## answer ## ]]\n\n[[ ## completed ## ]]",
        "[[ ## answer ## ]]\nperhaps\n[[ ## completed ## ]]",
        "[[ ## reasoning ## ]]\nunclear\n",
        "yesterday nobody knew",
        "[[ ## answer ##",
        "[[ ## answer ## ]]\n\u{0}\u{1}\u{7f}",
        "{\"answer\": null}",
        "🙂🙃",
        "[[ ## answer ## ]]\n[[ ## answer ## ]]\n[[ ## answer ## ]]",
        "The patient may or may not be at risk; yes, no, it depends.",
        "ÿÿÿÿ\u{fffd}",
        "[[ ## ]] [[ ## ]] ]] [[",
        "123456",
        "no-no yes-yes",
        &"x".repeat(100_000),
    ];
    let mut resolved = 0;
    for (i, text) in adversarial.iter().enumerate() {
        let outcomes = [Fallback::AtRisk, Fallback::NoRisk, Fallback::Error].map(|fallback| {
            panic::catch_unwind(|| parse_completion("s", text, Mode::FewShotCot, fallback))
                .map_err(|_| format!("completion {i} panicked"))
        });
        let [at, no, err] = outcomes;
        let (at, no, err) = (at?, no?, err?);
        let (at, no) = (at.map_err(|e| e.to_string())?, no.map_err(|e| e.to_string())?);
        ensure(at.parse_status == ParseStatus::FallbackApplied, || {
            format!("completion {i} was read as {:?} ({:?})", at.predicted, at.parse_status)
        })?;
        ensure(at.predicted == Label::AtRisk && no.predicted == Label::NoRisk, || {
            format!("completion {i} ignored the fallback label")
        })?;
        ensure(err.is_err(), || {
            format!("completion {i} did not error under the error policy")
        })?;
        resolved += 1;
    }
    Ok(format!(
        "4 round trips clean, {resolved} malformed completions fell back"
    ))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("mellowmax bounds, limits and closed form", mellowmax_suite),
        ("logistic gradient vs finite differences", logistic_gradient_check),
        ("OLS vs normal-equations oracle", ols_oracle),
        ("t-distribution tail probabilities", t_distribution),
        (
            "shot-count coefficient sign on reference mean accuracies",
            shot_count_direction,
        ),
        ("classify determinism and demo-seed structure", end_to_end_determinism),
        ("zero-shot prompt golden file", prompt_golden),
        ("stratified split exactness", split_exactness),
        ("ablation grid context overflow and summary format", ablation_robustness),
        ("parser round trip and malformed completions", parser_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2}: PASS  {name}: {detail}"),
            Err(why) => {
                println!("criterion {n:>2}: FAIL  {name}: {why}");
                failed.push(n);
            }
        }
    }
    let _ = panic::take_hook();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
