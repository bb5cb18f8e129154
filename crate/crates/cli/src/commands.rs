use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use argrl::approximator::{ValueModel, ALPHA_FIXED, ALPHA_GENERALIZE, DEFAULT_HIDDEN};
use argrl::baseline::{arg4wg_build, arg4wg_run, compare_lengths, summarize, HeuristicConfig, TieRule};
use argrl::ensemble::{ensemble_curve, member_seed, random_orderings, Ensemble, Scheme};
use argrl::features::EncoderConfig;
use argrl::genealogy::Genealogy;
use argrl::rng::derive_seed;
use argrl::samplegen::{simulate_snps_retrying, SimParams};
use argrl::tabular::{enumerate_optimal_args, Exploration, TabularSolution, DEFAULT_NODE_CAP, DEFAULT_THETA};
use argrl::trainer::{
    eval_rng, evaluate, greedy_build, moving_average, select_best, train_fixed_with,
    train_generalize_with, BuildOutcome, EpisodeLog, EvalReport, TrainConfig, TrainMode,
    MOVING_AVERAGE_WINDOW, TEST_STEP_MAX, VALIDATION_STEP_MAX,
};
use argrl::{io, State};

use crate::output::{
    collect_checkpoints, float_cell, length_cell, load_inputs, read_model_manifest, Input, RunDir,
};
use crate::settings::Settings;
use crate::{note, Cli, Command};

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut s = Settings::load(cli.global.config.as_deref())?;
    let seed = s.get("seed", cli.global.seed, 0u64)?;
    let out = PathBuf::from(s.get(
        "out",
        cli.global.out.map(|p| p.display().to_string()),
        "argrl-out".to_string(),
    )?);
    let ctx = Ctx { seed, out };
    match cli.command {
        Command::Simulate(a) => simulate(a, s, &ctx),
        Command::SolveTabular(a) => solve_tabular(a, s, &ctx),
        Command::Train(a) => train(a, s, &ctx),
        Command::Evaluate(a) => evaluate_cmd(a, s, &ctx),
        Command::Select(a) => select(a, s, &ctx),
        Command::Ensemble(a) => ensemble(a, s, &ctx),
        Command::Baseline(a) => baseline(a, s, &ctx),
        Command::Compare(a) => compare(a, s, &ctx),
        Command::ExportDot(a) => export_dot(a, s, &ctx),
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn open(&self, s: Settings, command: &str) -> Result<RunDir> {
        let resolved = s.finish(command)?;
        RunDir::open(&self.out, command, &resolved)
    }
}

fn path_opt(s: &mut Settings, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
    Ok(s
        .get_opt(key, flag.map(|p| p.display().to_string()))?
        .map(PathBuf::from))
}

fn load_model(path: &Path) -> Result<ValueModel> {
    ValueModel::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn simulate(a: crate::SimulateArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let params = SimParams {
        n: s.get("n", a.n, 40)?,
        region_bp: s.get("region-bp", a.region_bp, 25_000.0)?,
        ne: s.get("ne", a.ne, 1e4)?,
        mu: s.get("mu", a.mu, 1.2e-8)?,
        rho: s.get("rho", a.rho, 1.2e-8)?,
        seed: 0,
        l_keep: s.get("snps", a.snps, 10)?,
    };
    let count = s.get("count", a.count, 1usize)?;
    let attempts = s.get("attempts", a.attempts, 100usize)?;
    params.validate()?;
    let run = ctx.open(s, "simulate")?;
    for k in 0..count {
        let mut p = params.clone();
        p.seed = derive_seed(ctx.seed, "sim", k as u64);
        let (m, used) = simulate_snps_retrying(&p, attempts)?;
        let state = m.to_state()?;
        let name = format!("sample_{k:03}");
        run.write_text(&format!("{name}.txt"), &io::format_sample(&state)?)?;
        p.seed = used;
        let mut meta = p.to_metadata();
        meta.insert("types".into(), state.entries().len().to_string());
        meta.insert("snps".into(), m.sites().to_string());
        run.write_text(&format!("{name}.meta"), &io::format_metadata(&meta))?;
        note(1, format!("{name} n={} snps={} types={}", state.total(), m.sites(), state.entries().len()));
    }
    Ok(())
}

fn solve_tabular(a: crate::SolveArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let paths = s.paths("sample", a.samples);
    let full = s.get("full", a.full, false)?;
    let slack = s.get("slack", a.slack, 0usize)?;
    let cap = s.get("node-cap", a.node_cap, DEFAULT_NODE_CAP)?;
    let theta = s.get("theta", a.theta, DEFAULT_THETA)?;
    let logs = s.get("event-logs", a.event_logs, false)?;
    let limit = s.get("log-limit", a.log_limit, 100_000usize)?;
    let inputs = load_inputs(&paths)?;
    let run = ctx.open(s, "solve-tabular")?;
    let exploration = if full {
        Exploration::Full
    } else {
        Exploration::Bounded { slack }
    };
    let mut csv = run.csv("solve.csv", &["sample", "value", "length", "count", "states", "seconds"])?;
    for input in &inputs {
        let start = Instant::now();
        let sol = TabularSolution::solve(&input.state, exploration, cap, theta)
            .with_context(|| format!("solving {}", input.id))?;
        if !sol.root_value().is_finite() {
            bail!("{}: no genealogy found inside the explored region", input.id);
        }
        let seconds = start.elapsed().as_secs_f64();
        let (length, count) = (sol.optimal_length(), sol.optimal_count());
        println!("length={length} count={count} sample={}", input.id);
        csv.row([
            input.id.clone(),
            sol.root_value().to_string(),
            length.to_string(),
            count.to_string(),
            sol.graph.len().to_string(),
            format!("{seconds:.3}"),
        ])?;
        if logs {
            let args = enumerate_optimal_args(&sol.graph, &sol.values, limit)?;
            let dir = format!("optimal/{}", input.id);
            let mut probs = run.csv(&format!("optimal/{}.csv", input.id), &["arg", "probability"])?;
            for (k, (actions, p)) in args.iter().enumerate() {
                let g = Genealogy::replay(&input.state, actions)?;
                run.write_text(&format!("{dir}/arg_{k:05}.log"), &g.event_log())?;
                probs.row([format!("arg_{k:05}"), format!("{p:e}")])?;
            }
            probs.finish()?;
        }
    }
    csv.finish()?;
    Ok(())
}

fn write_episode_logs(run: &RunDir, logs: &[EpisodeLog], window: usize) -> Result<()> {
    let mut csv = run.csv("episodes.csv", &["episode", "length", "truncated", "seconds"])?;
    for l in logs {
        csv.row([
            (l.episode + 1).to_string(),
            l.length.to_string(),
            (!l.terminated).to_string(),
            format!("{:.6}", l.seconds),
        ])?;
    }
    csv.finish()?;
    let lengths: Vec<usize> = logs.iter().map(|l| l.length).collect();
    let mut curve = run.csv("curve.csv", &["episode", "moving_average"])?;
    for (r, v) in moving_average(&lengths, window).iter().enumerate() {
        curve.row([(r + window).to_string(), format!("{v}")])?;
    }
    curve.finish()?;
    Ok(())
}

fn outcome_line(label: &str, b: &BuildOutcome) -> String {
    format!("{label} length={}", length_cell(b.length()))
}

fn train(a: crate::TrainArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let mode = match s.get("mode", a.mode, "fixed".to_string())?.as_str() {
        "fixed" => TrainMode::Fixed,
        "generalize" => TrainMode::Generalize,
        other => bail!("unknown training mode {other:?} (expected fixed or generalize)"),
    };
    let sample = path_opt(&mut s, "sample", a.sample)?;
    let pool = path_opt(&mut s, "pool", a.pool)?;
    let validation = s.paths("validation", a.validation);
    let default_alpha = if mode == TrainMode::Fixed { ALPHA_FIXED } else { ALPHA_GENERALIZE };
    let cfg = TrainConfig {
        alpha: s.get("alpha", a.alpha, default_alpha)?,
        epsilon: s.get("epsilon", a.epsilon, 0.1)?,
        episodes: s.get("episodes", a.episodes, 10_000)?,
        mode,
        n_tr: s.get("n-tr", a.n_tr, 5)?,
        checkpoint_every: s.get("checkpoint-every", a.checkpoint_every, 2_000)?,
        checkpoint_start: s.get("checkpoint-start", a.checkpoint_start, 0)?,
        step_max_train: s.get_opt("step-max-train", a.step_max_train)?,
        seed: ctx.seed,
    };
    let step_max = s.get("step-max", a.step_max, VALIDATION_STEP_MAX)?;
    let hidden = s.get("hidden", a.hidden, DEFAULT_HIDDEN)?;
    let block = s.get("block", a.block, 3usize)?;
    let shift = s.get("shift", a.shift, 1usize)?;
    let window = s.get("window", a.window, MOVING_AVERAGE_WINDOW)?;
    cfg.validate()?;
    let validation = if validation.is_empty() {
        Vec::new()
    } else {
        load_inputs(&validation)?
    };
    match mode {
        TrainMode::Fixed => {
            let Some(path) = sample else {
                bail!("fixed-mode training needs --sample");
            };
            if pool.is_some() {
                bail!("--pool is only used by generalize-mode training");
            }
            let state = io::load_sample(&path).with_context(|| format!("cannot load {}", path.display()))?;
            let enc = EncoderConfig::new(state.markers(), block, shift)?;
            let mut model = ValueModel::init(enc, hidden, ctx.seed)?;
            let run = ctx.open(s, "train")?;
            let logs = train_fixed_with(&mut model, &state, &cfg, |l| {
                if (l.episode + 1) % 1000 == 0 {
                    note(2, format!("episode {} length {}", l.episode + 1, l.length));
                }
            })?;
            write_episode_logs(&run, &logs, window)?;
            model.save(&run.path("model.ckpt"))?;
            let dedup = state.deduplicated();
            let greedy = greedy_build(&model, &dedup, step_max, &mut eval_rng(ctx.seed, 0))?;
            if let Some(g) = greedy.genealogy() {
                run.write_text("greedy.log", &g.event_log())?;
            }
            println!("{}", outcome_line("greedy", &greedy));
            if !validation.is_empty() {
                let reports = vec![("model".to_string(), evaluate(&model, &states(&validation), step_max, ctx.seed)?)];
                write_evaluation(&run, &reports, &validation)?;
            }
        }
        TrainMode::Generalize => {
            let Some(path) = pool else {
                bail!("generalize-mode training needs --pool");
            };
            if sample.is_some() {
                bail!("--sample is only used by fixed-mode training");
            }
            let pool_state = io::load_sample(&path).with_context(|| format!("cannot load {}", path.display()))?;
            let pool: Vec<_> = pool_state.sequences().collect();
            let enc = EncoderConfig::new(pool_state.markers(), block, shift)?;
            let mut model = ValueModel::init(enc, hidden, ctx.seed)?;
            let run = ctx.open(s, "train")?;
            let ckpt_dir = run.subdir("checkpoints")?;
            let mut saved = Vec::new();
            let result = train_generalize_with(&mut model, &pool, &cfg, |c, _| {
                let p = ckpt_dir.join(format!("ckpt_{:07}.ckpt", c.episode));
                c.model.save(&p)?;
                note(2, format!("checkpoint at episode {}", c.episode));
                saved.push((stem(&p), c.episode, c.pass_end, p));
                Ok(())
            })?;
            write_episode_logs(&run, &result.logs, window)?;
            model.save(&run.path("model.ckpt"))?;
            let mut list = run.csv("checkpoints.csv", &["checkpoint", "episode", "pass_end", "path"])?;
            for (id, ep, pass_end, p) in &saved {
                list.row([id.clone(), ep.to_string(), pass_end.to_string(), p.display().to_string()])?;
            }
            list.finish()?;
            note(1, format!("{} episodes, {} checkpoints", result.logs.len(), saved.len()));
            if !validation.is_empty() && !result.checkpoints.is_empty() {
                let suite = states(&validation);
                let reports = result
                    .checkpoints
                    .iter()
                    .zip(&saved)
                    .map(|(c, (id, ..))| Ok((id.clone(), evaluate(&c.model, &suite, step_max, ctx.seed)?)))
                    .collect::<Result<Vec<_>>>()?;
                write_evaluation(&run, &reports, &validation)?;
                let only: Vec<EvalReport> = reports.iter().map(|r| r.1.clone()).collect();
                let best = select_best(&only)?;
                result.checkpoints[best].model.save(&run.path("best.ckpt"))?;
                println!(
                    "best={} prop_infinite={} mean_length={}",
                    reports[best].0,
                    only[best].prop_infinite,
                    float_cell(only[best].mean_finite_length)
                );
            }
        }
    }
    Ok(())
}

fn states(inputs: &[Input]) -> Vec<State> {
    inputs.iter().map(|i| i.state.clone()).collect()
}

/// `evaluation.csv` (one row per checkpoint) and `lengths.csv` (one row per
/// checkpoint and sample).
fn write_evaluation(run: &RunDir, reports: &[(String, EvalReport)], inputs: &[Input]) -> Result<()> {
    let mut summary = run.csv("evaluation.csv", &["checkpoint", "prop_infinite", "mean_length"])?;
    let mut lengths = run.csv("lengths.csv", &["checkpoint", "sample", "length"])?;
    for (id, r) in reports {
        summary.row([id.clone(), r.prop_infinite.to_string(), float_cell(r.mean_finite_length)])?;
        for (input, l) in inputs.iter().zip(&r.lengths) {
            lengths.row([id.clone(), input.id.clone(), length_cell(*l)])?;
        }
    }
    summary.finish()?;
    lengths.finish()?;
    Ok(())
}

fn evaluate_all(
    paths: &[PathBuf],
    inputs: &[Input],
    step_max: usize,
    seed: u64,
) -> Result<Vec<(String, EvalReport, PathBuf)>> {
    let suite = states(inputs);
    paths
        .iter()
        .map(|p| {
            let model = load_model(p)?;
            let report = evaluate(&model, &suite, step_max, seed)?;
            note(
                1,
                format!(
                    "{} prop_infinite={} mean_length={}",
                    stem(p),
                    report.prop_infinite,
                    float_cell(report.mean_finite_length)
                ),
            );
            Ok((stem(p), report, p.clone()))
        })
        .collect()
}

fn evaluate_cmd(a: crate::EvaluateArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let models = s.paths("model", a.models);
    let samples = s.paths("samples", a.samples);
    let step_max = s.get("step-max", a.step_max, TEST_STEP_MAX)?;
    let models = collect_checkpoints(&models)?;
    let inputs = load_inputs(&samples)?;
    let run = ctx.open(s, "evaluate")?;
    let results = evaluate_all(&models, &inputs, step_max, ctx.seed)?;
    let reports: Vec<_> = results.into_iter().map(|(id, r, _)| (id, r)).collect();
    write_evaluation(&run, &reports, &inputs)
}

fn select(a: crate::SelectArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let checkpoints = s.paths("checkpoints", a.checkpoints);
    let validation = s.paths("validation", a.validation);
    let step_max = s.get("step-max", a.step_max, VALIDATION_STEP_MAX)?;
    let checkpoints = collect_checkpoints(&checkpoints)?;
    let inputs = load_inputs(&validation)?;
    let run = ctx.open(s, "select")?;
    let results = evaluate_all(&checkpoints, &inputs, step_max, ctx.seed)?;
    let reports: Vec<_> = results.iter().map(|(id, r, _)| (id.clone(), r.clone())).collect();
    write_evaluation(&run, &reports, &inputs)?;
    let only: Vec<EvalReport> = reports.iter().map(|r| r.1.clone()).collect();
    let best = select_best(&only)?;
    let (id, report, path) = &results[best];
    std::fs::copy(path, run.path("best.ckpt"))
        .with_context(|| format!("cannot copy {}", path.display()))?;
    run.write_text("selection.txt", &format!("best={id}\npath={}\n", path.display()))?;
    println!(
        "best={id} prop_infinite={} mean_length={}",
        report.prop_infinite,
        float_cell(report.mean_finite_length)
    );
    Ok(())
}

fn ensemble(a: crate::EnsembleArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let manifest = path_opt(&mut s, "manifest", a.manifest)?;
    let samples = s.paths("samples", a.samples);
    let step_max = s.get("step-max", a.step_max, TEST_STEP_MAX)?;
    let scheme = s.get("scheme", a.scheme, "all".to_string())?;
    let orderings = s.get("orderings", a.orderings, 50usize)?;
    let Some(manifest) = manifest else {
        bail!("ensemble needs --manifest");
    };
    let schemes: Vec<Scheme> = if scheme == "all" {
        vec![Scheme::Mean, Scheme::Majority, Scheme::Minimum]
    } else {
        vec![scheme.parse()?]
    };
    let paths = read_model_manifest(&manifest)?;
    let models = paths.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    let e = Ensemble::new(models)?;
    let inputs = load_inputs(&samples)?;
    let suite = states(&inputs);
    let run = ctx.open(s, "ensemble")?;

    let mut members = run.csv("members.csv", &["member", "checkpoint", "prop_infinite", "mean_length"])?;
    for (j, (m, p)) in e.models().iter().zip(&paths).enumerate() {
        let r = evaluate(m, &suite, step_max, member_seed(ctx.seed, j))?;
        members.row([j.to_string(), p.display().to_string(), r.prop_infinite.to_string(), float_cell(r.mean_finite_length)])?;
    }
    members.finish()?;

    let mut per_sample = run.csv("ensemble.csv", &["sample", "scheme", "length"])?;
    let mut summary = run.csv("summary.csv", &["scheme", "agents", "prop_infinite", "mean_length"])?;
    for scheme in schemes {
        let (report, _) = e.evaluate(scheme, &suite, step_max, ctx.seed)?;
        for (input, l) in inputs.iter().zip(&report.lengths) {
            per_sample.row([input.id.clone(), scheme.to_string(), length_cell(*l)])?;
        }
        summary.row([
            scheme.to_string(),
            e.len().to_string(),
            report.prop_infinite.to_string(),
            float_cell(report.mean_finite_length),
        ])?;
        println!(
            "scheme={scheme} prop_infinite={} mean_length={}",
            report.prop_infinite,
            float_cell(report.mean_finite_length)
        );
    }
    per_sample.finish()?;
    summary.finish()?;

    if orderings > 0 {
        let orders = random_orderings(e.len(), orderings, ctx.seed);
        let curve = ensemble_curve(&e, &suite, step_max, &orders, ctx.seed)?;
        let mut c = run.csv("curve.csv", &["ordering", "agents", "prop_infinite", "mean_length"])?;
        for p in &curve.points {
            c.row([p.ordering.to_string(), p.agents.to_string(), p.prop_infinite.to_string(), float_cell(p.mean_length)])?;
        }
        c.finish()?;
        let mut z = run.csv("agents_to_zero.csv", &["ordering", "agents"])?;
        for (k, a) in curve.agents_to_zero.iter().enumerate() {
            z.row([k.to_string(), a.map_or_else(|| "never".to_string(), |a| a.to_string())])?;
        }
        z.finish()?;
        println!(
            "worst_agents_to_zero={}",
            curve
                .worst_agents_to_zero()
                .map_or_else(|| "never".to_string(), |a| a.to_string())
        );
    }
    Ok(())
}

fn group_of(input: &Input, keys: &[&str]) -> String {
    let parts: Vec<String> = keys
        .iter()
        .filter_map(|k| input.meta.get(*k).map(|v| format!("{k}={v}")))
        .collect();
    if parts.is_empty() {
        "all".into()
    } else {
        parts.join(";")
    }
}

/// Comparison rows on the deduplicated samples, with RL builds from
/// `model_for(index, input)`.
fn write_comparison<F>(
    run: &RunDir,
    inputs: &[Input],
    group_keys: &[&str],
    step_max: usize,
    seed: u64,
    mut model_for: F,
) -> Result<()>
where
    F: FnMut(&Input) -> Result<ValueModel>,
{
    let labelled: Vec<(String, String, State)> = inputs
        .iter()
        .map(|i| (i.id.clone(), group_of(i, group_keys), i.state.deduplicated()))
        .collect();
    let mut index = 0;
    let rows = compare_lengths(
        &labelled,
        |state| {
            let i = index;
            index += 1;
            let model = model_for(&inputs[i]).map_err(|e| argrl::ArgError::Config(format!("{e:#}")))?;
            Ok(greedy_build(&model, state, step_max, &mut eval_rng(seed, i))?.length())
        },
        seed,
    )
    .map_err(anyhow::Error::from)?;
    let mut csv = run.csv("comparison.csv", &["sample", "group", "rl_length", "baseline_length", "ratio"])?;
    for r in &rows {
        csv.row([
            r.sample.clone(),
            r.group.clone(),
            length_cell(r.rl_length),
            r.baseline_length.to_string(),
            float_cell(r.ratio()),
        ])?;
    }
    csv.finish()?;
    let mut summary = run.csv("comparison_summary.csv", &["group", "shorter_rl", "equal", "shorter_baseline"])?;
    for (g, c) in summarize(&rows) {
        println!("group={g} shorter_rl={} equal={} shorter_baseline={}", c.shorter_rl, c.equal, c.shorter_baseline);
        summary.row([g, c.shorter_rl.to_string(), c.equal.to_string(), c.shorter_baseline.to_string()])?;
    }
    summary.finish()?;
    Ok(())
}

fn baseline(a: crate::BaselineArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let samples = s.paths("sample", a.samples);
    let tie_rule = match s.get("tie-rule", a.tie_rule, "random".to_string())?.as_str() {
        "random" => TieRule::Random,
        "all" => TieRule::EnumerateAll,
        other => bail!("unknown tie rule {other:?} (expected random or all)"),
    };
    let branch_cap = s.get("branch-cap", a.branch_cap, HeuristicConfig::default().branch_cap)?;
    let model = path_opt(&mut s, "model", a.model)?;
    let step_max = s.get("step-max", a.step_max, TEST_STEP_MAX)?;
    let inputs = load_inputs(&samples)?;
    let model = model.map(|p| load_model(&p)).transpose()?;
    let run = ctx.open(s, "baseline")?;
    let cfg = HeuristicConfig {
        seed: ctx.seed,
        tie_rule,
        branch_cap,
    };
    let mut csv = run.csv(
        "baseline.csv",
        &["sample", "genealogies", "min_length", "max_length", "min_recombinations"],
    )?;
    for input in &inputs {
        let gens = arg4wg_run(&input.state, &cfg).with_context(|| format!("baseline on {}", input.id))?;
        for (k, g) in gens.iter().enumerate() {
            run.write_text(&format!("baseline/{}/arg_{k:05}.log", input.id), &g.event_log())?;
        }
        let min = gens.iter().map(Genealogy::len).min().unwrap_or(0);
        let max = gens.iter().map(Genealogy::len).max().unwrap_or(0);
        let rec = gens.iter().map(Genealogy::recombinations).min().unwrap_or(0);
        println!("sample={} genealogies={} length={min}", input.id, gens.len());
        csv.row([input.id.clone(), gens.len().to_string(), min.to_string(), max.to_string(), rec.to_string()])?;
    }
    csv.finish()?;
    if let Some(model) = model {
        write_comparison(&run, &inputs, &["n", "rho"], step_max, ctx.seed, |_| Ok(model.clone()))?;
    }
    Ok(())
}

fn compare(a: crate::CompareArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let model = path_opt(&mut s, "model", a.model)?;
    let models_dir = path_opt(&mut s, "models-dir", a.models_dir)?;
    let samples = s.paths("samples", a.samples);
    let step_max = s.get("step-max", a.step_max, TEST_STEP_MAX)?;
    let group_by = s.get("group-by", a.group_by, "n,rho".to_string())?;
    let inputs = load_inputs(&samples)?;
    let shared = match (&model, &models_dir) {
        (Some(p), None) => Some(load_model(p)?),
        (None, Some(_)) => None,
        _ => bail!("compare needs exactly one of --model and --models-dir"),
    };
    let run = ctx.open(s, "compare")?;
    let keys: Vec<&str> = group_by.split(',').map(str::trim).filter(|k| !k.is_empty()).collect();
    write_comparison(&run, &inputs, &keys, step_max, ctx.seed, |input| match (&shared, &models_dir) {
        (Some(m), _) => Ok(m.clone()),
        (None, Some(dir)) => load_model(&dir.join(format!("{}.ckpt", input.id))),
        _ => unreachable!("checked above"),
    })
}

fn export_dot(a: crate::ExportDotArgs, mut s: Settings, ctx: &Ctx) -> Result<()> {
    let sample = path_opt(&mut s, "sample", a.sample)?;
    let log = path_opt(&mut s, "log", a.log)?;
    let model = path_opt(&mut s, "model", a.model)?;
    let use_baseline = s.get("baseline", a.baseline, false)?;
    let step_max = s.get("step-max", a.step_max, TEST_STEP_MAX)?;
    let name = s.get_opt("name", a.name)?;
    let Some(sample) = sample else {
        bail!("export-dot needs --sample");
    };
    let sources = usize::from(log.is_some()) + usize::from(model.is_some()) + usize::from(use_baseline);
    if sources != 1 {
        bail!("export-dot needs exactly one of --log, --model and --baseline");
    }
    let state = io::load_sample(&sample).with_context(|| format!("cannot load {}", sample.display()))?;
    let name = name.unwrap_or_else(|| stem(&sample));
    let g = if let Some(log) = log {
        Genealogy::parse_event_log(&state, &io::read(&log)?)
            .with_context(|| format!("malformed event log {}", log.display()))?
    } else if let Some(model) = model {
        let m = load_model(&model)?;
        match greedy_build(&m, &state, step_max, &mut eval_rng(ctx.seed, 0))? {
            BuildOutcome::Finite(g) => g,
            BuildOutcome::Infinite { steps } => bail!("the greedy build reached the step cap ({steps} steps)"),
        }
    } else {
        arg4wg_build(&state, ctx.seed)?
    };
    let run = ctx.open(s, "export-dot")?;
    let path = run.write_text(&format!("{name}.dot"), &g.to_dot(&name))?;
    println!("events={} dot={}", g.len(), path.display());
    Ok(())
}
