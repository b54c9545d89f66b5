use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gated_pricing::baselines::{calibrate, FourierPricer, LevyModelParams, ModelVariant};
use gated_pricing::gated_net::{Checkpoint, ModelKind, ModelSpec};
use gated_pricing::market_data::{
    filter_and_normalize, group_by_date, ingest_chain, parse_date, read_records, CallRecord, FilterStats,
    IngestOptions, OptionQuote, RateCurve, DAYS_PER_YEAR, RECORD_COLUMNS,
};
use gated_pricing::math::linspace;
use gated_pricing::rationality::{check_conditions, density_moments, extract_density, CheckGrid, DensityOptions};
use gated_pricing::synthesis::generate_synthetic_market;
use gated_pricing::training::{assemble_training_set, rolling_evaluate, train, EvalMethod};
use serde_json::json;

use crate::output::{f, Outputs, RunConfig};
use crate::settings::{Settings, KEYS};
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.global.config {
        settings.load_file(path)?;
    }
    if let Some(seed) = cli.global.seed {
        settings.seed = seed;
    }
    let mut inputs = BTreeMap::new();
    let mut input = |k: &str, p: &Path| {
        inputs.insert(k.to_string(), p.display().to_string());
    };
    let name = match &cli.command {
        Command::Ingest { chain, rates, .. } => {
            input("chain", chain);
            if let Some(r) = rates {
                input("rates", r);
            }
            "ingest"
        }
        Command::Synth { generator, dates } => {
            if let Some(g) = generator {
                settings.set("generator", g)?;
            }
            if let Some(n) = dates {
                settings.synth.n_dates = *n;
            }
            "synth"
        }
        Command::Train { records, model, epochs } => {
            input("records", records);
            if let Some(m) = model {
                settings.set("model", m)?;
            }
            if let Some(e) = epochs {
                settings.eval.train.epochs = *e;
            }
            "train"
        }
        Command::Eval { records, .. } => {
            input("records", records);
            "eval"
        }
        Command::Density { checkpoint, .. } => {
            input("checkpoint", checkpoint);
            "density"
        }
        Command::Check { checkpoint, .. } => {
            input("checkpoint", checkpoint);
            "check"
        }
        Command::Calibrate { records, .. } => {
            input("records", records);
            "calibrate"
        }
        Command::PriceCurve { params, .. } => {
            input("params", params);
            "price-curve"
        }
        Command::Report { windows } => {
            for (i, w) in windows.iter().enumerate() {
                input(&format!("windows[{i}]"), w);
            }
            "report"
        }
        Command::Keys => {
            for (k, doc) in KEYS {
                println!("{k:<20} {doc}");
            }
            return Ok(Vec::new());
        }
    };
    let run = RunConfig {
        command: name.to_string(),
        inputs,
        seed: settings.seed,
        out: cli.global.out.display().to_string(),
        settings,
    };
    let mut out = Outputs::new(&cli.global.out, run)?;
    match &cli.command {
        Command::Ingest {
            chain,
            rates,
            max_rejected,
        } => ingest(&mut out, chain, rates.as_deref(), *max_rejected)?,
        Command::Synth { .. } => synth(&mut out)?,
        Command::Train { records, .. } => train_cmd(&mut out, records)?,
        Command::Eval { records, method } => eval(&mut out, records, method)?,
        Command::Density {
            checkpoint,
            spot,
            tau_days,
            rate,
            lo,
            hi,
            points,
        } => density(&mut out, checkpoint, *spot, *tau_days, *rate, (*lo, *hi), *points)?,
        Command::Check { checkpoint, rate } => check(&mut out, checkpoint, *rate)?,
        Command::Calibrate { records, model, date } => calibrate_cmd(&mut out, records, model, date.as_deref())?,
        Command::PriceCurve {
            params,
            tau_days,
            k_min,
            k_max,
            points,
        } => price_curve(&mut out, params, *tau_days, (*k_min, *k_max), *points)?,
        Command::Report { windows } => report(&mut out, windows)?,
        Command::Keys => unreachable!("handled above"),
    }
    Ok(out.commit())
}

fn record_rows(records: &[CallRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.date.to_string(),
                r.tau_days.to_string(),
                f(r.tau_years),
                f(r.strike),
                f(r.spot),
                f(r.rate),
                f(r.moneyness),
                f(r.price),
                f(r.target),
            ]
        })
        .collect()
}

fn load_records(path: &Path) -> Result<Vec<CallRecord>> {
    let recs = read_records(path)?;
    if recs.is_empty() {
        bail!("{} holds no call records", path.display());
    }
    Ok(recs)
}

fn add_stats(total: &mut FilterStats, s: &FilterStats) {
    total.itm_calls += s.itm_calls;
    total.itm_puts += s.itm_puts;
    total.short_maturity += s.short_maturity;
    total.parity_violations += s.parity_violations;
    total.missing_rate += s.missing_rate;
}

fn ingest(out: &mut Outputs, chain: &Path, rates: Option<&Path>, max_rejected: f64) -> Result<()> {
    let opts = IngestOptions {
        max_rejected_fraction: max_rejected,
        ..IngestOptions::default()
    };
    let report = ingest_chain(chain, &opts)?;
    let curve = rates.map(RateCurve::from_csv).transpose()?;
    let mut by_date: BTreeMap<_, Vec<OptionQuote>> = BTreeMap::new();
    for q in &report.quotes {
        by_date.entry(q.quote_date).or_default().push(q.clone());
    }
    let mut records = Vec::new();
    let mut stats = FilterStats::default();
    let mut empty_dates = Vec::new();
    for (date, quotes) in by_date {
        match filter_and_normalize(&quotes, curve.as_ref()) {
            Ok(n) => {
                add_stats(&mut stats, &n.stats);
                records.extend(n.records);
            }
            Err(gated_pricing::Error::NoUsableQuotes) => {
                log::warn!("{date}: no usable quotes");
                empty_dates.push(date.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if records.is_empty() {
        return Err(gated_pricing::Error::NoUsableQuotes.into());
    }
    out.csv("records.csv", &RECORD_COLUMNS, &record_rows(&records))?;
    let rejected: Vec<_> = report
        .rejected
        .iter()
        .map(|r| json!({"row": r.row, "reason": r.reason}))
        .collect();
    out.json(
        "ingest_report.json",
        json!({
            "quotes": report.quotes.len(),
            "records": records.len(),
            "rejected_rows": rejected,
            "filtered": stats,
            "dates_without_usable_quotes": empty_dates,
        }),
    )?;
    Ok(())
}

fn synth(out: &mut Outputs) -> Result<()> {
    let s = &out.run().settings;
    let records = generate_synthetic_market(&s.synth, s.seed)?;
    out.csv("records.csv", &RECORD_COLUMNS, &record_rows(&records))?;
    Ok(())
}

fn train_cmd(out: &mut Outputs, records: &Path) -> Result<()> {
    let records = load_records(records)?;
    let s = &out.run().settings;
    let (spec, cfg, seed) = (s.model, s.eval.train.clone(), s.seed);
    let (virtuals, hints) = assemble_training_set(&records, &spec, &cfg, seed)?;
    let outcome = train(&records, &virtuals, &hints, &spec, &cfg, seed)?;
    let mut ck = outcome.checkpoint;
    if let Some(meta) = ck.training.as_object_mut() {
        meta.insert("run_config".into(), out.run().json());
    }
    let mut text = ck.to_json()?;
    text.push('\n');
    out.text("checkpoint.json", &text)?;
    let rows: Vec<Vec<String>> = outcome
        .trace
        .iter()
        .enumerate()
        .map(|(e, v)| vec![e.to_string(), f(*v)])
        .collect();
    out.csv("loss_trace.csv", &["epoch", "objective"], &rows)?;
    Ok(())
}

fn method_from_name(name: &str, model: &ModelSpec) -> Result<EvalMethod> {
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "single" => EvalMethod::Network {
            spec: ModelSpec::single(model.hidden),
        },
        "multi" => EvalMethod::Network {
            spec: match model.kind {
                ModelKind::Multi => *model,
                ModelKind::Single => ModelSpec {
                    hidden: model.hidden,
                    ..ModelSpec::default()
                },
            },
        },
        other => other.parse()?,
    })
}

fn eval(out: &mut Outputs, records: &Path, methods: &[String]) -> Result<()> {
    let records = load_records(records)?;
    let s = out.run().settings.clone();
    for name in methods {
        let method = method_from_name(name, &s.model)?;
        let res = rolling_evaluate(&records, &method, &s.eval, s.seed).with_context(|| format!("evaluating {name}"))?;
        let rows: Vec<Vec<String>> = res
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                vec![
                    res.method.clone(),
                    i.to_string(),
                    w.train_dates.first().map(|d| d.to_string()).unwrap_or_default(),
                    w.train_dates.last().map(|d| d.to_string()).unwrap_or_default(),
                    w.test_date.to_string(),
                    f(w.train_mse),
                    f(w.train_mape),
                    f(w.test_mse),
                    f(w.test_mape),
                    w.n_train.to_string(),
                    w.n_test.to_string(),
                ]
            })
            .collect();
        out.csv(
            &format!("windows_{}.csv", res.method),
            &[
                "method",
                "window",
                "train_start",
                "train_end",
                "test_date",
                "train_mse",
                "train_mape",
                "test_mse",
                "test_mape",
                "n_train",
                "n_test",
            ],
            &rows,
        )?;
        let preds: Vec<Vec<String>> = res
            .predictions
            .iter()
            .map(|p| {
                vec![
                    p.window.to_string(),
                    p.date.to_string(),
                    p.tau_days.to_string(),
                    f(p.strike),
                    f(p.spot),
                    f(p.rate),
                    f(p.price),
                    f(p.predicted),
                ]
            })
            .collect();
        out.csv(
            &format!("predictions_{}.csv", res.method),
            &["window", "date", "tau_days", "K", "S_t", "r", "c", "predicted"],
            &preds,
        )?;
    }
    Ok(())
}

fn density(
    out: &mut Outputs,
    checkpoint: &Path,
    spot: f64,
    tau_days: u32,
    rate: f64,
    (lo, hi): (f64, f64),
    points: usize,
) -> Result<()> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        bail!("density range needs 0 < lo < hi and at least 2 points");
    }
    let ck = Checkpoint::load(checkpoint)?;
    let tau = tau_days as f64 / DAYS_PER_YEAR;
    let grid = linspace(lo * spot, hi * spot, points);
    let d = extract_density(&ck.model, spot, tau, rate, &grid, &DensityOptions::default())?;
    let mom = density_moments(&d);
    let rows: Vec<Vec<String>> = d.grid.iter().zip(&d.density).map(|(x, v)| vec![f(*x), f(*v)]).collect();
    out.csv("density.csv", &["S_T", "f"], &rows)?;
    out.json(
        "density_summary.json",
        json!({
            "spot": spot,
            "tau_days": tau_days,
            "tau_years": tau,
            "rate": rate,
            "integral": d.integral,
            "min_value": d.min_value,
            "valid": d.valid,
            "unstable": d.unstable,
            "moments": mom,
        }),
    )?;
    Ok(())
}

fn check(out: &mut Outputs, checkpoint: &Path, rate: f64) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let report = check_conditions(
        &ck.model,
        &CheckGrid {
            rate,
            ..CheckGrid::default()
        },
    );
    out.json(
        "check.json",
        json!({
            "model_type": ck.model.kind(),
            "all_hard_pass": report.all_hard_pass(),
            "report": report,
        }),
    )?;
    Ok(())
}

fn calibrate_cmd(out: &mut Outputs, records: &Path, model: &str, date: Option<&str>) -> Result<()> {
    let records = load_records(records)?;
    let variant: ModelVariant = model.parse()?;
    let days = group_by_date(&records);
    let (day, recs) = match date {
        Some(d) => {
            let d = parse_date(d)?;
            days.into_iter()
                .find(|(x, _)| *x == d)
                .ok_or_else(|| anyhow!("no records on {d}"))?
        }
        None => days.into_iter().last().expect("records are nonempty"),
    };
    let s = &out.run().settings;
    let opts = gated_pricing::baselines::CalibrationOptions {
        seed: s.seed,
        ..s.calibration().clone()
    };
    let fit = calibrate(&recs, variant, &opts)?;
    out.json(
        "calibration.json",
        json!({
            "date": day.to_string(),
            "model": variant,
            "params": fit.params,
            "mse": fit.mse,
            "mape": fit.mape,
            "evals": fit.evals,
            "converged": fit.converged,
            "n_contracts": fit.n_contracts,
        }),
    )?;
    Ok(())
}

fn price_curve(out: &mut Outputs, params: &Path, tau_days: u32, (k_min, k_max): (f64, f64), n: usize) -> Result<()> {
    let text = std::fs::read_to_string(params).with_context(|| format!("cannot read {}", params.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("in {}", params.display()))?;
    let inner = value.get("params").cloned().unwrap_or(value);
    let p: LevyModelParams =
        serde_json::from_value(inner).with_context(|| format!("{} holds no baseline parameters", params.display()))?;
    let pricer = FourierPricer::new(out.run().settings.calibration().pricer.clone());
    let curve = pricer.price_curve(&p, tau_days as f64 / DAYS_PER_YEAR, k_min, k_max, n)?;
    let rows: Vec<Vec<String>> = curve.iter().map(|(k, c)| vec![f(*k), f(*c)]).collect();
    out.csv("price_curve.csv", &["K", "c"], &rows)?;
    Ok(())
}

struct WindowRow {
    method: String,
    window: String,
    test_date: String,
    metrics: [f64; 4],
}

const METRICS: [&str; 4] = ["test_mse", "test_mape", "train_mse", "train_mape"];

fn read_windows(path: &Path) -> Result<Vec<WindowRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
    };
    let (mi, wi, di) = (col("method")?, col("window")?, col("test_date")?);
    let metric_cols = [col(METRICS[0])?, col(METRICS[1])?, col(METRICS[2])?, col(METRICS[3])?];
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("in {}", path.display()))?;
        let mut metrics = [0.0; 4];
        for (slot, &c) in metrics.iter_mut().zip(&metric_cols) {
            *slot = rec[c]
                .parse()
                .map_err(|_| anyhow!("{}: bad number `{}`", path.display(), &rec[c]))?;
        }
        rows.push(WindowRow {
            method: rec[mi].to_string(),
            window: rec[wi].to_string(),
            test_date: rec[di].to_string(),
            metrics,
        });
    }
    Ok(rows)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn report(out: &mut Outputs, windows: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for p in windows {
        rows.extend(read_windows(p)?);
    }
    if rows.is_empty() {
        bail!("no window results to report");
    }
    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        if !order.contains(&r.method) {
            order.push(r.method.clone());
        }
    }
    let mut header = vec!["method".to_string(), "n_windows".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let table: Vec<Vec<String>> = order
        .iter()
        .map(|method| {
            let mine: Vec<&WindowRow> = rows.iter().filter(|r| &r.method == method).collect();
            let mut line = vec![method.clone(), mine.len().to_string()];
            for k in 0..METRICS.len() {
                let vals: Vec<f64> = mine.iter().map(|r| r.metrics[k]).collect();
                let (m, s) = mean_std(&vals);
                line.push(f(m));
                line.push(f(s));
            }
            line
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("comparison.csv", &header_refs, &table)?;
    let series: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.window.clone(),
                r.test_date.clone(),
                f(r.metrics[0]),
                f(r.metrics[1]),
            ]
        })
        .collect();
    out.csv(
        "series.csv",
        &["method", "window", "test_date", "test_mse", "test_mape"],
        &series,
    )?;
    Ok(())
}
