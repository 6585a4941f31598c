use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;
use tracing::{info, warn};

use tripsense::domain::{ActivityLabel, ActivityDay, PoiRecord, StopPoint, UserId, UserProfile};
use tripsense::eval::{evaluate, parameter_grid, stream_evaluate, DecisionRecord};
use tripsense::fusion::{FusionModel, FusionParams, PreviousLabels};
use tripsense::ingest::{
    clean as clean_days, format_timestamp, group_days, read_pois, read_profiles, read_stops, write_json, write_stops, CleaningReport,
    PoiMapping,
};
use tripsense::quantize::QuantizerSpec;
use tripsense::synth::generate;

use crate::config::{EvalMode, RunConfig};
use crate::UsageError;

type Profiles = BTreeMap<UserId, UserProfile<f64>>;

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, UsageError> {
    p.as_deref().ok_or_else(|| UsageError(format!("missing input: pass --{flag} or set data.{flag}")))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| tripsense::Error::io(dir, e))?;
    Ok(())
}

/// Provenance sidecar `<file>.meta.json` for artifacts that cannot hold the
/// configuration themselves.
fn write_meta(path: &Path, cfg: &RunConfig, extra: serde_json::Value) -> anyhow::Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    let meta = json!({
        "artifact": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "config": cfg.to_json(),
        "details": extra,
    });
    write_json(Path::new(&name), &meta)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(|e| tripsense::Error::io(path, e))?;
    Ok(())
}

fn load_profiles(cfg: &RunConfig) -> anyhow::Result<Profiles> {
    let path = required(&cfg.data.profiles, "profiles")?;
    let (profiles, skipped) = read_profiles(path, &cfg.projection, &cfg.model.age_bands)?;
    if !skipped.is_empty() {
        warn!(rows = skipped.len(), "skipped unparseable profile rows");
    }
    Ok(profiles)
}

fn load_stops(cfg: &RunConfig) -> anyhow::Result<Vec<StopPoint<f64>>> {
    let path = required(&cfg.data.stops, "stops")?;
    let parsed = read_stops(path, &cfg.projection)?;
    if !parsed.skipped.is_empty() {
        warn!(rows = parsed.skipped.len(), "skipped unparseable stop rows");
    }
    if parsed.other_dropped > 0 {
        info!(rows = parsed.other_dropped, "dropped stops labelled Other");
    }
    Ok(parsed.stops)
}

fn load_pois(cfg: &RunConfig) -> anyhow::Result<Vec<PoiRecord<f64>>> {
    let mapping = match &cfg.data.mapping {
        Some(p) => PoiMapping::read(p)?,
        None => PoiMapping::builtin(),
    };
    mapping.validate()?;
    let Some(path) = &cfg.data.pois else {
        warn!("no POI file given; contextual features will be empty");
        return Ok(Vec::new());
    };
    let (pois, skipped) = read_pois(path, &cfg.projection, &mapping)?;
    if !skipped.is_empty() {
        warn!(rows = skipped.len(), "skipped unparseable POI rows");
    }
    Ok(pois)
}

struct Cleaned {
    days: Vec<ActivityDay<f64>>,
    profiles: Profiles,
    pois: Vec<PoiRecord<f64>>,
    report: CleaningReport,
}

/// Loads the configured inputs and applies the cleaning rules.
fn load_cleaned(cfg: &RunConfig) -> anyhow::Result<Cleaned> {
    let profiles = load_profiles(cfg)?;
    let stops = load_stops(cfg)?;
    let pois = load_pois(cfg)?;
    let (days, report) = clean_days(group_days(stops), &profiles, &cfg.cleaning);
    info!(days = report.days_kept, points = report.points_kept, "cleaned input");
    Ok(Cleaned {
        days,
        profiles,
        pois,
        report,
    })
}

pub fn synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let ds = generate::<f64>(&cfg.synth, &cfg.projection, &cfg.model.age_bands)?;
    let files = ds.write(out, &cfg.projection)?;
    let bayes = ds.truth.bayes_rate(&ds.stops)?;
    let local = |p: &Path| p.file_name().map(PathBuf::from);
    let mut next = cfg.clone();
    next.data.stops = local(&files.stops);
    next.data.profiles = local(&files.profiles);
    next.data.pois = local(&files.pois);
    next.data.mapping = local(&files.mapping);
    write_json(
        &out.join("synth_manifest.json"),
        &json!({
            "config": cfg.to_json(),
            "files": files,
            "users": ds.profiles.len(),
            "stops": ds.stops.len(),
            "bayes_rate": bayes,
        }),
    )?;
    write_text(&out.join("config.toml"), &next.to_toml())?;
    println!(
        "wrote {} stops of {} users to {} (Bayes rate {:.4})",
        ds.stops.len(),
        ds.profiles.len(),
        out.display(),
        bayes
    );
    Ok(())
}

pub fn clean(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let profiles = load_profiles(cfg)?;
    let stops = load_stops(cfg)?;
    let (days, report) = clean_days(group_days(stops), &profiles, &cfg.cleaning);
    if !report.reconciles() {
        return Err(tripsense::Error::Invariant("cleaning report does not reconcile".into()).into());
    }
    create_dir(out)?;
    let (stops_path, report_path) = (out.join("cleaned_stops.csv"), out.join("cleaning_report.json"));
    let kept: Vec<StopPoint<f64>> = days.into_iter().flat_map(|d| d.stops).collect();
    write_stops(&stops_path, &kept)?;
    write_meta(&stops_path, cfg, json!({ "stops": kept.len() }))?;
    write_json(&report_path, &json!({ "config": cfg.to_json(), "report": report }))?;
    println!(
        "kept {} of {} points ({} days, {} users)",
        report.points_kept, report.total_points, report.days_kept, report.users_kept
    );
    Ok(())
}

/// First `k` days of every user; users with fewer days are dropped.
fn first_days(days: Vec<ActivityDay<f64>>, k: usize) -> (Vec<ActivityDay<f64>>, Vec<UserId>) {
    let mut per_user: BTreeMap<UserId, Vec<ActivityDay<f64>>> = BTreeMap::new();
    for d in days {
        per_user.entry(d.user_id.clone()).or_default().push(d);
    }
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (user, mut ds) in per_user {
        if ds.len() < k {
            warn!(user = %user, days = ds.len(), k, "user has fewer than k days; excluded");
            excluded.push(user);
            continue;
        }
        ds.sort_by_key(|d| d.day);
        ds.truncate(k);
        kept.extend(ds);
    }
    (kept, excluded)
}

pub fn train(cfg: &RunConfig, out: &Path, limit_days: bool) -> anyhow::Result<()> {
    let data = load_cleaned(cfg)?;
    let (days, excluded) = if limit_days {
        first_days(data.days, cfg.eval.k)
    } else {
        (data.days, Vec::new())
    };
    let (model, report) = FusionModel::train(&days, &data.profiles, &data.pois, &cfg.model, cfg.to_json())?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(out, &model.to_json()?)?;
    let report_path = out.with_extension("report.json");
    write_json(
        &report_path,
        &json!({
            "config": cfg.to_json(),
            "training": report,
            "cleaning": data.report,
            "excluded_users": excluded,
        }),
    )?;
    println!(
        "trained {} population models on {} stops; bundle {}",
        model.populations.len(),
        report.stops,
        out.display()
    );
    Ok(())
}

pub fn predict(cfg: &RunConfig, bundle: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(bundle).map_err(|e| tripsense::Error::io(bundle, e))?;
    let model = FusionModel::<f64>::from_json(&text)?;
    let trained: Option<RunConfig> = serde_json::from_value(model.config.clone()).ok();
    let mut cfg = cfg.clone();
    if let Some(t) = &trained {
        if t.projection != cfg.projection {
            warn!("using the projection the bundle was trained with");
        }
        cfg.projection = t.projection;
    }
    cfg.model = model.params.clone();
    let profiles = load_profiles(&cfg)?;
    let mut stops = load_stops(&cfg)?;
    for s in &mut stops {
        s.label = None;
    }
    let preds = model
        .predict(&stops, &profiles, PreviousLabels::Predicted)
        .context("prediction failed")?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(out).map_err(tripsense::Error::from)?;
    let mut header = vec!["user_id".to_owned(), "t_start".into(), "t_end".into(), "predicted".into()];
    header.extend(ActivityLabel::ALL.iter().map(|l| format!("score_{}", l.name())));
    header.extend(["strategy".to_owned(), "seen".into()]);
    w.write_record(&header).map_err(tripsense::Error::from)?;
    for (s, p) in stops.iter().zip(&preds) {
        let mut row = vec![
            s.user_id.as_str().to_owned(),
            format_timestamp(s.t_start),
            format_timestamp(s.t_end),
            p.label.name().to_owned(),
        ];
        row.extend(p.scores.iter().map(|v| format!("{v:.6}")));
        row.extend([model.params.strategy.name().to_owned(), p.seen.to_string()]);
        w.write_record(&row).map_err(tripsense::Error::from)?;
    }
    w.flush().map_err(|e| tripsense::Error::io(out, e))?;
    write_meta(
        out,
        &cfg,
        json!({ "bundle": bundle, "bundle_config": model.config, "rows": preds.len() }),
    )?;
    let seen = preds.iter().filter(|p| p.seen).count();
    println!("predicted {} stops ({} of seen users) to {}", preds.len(), seen, out.display());
    Ok(())
}

fn write_decisions(path: &Path, decisions: &[DecisionRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(tripsense::Error::from)?;
    w.write_record([
        "user_id",
        "day",
        "t_start",
        "truth",
        "predicted",
        "cross_users",
        "gender",
        "age",
        "user",
        "seen",
        "user_training_days",
    ])
    .map_err(tripsense::Error::from)?;
    let name = |l: Option<ActivityLabel>| l.map_or("", |l| l.name()).to_owned();
    for d in decisions {
        let mut row = vec![
            d.user_id.as_str().to_owned(),
            d.day.to_string(),
            format_timestamp(d.t_start),
            d.truth.name().to_owned(),
            d.predicted.name().to_owned(),
        ];
        row.extend(d.members.iter().map(|m| name(*m)));
        row.extend([d.seen.to_string(), d.user_training_days.to_string()]);
        w.write_record(&row).map_err(tripsense::Error::from)?;
    }
    w.flush().map_err(|e| tripsense::Error::io(path, e))?;
    Ok(())
}

fn quantizer_tag(q: &QuantizerSpec) -> String {
    match *q {
        QuantizerSpec::Grid {
            cell_width,
            cell_height,
        } => format!("grid{cell_width}x{cell_height}"),
        QuantizerSpec::Voronoi { clusters } => format!("voronoi{clusters}"),
        QuantizerSpec::Circular { radius } => format!("circular{radius}"),
    }
}

pub fn eval(cfg: &RunConfig, out: &Path, grid: bool) -> anyhow::Result<()> {
    let data = load_cleaned(cfg)?;
    create_dir(out)?;
    if grid {
        if cfg.eval.mode != EvalMode::Chrono {
            return Err(UsageError("--grid runs chronological evaluation only".into()).into());
        }
        return eval_grid(cfg, &data, out);
    }
    match cfg.eval.mode {
        EvalMode::Chrono => {
            let (report, decisions) = evaluate(
                &data.days,
                &data.profiles,
                &data.pois,
                &cfg.model,
                cfg.eval.k,
                &cfg.eval.eval_options(),
                cfg.to_json(),
            )?;
            write_json(&out.join("eval_report.json"), &report)?;
            let text = format!("{}\nresolved config:\n{}", report.render(), cfg.to_toml());
            write_text(&out.join("eval_report.txt"), &text)?;
            let decisions_path = out.join("decisions.csv");
            write_decisions(&decisions_path, &decisions)?;
            write_meta(&decisions_path, cfg, json!({ "rows": decisions.len() }))?;
            print!("{}", report.render_table());
        }
        EvalMode::Stream => {
            let (report, decisions) = stream_evaluate(
                &data.days,
                &data.profiles,
                &data.pois,
                &cfg.model,
                &cfg.eval.stream_options(),
                cfg.to_json(),
            )?;
            write_json(&out.join("stream_report.json"), &report)?;
            for (name, body) in [
                ("stream_curves.csv", report.curves_csv()),
                ("stream_buckets.csv", report.buckets_csv()),
            ] {
                let path = out.join(name);
                write_text(&path, &body)?;
                write_meta(&path, cfg, serde_json::Value::Null)?;
            }
            let decisions_path = out.join("decisions.csv");
            write_decisions(&decisions_path, &decisions)?;
            write_meta(&decisions_path, cfg, json!({ "rows": decisions.len() }))?;
            let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |a| format!("{:.2}%", a * 100.0));
            println!(
                "streamed {} test days: seen {}, unseen {}",
                report.days.len(),
                fmt(report.final_seen()),
                fmt(report.final_unseen())
            );
        }
    }
    Ok(())
}

fn eval_grid(cfg: &RunConfig, data: &Cleaned, out: &Path) -> anyhow::Result<()> {
    let dir = out.join("grid");
    create_dir(&dir)?;
    let combos: Vec<FusionParams> = parameter_grid(&cfg.model);
    info!(combinations = combos.len(), "running parameter grid");
    let rows: Vec<(String, u32, f64, f64)> = combos
        .par_iter()
        .map(|params| -> anyhow::Result<(String, u32, f64, f64)> {
            let mut run = cfg.clone();
            run.model = params.clone();
            let (report, _) = evaluate(
                &data.days,
                &data.profiles,
                &data.pois,
                params,
                cfg.eval.k,
                &cfg.eval.eval_options(),
                run.to_json(),
            )?;
            let tag = quantizer_tag(&params.quantizer);
            let minutes = params.slot_width.minutes();
            write_json(&dir.join(format!("{tag}_slot{minutes}.json")), &report)?;
            Ok((tag, minutes, report.accuracy16, report.accuracy4))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut summary = String::from("quantizer,slot_minutes,accuracy16,accuracy4\n");
    for (tag, minutes, a16, a4) in &rows {
        summary.push_str(&format!("{tag},{minutes},{a16:.6},{a4:.6}\n"));
    }
    let path = out.join("grid_summary.csv");
    write_text(&path, &summary)?;
    write_meta(&path, cfg, json!({ "combinations": rows.len() }))?;
    let best = rows
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .expect("grid is not empty");
    println!(
        "evaluated {} combinations; best 16-class accuracy {:.2}% ({}, {} min)",
        rows.len(),
        best.2 * 100.0,
        best.0,
        best.1
    );
    Ok(())
}
