use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use iva_core::audit::audit_snapshot;
use iva_core::feeds::{self, load_snapshot, save_snapshot, CatalogSnapshot, FeedFetcher, FeedSource};
use iva_core::matching::{
    find_cpe_candidates, generate_search_terms, group_by_cpe, search_cves, search_cves_by_cpe, search_cves_by_summary,
    InventoryProduct, MatchConfig,
};
use iva_core::naming::{
    bind_to_formatted_string, bind_to_uri, format_wfn, parse_any, parse_wfn, unbind_formatted_string, unbind_uri, CpeUri,
    FormattedString, Wfn,
};
use iva_triage::import::InventoryFormat;
use iva_triage::service::{
    AssignRequest, CandidateView, DecideRequest, ProductStatus, ReportFilters, RescanStatus, TriageService,
};
use iva_triage::store::{parse_cpe, AlertState, AssignmentSource, Decision};
use iva_triage::{FeedsConfig, ServiceConfig};
use serde::Serialize;
use serde_json::json;

use crate::render::{self, emit};
use crate::{AssignArgs, Binding, DecideArgs, DecisionArg, Failure, Global, InputFormat, SearchMode, StateArg, StatusArg};

type Outcome = Result<(), Failure>;

fn file_config(g: &Global) -> Result<Option<ServiceConfig>, Failure> {
    g.config.as_deref().map(|p| ServiceConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))).transpose()
}

fn match_config(g: &Global) -> Result<MatchConfig, Failure> {
    let mut cfg = file_config(g)?.map(|c| c.match_config()).unwrap_or_default();
    if let Some(t) = g.threshold {
        cfg.max_distance = t;
    }
    cfg.strict_summary |= g.strict_summary;
    Ok(cfg)
}

fn snapshot_dir(g: &Global) -> Result<PathBuf, Failure> {
    if let Some(dir) = &g.snapshot {
        return Ok(dir.clone());
    }
    file_config(g)?
        .and_then(|c| c.snapshot)
        .ok_or_else(|| Failure::Usage("--snapshot (or a config file naming one) is required".into()))
}

fn snapshot(g: &Global) -> Result<CatalogSnapshot, Failure> {
    let dir = snapshot_dir(g)?;
    load_snapshot(&dir).map_err(|e| Failure::op(format!("snapshot {}: {e}", dir.display())))
}

fn service_config(g: &Global) -> Result<ServiceConfig, Failure> {
    let mut cfg = match file_config(g)? {
        Some(c) => c,
        None => ServiceConfig::new(g.store.clone().ok_or_else(|| Failure::Usage("--store (or --config) is required".into()))?),
    };
    if let Some(s) = &g.store {
        cfg.store = s.clone();
    }
    if let Some(s) = &g.snapshot {
        cfg.snapshot = Some(s.clone());
    }
    if let Some(t) = g.threshold {
        cfg.max_distance = t;
    }
    cfg.strict_summary |= g.strict_summary;
    Ok(cfg)
}

fn service(g: &Global) -> Result<TriageService, Failure> {
    Ok(TriageService::from_config(&service_config(g)?)?)
}

pub fn convert(g: &Global, from: Binding, to: Binding, name: &str) -> Outcome {
    let parsed = match from {
        Binding::Auto => parse_any(name),
        Binding::Uri => CpeUri::new(name).and_then(|u| unbind_uri(&u)),
        Binding::Fs => FormattedString::new(name).and_then(|f| unbind_formatted_string(&f)),
        Binding::Wfn => parse_wfn(name),
    };
    let wfn = parsed.map_err(|e| Failure::Usage(e.to_string()))?;
    let output = match to {
        Binding::Uri => bind_to_uri(&wfn).into_string(),
        Binding::Fs => bind_to_formatted_string(&wfn).as_str().to_string(),
        Binding::Wfn => format_wfn(&wfn),
        Binding::Auto => return Err(Failure::Usage("--to must be uri, fs or wfn".into())),
    };
    let value = json!({ "input": name, "output": output, "wfn": render::wfn_attributes(&wfn) });
    emit(g.format, &value, |_| output.clone());
    Ok(())
}

pub fn ingest(g: &Global, dictionary: &str, cve: &[String], out: Option<PathBuf>, time: Option<DateTime<Utc>>) -> Outcome {
    let out = match out {
        Some(o) => o,
        None => snapshot_dir(g)?,
    };
    let sources: Vec<FeedSource> =
        std::iter::once(dictionary).chain(cve.iter().map(String::as_str)).map(|s| s.parse().expect("infallible")).collect();
    let mut fetcher = FeedFetcher::new().map_err(Failure::op)?;
    let (_, bodies) = fetcher.fetch_all(&sources).map_err(Failure::op)?;
    let time = time.unwrap_or_else(Utc::now);
    let (snap, report) =
        feeds::ingest(bodies[0].as_slice(), bodies[1..].iter().map(|b| b.as_slice()), time).map_err(Failure::op)?;
    save_snapshot(&snap, &out).map_err(Failure::op)?;
    let value = json!({ "snapshot": out, "snapshot_time": time, "report": report });
    emit(g.format, &value, |_| {
        let mut s = format!(
            "snapshot written to {}\ndictionary entries: {} of {}\nCVE entries:        {} of {}\n",
            out.display(),
            report.dictionary_entries,
            report.dictionary_items_seen,
            report.cve_entries,
            report.cve_entries_seen
        );
        for d in report.skipped.iter().chain(&report.warnings) {
            let _ = writeln!(s, "  {}: {}", d.subject, d.reason);
        }
        s
    });
    Ok(())
}

pub fn terms(g: &Global, vendor: &str, product: &str) -> Outcome {
    let terms = generate_search_terms(&InventoryProduct::new("", vendor, product, "")).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(g.format, &terms, |t| {
        format!("vendor terms: [{}]\nproduct terms: [{}]\n", t.vendor_terms.join(", "), t.product_terms.join(", "))
    });
    Ok(())
}

pub fn match_cpe(g: &Global, vendor: &str, product: &str, version: &str, limit: usize) -> Outcome {
    let snap = snapshot(g)?;
    let found = find_cpe_candidates(&InventoryProduct::new("", vendor, product, version), &snap, &match_config(g)?)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let views: Vec<CandidateView> = found
        .into_iter()
        .take(limit)
        .map(|c| CandidateView {
            rank: c.rank,
            uri: c.entry.uri.clone(),
            formatted: c.entry.formatted.clone(),
            title: c.entry.title.clone(),
            vendor_distance: c.vendor_distance,
            product_distance: c.product_distance,
            exact_version: c.version_affinity.exact,
            common_prefix: c.version_affinity.common_prefix,
        })
        .collect();
    emit(g.format, &views, |v| if v.is_empty() { "no candidates\n".into() } else { render::candidates(v) });
    Ok(())
}

fn assigned_wfn(text: &str) -> Result<Wfn, Failure> {
    parse_any(text).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn match_cve(g: &Global, cpe: &str, mode: SearchMode, grouped: bool) -> Outcome {
    let wfn = assigned_wfn(cpe)?;
    let snap = snapshot(g)?;
    let cfg = match_config(g)?;
    let found = match mode {
        SearchMode::All => search_cves(&wfn, &snap, &cfg),
        SearchMode::CpeList => search_cves_by_cpe(&wfn, &snap, &cfg),
        SearchMode::Summary => search_cves_by_summary(&wfn, &snap, &cfg),
    };
    if grouped {
        emit(g.format, &group_by_cpe(&found), |gr| render::cve_groups(gr));
    } else {
        emit(g.format, &found, |f| render::cve_candidates(f));
    }
    Ok(())
}

pub fn audit(g: &Global, out: Option<PathBuf>) -> Outcome {
    let report = audit_snapshot(&snapshot(g)?);
    if let Some(path) = &out {
        let text = serde_json::to_string_pretty(&report).expect("serializable report");
        std::fs::write(path, text + "\n").map_err(|e| Failure::op(format!("{}: {e}", path.display())))?;
    }
    emit(g.format, &report, |r| {
        let mut s = r.summary();
        for p in &r.semantic_duplicates {
            let _ = writeln!(s, "  {}  ~  {}", p.dictionary_uri, p.feed_uri);
        }
        s
    });
    Ok(())
}

pub fn import(g: &Global, file: &Path, source: &str, input_format: Option<InputFormat>) -> Outcome {
    let bytes = std::fs::read(file).map_err(|e| Failure::op(format!("{}: {e}", file.display())))?;
    let format = match input_format {
        Some(InputFormat::Csv) => InventoryFormat::Csv,
        Some(InputFormat::Json) => InventoryFormat::Json,
        None => InventoryFormat::detect(file.file_name().and_then(|n| n.to_str()), &bytes),
    };
    let summary = service(g)?.import_inventory(&bytes, format, source)?;
    emit(g.format, &summary, |s| {
        let mut t = format!(
            "{} records: {} inserted, {} updated, {} unchanged, {} skipped\n",
            s.records,
            s.inserted,
            s.updated,
            s.unchanged,
            s.skipped.len()
        );
        for e in &s.skipped {
            let _ = writeln!(t, "  row {}: {}", e.row, e.reason);
        }
        t
    });
    Ok(())
}

fn status(s: Option<StatusArg>) -> Option<ProductStatus> {
    s.map(|s| match s {
        StatusArg::Assigned => ProductStatus::Assigned,
        StatusArg::Unassigned => ProductStatus::Unassigned,
    })
}

fn state(s: Option<StateArg>) -> Option<AlertState> {
    s.map(|s| match s {
        StateArg::Pending => AlertState::Pending,
        StateArg::Confirmed => AlertState::Confirmed,
        StateArg::Discarded => AlertState::Discarded,
    })
}

pub fn products(g: &Global, s: Option<StatusArg>) -> Outcome {
    let list = service(g)?.products(status(s))?;
    emit(g.format, &list, |list| {
        let mut t = String::new();
        for p in list {
            let assigned = p.assignment.as_ref().map(|a| a.uri.as_str()).unwrap_or("-");
            let _ = writeln!(
                t,
                "{:>4}  {:<10} {:<10}  {} | {} | {}  {assigned}",
                p.product.id,
                p.product.external_id,
                format!("{:?}", p.status).to_lowercase(),
                p.product.vendor,
                p.product.product,
                p.product.version
            );
        }
        t
    });
    Ok(())
}

pub fn candidates(g: &Global, product_id: i64, limit: usize) -> Outcome {
    let list = service(g)?.list_candidates(product_id, Some(limit))?;
    emit(g.format, &list, |l| {
        if l.no_candidates {
            format!("no candidates; assign a CPE by hand with `iva assign {} --cpe <name>`\n", l.product_id)
        } else {
            render::candidates(&l.candidates)
        }
    });
    Ok(())
}

#[derive(Serialize)]
struct AutoAssigned {
    product_id: i64,
    assigned: Option<CpeUri>,
    new_alerts: usize,
}

pub fn assign(g: &Global, args: &AssignArgs) -> Outcome {
    let svc = service(g)?;
    if !args.auto_assign_top {
        let cpe = args.cpe.as_deref().expect("clap requires --cpe");
        let wfn = parse_cpe(cpe).map_err(|e| Failure::Usage(e.to_string()))?;
        let req = AssignRequest { wfn, source: AssignmentSource::UserEdited, derived_from: None, user: args.user.clone() };
        let out = svc.assign_cpe(args.product_id.expect("clap requires a product id"), &req)?;
        emit(g.format, &out, |o| {
            let verb = if o.changed { "assigned" } else { "already assigned" };
            let mut t = format!("product {} {verb} {}\n", o.assignment.product_id, o.assignment.uri);
            match &o.scan {
                Some(s) => {
                    let _ = writeln!(t, "{} new alerts, {} pending", s.new_alerts, s.pending.len());
                }
                None if o.changed => t.push_str("not scanned: no snapshot loaded\n"),
                None => {}
            }
            t
        });
        return Ok(());
    }

    eprintln!("warning: --auto-assign-top is experimental; top-ranked candidates are frequently wrong, review them with `iva candidates`");
    let ids: Vec<i64> = match args.product_id {
        Some(id) => vec![id],
        None => svc.products(Some(ProductStatus::Unassigned))?.into_iter().map(|p| p.product.id).collect(),
    };
    let mut results = Vec::new();
    for id in ids {
        let top = svc.list_candidates(id, Some(1))?.candidates.into_iter().next();
        let Some(top) = top else {
            results.push(AutoAssigned { product_id: id, assigned: None, new_alerts: 0 });
            continue;
        };
        let wfn = top.uri.to_wfn().map_err(Failure::op)?;
        let req = AssignRequest {
            wfn,
            source: AssignmentSource::CandidateSelected,
            derived_from: Some(top.uri.clone()),
            user: args.user.clone(),
        };
        let out = svc.assign_cpe(id, &req)?;
        results.push(AutoAssigned {
            product_id: id,
            assigned: Some(out.assignment.uri),
            new_alerts: out.scan.map_or(0, |s| s.new_alerts),
        });
    }
    emit(g.format, &results, |rs| {
        let mut t = String::new();
        for r in rs {
            match &r.assigned {
                Some(uri) => writeln!(t, "product {} assigned {uri} ({} new alerts)", r.product_id, r.new_alerts),
                None => writeln!(t, "product {}: no candidates", r.product_id),
            }
            .ok();
        }
        t
    });
    Ok(())
}

pub fn scan(g: &Global, product_id: Option<i64>, all: bool) -> Outcome {
    let svc = service(g)?;
    if all {
        let snap = svc.snapshot().ok_or(iva_triage::TriageError::NoSnapshot)?;
        let (scanned, new_alerts) = svc.rescan_assigned(&snap)?;
        let value = json!({ "products_scanned": scanned, "new_alerts": new_alerts });
        emit(g.format, &value, |_| format!("{scanned} products scanned, {new_alerts} new alerts\n"));
        return Ok(());
    }
    let out = svc.scan_product(product_id.expect("clap requires a product id"))?;
    emit(g.format, &out, |o| {
        format!("product {} ({}): {} new alerts, {} pending\n", o.product_id, o.assignment, o.new_alerts, o.pending.len())
    });
    Ok(())
}

pub fn alerts(g: &Global, product_id: i64, s: Option<StateArg>, grouped: bool) -> Outcome {
    let svc = service(g)?;
    if grouped {
        emit(g.format, &svc.alert_groups(product_id, state(s))?, |gr| render::alert_groups(gr));
    } else {
        emit(g.format, &svc.alerts(product_id, state(s))?, |a| render::alerts(a));
    }
    Ok(())
}

pub fn decide(g: &Global, args: &DecideArgs) -> Outcome {
    if args.alerts.is_empty() && args.group.is_none() {
        return Err(Failure::Usage("select alerts with --alert or --product/--group".into()));
    }
    let decision = match args.decision {
        DecisionArg::Confirmed => Decision::Confirmed,
        DecisionArg::Discarded => Decision::Discarded,
    };
    let req = DecideRequest {
        alert_ids: args.alerts.clone(),
        product_id: args.product,
        group_id: args.group.clone(),
        decision: Some(decision),
        user: args.user.clone(),
    };
    let done = service(g)?.set_alert_state(&req)?;
    emit(g.format, &done, |d| format!("{} alerts {}\n", d.len(), decision.state().as_str()));
    Ok(())
}

pub fn report(g: &Global, vendor: Option<String>, s: Option<StateArg>, since: Option<DateTime<Utc>>, st: Option<StatusArg>) -> Outcome {
    let filters = ReportFilters { vendor, state: state(s), since, status: status(st) };
    let report = service(g)?.report(&filters)?;
    emit(g.format, &report, |r| {
        let t = &r.totals;
        let mut out = format!(
            "products: {} ({} assigned, {} unassigned)\nalerts:   {} pending, {} confirmed, {} discarded\n",
            t.products, t.assigned, t.unassigned, t.pending, t.confirmed, t.discarded
        );
        for p in &r.products {
            let assigned = p.assigned.as_ref().map(|u| u.as_str()).unwrap_or("-");
            let _ = writeln!(
                out,
                "{:>4}  {:<10} {} | {}  {assigned}  pending={} confirmed={} discarded={}",
                p.id, p.external_id, p.vendor, p.product, p.pending, p.confirmed, p.discarded
            );
        }
        out
    });
    Ok(())
}

pub fn rescan(g: &Global, dictionary: Option<String>, cve: Vec<String>) -> Outcome {
    let cfg = service_config(g)?;
    let feeds = match dictionary {
        Some(d) => FeedsConfig {
            dictionary: d.parse().expect("infallible"),
            cve: cve.iter().map(|c| c.parse().expect("infallible")).collect(),
        },
        None => cfg
            .feeds
            .clone()
            .ok_or_else(|| Failure::Usage("no feed sources: pass --dictionary/--cve or set [feeds] in the config".into()))?,
    };
    let svc = TriageService::from_config(&cfg)?.with_feeds(feeds, cfg.snapshot.clone());
    let summary = svc.scheduled_rescan();
    emit(g.format, &summary, |s| {
        let mut t = format!("rescan {:?}", s.status).to_lowercase();
        if let Some(time) = s.snapshot_time {
            let _ = write!(t, ", snapshot {}", time.to_rfc3339());
        }
        let _ = writeln!(t, ": {} products scanned, {} new alerts", s.products_scanned, s.new_alerts);
        if let Some(e) = &s.error {
            let _ = writeln!(t, "{e}");
        }
        t
    });
    match summary.status {
        RescanStatus::Failed => Err(Failure::op(summary.error.unwrap_or_else(|| "rescan failed".into()))),
        _ => Ok(()),
    }
}

pub fn serve(g: &Global, listen: Option<String>, token: Option<String>, interval: Option<u64>) -> Outcome {
    let mut cfg = service_config(g)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    if token.is_some() {
        cfg.token = token;
    }
    if interval.is_some() {
        cfg.rescan_interval_secs = interval;
    }
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let svc = Arc::new(TriageService::from_config(&cfg)?);
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::op)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .map_err(|e| Failure::op(format!("bind {}: {e}", cfg.listen)))?;
        let every = cfg.rescan_interval_secs.map(Duration::from_secs);
        iva_triage::api::serve(listener, svc, cfg.token.clone(), every).await.map_err(Failure::op)
    })
}
