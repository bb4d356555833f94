//! One function per subcommand. Each writes its files into `out` and
//! returns the lines for `summary.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::{CliError, Command};
use crate::ergodic::{
    averaged_diffusion, averaged_drift, build_averaged_table, ergodicity_decay, estimate_invariant_measure,
    poisson_cell, poisson_centering, semigroup_identity, AveragedTable, TableConfig, TailDiagnostic,
};
use crate::estimate::{epsilon_levels, fast_moment_sweep, strong_error, weak_error, ErrorReport, FitOutcome, ModelSampler, Sweep};
use crate::levy_rng::RngStream;
use crate::model::{validate_all, ModelSpec};

// stream ids, one per kind of work
const VALIDATE: u64 = 0x10;
const FROZEN: u64 = 0x20;
const TABLE: u64 = 0x30;
const POISSON: u64 = 0x40;
const CENTERING: u64 = 0x41;
const SEMIGROUP: u64 = 0x42;
const ERGODICITY: u64 = 0x50;
const STRONG: u64 = 0x60;
const WEAK: u64 = 0x70;
const FAST: u64 = 0x80;

/// What a finished command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: Command,
    pub lines: Vec<String>,
    /// False when a configured acceptance check failed.
    pub passed: bool,
}

impl Outcome {
    fn new(command: Command) -> Self {
        Self { command, lines: Vec::new(), passed: true }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.passed &= ok;
        self.line(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }

    pub fn summary(&self) -> String {
        let mut s = format!("mslevy {}\n", self.command.name());
        for l in &self.lines {
            let _ = writeln!(s, "{l}");
        }
        let _ = writeln!(s, "status: {}", if self.passed { "ok" } else { "acceptance check failed" });
        s
    }
}

fn block<'a, T>(b: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    b.as_ref().ok_or_else(|| CliError::Config(format!("missing required keys: {key}")))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn e16(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_dim(name: &str, v: &[f64], want: usize) -> Result<(), CliError> {
    if v.len() != want {
        return Err(CliError::Config(format!("{name} has dimension {}, expected {want}", v.len())));
    }
    Ok(())
}

pub(super) fn dispatch(cmd: Command, cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    match cmd {
        Command::ValidateModel => validate_model(cfg, spec, out),
        Command::FrozenStats => frozen_stats(cfg, spec, out),
        Command::AvgTable => avg_table(cfg, spec, out),
        Command::PoissonCheck => poisson_check(cfg, spec, out),
        Command::Ergodicity => ergodicity(cfg, spec, out),
        Command::StrongOrder => strong_order(cfg, spec, out),
        Command::WeakOrder => weak_order(cfg, spec, out),
        Command::FastMoments => fast_moments(cfg, spec, out),
    }
}

fn validate_model(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let v = block(&cfg.validate, "validate")?;
    if !(v.probe_box.lo < v.probe_box.hi) || v.probes == 0 {
        return Err(CliError::Config("validate: need probes > 0 and box.lo < box.hi".into()));
    }
    let reports = validate_all(spec, v.probes, v.probe_box, &RngStream::new(cfg.seed, VALIDATE));
    write_json(&out.join("assumptions.json"), &reports)?;
    let mut o = Outcome::new(Command::ValidateModel);
    for r in &reports {
        let declared = r.declared.map_or("-".to_string(), |d| format!("{d:.4}"));
        o.check(
            &format!("{:?}", r.id),
            r.pass,
            format!("observed {:.4e}, declared {declared}, {} probes", r.observed, r.probes),
        );
    }
    Ok(o)
}

fn frozen_stats(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let fz = block(&cfg.frozen, "frozen")?;
    check_dim("frozen.x", &fz.x, spec.n())?;
    if fz.moments < 1 {
        return Err(CliError::Config("frozen.moments must be >= 1".into()));
    }
    let inv = estimate_invariant_measure(spec, &fz.x, &fz.invariant, &RngStream::new(cfg.seed, FROZEN))?;
    let mut csv = String::from("component,k,mean,ci_lo,ci_hi,effective_sample_size\n");
    for c in 0..spec.m() {
        for k in 1..=fz.moments {
            let bm = inv.moment(c, k)?;
            let _ = writeln!(
                csv,
                "{c},{k},{},{},{},{}",
                e16(bm.mean),
                e16(bm.mean - bm.half_width),
                e16(bm.mean + bm.half_width),
                e16(bm.effective_sample_size)
            );
        }
    }
    fs::write(out.join("invariant_moments.csv"), csv)?;
    let (bbar, bbar_ci) = averaged_drift(spec, &fz.x, &inv)?;
    let diff = averaged_diffusion(spec, &fz.x, &inv)?;
    #[derive(Serialize)]
    struct Averaged<'a> {
        x: &'a [f64],
        samples: usize,
        effective_sample_size: f64,
        low_ess: bool,
        bbar: &'a [f64],
        bbar_ci: &'a [f64],
        cov: &'a [f64],
        cov_ci: &'a [f64],
        sigma_bar: &'a [f64],
        clipped: f64,
    }
    write_json(
        &out.join("averaged.json"),
        &Averaged {
            x: &fz.x,
            samples: inv.len(),
            effective_sample_size: inv.effective_sample_size,
            low_ess: inv.low_ess,
            bbar: &bbar,
            bbar_ci: &bbar_ci,
            cov: &diff.cov,
            cov_ci: &diff.cov_ci,
            sigma_bar: &diff.root.root,
            clipped: diff.root.clipped,
        },
    )?;
    let mut o = Outcome::new(Command::FrozenStats);
    o.line(format!("x = {:?}: {} samples, effective size {:.0}", fz.x, inv.len(), inv.effective_sample_size));
    if inv.low_ess {
        o.line("warning: effective sample size is low; lengthen the chains");
    }
    for i in 0..spec.n() {
        o.line(format!("bbar[{i}] = {:.6e} ± {:.2e}", bbar[i], bbar_ci[i]));
    }
    Ok(o)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Builds the averaged table or loads it from the cache. The key covers the
/// model, the table settings and the seed. Cache hits are reported on
/// stderr only, so `summary.txt` does not depend on the cache state.
fn load_or_build_table(
    cfg: &RunConfig,
    spec: &ModelSpec,
    out: &Path,
) -> Result<AveragedTable, CliError> {
    let tc: &TableConfig = block(&cfg.table, "table")?;
    if tc.lo.len() != spec.n() {
        return Err(CliError::Config(format!("table.lo has dimension {}, model has n = {}", tc.lo.len(), spec.n())));
    }
    let key_src = serde_json::to_string(&(&cfg.model, tc, cfg.seed, crate::ergodic::TABLE_VERSION))?;
    let key = hex(&Sha256::digest(key_src.as_bytes()));
    let dir: PathBuf = cfg.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let (csv_path, json_path) = (dir.join(format!("{key}.csv")), dir.join(format!("{key}.json")));
    let table = match (fs::read_to_string(&csv_path), fs::read_to_string(&json_path)) {
        (Ok(csv), Ok(json)) => {
            let mut t = AveragedTable::from_parts(&csv, &json)?;
            t.attach_model(spec)?;
            eprintln!("table: loaded from cache {}", &key[..16]);
            t
        }
        _ => {
            let t = build_averaged_table(spec, tc, &RngStream::new(cfg.seed, TABLE))?;
            fs::create_dir_all(&dir)?;
            fs::write(&csv_path, t.to_csv())?;
            fs::write(&json_path, t.header_json() + "\n")?;
            eprintln!("table: built {} nodes, cached as {}", t.node_count(), &key[..16]);
            t
        }
    };
    fs::write(out.join("avg_table.csv"), table.to_csv())?;
    fs::write(out.join("avg_table.json"), table.header_json() + "\n")?;
    Ok(table)
}

fn avg_table(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(Command::AvgTable);
    let t = load_or_build_table(cfg, spec, out)?;
    if t.is_exact() {
        o.line("exact: coefficients do not depend on y");
    }
    let widest = t.drift_ci.iter().copied().fold(0.0, f64::max);
    o.line(format!("widest drift half-width {widest:.3e}"));
    if let Some(v) = &t.header.validation {
        o.line(format!("leave-node-out: {} nodes, worst error/tolerance {:.3}", v.checked, v.worst_ratio));
    }
    Ok(o)
}

fn poisson_check(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let pb = block(&cfg.poisson, "poisson")?;
    check_dim("poisson.x", &pb.x, spec.n())?;
    for y in &pb.y {
        check_dim("poisson.y", y, spec.m())?;
    }
    let inv = estimate_invariant_measure(spec, &pb.x, &pb.invariant, &RngStream::new(cfg.seed, POISSON))?;
    let (bbar, bbar_ci) = averaged_drift(spec, &pb.x, &inv)?;
    let avg = (bbar.as_slice(), bbar_ci.as_slice());
    let cells = RngStream::new(cfg.seed, POISSON).child(1);
    let n = spec.n();

    let mut head: Vec<String> = (0..spec.m()).map(|j| format!("y{j}")).collect();
    for i in 0..n {
        head.extend([format!("phi{i}"), format!("phi{i}_ci_lo"), format!("phi{i}_ci_hi")]);
    }
    head.extend(["tail_rate".into(), "tail_bound".into()]);
    let mut csv = head.join(",") + "\n";
    let mut estimates = Vec::with_capacity(pb.y.len());
    for (j, y) in pb.y.iter().enumerate() {
        let est = poisson_cell(spec, &pb.x, y, pb.t_cut, pb.n_traj, pb.delta, avg, &cells.child(j as u64))?;
        let mut row: Vec<String> = y.iter().map(|v| e16(*v)).collect();
        for i in 0..n {
            row.extend([e16(est.phi[i]), e16(est.phi[i] - est.ci[i]), e16(est.phi[i] + est.ci[i])]);
        }
        match est.tail {
            TailDiagnostic::Fitted { rate, tail_bound, .. } => row.extend([e16(rate), e16(tail_bound)]),
            TailDiagnostic::BelowNoise { .. } | TailDiagnostic::Unresolved { .. } => row.extend(["".into(), "".into()]),
        }
        csv.push_str(&(row.join(",") + "\n"));
        estimates.push(est);
    }
    fs::write(out.join("poisson.csv"), csv)?;

    let mut o = Outcome::new(Command::PoissonCheck);
    o.line(format!("bbar = {bbar:?} ± {bbar_ci:?}"));
    let centering = match &pb.centering {
        Some(c) => {
            let chk = poisson_centering(
                spec,
                &inv,
                c.n_points,
                pb.t_cut,
                c.n_traj,
                pb.delta,
                avg,
                &RngStream::new(cfg.seed, CENTERING),
            )?;
            let ok = (0..n).all(|i| chk.mean[i].abs() <= 3.0 * chk.ci[i]);
            o.check("centering", ok, format!("mean Φ = {:?} ± {:?}", chk.mean, chk.ci));
            Some(chk)
        }
        None => None,
    };
    let semigroup = match &pb.semigroup {
        Some(sg) => {
            check_dim("poisson.semigroup.y", &sg.y, spec.m())?;
            let chk = semigroup_identity(
                spec,
                &pb.x,
                &sg.y,
                sg.s,
                pb.t_cut,
                sg.n_traj,
                sg.n_endpoints,
                sg.traj_per_endpoint,
                pb.delta,
                avg,
                &RngStream::new(cfg.seed, SEMIGROUP),
            )?;
            let ratio = chk.worst_ratio();
            o.check(
                "semigroup",
                ratio <= 3.0,
                format!("lhs {:?}, rhs {:?}, worst |lhs-rhs|/ci {ratio:.2}", chk.lhs, chk.rhs),
            );
            Some(chk)
        }
        None => None,
    };
    write_json(
        &out.join("poisson_checks.json"),
        &serde_json::json!({
            "x": pb.x,
            "bbar": bbar,
            "bbar_ci": bbar_ci,
            "cells": estimates,
            "centering": centering,
            "semigroup": semigroup,
        }),
    )?;
    Ok(o)
}

fn ergodicity(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let eb = block(&cfg.ergodicity, "ergodicity")?;
    check_dim("ergodicity.x", &eb.x, spec.n())?;
    check_dim("ergodicity.y1", &eb.y1, spec.m())?;
    check_dim("ergodicity.y2", &eb.y2, spec.m())?;
    if eb.points < 3 || !(eb.t_max > 0.0) {
        return Err(CliError::Config("ergodicity: need points >= 3 and t_max > 0".into()));
    }
    let times: Vec<f64> = (0..eb.points).map(|k| eb.t_max * k as f64 / (eb.points - 1) as f64).collect();
    let curve = ergodicity_decay(
        spec,
        &eb.x,
        &eb.y1,
        &eb.y2,
        &times,
        eb.n_pairs,
        eb.delta,
        &RngStream::new(cfg.seed, ERGODICITY),
    )?;
    let mut csv = String::from("t,mean_sq,ci_lo,ci_hi\n");
    for k in 0..times.len() {
        let (m, h) = (curve.mean_sq[k], curve.ci[k]);
        let _ = writeln!(csv, "{},{},{},{}", e16(times[k]), e16(m), e16(m - h), e16(m + h));
    }
    fs::write(out.join("decay_curve.csv"), csv)?;
    write_json(&out.join("ergodicity.json"), &curve)?;
    let mut o = Outcome::new(Command::Ergodicity);
    match (curve.fit, eb.acceptance) {
        (Some(f), Some(a)) => o.check(
            "decay",
            f.rate >= a.min_rate && f.r2 >= a.min_r2,
            format!("rate {:.4} (min {}), r2 {:.4} (min {})", f.rate, a.min_rate, f.r2, a.min_r2),
        ),
        (Some(f), None) => o.line(format!("rate {:.4}, r2 {:.4}", f.rate, f.r2)),
        (None, Some(_)) => o.check("decay", false, "curve is identically zero; no rate to fit".into()),
        (None, None) => o.line("curve is identically zero"),
    }
    Ok(o)
}

fn fit_line(o: &mut Outcome, report: &ErrorReport, window: Option<super::config::OrderWindow>) {
    for l in &report.levels {
        o.line(format!("eps {:.6e}: error {:.6e} [{:.6e}, {:.6e}]", l.epsilon, l.error, l.ci_lo, l.ci_hi));
    }
    if report.extrapolated_queries > 0 {
        o.line(format!("warning: {} table queries fell outside the grid", report.extrapolated_queries));
    }
    let desc = match &report.fit {
        FitOutcome::Fitted { slope, r2, .. } => format!("slope {slope:.4}, r2 {r2:.4}"),
        other => format!("{other:?}"),
    };
    match window {
        Some(w) => {
            let ok = matches!(report.fit, FitOutcome::Fitted { slope, r2, .. }
                if slope >= w.slope[0] && slope <= w.slope[1] && r2 >= w.min_r2);
            o.check("order", ok, format!("{desc}; window [{}, {}], min r2 {}", w.slope[0], w.slope[1], w.min_r2));
        }
        None => o.line(format!("fit: {desc}")),
    }
}

fn strong_order(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let sb = block(&cfg.strong, "strong")?;
    check_dim("strong.x0", &sb.x0, spec.n())?;
    check_dim("strong.y0", &sb.y0, spec.m())?;
    epsilon_levels(&sb.epsilon)?;
    let mut o = Outcome::new(Command::StrongOrder);
    let table = load_or_build_table(cfg, spec, out)?;
    let mut sampler = ModelSampler::new(spec, &table, &sb.x0, &sb.y0);
    sampler.scheme = sb.scheme;
    let sweep = Sweep { epsilons: sb.epsilon.clone(), horizon: sb.horizon, n_paths: sb.n_paths, delta: sb.delta };
    let report = strong_error(&sampler, &sweep, sb.p, &RngStream::new(cfg.seed, STRONG))?;
    report.write(out)?;
    fit_line(&mut o, &report, sb.acceptance);
    Ok(o)
}

fn weak_order(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let wb = block(&cfg.weak, "weak")?;
    check_dim("weak.x0", &wb.x0, spec.n())?;
    check_dim("weak.y0", &wb.y0, spec.m())?;
    epsilon_levels(&wb.epsilon)?;
    let phi = wb.test_function.build(spec.n())?;
    let n_paths = wb.n_paths.ok_or_else(|| CliError::Config("weak.n_paths could not be defaulted".into()))?;
    let mut o = Outcome::new(Command::WeakOrder);
    let table = load_or_build_table(cfg, spec, out)?;
    let mut sampler = ModelSampler::new(spec, &table, &wb.x0, &wb.y0);
    sampler.scheme = wb.scheme;
    let sweep = Sweep { epsilons: wb.epsilon.clone(), horizon: wb.horizon, n_paths, delta: wb.delta };
    let report = weak_error(&sampler, &phi, &sweep, wb.mode, &RngStream::new(cfg.seed, WEAK))?;
    report.write(out)?;
    fit_line(&mut o, &report, wb.acceptance);
    Ok(o)
}

fn fast_moments(cfg: &RunConfig, spec: &ModelSpec, out: &Path) -> Result<Outcome, CliError> {
    let fb = block(&cfg.fast_moments, "fast_moments")?;
    check_dim("fast_moments.x0", &fb.x0, spec.n())?;
    check_dim("fast_moments.y0", &fb.y0, spec.m())?;
    let sweep = Sweep { epsilons: fb.epsilon.clone(), horizon: fb.horizon, n_paths: fb.n_paths, delta: fb.delta };
    let t = fast_moment_sweep(spec, &fb.x0, &fb.y0, &sweep, fb.p, fb.scheme, &RngStream::new(cfg.seed, FAST))?;
    fs::write(out.join("fast_moments.csv"), t.to_csv())?;
    write_json(&out.join("fast_moments.json"), &t)?;
    let mut o = Outcome::new(Command::FastMoments);
    for r in &t.rows {
        o.line(format!(
            "eps {:.6e}: sup E|Y|^p {:.4e} ± {:.1e}, E sup|Y|^p {:.4e} ± {:.1e}",
            r.epsilon, r.marginal_sup, r.marginal_half_width, r.pathwise_sup, r.pathwise_half_width
        ));
    }
    let desc = format!("marginal ratio {:.3}, pathwise increasing {}", t.marginal_ratio, t.pathwise_increasing);
    match fb.acceptance {
        Some(a) => o.check(
            "fast moments",
            t.marginal_ratio < a.max_ratio && (!a.pathwise_increasing || t.pathwise_increasing),
            desc,
        ),
        None => o.line(desc),
    }
    Ok(o)
}
