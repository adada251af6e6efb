use std::fs;

use anyhow::{bail, Context, Result};
use inflate_core::error::InflateError;
use inflate_core::lattice::Frequency;
use inflate_core::norms::{f_s, hs_norm, lowfreq_l2, modulation_norm, NormSpec};
use inflate_core::picard::{sequence_a, verify_sequence_bound};
use inflate_core::resonance::{enumerate_resonant, verify_characterization, ResonantTuple};
use inflate_core::scenarios::{build_phi, run_inflation, InflationReport, Overrides, Scenario, ScheduleRegistry};
use inflate_core::solver::{compare_series, SolverConfig, MAX_RETAINED};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_dyadic, pick, Common, Emit, FileConfig, ScenarioArgs};
use crate::output::{fit_power_law, loglog_svg, write_jsonl, write_norms_csv};
use crate::{Cli, Command, ScenarioFlags};

const DEFAULT_K: usize = 7;

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Command::Cases = cli.command {
        let reg = ScheduleRegistry::builtin();
        for id in reg.ids() {
            let case = reg.get(id)?;
            println!("{id:<14} s = {:<9.4} {}", case.default_s(), case.description());
        }
        return Ok(());
    }
    let common = Common::resolve(cli.out, cli.emit, &file)?;
    match cli.command {
        Command::Run(f) => run(&scenario_args(f, &file)?, &common),
        Command::Sweep(f) => sweep(&scenario_args(f, &file)?, &common),
        Command::Norms(f) => norms(&scenario_args(f, &file)?, &common),
        Command::Compare { scenario, cutoff, steps } => compare(
            &scenario_args(scenario, &file)?,
            pick(cutoff, file.cutoff),
            pick(steps, file.steps).unwrap_or(400),
            &common,
        ),
        Command::Resonance { d, nu, range, k } => resonance(
            pick(d, file.d).unwrap_or(1),
            pick(nu, file.nu).unwrap_or(2),
            pick(range, file.range).unwrap_or(4),
            k,
            &common,
        ),
        Command::Sequence { p, kmax, c } => sequence(
            pick(p, file.p).unwrap_or(3),
            pick(kmax, file.kmax).unwrap_or(20),
            pick(c, file.c),
            &common,
        ),
        Command::Cases => unreachable!(),
    }
}

fn scenario_args(f: ScenarioFlags, file: &FileConfig) -> Result<ScenarioArgs> {
    let case = pick(f.case, file.case.clone())
        .context("no case given (use --case or the `case` key of the config file)")?;
    let ns = if f.n.is_empty() { file.n.clone().unwrap_or_default() } else { f.n };
    check_dyadic(&ns)?;
    Ok(ScenarioArgs {
        case,
        ns,
        s: pick(f.s, file.s),
        k: pick(f.k, file.k).unwrap_or(DEFAULT_K),
        overrides: Overrides {
            r: pick(f.r, file.r),
            t: pick(f.t, file.t),
            rho: pick(f.rho, file.rho),
            a: pick(f.a, file.a),
        },
    })
}

fn schedule(args: &ScenarioArgs, n: u64) -> Result<Scenario> {
    let sc = ScheduleRegistry::builtin().schedule(&args.case, n, args.s, &args.overrides)?;
    for w in &sc.warnings {
        eprintln!("warning: {} N={n}: {w}", sc.case_id);
    }
    Ok(sc)
}

fn summary(rep: &InflationReport) -> String {
    let sc = &rep.scenario;
    let mut line = format!(
        "{} N={} s={:.4} T={:.3e} rho={:.4} rho_hat={:.4} {}: phi={:.4e} u={:.4e} ratio={:.4} valid={}",
        sc.case_id, sc.n, sc.s, sc.t, sc.rho, rep.rho_hat, rep.norm_label, rep.norm_phi, rep.norm_u, rep.ratio, rep.valid
    );
    if let Some(d) = rep.dominance {
        line.push_str(&format!(" dominance={d}"));
    }
    if let Some(e) = rep.discretization_error {
        line.push_str(&format!(" discretization={e:.2e}"));
    }
    line
}

fn ratio_plot(common: &Common, name: &str, case: &str, points: &[(f64, f64)]) -> Result<()> {
    if common.wants(Emit::Svg) {
        let svg = loglog_svg(&format!("{case}: norm ratio against N"), "N", "ratio", points);
        fs::write(common.path(name), svg)?;
    }
    Ok(())
}

fn run(args: &ScenarioArgs, common: &Common) -> Result<()> {
    let mut reports = Vec::new();
    for &n in &args.ns {
        let sc = schedule(args, n)?;
        let rep = run_inflation(&sc, args.k).with_context(|| format!("{} at N = {n}", args.case))?;
        println!("{}", summary(&rep));
        reports.push(rep);
    }
    if common.wants(Emit::Jsonl) {
        write_jsonl(&common.path("report.jsonl"), &reports)?;
    }
    if common.wants(Emit::Csv) {
        write_norms_csv(&common.path("norms.csv"), &reports)?;
    }
    let points: Vec<(f64, f64)> = reports.iter().map(|r| (r.scenario.n as f64, r.ratio)).collect();
    ratio_plot(common, "ratio.svg", &args.case, &points)
}

fn norm_prefix(target: &NormSpec) -> &'static str {
    match target {
        NormSpec::Hs { .. } => "hs",
        NormSpec::DBracket { .. } | NormSpec::Ds { .. } => "dnorm",
        NormSpec::LowFreqL2 { .. } => "lowfreq",
        NormSpec::ModA { .. } | NormSpec::ModRhoA { .. } | NormSpec::AnisoMod { .. } => "mod",
    }
}

fn sweep(args: &ScenarioArgs, common: &Common) -> Result<()> {
    let scenarios: Vec<Scenario> = args.ns.iter().map(|&n| schedule(args, n)).collect::<Result<_>>()?;
    let results: Vec<std::result::Result<InflationReport, InflateError>> =
        scenarios.par_iter().map(|sc| run_inflation(sc, args.k)).collect();
    let points: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| (r.scenario.n as f64, r.ratio))
        .collect();
    let fit = fit_power_law(&points);
    let prefix = norm_prefix(&scenarios[0].target);
    for (sc, res) in scenarios.iter().zip(&results) {
        match res {
            Ok(rep) => println!("{}", summary(rep)),
            Err(e) => println!("{} N={}: failed: {e}", sc.case_id, sc.n),
        }
    }
    match &fit {
        Some(f) => println!("fit: ratio ~ N^{:.4} (R^2 = {:.4})", f.exponent, f.r_squared),
        None => println!("fit: fewer than two successful runs, no exponent"),
    }
    if common.wants(Emit::Csv) {
        let mut w = csv::Writer::from_path(common.path("sweep.csv"))?;
        let phi_col = format!("{prefix}_phi");
        let u_col = format!("{prefix}_u");
        w.write_record([
            "case_id", "N", "s", "r", "A", "T", "rho", "rho_hat", "norm", &phi_col, &u_col, "ratio", "valid",
            "error", "exponent", "r_squared",
        ])?;
        let (exp, r2) = fit
            .as_ref()
            .map_or((String::new(), String::new()), |f| (f.exponent.to_string(), f.r_squared.to_string()));
        for (sc, res) in scenarios.iter().zip(&results) {
            let mut row = vec![
                sc.case_id.clone(),
                sc.n.to_string(),
                sc.s.to_string(),
                sc.r.to_string(),
                sc.a.to_string(),
                sc.t.to_string(),
                sc.rho.to_string(),
            ];
            match res {
                Ok(rep) => row.extend([
                    rep.rho_hat.to_string(),
                    rep.norm_label.clone(),
                    rep.norm_phi.to_string(),
                    rep.norm_u.to_string(),
                    rep.ratio.to_string(),
                    rep.valid.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 5));
                    row.extend(["false".to_string(), e.to_string()]);
                }
            }
            row.extend([exp.clone(), r2.clone()]);
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let reports: Vec<&InflationReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    if common.wants(Emit::Jsonl) {
        write_jsonl(&common.path("report.jsonl"), &reports)?;
    }
    ratio_plot(common, "sweep.svg", &args.case, &points)?;
    if reports.is_empty() {
        if let Some(Err(e)) = results.first() {
            return Err(e.clone().into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct NormRecord<'a> {
    case_id: &'a str,
    #[serde(rename = "N")]
    n: u64,
    norm: String,
    value: f64,
}

fn norms(args: &ScenarioArgs, common: &Common) -> Result<()> {
    let mut records = Vec::new();
    for &n in &args.ns {
        let sc = schedule(args, n)?;
        let phi = build_phi(&sc)?.at(0.0, false);
        let mut push = |norm: String, value: f64| {
            println!("{} N={n} {norm} = {value:.6e}", sc.case_id);
            records.push((sc.case_id.clone(), n, norm, value));
        };
        push(format!("H^{}", sc.s), hs_norm(&phi, sc.s));
        push(format!("M_{}", sc.a), modulation_norm(&phi, sc.a));
        push("M_1".into(), modulation_norm(&phi, 1.0));
        push("L2".into(), phi.l2_norm());
        push("L2(|xi|<=1)".into(), lowfreq_l2(&phi, 1.0));
        if !matches!(sc.target, NormSpec::Hs { .. }) {
            push(sc.target.label(), sc.target.evaluate(&phi)?);
        }
        if sc.s < 0.0 {
            push(format!("f_s(A={})", sc.a), f_s(sc.a, sc.s, sc.domain.d)?);
        }
        push("rho".into(), sc.rho);
    }
    if common.wants(Emit::Csv) {
        let mut w = csv::Writer::from_path(common.path("phi_norms.csv"))?;
        for (case_id, n, norm, value) in &records {
            w.serialize(NormRecord {
                case_id,
                n: *n,
                norm: norm.clone(),
                value: *value,
            })?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow<'a> {
    case_id: &'a str,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "K")]
    k: usize,
    cutoff: usize,
    dt: f64,
    steps: usize,
    l2_rel_err: f64,
    hs_rel_err: f64,
    dt_order_estimate: f64,
    rho_hat: f64,
}

/// Smallest cutoff holding the order-`k` support bound `k (max|Σ| + A)`.
fn default_cutoff(sc: &Scenario, k: usize) -> usize {
    let reach = sc
        .sigma
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    (k as f64 * (reach + sc.a)).ceil() as usize
}

fn compare(args: &ScenarioArgs, cutoff: Option<usize>, steps: usize, common: &Common) -> Result<()> {
    let mut rows = Vec::new();
    let mut scenarios = Vec::new();
    for &n in &args.ns {
        scenarios.push(schedule(args, n)?);
    }
    for sc in &scenarios {
        let cutoff = cutoff.unwrap_or_else(|| default_cutoff(sc, args.k));
        let side = (2 * cutoff + 1) as f64;
        if side.powi(sc.domain.d as i32) > MAX_RETAINED as f64 {
            bail!("cutoff {cutoff} retains more than 2^24 modes; pass a smaller --cutoff or N");
        }
        let cfg = SolverConfig::for_horizon(cutoff, sc.t, steps);
        let cmp = compare_series(sc, args.k, &cfg).with_context(|| format!("{} at N = {}", sc.case_id, sc.n))?;
        println!(
            "{} N={} K={} cutoff={cutoff} dt={:.3e}: l2 err = {:.3e}, H^s err = {:.3e}, dt order = {:.3}, rho_hat = {:.4}",
            sc.case_id, sc.n, args.k, cfg.dt, cmp.l2_rel_err, cmp.hs_rel_err, cmp.dt_order_estimate, cmp.rho_hat
        );
        rows.push(CompareRow {
            case_id: &sc.case_id,
            n: sc.n,
            k: args.k,
            cutoff,
            dt: cfg.dt,
            steps,
            l2_rel_err: cmp.l2_rel_err,
            hs_rel_err: cmp.hs_rel_err,
            dt_order_estimate: cmp.dt_order_estimate,
            rho_hat: cmp.rho_hat,
        });
    }
    if common.wants(Emit::Csv) {
        let mut w = csv::Writer::from_path(common.path("compare.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn coords(f: &Frequency, d: usize) -> String {
    f.to_vec(d).iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

fn resonance(d: usize, nu: usize, range: i64, k: Vec<i64>, common: &Common) -> Result<()> {
    let output = if k.is_empty() { vec![0; d] } else { k };
    if output.len() != d {
        bail!("output frequency has {} coordinates, expected d = {d}", output.len());
    }
    let out = Frequency::new(&output);
    let brute = enumerate_resonant(d, nu, out, range)?;
    let mut rows: Vec<(&ResonantTuple, &str)> = brute.iter().map(|t| (t, "brute")).collect();
    let characterized = d == 1 && nu == 2 && output == [0];
    let report = if characterized { Some(verify_characterization(range)?) } else { None };
    let param: Vec<ResonantTuple> = match &report {
        Some(r) => brute
            .iter()
            .filter(|t| !r.only_brute.contains(t))
            .chain(r.only_param.iter())
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    rows.extend(param.iter().map(|t| (t, "param")));
    println!("{} resonant tuples with output {:?} in [-{range}, {range}]^{d}", brute.len(), output);
    match &report {
        Some(r) => println!(
            "characterization K={}: brute={} param={} equal={}",
            r.range, r.brute_count, r.param_count, r.equal
        ),
        None => println!("no parametrization for (d, nu, k) = ({d}, {nu}, {output:?}); brute force only"),
    }
    if common.wants(Emit::Csv) {
        let mut w = csv::Writer::from_path(common.path("resonance.csv"))?;
        let slots = 2 * nu + 1;
        let mut header: Vec<String> = (1..=slots).map(|m| format!("k{m}")).collect();
        header.extend(["k", "phase", "source"].map(String::from));
        w.write_record(&header)?;
        for (t, source) in rows {
            let mut rec: Vec<String> = t.freqs.iter().map(|f| coords(f, d)).collect();
            rec.extend([coords(&t.output, d), t.phase.to_string(), source.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn sequence(p: usize, kmax: usize, c: Option<f64>, common: &Common) -> Result<()> {
    use num_traits::ToPrimitive;
    let a = sequence_a(p, kmax)?;
    let floats: Vec<f64> = a.iter().map(|x| x.to_f64().unwrap_or(f64::INFINITY)).collect();
    for (i, (exact, f)) in a.iter().zip(&floats).enumerate() {
        println!("a_{} = {exact} ({f:.6e})", i + 1);
    }
    if let Some(c) = c {
        let ok = verify_sequence_bound(&floats, p, c)?;
        println!("geometric bound with C = {c}: {}", if ok { "holds" } else { "fails" });
    }
    if common.wants(Emit::Csv) {
        let mut w = csv::Writer::from_path(common.path("sequence.csv"))?;
        w.write_record(["k", "a_k", "a_k_float"])?;
        for (i, (exact, f)) in a.iter().zip(&floats).enumerate() {
            w.write_record([(i + 1).to_string(), exact.to_string(), f.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}
