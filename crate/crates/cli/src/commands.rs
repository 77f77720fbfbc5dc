use crate::output::{columns, parse_json, to_json, write, CliError, CliResult, Inputs, Output};
use crate::{Cli, Command, FluxArgs, FrameArg, IqDirection, MethodArg, OnOff};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use vzpulse_core::classifier::{classify, decompose, rwa_project, BasisDecomposition, RwaLevel};
use vzpulse_core::dilation::{composition_residual, derivative_consistency, solve_dilation, DilationProblem, SolveOptions};
use vzpulse_core::examples::{flux_example, spin_default_amplitude, spin_example, Example, SpinFamily};
use vzpulse_core::iq::{decompose_global, decompose_local, synthesize, synthesize_global, IqOptions};
use vzpulse_core::linalg::{CMat, C64};
use vzpulse_core::normalizer::{brute_force_normalizer_check, gate_zoo, is_in_normalizer, zoo_gate, DEFAULT_TOL};
use vzpulse_core::optimize::Method;
use vzpulse_core::platforms::flux::{new_frequencies, FluxDilation, FluxOptions, FluxPair};
use vzpulse_core::platforms::{compile, compile_flux, optimize_dilation, CompileOptions, DilationPolynomial, OptimizerSettings};
use vzpulse_core::propagator::{fit_power_law, verify_compilation, VerifyOptions, VerifyReport};
use vzpulse_core::{
    CompiledSchedule, CouplingOperator, DilationRecord, HardwareModel, Phase, PulseSchedule, Quadrature,
    SampledFunction, Unit, VirtualZProgram,
};

const TWO_PI: f64 = 2.0 * PI;

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let out = match &cli.command {
        Command::Classify { op, pauli } => classify_cmd(cli, &mut inputs, op.as_deref(), pauli.as_deref())?,
        Command::Dilate { problem } => dilate_cmd(cli, &mut inputs, problem)?,
        Command::Compile { input, flux } => compile_cmd(cli, &mut inputs, input, flux)?,
        Command::Iq {
            direction,
            input,
            carrier_ghz,
            carriers_ghz,
            mu,
            tukey_alpha,
        } => iq_cmd(&mut inputs, *direction, input, *carrier_ghz, carriers_ghz.as_deref(), *mu, *tukey_alpha)?,
        Command::Verify { inputs: paths, compiled, flux } => {
            verify_cmd(cli, &mut inputs, paths, compiled.as_deref(), flux)?
        }
        Command::Sweep {
            input,
            scales,
            points,
            min,
            max,
            flux,
        } => {
            let scales = match scales {
                Some(s) => s.clone(),
                None => log_space(*min, *max, *points)?,
            };
            sweep_cmd(cli, &mut inputs, input, &scales, flux)?
        }
        Command::OptimizeDilation { input, flux } => optimize_cmd(cli, &mut inputs, input, flux)?,
        Command::NormalizerCheck { gate, matrix, samples } => {
            normalizer_cmd(cli, &mut inputs, gate.as_deref(), matrix.as_deref(), *samples)?
        }
        Command::Figures { nodes, points } => {
            let dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("figures"));
            figures_cmd(cli, &dir, *nodes, *points)?;
            return Ok(());
        }
    };
    out.emit(cli.common.out.as_ref(), &inputs)
}

fn log_space(lo: f64, hi: f64, n: usize) -> CliResult<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(CliError::validation("sweep needs 0 < --min < --max and at least 2 points"));
    }
    Ok((0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect())
}

fn solve_options(cli: &Cli) -> SolveOptions {
    let mut s = SolveOptions::default();
    if let Some(c) = cli.common.dfdtau_cap {
        s.dfdtau_cap = c;
    }
    if let Some(t) = cli.common.tol {
        s.general_tol = t;
    }
    s
}

fn compile_options(cli: &Cli) -> CompileOptions {
    let mut o = CompileOptions::default();
    o.chain.solve = solve_options(cli);
    if let Some(m) = cli.common.branch_m {
        o.chain.branch = m;
    }
    o
}

fn optimizer_settings(args: &FluxArgs) -> OptimizerSettings {
    let mut s = OptimizerSettings::default();
    if let Some(m) = args.method {
        s.method = match m {
            MethodArg::Ltr => Method::LinearTrustRegion,
            MethodArg::Nm => Method::NelderMead,
        };
    }
    if let Some(m) = args.poly_order {
        s.m = m;
    }
    if let Some(n) = args.max_evals {
        s.minimize.max_evals = n;
    }
    s
}

fn flux_options(args: &FluxArgs) -> FluxOptions {
    FluxOptions {
        dilation: FluxDilation::Optimize(optimizer_settings(args)),
        ..FluxOptions::default()
    }
}

fn verify_options(cli: &Cli) -> VerifyOptions {
    let mut o = VerifyOptions::default();
    if let Some(t) = cli.common.tol {
        o.rwa_policy.tol = t;
        o.lab_policy.tol = t;
    }
    o.lab = cli.common.frame != Some(FrameArg::Rotating);
    o
}

fn check_model(cli: &Cli, model: &HardwareModel) -> CliResult<()> {
    match &cli.common.model {
        Some(m) if m != model.tag() => Err(CliError::validation(format!(
            "--model {m} but the input describes a {} model",
            model.tag()
        ))),
        _ => Ok(()),
    }
}

fn compile_any(cli: &Cli, e: &Example, flux: &FluxArgs) -> CliResult<CompiledSchedule> {
    check_model(cli, &e.model)?;
    Ok(match e.model {
        HardwareModel::FluxTunable { .. } => compile_flux(&e.model, &e.schedule, &e.program, &flux_options(flux))?,
        _ => compile(&e.model, &e.schedule, &e.program, &compile_options(cli))?,
    })
}

fn record_settings(out: &mut Output, cli: &Cli, e: Option<&Example>, flux: Option<&FluxArgs>) {
    out.setting("solve", solve_options(cli));
    out.setting("branch_m", cli.common.branch_m.unwrap_or(0));
    if let (Some(f), Some(e)) = (flux, e) {
        if matches!(e.model, HardwareModel::FluxTunable { .. }) {
            out.setting("flux", flux_options(f));
        }
    }
}

/// The headline number of a verify report for the chosen frame and RWA target.
fn headline(cli: &Cli, r: &VerifyReport) -> (String, f64) {
    let rotating = cli.common.frame == Some(FrameArg::Rotating);
    match (rotating, r.infidelity_lab, r.infidelity_lab_exact_target) {
        (false, Some(lab), Some(exact)) => {
            if cli.common.rwa == Some(OnOff::On) {
                ("lab vs RWA target".into(), lab)
            } else {
                ("lab vs carrier-resolved target".into(), exact)
            }
        }
        _ => ("rotating-frame oracle".into(), r.infidelity_rwa_oracle),
    }
}

// ---------------------------------------------------------------- classify

fn parse_pauli_terms(s: &str) -> CliResult<CouplingOperator> {
    let mut terms = vec![];
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (label, coeff) = part
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("Pauli term '{part}' is not LABEL=COEFF")))?;
        let label = label.trim().to_ascii_uppercase();
        if label.len() != 2 || !label.chars().all(|c| "IXYZ".contains(c)) {
            return Err(CliError::validation(format!("bad Pauli label '{label}'")));
        }
        let c: f64 = coeff
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("bad coefficient in '{part}'")))?;
        terms.push((label, c));
    }
    let refs: Vec<(&str, f64)> = terms.iter().map(|(l, c)| (l.as_str(), *c)).collect();
    Ok(CouplingOperator::from_paulis(&refs))
}

fn table(d: &BasisDecomposition) -> Vec<String> {
    let mut lines = vec![format!("{:<8}{:<8}{:>14}", "basis", "block", "coeff")];
    for e in &d.elements {
        lines.push(format!("{:<8}{:<8}{:>14.6e}", e.label, format!("{:?}", e.subspace), e.coeff));
    }
    lines
}

fn classify_cmd(cli: &Cli, inputs: &mut Inputs, op: Option<&Path>, pauli: Option<&str>) -> CliResult<Output> {
    let e = match (op, pauli) {
        (Some(p), _) => inputs.json::<CouplingOperator>(p)?,
        (None, Some(s)) => parse_pauli_terms(s)?,
        (None, None) => return Err(CliError::validation("give --op FILE or --pauli TERMS")),
    };
    e.validate()?;
    let d = decompose(&e)?;
    let mut out = Output::new("classify");
    out.note(format!("case: {}", classify(&d).label()));
    out.summary.extend(table(&d));
    let mut result = json!({ "case": classify(&d), "decomposition": d });
    if cli.common.rwa == Some(OnOff::On) {
        let p = rwa_project(&e, RwaLevel::DropCPlus)?;
        let dp = decompose(&p)?;
        out.note(format!("case after dropping C+: {}", classify(&dp).label()));
        result["rwa"] = json!({ "level": RwaLevel::DropCPlus, "operator": p, "case": classify(&dp) });
    }
    out.result = result;
    Ok(out)
}

// ---------------------------------------------------------------- dilate

fn dilation_columns(rec: &DilationRecord) -> String {
    columns(
        &["tau (ns)", "f (ns)", "df/dtau (1)"],
        rec.f
            .times()
            .zip(rec.f.samples().iter().zip(rec.dfdtau.samples()))
            .map(|(t, (f, d))| vec![t * 1e9, f * 1e9, *d]),
    )
}

fn dilate_cmd(cli: &Cli, inputs: &mut Inputs, path: &Path) -> CliResult<Output> {
    let mut p: DilationProblem = inputs.json(path)?;
    if let Some(m) = cli.common.branch_m {
        p.branch = m;
    }
    let opts = solve_options(cli);
    let rec = solve_dilation(&p, &opts)?;
    let comp = composition_residual(&rec, &p.phi_i, &p.phi_j, &p.big_v_i, &p.big_v_j);
    let deriv = derivative_consistency(&rec);
    let mut out = Output::new("dilate");
    out.setting("solve", &opts);
    out.setting("branch_m", p.branch);
    out.note(format!(
        "case {}: tau in [{:.6} ns, {:.6} ns], max df/dtau {:.6}, equation residual {comp:.2e} rad",
        rec.case.label(),
        rec.tau0() * 1e9,
        rec.tau1() * 1e9,
        rec.dfdtau.max_abs()
    ));
    out.file("dilation.dat", dilation_columns(&rec));
    out.result = json!({
        "record": rec,
        "equation_residual": comp,
        "derivative_consistency": deriv,
    });
    Ok(out)
}

// ---------------------------------------------------------------- compile

fn unit_column(u: Unit) -> (&'static str, f64) {
    match u {
        Unit::RadPerSec => ("MHz", 1.0 / (TWO_PI * 1e6)),
        Unit::Hz => ("Hz", 1.0),
        Unit::Dimensionless => ("1", 1.0),
        Unit::Seconds => ("ns", 1e9),
        Unit::FluxArb => ("arb", 1.0),
        Unit::Radians => ("rad", 1.0),
    }
}

/// Functions evaluated on the grid of the first one.
fn sampled_columns(named: &[(&str, &SampledFunction)]) -> String {
    let grid = named[0].1;
    let header: Vec<String> = std::iter::once("tau (ns)".to_string())
        .chain(named.iter().map(|(n, f)| format!("{n} ({})", unit_column(f.unit()).0)))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    columns(
        &header,
        grid.times().map(|t| {
            std::iter::once(t * 1e9)
                .chain(named.iter().map(|(_, f)| f.eval_or_zero(t) * unit_column(f.unit()).1))
                .collect()
        }),
    )
}

fn schedule_files(out: &mut Output, prefix: &str, s: &PulseSchedule) {
    for (li, l) in s.layers.iter().enumerate() {
        for p in &l.pairs {
            out.file(
                format!("{prefix}coupling_L{li}_{}-{}.dat", p.i, p.j),
                sampled_columns(&[("J", &p.coupling)]),
            );
        }
        for (k, d) in &l.drives {
            out.file(format!("{prefix}drive_L{li}_q{k}.dat"), sampled_columns(&[("I", &d.i), ("Q", &d.q)]));
        }
        for (k, w) in &l.freqs {
            out.file(format!("{prefix}freq_L{li}_q{k}.dat"), sampled_columns(&[("omega", w)]));
        }
        for d in &l.cr {
            out.file(
                format!("{prefix}cr_L{li}_{}-{}.dat", d.control, d.target),
                sampled_columns(&[("I", &d.i), ("Q", &d.q)]),
            );
        }
        for (k, r) in &l.rz {
            out.file(format!("{prefix}rz_L{li}_q{k}.dat"), sampled_columns(&[("rz", r)]));
        }
    }
}

fn compiled_files(out: &mut Output, c: &CompiledSchedule) {
    for (li, layer) in c.dilations.iter().enumerate() {
        for p in layer {
            let q: Vec<String> = p.qubits.iter().map(|k| k.to_string()).collect();
            out.file(format!("dilation_L{li}_{}.dat", q.join("-")), dilation_columns(&p.record));
        }
    }
    schedule_files(out, "compiled_", &c.schedule);
    if let Some(frames) = &c.frames {
        for (k, ph) in frames.iter().enumerate() {
            if let Phase::Sampled { f } = ph {
                out.file(format!("frame_q{k}.dat"), sampled_columns(&[("phi", f)]));
            }
        }
    }
}

fn program_files(out: &mut Output, p: &VirtualZProgram) {
    for k in 0..p.n_qubits() {
        let big = p.accumulated(k);
        out.file(format!("program_q{k}.dat"), sampled_columns(&[("v", &p.v[k]), ("V", &big)]));
    }
}

fn compile_cmd(cli: &Cli, inputs: &mut Inputs, input: &Path, flux: &FluxArgs) -> CliResult<Output> {
    let e = inputs.problem(input)?;
    let c = compile_any(cli, &e, flux)?;
    let mut out = Output::new("compile");
    record_settings(&mut out, cli, Some(&e), Some(flux));
    out.note(format!(
        "compiled {} model: span [{:.6} ns, {:.6} ns], residual Z {:?}",
        e.model.tag(),
        c.schedule.span().0 * 1e9,
        c.schedule.span().1 * 1e9,
        c.residual_z
    ));
    program_files(&mut out, &e.program);
    compiled_files(&mut out, &c);
    out.result = to_json(&c);
    Ok(out)
}

// ---------------------------------------------------------------- iq

fn iq_cmd(
    inputs: &mut Inputs,
    direction: IqDirection,
    input: &Path,
    carrier: Option<f64>,
    carriers: Option<&[f64]>,
    mu: f64,
    tukey_alpha: f64,
) -> CliResult<Output> {
    let opts = IqOptions {
        tukey_alpha,
        ..IqOptions::default()
    };
    let mut out = Output::new("iq");
    out.setting("iq", &opts);
    out.setting("mu", mu);
    let base = Phase::linear(1.0);
    match (direction, carrier, carriers) {
        (IqDirection::Encode, Some(f), _) => {
            let q: Quadrature = inputs.json(input)?;
            let drive = synthesize(&q.i, &q.q, &Phase::linear(TWO_PI * f * 1e9), mu)?;
            out.file("drive.dat", sampled_columns(&[("Omega", &drive)]));
            out.result = to_json(&drive);
        }
        (IqDirection::Encode, None, Some(fs)) => {
            let qs: Vec<Quadrature> = inputs.json(input)?;
            let chans: Vec<(SampledFunction, SampledFunction)> = qs.into_iter().map(|q| (q.i, q.q)).collect();
            let freqs: Vec<f64> = fs.iter().map(|f| TWO_PI * f * 1e9).collect();
            let drive = synthesize_global(&chans, &freqs, &base, mu)?;
            out.file("drive.dat", sampled_columns(&[("Omega", &drive)]));
            out.result = to_json(&drive);
        }
        (IqDirection::Decode, Some(f), _) => {
            let drive: SampledFunction = inputs.json(input)?;
            let (i, q) = decompose_local(&drive, &Phase::linear(TWO_PI * f * 1e9), mu, &opts)?;
            out.file("quadratures.dat", sampled_columns(&[("I", &i), ("Q", &q)]));
            out.result = to_json(&Quadrature { i, q });
        }
        (IqDirection::Decode, None, Some(fs)) => {
            let drive: SampledFunction = inputs.json(input)?;
            let freqs: Vec<f64> = fs.iter().map(|f| TWO_PI * f * 1e9).collect();
            let chans = decompose_global(&drive, &freqs, &base, mu, &opts)?;
            let mut res = vec![];
            for (j, (i, q)) in chans.into_iter().enumerate() {
                out.file(format!("quadratures_c{j}.dat"), sampled_columns(&[("I", &i), ("Q", &q)]));
                res.push(Quadrature { i, q });
            }
            out.result = to_json(&res);
        }
        _ => return Err(CliError::validation("give --carrier-ghz or --carriers-ghz")),
    }
    Ok(out)
}

// ---------------------------------------------------------------- verify / sweep

fn verify_cmd(
    cli: &Cli,
    inputs: &mut Inputs,
    paths: &[PathBuf],
    compiled: Option<&Path>,
    flux: &FluxArgs,
) -> CliResult<Output> {
    if compiled.is_some() && paths.len() != 1 {
        return Err(CliError::validation("--compiled needs exactly one input"));
    }
    let examples: Vec<Example> = paths.iter().map(|p| inputs.problem(p)).collect::<CliResult<_>>()?;
    let given: Option<CompiledSchedule> = match compiled {
        Some(p) => Some(inputs.json(p)?),
        None => None,
    };
    let opts = verify_options(cli);
    let reports: Vec<CliResult<VerifyReport>> = examples
        .par_iter()
        .map(|e| {
            let c = match &given {
                Some(c) => c.clone(),
                None => compile_any(cli, e, flux)?,
            };
            Ok(verify_compilation(&e.model, &e.program, &e.schedule, &c, &opts)?)
        })
        .collect();
    let mut out = Output::new("verify");
    record_settings(&mut out, cli, examples.first(), Some(flux));
    out.setting("verify", &opts);
    let mut results = vec![];
    for (p, r) in paths.iter().zip(reports) {
        let r = r?;
        let (what, v) = headline(cli, &r);
        out.note(format!("{}: infidelity {v:.3e} ({what})", p.display()));
        results.push(json!({ "input": p.display().to_string(), "report": r }));
    }
    out.result = if results.len() == 1 { results.remove(0) } else { Value::Array(results) };
    Ok(out)
}

fn scaled_program(p: &VirtualZProgram, s: f64) -> VirtualZProgram {
    VirtualZProgram {
        v: p.v.iter().map(|v| v.scaled(s)).collect(),
        v0: p.v0.clone(),
    }
}

fn sweep_table(cli: &Cli, cases: &[(f64, Example)], flux: &FluxArgs) -> CliResult<Vec<(f64, VerifyReport)>> {
    let opts = verify_options(cli);
    cases
        .par_iter()
        .map(|(a, e)| {
            let c = compile_any(cli, e, flux)?;
            Ok((*a, verify_compilation(&e.model, &e.program, &e.schedule, &c, &opts)?))
        })
        .collect()
}

fn sweep_cmd(cli: &Cli, inputs: &mut Inputs, input: &Path, scales: &[f64], flux: &FluxArgs) -> CliResult<Output> {
    let base = inputs.problem(input)?;
    let cases: Vec<(f64, Example)> = scales
        .iter()
        .map(|s| {
            (
                *s,
                Example {
                    program: scaled_program(&base.program, *s),
                    ..base.clone()
                },
            )
        })
        .collect();
    let rows = sweep_table(cli, &cases, flux)?;
    let mut out = Output::new("sweep");
    record_settings(&mut out, cli, Some(&base), Some(flux));
    out.setting("verify", verify_options(cli));
    out.setting("scales", scales);
    let picked: Vec<(f64, f64)> = rows.iter().map(|(a, r)| (*a, headline(cli, r).1)).collect();
    let metric = rows.first().map(|(_, r)| headline(cli, r).0).unwrap_or_default();
    let fit = fit_power_law(&picked).ok();
    match &fit {
        Some(f) => out.note(format!("slope {:.4} over {} points ({metric})", f.slope, f.points)),
        None => out.note(format!("no power-law fit: too few positive points ({metric})")),
    }
    out.file(
        "sweep.dat",
        columns(&["scale (1)", "infidelity (1)"], picked.iter().map(|(a, y)| vec![*a, *y])),
    );
    out.result = json!({
        "metric": metric,
        "table": picked,
        "fit": fit,
        "reports": rows.iter().map(|(_, r)| r).collect::<Vec<_>>(),
    });
    Ok(out)
}

// ---------------------------------------------------------------- optimize-dilation

fn flux_trajectories(e: &Example, poly: &DilationPolynomial, n: usize) -> CliResult<(DilationRecord, String)> {
    let pair = FluxPair::from_inputs(&e.model, &e.schedule, &e.program)?;
    let rec = poly.to_record(n, pair.case)?;
    let taus: Vec<f64> = rec.f.times().collect();
    let nf = new_frequencies(&pair, &taus, rec.f.samples(), rec.dfdtau.samples())?;
    let ghz = 1.0 / (TWO_PI * 1e9);
    let body = columns(
        &["tau (ns)", "omega_i' (GHz)", "omega_j' (GHz)", "omega_i (GHz)", "omega_j (GHz)", "J' (MHz)"],
        (0..taus.len()).map(|k| {
            let t = taus[k];
            vec![
                t * 1e9,
                nf.wi[k] * ghz,
                nf.wj[k] * ghz,
                pair.w[0].eval_clamped(t) * ghz,
                pair.w[1].eval_clamped(t) * ghz,
                nf.j[k] * 1e3 * ghz,
            ]
        }),
    );
    Ok((rec, body))
}

fn optimize_cmd(cli: &Cli, inputs: &mut Inputs, input: &Path, flux: &FluxArgs) -> CliResult<Output> {
    let e = inputs.problem(input)?;
    check_model(cli, &e.model)?;
    let settings = optimizer_settings(flux);
    let opt = optimize_dilation(&e.model, &e.schedule, &e.program, &settings)?;
    let (rec, freqs) = flux_trajectories(&e, &opt.poly, 2001)?;
    let mut out = Output::new("optimize-dilation");
    out.setting("optimizer", &settings);
    out.note(format!(
        "cost {:.6e} after {} evaluations ({:?}), min f - tau {:.3e} ns, min frequency margin {:.3e} MHz",
        opt.cost,
        opt.evals,
        opt.method,
        opt.min_f_margin * 1e9,
        opt.min_freq_margin / (TWO_PI * 1e6)
    ));
    out.file("dilation.dat", dilation_columns(&rec));
    out.file("frequencies.dat", freqs);
    out.result = to_json(&opt);
    Ok(out)
}

// ---------------------------------------------------------------- normalizer-check

#[derive(serde::Deserialize)]
struct MatrixJson {
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Vec<Vec<f64>>,
}

fn matrix_from_json(m: MatrixJson) -> CliResult<CMat> {
    let n = m.re.len();
    if n == 0 || m.re.iter().any(|r| r.len() != n) {
        return Err(CliError::validation("matrix 're' must be square and non-empty"));
    }
    if !m.im.is_empty() && (m.im.len() != n || m.im.iter().any(|r| r.len() != n)) {
        return Err(CliError::validation("matrix 'im' must match the shape of 're'"));
    }
    let mut out = CMat::zeros(n);
    for r in 0..n {
        for c in 0..n {
            let im = m.im.get(r).map(|row| row[c]).unwrap_or(0.0);
            out.set(r, c, C64::new(m.re[r][c], im));
        }
    }
    Ok(out)
}

fn normalizer_cmd(
    cli: &Cli,
    inputs: &mut Inputs,
    gate: Option<&str>,
    matrix: Option<&Path>,
    samples: usize,
) -> CliResult<Output> {
    let tol = cli.common.tol.unwrap_or(DEFAULT_TOL);
    let named: Vec<(String, CMat)> = match (gate, matrix) {
        (Some(g), _) if g.eq_ignore_ascii_case("all") => {
            gate_zoo().into_iter().map(|z| (z.name.to_string(), z.matrix)).collect()
        }
        (Some(g), _) => {
            let m = zoo_gate(g).ok_or_else(|| {
                let names: Vec<&str> = gate_zoo().iter().map(|z| z.name).collect();
                CliError::validation(format!("unknown gate '{g}'; known: {}", names.join(", ")))
            })?;
            vec![(g.to_string(), m)]
        }
        (None, Some(p)) => {
            let bytes = inputs.read(p)?;
            let m: MatrixJson = parse_json(&bytes, &p.display().to_string())?;
            vec![(p.display().to_string(), matrix_from_json(m)?)]
        }
        (None, None) => return Err(CliError::validation("give --gate NAME|all or --matrix FILE")),
    };
    let mut out = Output::new("normalizer-check");
    out.setting("tol", tol);
    out.setting("oracle_samples", samples);
    let mut rows = vec![];
    for (name, m) in &named {
        let v = is_in_normalizer(m, tol)?;
        let oracle = brute_force_normalizer_check(m, samples)?;
        out.note(format!(
            "{name}: {}{}",
            if v.member { "in the normalizer" } else { "not in the normalizer" },
            if oracle == v.member { "" } else { " (conjugation oracle disagrees)" }
        ));
        rows.push(json!({ "gate": name, "verdict": v, "oracle_member": oracle }));
    }
    out.result = if rows.len() == 1 { rows.remove(0) } else { Value::Array(rows) };
    Ok(out)
}

// ---------------------------------------------------------------- figures

fn write_problem(dir: &Path, e: &Example) -> CliResult<()> {
    let pretty = |v: Value| serde_json::to_string_pretty(&v).expect("json") + "\n";
    write(&dir.join("model.json"), &pretty(to_json(&e.model)))?;
    write(&dir.join("schedule.json"), &pretty(to_json(&e.schedule)))?;
    write(&dir.join("program.json"), &pretty(to_json(&e.program)))
}

fn emit_to(out: Output, dir: &Path) -> CliResult<()> {
    out.emit(Some(&dir.to_path_buf()), &Inputs::default())
}

fn figures_cmd(cli: &Cli, dir: &Path, nodes: usize, points: usize) -> CliResult<()> {
    let families = [SpinFamily::Gaussian, SpinFamily::Tanh];
    let no_flux = FluxArgs {
        method: None,
        poly_order: None,
        max_evals: None,
    };

    // spin: virtual Z pulse, dilation and distorted controls per family
    for fam in families {
        let e = spin_example(fam, spin_default_amplitude(fam), nodes)?;
        let sub = dir.join("fig2").join(fam.label());
        write_problem(&sub, &e)?;
        let c = compile_any(cli, &e, &no_flux)?;
        let mut out = Output::new("compile");
        record_settings(&mut out, cli, Some(&e), None);
        program_files(&mut out, &e.program);
        compiled_files(&mut out, &c);
        out.result = to_json(&c);
        emit_to(out, &sub)?;
    }

    // flux: optimised against identity dilation
    let e = flux_example(nodes)?;
    let sub = dir.join("fig4");
    write_problem(&sub, &e)?;
    let c = compile_any(cli, &e, &no_flux)?;
    let mut out = Output::new("compile");
    record_settings(&mut out, cli, Some(&e), Some(&no_flux));
    program_files(&mut out, &e.program);
    compiled_files(&mut out, &c);
    let (t0, t1) = e.schedule.span();
    let m = OptimizerSettings::default().m;
    let rec = &c.dilations[0][0].record;
    let (_, ident) = flux_trajectories(&e, &DilationPolynomial::identity(t0, t1 - t0, m), 2001)?;
    out.file("frequencies_identity.dat", ident);
    let ghz = 1.0 / (TWO_PI * 1e9);
    let l = &c.schedule.layers[0];
    let (wi, wj) = (&l.freqs[&0], &l.freqs[&1]);
    out.file(
        "frequencies_optimized.dat",
        columns(
            &["tau (ns)", "omega_i' (GHz)", "omega_j' (GHz)", "f (ns)"],
            wi.times().map(|t| vec![t * 1e9, wi.eval_or_zero(t) * ghz, wj.eval_or_zero(t) * ghz, rec.f.eval_clamped(t) * 1e9]),
        ),
    );
    out.result = to_json(&c);
    emit_to(out, &sub)?;

    // sweep: infidelity against the virtual Z amplitude
    let amps = log_space(0.1, 0.9, points)?;
    let mut fits = serde_json::Map::new();
    let mut out = Output::new("sweep");
    for fam in families {
        let cases: Vec<(f64, Example)> = amps
            .iter()
            .map(|a| spin_example(fam, *a, nodes).map(|e| (*a, e)))
            .collect::<Result<_, _>>()?;
        let rows = sweep_table(cli, &cases, &no_flux)?;
        let exact: Vec<(f64, f64)> = rows
            .iter()
            .map(|(a, r)| (*a, r.infidelity_lab_exact_target.unwrap_or(f64::NAN)))
            .collect();
        let lab: Vec<(f64, f64)> = rows.iter().map(|(a, r)| (*a, r.infidelity_lab.unwrap_or(f64::NAN))).collect();
        out.file(
            format!("{}.dat", fam.label()),
            columns(
                &["amplitude (detuning units)", "infidelity carrier-resolved target (1)", "infidelity RWA target (1)"],
                exact.iter().zip(&lab).map(|(e, l)| vec![e.0, e.1, l.1]),
            ),
        );
        fits.insert(
            fam.label().into(),
            json!({ "carrier_resolved": fit_power_law(&exact).ok(), "rwa_target": fit_power_law(&lab).ok() }),
        );
        if let Ok(f) = fit_power_law(&exact) {
            out.note(format!("{}: slope {:.4}", fam.label(), f.slope));
        }
    }
    out.setting("verify", verify_options(cli));
    out.setting("amplitudes", &amps);
    out.result = Value::Object(fits);
    emit_to(out, &dir.join("fig5"))?;
    println!("figure data written to {}", dir.display());
    Ok(())
}
