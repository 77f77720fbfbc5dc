//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p vzpulse-core --release --test acceptance`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;
use vzpulse_core::dilation::{composition_residual, derivative_consistency};
use vzpulse_core::examples::{
    flux_example, random_direct_xy, spin_default_amplitude, spin_example, three_qubit_example, Example, SpinFamily,
};
use vzpulse_core::iq::{central_l2, decompose_global, decompose_local, synthesize, IqOptions};
use vzpulse_core::linalg::z_rotation;
use vzpulse_core::normalizer::{brute_force_normalizer_check, gate_zoo, is_in_normalizer, zoo_gate, DEFAULT_TOL};
use vzpulse_core::platforms::flux::FEASIBILITY_RTOL;
use vzpulse_core::platforms::{change_frame, compile, CompileOptions};
use vzpulse_core::propagator::{
    compare, fit_power_law, infidelity, model_frames, verify_compilation, BuildMode, VerifyOptions, VerifyReport,
};
use vzpulse_core::{CaseTag, CompiledSchedule, Phase, SampledFunction, Unit, VirtualZProgram};

const SPIN_NODES: usize = 16001;
const XY_NODES: usize = 2001;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(e: &Example) -> Result<(CompiledSchedule, VerifyReport), String> {
    run_with(e, &VerifyOptions::default())
}

fn run_with(e: &Example, opts: &VerifyOptions) -> Result<(CompiledSchedule, VerifyReport), String> {
    let c = compile(&e.model, &e.schedule, &e.program, &CompileOptions::default()).map_err(|x| x.to_string())?;
    let r = verify_compilation(&e.model, &e.program, &e.schedule, &c, opts).map_err(|x| x.to_string())?;
    Ok((c, r))
}

fn rotating_only() -> VerifyOptions {
    VerifyOptions {
        lab: false,
        ..VerifyOptions::default()
    }
}

fn within_factor(x: f64, target: f64, k: f64) -> bool {
    x >= target / k && x <= target * k
}

/// Worst composition and derivative residuals over every piece of a generic compile.
fn dilation_residuals(e: &Example, c: &CompiledSchedule) -> (f64, f64) {
    let frames = model_frames(&e.model, &e.schedule).expect("frames");
    let (mut comp, mut deriv) = (0.0f64, 0.0f64);
    for (li, layer) in c.dilations.iter().enumerate() {
        for p in layer {
            deriv = deriv.max(derivative_consistency(&p.record));
            if p.qubits.len() != 2 {
                continue;
            }
            let (i, j) = (p.qubits[0], p.qubits[1]);
            let vi = e.program.accumulated(i).offset(c.layer_v0[li][i]);
            let vj = e.program.accumulated(j).offset(c.layer_v0[li][j]);
            comp = comp.max(composition_residual(&p.record, &frames[i], &frames[j], &vi, &vj));
        }
    }
    (comp, deriv)
}

#[derive(Default)]
struct Residuals {
    comp: f64,
    deriv: f64,
    pieces: usize,
    worst: String,
}

impl Residuals {
    fn add(&mut self, e: &Example, c: &CompiledSchedule) {
        let (a, b) = dilation_residuals(e, c);
        if b > self.deriv {
            self.worst = e.name.clone();
        }
        self.comp = self.comp.max(a);
        self.deriv = self.deriv.max(b);
        self.pieces += c.dilations.iter().map(|l| l.len()).sum::<usize>();
    }
}

fn criterion_1(res: &mut Residuals) -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for (fam, target) in [(SpinFamily::Gaussian, 4.7e-7), (SpinFamily::Tanh, 1.1e-5)] {
        let e = spin_example(fam, spin_default_amplitude(fam), SPIN_NODES).unwrap();
        match run(&e) {
            Ok((c, r)) => {
                res.add(&e, &c);
                let lab = r.infidelity_lab.unwrap_or(f64::NAN);
                let ok = within_factor(lab, target, 3.0);
                pass &= ok;
                parts.push(format!(
                    "{fam:?}: lab {lab:.3e} (target {target:.1e}), exact-target {:.3e}, oracle {:.1e}",
                    r.infidelity_lab_exact_target.unwrap_or(f64::NAN),
                    r.infidelity_rwa_oracle
                ));
            }
            Err(m) => {
                pass = false;
                parts.push(format!("{fam:?}: {m}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2() -> Outcome {
    let amps: Vec<f64> = (0..10).map(|k| 0.1 * 9f64.powf(k as f64 / 9.0)).collect();
    let mut pass = true;
    let mut parts = vec![];
    for (fam, want) in [(SpinFamily::Gaussian, 1.99), (SpinFamily::Tanh, 1.87)] {
        let rows: Vec<Result<(f64, f64, f64), String>> = std::thread::scope(|s| {
            let handles: Vec<_> = amps
                .iter()
                .map(|&a| {
                    s.spawn(move || {
                        let e = spin_example(fam, a, SPIN_NODES).map_err(|x| x.to_string())?;
                        let (_, r) = run(&e)?;
                        Ok((a, r.infidelity_lab_exact_target.unwrap(), r.infidelity_lab.unwrap()))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep thread")).collect()
        });
        let rows: Result<Vec<_>, _> = rows.into_iter().collect();
        match rows {
            Ok(rows) => {
                let exact: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
                let lab: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
                let se = fit_power_law(&exact).map(|f| f.slope).unwrap_or(f64::NAN);
                let sl = fit_power_law(&lab).map(|f| f.slope).unwrap_or(f64::NAN);
                let ok = (se - want).abs() <= 0.15;
                pass &= ok;
                parts.push(format!("{fam:?}: slope {se:.3} (target {want} +/- 0.15), lab-metric slope {sl:.3}"));
            }
            Err(m) => {
                pass = false;
                parts.push(format!("{fam:?}: {m}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_3(res: &mut Residuals) -> Outcome {
    let e = flux_example(8193).unwrap();
    let (c, r) = match run(&e) {
        Ok(x) => x,
        Err(m) => return outcome(false, m),
    };
    let rec = &c.dilations[0][0].record;
    // the flux dilation is a polynomial; its frames satisfy the phase equations by construction
    let d = derivative_consistency(rec);
    if d > res.deriv {
        res.deriv = d;
        res.worst = e.name.clone();
    }
    res.pieces += 1;
    let span = rec.f.t_end() - rec.f.t0();
    let f_margin = rec.f.times().zip(rec.f.samples()).map(|(t, f)| f - t).fold(f64::INFINITY, f64::min);
    let src = &e.schedule.layers[0];
    let out = &c.schedule.layers[0];
    let mut w_margin = f64::INFINITY;
    let mut w_scale: f64 = 0.0;
    for (k, w_new) in &out.freqs {
        let floor = src.freqs[k].eval(src.start).unwrap();
        w_scale = w_scale.max(src.freqs[k].max_abs());
        w_margin = w_margin.min(w_new.samples().iter().fold(f64::INFINITY, |m, w| m.min(w - floor)));
    }
    let feasible = f_margin >= -FEASIBILITY_RTOL * span && w_margin >= -FEASIBILITY_RTOL * w_scale;
    let lab = r.infidelity_lab.unwrap_or(f64::NAN);
    let ok_b = within_factor(lab, 3.3e-6, 3.0);
    outcome(
        feasible && ok_b,
        format!(
            "(a) min f-tau {:.3e} ns, min w'-w(0) {:.3e} MHz: {}; (b) lab {lab:.3e} (target 3.3e-6): {}; oracle {:.1e}",
            f_margin * 1e9,
            w_margin / (2.0 * PI * 1e6),
            if feasible { "ok" } else { "violated" },
            if ok_b { "ok" } else { "out of range" },
            r.infidelity_rwa_oracle
        ),
    )
}

fn criterion_4(res: &mut Residuals) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut failures = vec![];
    let mut count = 0;
    for tag in [CaseTag::ZOnly, CaseTag::ZCPlus, CaseTag::ZCMinus, CaseTag::ZQi, CaseTag::ZQj] {
        for k in 0..50 {
            let e = random_direct_xy(tag, &mut rng, XY_NODES).unwrap();
            count += 1;
            match run_with(&e, &rotating_only()) {
                Ok((c, r)) => {
                    res.add(&e, &c);
                    worst = worst.max(r.infidelity_rwa_oracle);
                    if !(r.infidelity_rwa_oracle < 1e-9) {
                        failures.push(format!("{}#{k} {:.2e}", tag.label(), r.infidelity_rwa_oracle));
                    }
                }
                Err(m) => failures.push(format!("{}#{k} {m}", tag.label())),
            }
        }
    }
    let mut detail = format!("{count} cases, worst {worst:.2e}");
    if !failures.is_empty() {
        detail += &format!("; failing: {}", failures.join(", "));
    }
    outcome(failures.is_empty(), detail)
}

fn criterion_5(res: &mut Residuals) -> Outcome {
    let e = three_qubit_example(XY_NODES).unwrap();
    match run_with(&e, &rotating_only()) {
        Ok((c, r)) => {
            res.add(&e, &c);
            let absorbed = c.layer_v0.iter().flatten().any(|v| *v != 0.0);
            let idle = c.idle.iter().any(|g| !g.is_empty());
            let ok = r.infidelity_rwa_oracle < 1e-9 && absorbed && idle;
            outcome(
                ok,
                format!(
                    "oracle {:.2e}, idle spans {}, layer offsets {:?}",
                    r.infidelity_rwa_oracle,
                    c.idle.iter().map(|g| g.len()).sum::<usize>(),
                    c.layer_v0
                        .iter()
                        .map(|l| l.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                ),
            )
        }
        Err(m) => outcome(false, m),
    }
}

fn criterion_6(res: &Residuals) -> Outcome {
    outcome(
        res.comp < 1e-8 && res.deriv < 1e-6,
        format!(
            "{} pieces, max equation residual {:.2e} rad, max df/dtau mismatch {:.2e} ({})",
            res.pieces, res.comp, res.deriv, res.worst
        ),
    )
}

fn criterion_7() -> Outcome {
    let w = 2.0 * PI * 1e9;
    let grid = |f: &dyn Fn(f64) -> f64| SampledFunction::from_fn(0.0, 400e-9, 40001, Unit::RadPerSec, f).unwrap();
    let central_max = |f: &SampledFunction, v: f64| {
        let n = f.len();
        (n / 10..n - n / 10).map(|k| (f.samples()[k] - v).abs()).fold(0.0, f64::max)
    };
    let opts = IqOptions::default();
    let phi = Phase::linear(w);

    let mu = 2.5;
    let om = grid(&|t| mu * (w * t).cos());
    let (i, q) = decompose_local(&om, &phi, mu, &opts).unwrap();
    let carrier = central_max(&i, 1.0).max(central_max(&q, 0.0));

    let g = |t: f64, c: f64, s: f64| (-0.5 * ((t - c) / s).powi(2)).exp();
    let om = grid(&|t| g(t, 200e-9, 50e-9) * (1.05 * w * t).cos() - 0.4 * g(t, 180e-9, 40e-9) * (0.97 * w * t).sin());
    let (i, q) = decompose_local(&om, &phi, 1.0, &opts).unwrap();
    let back = synthesize(&i, &q, &phi, 1.0).unwrap();
    let round_trip = central_l2(&back, &om, 0.8);

    let freqs = [2.0 * PI * 0.6e9, 2.0 * PI * 1.0e9, 2.0 * PI * 1.4e9];
    let amp = 0.7;
    let om = grid(&|t| amp * (freqs[1] * t).cos());
    let ch = decompose_global(&om, &freqs, &Phase::linear(1.0), 1.0, &opts).unwrap();
    let mut leak: f64 = 0.0;
    for j in [0, 2] {
        leak = leak.max(central_max(&ch[j].0, 0.0)).max(central_max(&ch[j].1, 0.0));
    }
    let leak = leak / amp;
    let own = central_max(&ch[1].0, amp) / amp;

    outcome(
        carrier < 1e-3 && round_trip < 1e-3 && leak < 1e-3 && own < 1e-3,
        format!("carrier I/Q error {carrier:.2e}, round trip {round_trip:.2e}, leakage {leak:.2e}, own tone {own:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let zoo = gate_zoo();
    let mut mismatched = vec![];
    for g in &zoo {
        let fast = is_in_normalizer(&g.matrix, DEFAULT_TOL).unwrap().member;
        let slow = brute_force_normalizer_check(&g.matrix, 64).unwrap();
        if fast != slow {
            mismatched.push(g.name);
        }
    }
    let member = |n: &str| is_in_normalizer(&zoo_gate(n).unwrap(), DEFAULT_TOL).unwrap().member;
    let accepted = ["SWAP", "ISWAP", "BSWAP", "CPHASE(0.7)"];
    let rejected = ["CNOT", "SQRT_SWAP", "SQRT_ISWAP"];
    let claims_ok = accepted.iter().all(|n| member(n)) && rejected.iter().all(|n| !member(n));
    outcome(
        zoo.len() >= 20 && mismatched.is_empty() && claims_ok,
        format!(
            "{} gates, oracle mismatches {:?}, accepted {:?}, rejected {:?}: {}",
            zoo.len(),
            mismatched,
            accepted,
            rejected,
            if claims_ok { "as claimed" } else { "claims violated" }
        ),
    )
}

fn zero_program(p: &VirtualZProgram) -> VirtualZProgram {
    VirtualZProgram {
        v: p.v.iter().map(|v| v.scaled(0.0)).collect(),
        v0: vec![0.0; p.v0.len()],
    }
}

fn criterion_9() -> Outcome {
    let mut notes = vec![];
    let mut pass = true;

    // identity
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cases = vec![
        spin_example(SpinFamily::Gaussian, 0.5, 1001).unwrap(),
        spin_example(SpinFamily::Tanh, 0.5, 1001).unwrap(),
        flux_example(1001).unwrap(),
        random_direct_xy(CaseTag::ZCMinus, &mut rng, 1001).unwrap(),
        random_direct_xy(CaseTag::ZQi, &mut rng, 1001).unwrap(),
    ];
    let mut identical = 0;
    for e in &cases {
        let z = zero_program(&e.program);
        match compile(&e.model, &e.schedule, &z, &CompileOptions::default()) {
            Ok(c) if c.schedule == e.schedule && c.residual_z.iter().all(|r| *r == 0.0) => identical += 1,
            Ok(_) => notes.push(format!("{} changed under a zero program", e.name)),
            Err(m) => notes.push(format!("{}: {m}", e.name)),
        }
    }
    pass &= identical == cases.len();
    notes.push(format!("zero program identical {identical}/{}", cases.len()));

    // frame invariance
    let mut worst_frame: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mhz = 2.0 * PI * 1e6;
    for tag in [CaseTag::ZCMinus, CaseTag::ZCPlus, CaseTag::ZQi, CaseTag::ZQj] {
        let e = random_direct_xy(tag, &mut rng, XY_NODES).unwrap();
        let old = e.model.frames().unwrap();
        let shifts = [(2.0 * mhz, 0.4), (-1.5 * mhz, -0.9)];
        let new: Vec<Phase> = old
            .iter()
            .zip(shifts)
            .map(|(p, (dr, d0))| Phase::Linear {
                rate: p.deriv_clamped(0.0) + dr,
                offset: p.eval_clamped(0.0) + d0,
            })
            .collect();
        let (m2, s2) = change_frame(&e.model, &e.schedule, &new).unwrap();
        let e2 = Example {
            name: e.name.clone(),
            model: m2,
            schedule: s2,
            program: e.program.clone(),
        };
        let pol = rotating_only().rwa_policy;
        let unitary = |x: &Example| -> Result<_, String> {
            let c = compile(&x.model, &x.schedule, &x.program, &CompileOptions::default()).map_err(|m| m.to_string())?;
            let (cmp, pt, pc) =
                compare(&x.model, &x.program, &x.schedule, &c, BuildMode::RotatingRwa, BuildMode::RotatingRwa, &pol, &pol)
                    .map_err(|m| m.to_string())?;
            Ok((cmp, pt.unitarity.max(pc.unitarity)))
        };
        match (unitary(&e), unitary(&e2)) {
            (Ok((a, ua)), Ok((b, ub))) => {
                let (t0, t1) = e.schedule.span();
                let d = |t: f64| -> Vec<f64> { new.iter().zip(&old).map(|(n, o)| n.eval_clamped(t) - o.eval_clamped(t)).collect() };
                let neg = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| -x).collect() };
                let aligned = &(&z_rotation(&neg(d(t1))) * &a.compiled) * &z_rotation(&d(t0));
                let gap = infidelity(&aligned, &b.compiled).unwrap();
                worst_frame = worst_frame.max(gap);
                if ua.max(ub) > 1e-10 {
                    pass = false;
                    notes.push(format!("{}: unitarity defect {:.1e}", tag.label(), ua.max(ub)));
                }
            }
            (x, y) => {
                pass = false;
                notes.push(format!("{}: {:?} {:?}", tag.label(), x.err(), y.err()));
            }
        }
    }
    pass &= worst_frame < 1e-9;
    notes.push(format!("frame invariance worst {worst_frame:.2e}"));

    // propagator unitarity on the larger examples
    let mut worst_u: f64 = 0.0;
    for e in [spin_example(SpinFamily::Tanh, 0.5, 2001).unwrap(), three_qubit_example(XY_NODES).unwrap()] {
        let c = compile(&e.model, &e.schedule, &e.program, &CompileOptions::default()).unwrap();
        let o = VerifyOptions::default();
        for mode in [BuildMode::RotatingRwa, BuildMode::RotatingExact] {
            if mode == BuildMode::RotatingExact && e.name.starts_with("three") {
                continue;
            }
            let (_, pt, pc) = compare(&e.model, &e.program, &e.schedule, &c, BuildMode::RotatingRwa, mode, &o.rwa_policy, &o.lab_policy).unwrap();
            worst_u = worst_u.max(pt.unitarity).max(pc.unitarity);
        }
    }
    pass &= worst_u < 1e-10;
    notes.push(format!("unitarity defect worst {worst_u:.1e}"));
    outcome(pass, notes.join("; "))
}

fn main() {
    // libtest flags such as --nocapture or a name filter are ignored; the criteria always run.
    let mut res = Residuals::default();
    let report = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {n}: {} ({:.1} s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    };
    report(1, &mut || criterion_1(&mut res));
    report(2, &mut criterion_2);
    report(3, &mut || criterion_3(&mut res));
    report(4, &mut || criterion_4(&mut res));
    report(5, &mut || criterion_5(&mut res));
    report(6, &mut || criterion_6(&res));
    report(7, &mut criterion_7);
    report(8, &mut criterion_8);
    report(9, &mut criterion_9);
}
