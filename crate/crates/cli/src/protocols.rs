//! Builds core objects from a validated scenario and runs each protocol.

use darkqubit_core::atomic::{DecayChannel, LevelScheme, Manifold, Polarization};
use darkqubit_core::dynamics::{
    evolve_lindblad, evolve_noisy, evolve_unitary, fit_decay, DecayModel, NoiseProcess, NoisyOptions, RkOptions,
    SimulationTrace,
};
use darkqubit_core::errors::{total_budget, BudgetInputs, ErrorBudget};
use darkqubit_core::gates::{microwave_field, microwave_sigma_y, raman_sigma_x};
use darkqubit_core::hamiltonian::{
    compact_construction_between, custom_construction, hyperfine_construction, ideal_construction_between,
    CompactOptions, Construction, DriveField, FrameSpec,
};
use darkqubit_core::linalg::{basis_vector, linspace, re, CVec};
use darkqubit_core::sensing::{
    coherence_comparison, frequency_window, one_over_e_time, run_ac_sensing, run_hyperfine_sensing, window_check,
    PhasePolicy, SensingProtocol, SensingScheme, WindowOptions,
};
use darkqubit_core::subspace::amplitudes;
use darkqubit_core::Error;
use serde_json::{json, Value};

use crate::scenario::{
    ConstructionKind, Initial, Method, NoiseKindCfg, NoiseSpec, PhaseMode, Pol, Preset, Protocol, Scenario, SweepParam,
};

/// Noise steps beyond this are refused rather than left running for days.
const MAX_NOISE_STEPS: f64 = 5e7;
/// Same for the phase accumulated by the deterministic integrators.
const MAX_PHASE: f64 = 1e9;

#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "invalid input: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidQuantumNumber(_)
            | Error::UnknownManifold(_)
            | Error::SelectionRule(_)
            | Error::InvalidParameter { .. } => RunError::Validation(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, RunError>;

#[derive(Clone, Debug)]
pub struct Column {
    pub name: String,
    pub label: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, label: &str, unit: &str) -> Self {
        Column { name: name.into(), label: label.into(), unit: unit.into() }
    }
}

/// Plot data: the first column is the x axis.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub description: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

pub struct Outcome {
    pub result: Value,
    pub tables: Vec<Table>,
}

/// Replaces infinities, which JSON cannot hold, by "unbounded".
fn num(x: f64) -> Value {
    if x.is_infinite() {
        json!("unbounded")
    } else {
        json!(x)
    }
}

// ---------------------------------------------------------------- builders

pub fn build_scheme(sc: &Scenario) -> Res<LevelScheme> {
    let s = &sc.scheme;
    let gap = s.optical_gap.unwrap_or(0.0);
    Ok(match s.preset {
        Preset::Ca40 => LevelScheme::ca40_like(gap, s.gamma),
        Preset::D32P12 => LevelScheme::d32_p12(gap, s.gamma),
        Preset::D52P32 => LevelScheme::d52_p32(gap, s.gamma),
        Preset::HyperfineF1F2 => LevelScheme::hyperfine_f1_f2(s.hf_splitting.unwrap_or(0.0), s.g.unwrap_or(0.0)),
        Preset::HyperfineF0F1 => LevelScheme::hyperfine_f0_f1(s.hf_splitting.unwrap_or(0.0), s.g.unwrap_or(0.0)),
        Preset::Custom => LevelScheme::new(
            s.manifolds.iter().map(|m| Manifold::new(&m.name, m.j, m.l, m.g, m.offset)).collect(),
            s.decays
                .iter()
                .map(|d| DecayChannel { upper: d.upper.clone(), lower: d.lower.clone(), rate: d.rate })
                .collect(),
        )?,
    })
}

pub fn build_construction(sc: &Scenario) -> Res<Construction> {
    let scheme = build_scheme(sc)?;
    let k = &sc.construction;
    let mut con = match k.kind {
        ConstructionKind::Ideal => ideal_construction_between(&scheme, &k.lower, &k.upper, k.field, k.omega)?,
        ConstructionKind::Compact => compact_construction_between(
            &scheme,
            &k.lower,
            &k.upper,
            k.field,
            k.omega,
            CompactOptions {
                amp_error_plus: k.amp_error_plus,
                amp_error_minus: k.amp_error_minus,
                pol_leak: k.pol_leak,
            },
        )?,
        ConstructionKind::Hyperfine => hyperfine_construction(&scheme, k.field, k.omega)?,
        ConstructionKind::Custom => {
            let drives = k
                .drives
                .iter()
                .map(|d| {
                    let pol = match d.polarization {
                        Pol::SigmaPlus => Polarization::SigmaPlus,
                        Pol::SigmaMinus => Polarization::SigmaMinus,
                        Pol::Pi => Polarization::Pi,
                    };
                    DriveField::transition(&d.lower, &d.upper, pol, d.frequency, d.rabi).with_phase(d.phase)
                })
                .collect();
            let frame = FrameSpec::new(scheme.zeeman_diagonal(k.field), "bare energies");
            custom_construction(&scheme, k.field, drives, frame, &k.lower, k.rwa_cutoff)?
        }
    };
    if let Some(c) = k.rwa_cutoff {
        con.rwa_cutoff = c;
    }
    Ok(con)
}

fn noise_process(n: &NoiseSpec, seed: u64) -> NoiseProcess {
    match n.kind {
        NoiseKindCfg::OrnsteinUhlenbeck => NoiseProcess::ornstein_uhlenbeck(n.sigma, n.tau_c.unwrap_or(0.0), seed),
        NoiseKindCfg::QuasiStatic => NoiseProcess::quasi_static(n.sigma, seed),
    }
}

fn frequency_scale(con: &Construction) -> f64 {
    let z = con.scheme.manifolds().iter().map(|m| (m.g * con.b).abs()).fold(0.0, f64::max);
    con.omega.max(z)
}

fn check_phase(what: &str, duration: f64, scale: f64) -> Res<()> {
    if duration * scale > MAX_PHASE {
        return Err(RunError::Numerical(format!(
            "{what}: duration x frequency scale = {:.2e} rad exceeds {MAX_PHASE:e}; use scaled parameters",
            duration * scale
        )));
    }
    Ok(())
}

/// Quasi-static noise is propagated exactly per draw; only an OU path is
/// stepped.
fn check_noise_steps(what: &str, noise: &NoiseProcess, duration: f64, scale: f64) -> Res<()> {
    let Some(tau) = noise.tau_c() else {
        return Ok(());
    };
    let dt = tau.min(1.0 / scale.max(noise.sigma)) / 10.0;
    let steps = duration / dt;
    if steps > MAX_NOISE_STEPS {
        return Err(RunError::Numerical(format!(
            "{what}: {steps:.2e} noise steps per trajectory exceed {MAX_NOISE_STEPS:e}; use scaled parameters"
        )));
    }
    Ok(())
}

/// The reference dark states of the D3/2 <-> P1/2 scheme.
fn reference_dark_states(con: &Construction) -> Option<Vec<CVec>> {
    if con.lower != "D3/2" || con.upper.as_deref() != Some("P1/2") {
        return None;
    }
    let s = &con.scheme;
    let n = s.dim();
    let d = |m: f64| s.idx("D3/2", m).ok().map(|i| basis_vector(n, i));
    let h = 3f64.sqrt() / 2.0;
    Some(vec![d(-0.5)? * re(h) - d(1.5)? * re(0.5), d(0.5)? * re(h) - d(-1.5)? * re(0.5)])
}

fn labeled(con: &Construction, v: &CVec) -> Value {
    let amps = amplitudes(v);
    Value::Array(
        amps.iter()
            .enumerate()
            .filter(|(_, a)| a[0].hypot(a[1]) > 1e-12)
            .map(|(i, a)| json!({"state": con.scheme.label(i), "re": a[0], "im": a[1]}))
            .collect(),
    )
}

// ---------------------------------------------------------------- protocols

pub fn run(protocol: Protocol, sc: &Scenario, seed: u64) -> Res<Outcome> {
    let con = build_construction(sc)?;
    match protocol {
        Protocol::Analyze => analyze(&con),
        Protocol::Evolve => evolve(&con, sc, seed),
        Protocol::ErrorBudget => error_budget(sc),
        Protocol::Gates => gates(&con, sc),
        Protocol::Sense => sense(&con, sc, seed),
        Protocol::Compare => compare(&con, sc, seed),
    }
}

fn analyze(con: &Construction) -> Res<Outcome> {
    let rep = con.protected_subspace()?;
    let expected_gap = match (con.kind, con.lower.as_str(), con.upper.as_deref()) {
        (darkqubit_core::hamiltonian::ConstructionKind::Ideal, _, _) => Some(con.omega),
        (darkqubit_core::hamiltonian::ConstructionKind::Compact, "D3/2", Some("P1/2")) => {
            let delta = con.b / 15.0;
            Some((con.omega * con.omega + delta * delta / 4.0).sqrt() - delta / 2.0)
        }
        _ => None,
    };
    let overlap = reference_dark_states(con).map(|r| {
        let mut s = 0.0;
        for a in &r {
            for b in &rep.dark_states {
                s += (a.adjoint() * b)[(0, 0)].norm_sqr();
            }
        }
        s / 2.0
    });
    let result = json!({
        "construction": format!("{:?}", con.kind).to_lowercase(),
        "omega": con.omega,
        "field": con.b,
        "protected": rep.protected,
        "gap": rep.gap,
        "gap_over_omega": if con.omega > 0.0 { json!(rep.gap / con.omega) } else { Value::Null },
        "expected_gap": expected_gap,
        "dark_eigenvalue": rep.dark_eigenvalue,
        "jz_residual": rep.jz_residual,
        "degeneracy_residual": rep.degeneracy_residual,
        "reference_overlap": overlap,
        "dark_states": rep.dark_states.iter().map(|v| labeled(con, v)).collect::<Vec<_>>(),
        "dressed_energies": rep.dressed_complement.iter().map(|d| d.energy).collect::<Vec<_>>(),
    });
    Ok(Outcome { result, tables: Vec::new() })
}

fn evolve(con: &Construction, sc: &Scenario, seed: u64) -> Res<Outcome> {
    let e = sc.evolve.as_ref().expect("validated");
    let rep = con.protected_subspace()?;
    let dark = &rep.dark_states;
    let n = con.scheme.dim();
    let psi = match e.initial {
        Initial::D1 => dark[0].clone(),
        Initial::D2 => dark[1].clone(),
        Initial::Plus => (&dark[0] + &dark[1]) / re(2f64.sqrt()),
        Initial::Lowest => basis_vector(n, con.scheme.range(&con.lower)?.start),
    };
    let collapse = con.scheme.collapse_operators()?;
    let method = match e.method {
        Method::Auto if sc.noise.is_some() => Method::Noisy,
        Method::Auto if !collapse.is_empty() => Method::Lindblad,
        Method::Auto => Method::Unitary,
        m => m,
    };
    let h = con.interaction_picture()?.hamiltonian;
    let times = linspace(0.0, e.duration, e.points);
    let scale = frequency_scale(con);
    let rk = RkOptions::default();
    let trace: SimulationTrace = match method {
        Method::Unitary => {
            check_phase("evolve", e.duration, scale)?;
            evolve_unitary(&h, &psi, &times, &rk)?
        }
        Method::Lindblad => {
            check_phase("evolve", e.duration, scale)?;
            evolve_lindblad(&h, &(&psi * psi.adjoint()), &collapse, &times, &rk)?
        }
        Method::Noisy => {
            let noise = noise_process(sc.noise.as_ref().expect("validated"), seed);
            check_noise_steps("evolve", &noise, e.duration, scale)?;
            evolve_noisy(&h, &psi, &con.noise_operator(), &noise, e.n_traj, &times, &NoisyOptions::default())?
        }
        Method::Auto => unreachable!(),
    };
    let p1 = trace.overlap(&dark[0]);
    let p2 = trace.overlap(&dark[1]);
    let coh = trace.coherence(&dark[0], &dark[1]);
    let pair: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a + b).collect();
    let coh_abs: Vec<f64> = coh.iter().map(|z| 2.0 * z.norm()).collect();

    let mut fitted = serde_json::Map::new();
    let mut notes = Vec::new();
    let drop = pair.first().unwrap_or(&0.0) - pair.last().unwrap_or(&0.0);
    if method == Method::Lindblad && e.initial != Initial::Lowest {
        if drop > 1e-3 {
            match fit_decay(&times, &pair, DecayModel::Exponential) {
                Ok(f) => {
                    fitted.insert("t1".into(), json!(f.time_constant()));
                }
                Err(err) => notes.push(format!("T1 fit: {err}")),
            }
        } else {
            notes.push("pair population decay not resolved within the duration".into());
        }
    }
    if method == Method::Noisy && e.initial == Initial::Plus {
        fitted.insert("coherence_one_over_e".into(), json!(one_over_e_time(&times, &coh_abs)));
        let cdrop = coh_abs.first().unwrap_or(&0.0) - coh_abs.last().unwrap_or(&0.0);
        if cdrop > 0.05 {
            for (key, model) in [("t2_star", DecayModel::Gaussian), ("t2", DecayModel::Exponential)] {
                match fit_decay(&times, &coh_abs, model) {
                    Ok(f) => {
                        fitted.insert(key.into(), json!(f.time_constant()));
                        fitted.insert(format!("{key}_rms"), json!(f.rms(times.len())));
                    }
                    Err(err) => notes.push(format!("{key} fit: {err}")),
                }
            }
        } else {
            notes.push("coherence decay not resolved within the duration".into());
        }
    }

    let mut columns = vec![Column::new("t", "time", "s")];
    for i in 0..n {
        let l = con.scheme.label(i);
        columns.push(Column::new(&format!("P[{l}]"), &format!("population of {l}"), "1"));
    }
    columns.push(Column::new("P_D1", "population of D1", "1"));
    columns.push(Column::new("P_D2", "population of D2", "1"));
    columns.push(Column::new("re_rho_D1D2", "Re <D1|rho|D2>", "1"));
    columns.push(Column::new("im_rho_D1D2", "Im <D1|rho|D2>", "1"));
    columns.push(Column::new("leakage", "population outside the protected pair", "1"));
    let rows = (0..times.len())
        .map(|k| {
            let mut r = vec![times[k]];
            r.extend(&trace.populations[k]);
            r.extend([p1[k], p2[k], coh[k].re, coh[k].im, 1.0 - pair[k]]);
            r
        })
        .collect();
    let result = json!({
        "method": format!("{method:?}").to_lowercase(),
        "initial": format!("{:?}", e.initial).to_lowercase(),
        "points": times.len(),
        "duration": e.duration,
        "diagnostics": trace.diagnostics,
        "fitted": fitted,
        "final": {"P_D1": p1.last(), "P_D2": p2.last(), "coherence": coh_abs.last(), "leakage": 1.0 - pair.last().unwrap_or(&1.0)},
        "notes": notes,
    });
    Ok(Outcome {
        result,
        tables: vec![Table {
            name: "evolve_trace".into(),
            description: "populations and protected-pair coherence against time".into(),
            columns,
            rows,
        }],
    })
}

fn budget_inputs(sc: &Scenario) -> BudgetInputs {
    let e = sc.errors.as_ref().expect("validated");
    BudgetInputs {
        omega: sc.construction.omega,
        b: sc.construction.field,
        delta_b: e.delta_b,
        epsilon: e.epsilon,
        epsilon_pol: e.epsilon_pol,
        gamma: sc.scheme.gamma,
        t2_star_bare: e.t2_star,
    }
}

fn budget_row(b: &ErrorBudget) -> Vec<f64> {
    let mut r = Vec::new();
    for m in b.mechanisms.iter().chain(std::iter::once(&b.combined)) {
        r.extend([m.t1_limit, m.t2_limit, m.coherence_gain_orders]);
    }
    r
}

fn error_budget(sc: &Scenario) -> Res<Outcome> {
    let e = sc.errors.as_ref().expect("validated");
    let base = budget_inputs(sc);
    let budget = total_budget(&base, e.cross_check)?;
    let mut result = json!({ "budget": budget });
    let mut tables = Vec::new();
    if let Some(sw) = sc.sweep.as_ref().filter(|s| s.parameter != SweepParam::Sigma) {
        let unit = if sw.parameter.dimension().is_some() { "rad/s" } else { "1" };
        let mut columns = vec![Column::new(sw.parameter.name(), sw.parameter.name(), unit)];
        for m in budget.mechanisms.iter().chain(std::iter::once(&budget.combined)) {
            let n = &m.mechanism;
            columns.push(Column::new(&format!("{n}_t1"), &format!("{n} T1 limit"), "s"));
            columns.push(Column::new(&format!("{n}_t2"), &format!("{n} T2 limit"), "s"));
            columns.push(Column::new(&format!("{n}_gain_orders"), &format!("{n} coherence gain"), "decades"));
        }
        let mut rows = Vec::new();
        let mut points = Vec::new();
        for &x in &sw.values {
            let mut inp = base.clone();
            match sw.parameter {
                SweepParam::DeltaB => inp.delta_b = x,
                SweepParam::Omega => inp.omega = x,
                SweepParam::Epsilon => inp.epsilon = x,
                SweepParam::EpsilonPol => inp.epsilon_pol = x,
                SweepParam::Sigma => unreachable!(),
            }
            let b = total_budget(&inp, false)?;
            let mut row = vec![x];
            row.extend(budget_row(&b));
            rows.push(row);
            points.push(json!({
                "value": x,
                "mechanisms": b.mechanisms,
                "combined": b.combined,
            }));
        }
        result["sweep"] = json!({ "parameter": sw.parameter.name(), "points": points });
        tables.push(Table {
            name: "budget_sweep".into(),
            description: format!("error budget per mechanism against {}", sw.parameter.name()),
            columns,
            rows,
        });
    }
    Ok(Outcome { result, tables })
}

fn gates(con: &Construction, sc: &Scenario) -> Res<Outcome> {
    let g = sc.gates.as_ref().expect("validated");
    let mw = microwave_sigma_y(con, g.omega_g)?;
    let raman = match g.delta_r {
        Some(d) => Some(raman_sigma_x(con, g.omega_g, d, g.probe_periods)?),
        None => None,
    };
    let bound = 10.0 * (g.omega_g / con.omega).powi(2);
    Ok(Outcome {
        result: json!({
            "omega_g": g.omega_g,
            "microwave_sigma_y": mw,
            "raman_sigma_x": raman,
            "leakage_bound": bound,
        }),
        tables: Vec::new(),
    })
}

fn sense(con: &Construction, sc: &Scenario, seed: u64) -> Res<Outcome> {
    let x = sc.sense.as_ref().expect("validated");
    if x.scheme == SensingScheme::Hyperfine {
        let r = run_hyperfine_sensing(con, x.signal_rabi, x.detuning_factor)?;
        return Ok(Outcome { result: json!({ "hyperfine": r }), tables: Vec::new() });
    }
    let t_int = x.interrogation_time.expect("validated");
    check_phase("sense", t_int, frequency_scale(con))?;
    let protocol = SensingProtocol {
        scheme: x.scheme,
        signal_freq: x.signal_freq,
        signal_rabi: x.signal_rabi,
        phase_policy: match x.phase {
            PhaseMode::Locked => PhasePolicy::Locked { phase: x.phase_value },
            PhaseMode::RandomAveraged => PhasePolicy::RandomAveraged { draws: x.draws, seed },
        },
        interrogation_time: t_int,
        readout_basis: x.readout_basis,
    };
    let (mut report, trace) = run_ac_sensing(&protocol, con, x.t2)?;
    let mut window = None;
    if let (Some(w), Some(n)) = (&x.window, &sc.noise) {
        let fw = frequency_window(
            &noise_process(n, seed),
            &WindowOptions { t1_target: w.t1_target, threshold: w.threshold, min_gap: w.min_gap, max_gap: w.max_gap },
        )?;
        let freq = match x.signal_freq {
            Some(f) => f,
            None => microwave_field(con, x.signal_rabi)?.1,
        };
        if let Some(msg) = window_check(freq, &fw) {
            report.warnings.push(msg);
        }
        window = Some(fw);
    }
    let dark = con.protected_subspace()?.dark_states;
    let p1 = trace.overlap(&dark[0]);
    let p2 = trace.overlap(&dark[1]);
    let rows = (0..trace.len()).map(|k| vec![trace.times[k], p1[k], p2[k], 1.0 - p1[k] - p2[k]]).collect();
    Ok(Outcome {
        result: json!({ "report": report, "window": window }),
        tables: vec![Table {
            name: "sense_trace".into(),
            description: "locked-phase D1 -> D2 transfer during interrogation".into(),
            columns: vec![
                Column::new("t", "time", "s"),
                Column::new("P_D1", "population of D1", "1"),
                Column::new("P_D2", "population of D2", "1"),
                Column::new("leakage", "population outside the protected pair", "1"),
            ],
            rows,
        }],
    })
}

fn compare(con: &Construction, sc: &Scenario, seed: u64) -> Res<Outcome> {
    let cfg = sc.compare.as_ref().expect("validated");
    let base = sc.noise.as_ref().expect("validated");
    let scale = frequency_scale(con);
    let one = |sigma: f64| -> Res<_> {
        let spec = NoiseSpec { sigma, ..base.clone() };
        let noise = noise_process(&spec, seed);
        check_noise_steps("compare", &noise, cfg.t_max, scale)?;
        Ok(coherence_comparison(con, &noise, cfg.n_traj, cfg.t_max)?)
    };
    let main = one(base.sigma)?;
    let mut result = json!({ "comparison": main });
    let mut tables = Vec::new();
    if let Some(sw) = sc.sweep.as_ref().filter(|s| s.parameter == SweepParam::Sigma) {
        let mut rows = Vec::new();
        let mut points = Vec::new();
        for &s in &sw.values {
            let c = one(s)?;
            rows.push(vec![s, c.comparison.coherence_gain_orders]);
            points.push(json!({
                "sigma": s,
                "t2_star_bare": c.t2_star_bare,
                "t2_protected": c.t2_protected,
                "coherence_gain_orders": num(c.comparison.coherence_gain_orders),
            }));
        }
        result["sweep"] = json!({ "parameter": "sigma", "points": points });
        tables.push(Table {
            name: "coherence_sweep".into(),
            description: "coherence gain of the protected pair against noise amplitude".into(),
            columns: vec![
                Column::new("sigma", "rms Zeeman fluctuation", "rad/s"),
                Column::new("coherence_gain_orders", "log10(T2 protected / T2* bare)", "decades"),
            ],
            rows,
        });
    }
    Ok(Outcome { result, tables })
}
