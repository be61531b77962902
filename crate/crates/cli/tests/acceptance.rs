//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line to
//! stderr and asserts the criterion.
//!
//! Tests hold a global lock so that timing limits are measured without
//! contention, and TDSE ensembles are shared through an in-process cache.
//! Setting `SQHHG_ACCEPTANCE_CACHE=<dir>` additionally persists ensembles
//! between runs; leave it unset for a clean evaluation.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use sqhhg::analytics::*;
use sqhhg::ensemble::*;
use sqhhg::fieldgen::{FieldRealization, ModeVolumeSpec, PulseSpec};
use sqhhg::quadrature::*;
use sqhhg::tdse::*;
use sqhhg::units;
use sqhhg_cli::{cmd_run, CliConfig};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written to the raw stderr handle so the line shows without `--nocapture`.
fn report(n: u32, name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "criterion {n:>2} {name}: {verdict} ({detail})");
}

fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| Engine::new(&RunConfig::default()).expect("default engine"))
}

fn disk_cache(label: &str) -> Option<PathBuf> {
    std::env::var_os("SQHHG_ACCEPTANCE_CACHE").map(|d| PathBuf::from(d).join(format!("{label}.json")))
}

/// Runs (or recalls) the ensemble for `cfg`.
fn ensemble(label: &str, cfg: RunConfig) -> Arc<Vec<ShotRecord>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Vec<ShotRecord>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(label) {
        return hit.clone();
    }
    let key = serde_json::to_string(&cfg).unwrap();
    let stored = disk_cache(label).and_then(|p| std::fs::read_to_string(p).ok()).and_then(|text| {
        let (k, recs): (String, Vec<ShotRecord>) = serde_json::from_str(&text).ok()?;
        (k == key).then_some(recs)
    });
    let records = match stored {
        Some(r) => r,
        None => {
            let t = Instant::now();
            let r = engine().run(&cfg, None).expect("ensemble");
            eprintln!("ensemble {label}: {} shots in {:.0} s", r.len(), t.elapsed().as_secs_f64());
            if let Some(p) = disk_cache(label) {
                let _ = std::fs::create_dir_all(p.parent().unwrap());
                let _ = std::fs::write(p, serde_json::to_string(&(key, &r)).unwrap());
            }
            r
        }
    };
    let arc = Arc::new(records);
    cache.lock().unwrap().insert(label.to_string(), arc.clone());
    arc
}

fn cfg(driver: DriverKind, r: f64, theta: f64, n_shot: usize, seed: u64) -> RunConfig {
    RunConfig { driver_kind: driver, squeeze: SqueezeSpec { r, theta }, n_shot, master_seed: seed, ..RunConfig::default() }
}

const AS_R: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

fn sql() -> Arc<Vec<ShotRecord>> {
    ensemble("sql", cfg(DriverKind::Coherent, 0.0, 0.0, 200, 1001))
}

fn amplitude_squeezed(i: usize) -> Arc<Vec<ShotRecord>> {
    ensemble(&format!("as_{i}"), cfg(DriverKind::Squeezed, AS_R[i], 0.0, 300, 1100 + i as u64))
}

fn theta_axis() -> Vec<f64> {
    (0..9).map(|k| PI * k as f64 / 16.0).collect()
}

/// Squeezed r = 1.5 at θ = kπ/16; k = 0 reuses the first 200 AS shots.
fn theta_point(k: usize) -> Vec<ShotRecord> {
    if k == 0 {
        return amplitude_squeezed(2)[..200].to_vec();
    }
    ensemble(&format!("theta_{k}"), cfg(DriverKind::Squeezed, 1.5, theta_axis()[k], 200, 1200 + k as u64)).to_vec()
}

fn benchmark_point(k: usize) -> Arc<Vec<ShotRecord>> {
    ensemble(&format!("bench_{k}"), cfg(DriverKind::ClassicalBenchmark, 1.5, theta_axis()[k], 200, 1300 + k as u64))
}

fn stats(records: &[ShotRecord]) -> EnsembleStats {
    quality_gate(records).expect("flagged fraction within limit");
    cutoff_statistics(records).expect("enough valid shots")
}

fn default_physics() -> (PulseSpec, f64, AdkParams) {
    let pulse = PulseSpec::default();
    let e_vac = ModeVolumeSpec::default().e_vac_au(&pulse).unwrap();
    (pulse, e_vac, AdkParams::from_ip(units::ev_to_au(15.76)).unwrap())
}

#[test]
fn c01_covariance_exactness() {
    let _g = serial();
    let t = Instant::now();
    let mut worst_det = 0.0f64;
    let mut worst_sx = 0.0f64;
    for i in 0..=300 {
        let r = 0.01 * i as f64;
        for k in 0..128 {
            let c = covariance_of(r, PI * k as f64 / 128.0).unwrap();
            worst_det = worst_det.max((c.det() - 0.25).abs());
        }
        worst_sx = worst_sx.max((covariance_of(r, 0.0).unwrap().sxx - 0.5 * (-2.0 * r).exp()).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst_det <= 1e-12 && worst_sx <= 1e-12 && secs < 1.0;
    report(1, "covariance exactness", pass, &format!("max|det-1/4| {worst_det:.1e}, max|sx2 err| {worst_sx:.1e}, {secs:.3} s"));
    assert!(pass);
}

#[test]
fn c02_sampler_moments() {
    let _g = serial();
    let t = Instant::now();
    let n = 100_000;
    let mut worst = 0.0f64;
    for (i, (r, th)) in [(0.0, 0.0), (1.0, 0.0), (1.0, PI / 4.0), (1.5, FRAC_PI_2)].into_iter().enumerate() {
        let p = SqueezeParams::new(r, th, 0.0, 0.0).unwrap();
        let s = sample_wigner(&p, (3.0, -1.0), n, SeedSpec::new(42 + i as u64, 0)).unwrap();
        let est = estimate_covariance(&s).unwrap();
        let exact = p.covariance().unwrap();
        let (se_xx, se_pp, se_xp) = covariance_standard_errors(&exact, n);
        for (e, x, se) in [(est.sxx, exact.sxx, se_xx), (est.spp, exact.spp, se_pp), (est.sxp, exact.sxp, se_xp)] {
            worst = worst.max((e - x).abs() / se);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= 3.0 && secs < 5.0;
    report(2, "sampler moments", pass, &format!("worst deviation {worst:.2} SE, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn c03_analytics_cross_check() {
    let _g = serial();
    let t = Instant::now();
    let (pulse, e_vac, adk) = default_physics();
    let (e0, w) = (pulse.e0_au(), pulse.omega_au());
    let coeffs = CumulantCoeffs::new(e0, e_vac, &adk).unwrap();
    let mut worst_yield = (0.0f64, 0.0, 0.0);
    let mut worst_shift = (0.0f64, 0.0, 0.0);
    let classical = classical_cutoff(e0, adk.ip_au, w);
    for i in 0..=60 {
        let r = 0.05 * i as f64;
        for k in 0..32 {
            let th = PI * k as f64 / 32.0;
            let sxx = covariance_of(r, th).unwrap().sxx;
            let marginal = FieldMarginal::squeezed(e0, e_vac, r, th).unwrap();
            if coeffs.eta * (2.0 * sxx - 1.0).abs() <= 0.5 {
                let num = yield_numeric(&marginal, &adk).unwrap();
                let ana = yield_analytic(r, th, &coeffs).unwrap().ratio;
                let rel = ((ana - num) / num).abs();
                if rel > worst_yield.0 {
                    worst_yield = (rel, r, th);
                }
            }
            let pred = cutoff_shift_analytic(r, th, &pulse, e_vac, &adk).unwrap();
            if pred.epsilon <= 0.05 {
                let shift_num = rate_weighted_cutoff_numeric(&marginal, &adk, adk.ip_au, w).unwrap() - classical;
                let rel = ((shift_num - pred.shift_au) / pred.shift_au).abs();
                if rel > worst_shift.0 {
                    worst_shift = (rel, r, th);
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let yield_ok = worst_yield.0 <= 0.05;
    let shift_ok = worst_shift.0 <= 0.10;
    let pass = yield_ok && shift_ok && secs < 10.0;
    report(
        3,
        "analytics cross-check",
        pass,
        &format!(
            "eta {:.3e}; yield worst {:.2}% at r={:.2}, theta={:.3} [{}]; cutoff shift worst {:.2}% at r={:.2}, theta={:.3} [{}]; {secs:.2} s",
            coeffs.eta,
            100.0 * worst_yield.0,
            worst_yield.1,
            worst_yield.2,
            if yield_ok { "ok" } else { "over 5%" },
            100.0 * worst_shift.0,
            worst_shift.1,
            worst_shift.2,
            if shift_ok { "ok" } else { "over 10%" },
        ),
    );
    assert!(pass);
}

#[test]
fn c04_three_step_oracle() {
    let _g = serial();
    let t = Instant::now();
    let (pulse, _, adk) = default_physics();
    let grid = birth_phase_grid(10_000);
    let tr = three_step_trajectories(pulse.e0_au(), pulse.omega_au(), adk.ip_au, &grid).unwrap();
    let (best, phase) = tr
        .iter()
        .filter_map(|t| t.return_energy_over_up.map(|k| (k, t.ionization_phase)))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let secs = t.elapsed().as_secs_f64();
    let pass = (best - 3.17).abs() <= 0.01 && secs < 5.0;
    report(4, "three-step oracle", pass, &format!("max E_ret/Up {best:.5} at {:.2} deg, {secs:.2} s", phase.to_degrees()));
    assert!(pass);
}

#[test]
fn c05_tdse_calibration_and_reference() {
    let _g = serial();
    let grid = GridSpec::default();
    let atom = calibrate_softcore(DEFAULT_IP_EV, &grid).unwrap();
    let ip_ok = (atom.ip_achieved_ev() - 15.76).abs() <= 0.05;

    let gs = ground_state(&atom, &grid).unwrap();
    let prop = Propagator::new(&atom, &grid).unwrap();
    let pulse = PulseSpec::default();
    let tg = pulse.time_grid(RunConfig::default().window_cycles, grid.dt);
    let e_vac = ModeVolumeSpec::default().e_vac_au(&pulse).unwrap();
    let free = FieldRealization {
        grid: tg,
        e_au: vec![0.0; tg.len()],
        sample: QuadratureSample { x: 0.0, p: 0.0, shot_index: 0 },
        e_vac_au: e_vac,
    };
    let tr = prop.propagate(&gs.wavefunction, &free).unwrap();
    let drift = (1.0 - tr.final_norm()).abs();
    let drift_ok = drift <= 1e-10;

    let t = Instant::now();
    let record = engine().run_shot(QuadratureSample { x: pulse.e0_au() / e_vac, p: 0.0, shot_index: 0 }, false);
    let secs = t.elapsed().as_secs_f64();
    let h_ho = record.cutoff.map_or(f64::NAN, |c| c.h_ho);
    let classical_ho = classical_cutoff(pulse.e0_au(), atom.ip_achieved_au, pulse.omega_au()) / pulse.omega_au();
    let cutoff_ok = (h_ho - 99.6).abs() <= 5.0 && record.is_valid();
    let time_ok = secs <= 30.0;
    let pass = ip_ok && drift_ok && cutoff_ok && time_ok;
    report(
        5,
        "TDSE calibration and reference",
        pass,
        &format!(
            "a {:.5}, Ip {:.4} eV [{}]; field-free drift {drift:.1e} [{}]; mean-field cutoff {h_ho:.2} H.O. vs 99.6 +/- 5 (classical {classical_ho:.2}) [{}]; run {secs:.1} s [{}]",
            atom.softening_a,
            atom.ip_achieved_ev(),
            ok(ip_ok),
            ok(drift_ok),
            ok(cutoff_ok),
            ok(time_ok),
        ),
    );
    assert!(pass);
}

fn ok(b: bool) -> &'static str {
    if b { "ok" } else { "fail" }
}

#[test]
fn c06_witness_scaling() {
    let _g = serial();
    let s0 = stats(&sql());
    let mut lines = Vec::new();
    let mut all_in_ci = true;
    let mut all_within_factor = true;
    let mut ratios = Vec::new();
    for (i, &r) in AS_R.iter().enumerate().take(3) {
        let s = stats(&amplitude_squeezed(i)[..200]);
        let w = witness_ratio(&s, &s0).unwrap();
        let target = (-2.0 * r).exp();
        all_in_ci &= w.contains(target);
        all_within_factor &= w.ratio <= 1.5 * target && w.ratio >= target / 1.5;
        ratios.push(w.ratio);
        lines.push(format!("r={r}: {:.4} [{:.4}, {:.4}] vs {target:.4}", w.ratio, w.ci95.0, w.ci95.1));
    }
    let monotone = ratios.windows(2).all(|p| p[1] < p[0]);
    let pass = all_in_ci || (all_within_factor && monotone);
    report(6, "witness scaling", pass, &format!("SQL var {:.4} eV^2; {}", s0.var_h, lines.join("; ")));
    assert!(pass);
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn c07_theta_sweep_tracking() {
    let _g = serial();
    let s0 = stats(&sql());
    let thetas = theta_axis();
    let mut var_sq = Vec::new();
    let mut sx2 = Vec::new();
    let mut bench_ok = true;
    let mut rows = Vec::new();
    for (k, &th) in thetas.iter().enumerate() {
        let sq = stats(&theta_point(k));
        let b = stats(&benchmark_point(k));
        let margin = s0.var_half_width() + b.var_half_width();
        let below = s0.var_h - b.var_h;
        bench_ok &= below <= margin;
        var_sq.push(sq.var_h);
        sx2.push(covariance_of(1.5, th).unwrap().sxx);
        rows.push(format!("{:.3}: sq {:.3} bench {:.3}", th, sq.var_h, b.var_h));
    }
    let rho = spearman(&var_sq, &sx2);
    let pass = rho >= 0.9 && bench_ok;
    report(
        7,
        "theta-sweep tracking",
        pass,
        &format!("Spearman {rho:.3}; benchmark bounded by SQL [{}]; SQL {:.3}; {}", ok(bench_ok), s0.var_h, rows.join(", ")),
    );
    assert!(pass);
}

#[test]
fn c08_mean_cutoff_extension() {
    let _g = serial();
    let (pulse, e_vac, adk) = default_physics();
    let ps1 = ensemble("ps_1", cfg(DriverKind::Squeezed, 1.0, FRAC_PI_2, 200, 1401));
    let ps2 = ensemble("ps_2", cfg(DriverKind::Squeezed, 2.0, FRAC_PI_2, 200, 1402));
    let means: Vec<f64> = [stats(&sql()), stats(&ps1), stats(&ps2)].iter().map(|s| s.yield_weighted_mean_h).collect();
    let monotone = means.windows(2).all(|p| p[1] > p[0]);
    let h15 = stats(&theta_point(8)).yield_weighted_mean_h;
    let measured = h15 - means[0];
    let pred = |r| units::au_to_ev(cutoff_shift_analytic(r, FRAC_PI_2, &pulse, e_vac, &adk).unwrap().shift_au);
    let predicted = pred(1.5) - pred(0.0);
    let shift_ok = (measured - predicted).abs() <= 0.5 * predicted;
    let pass = monotone && shift_ok;
    report(
        8,
        "mean-cutoff extension",
        pass,
        &format!(
            "yield-weighted <H> r=0,1,2: {:.3}, {:.3}, {:.3} eV [{}]; shift at r=1.5 {measured:.3} eV vs predicted {predicted:.3} eV [{}]",
            means[0],
            means[1],
            means[2],
            ok(monotone),
            ok(shift_ok)
        ),
    );
    assert!(pass);
}

#[test]
fn c09_two_channel_minimum() {
    let _g = serial();
    let pts: Vec<(f64, f64)> = (0..AS_R.len()).map(|i| (AS_R[i], stats(&amplitude_squeezed(i)).var_h)).collect();
    let fit = two_channel_fit(&pts).unwrap();
    let in_range = fit.r_opt.is_some_and(|r| (1.1..=2.1).contains(&r));
    let primary = !fit.poor_fit && fit.residual < 0.3 && in_range;

    let synthetic: Vec<(f64, f64)> = AS_R.iter().map(|&r| (r, 600.0 * (-2.0 * r).exp() + (2.0 * r).exp())).collect();
    let syn = two_channel_fit(&synthetic).unwrap();
    let synthetic_ok = syn.r_opt.is_some_and(|r| (r - 0.25 * 600f64.ln()).abs() < 1e-6);
    let fallback = (fit.poor_fit || fit.boundary) && synthetic_ok;
    let pass = primary || fallback;
    let data: Vec<String> = pts.iter().map(|(r, v)| format!("{r}:{v:.4}")).collect();
    report(
        9,
        "two-channel minimum",
        pass,
        &format!(
            "var(r) {}; C_X {:.4} C_P {:.3e} r_opt {:?} residual {:.3} poor_fit {} boundary {}; synthetic recovery [{}]{}",
            data.join(" "),
            fit.c_x,
            fit.c_p,
            fit.r_opt,
            fit.residual,
            fit.poor_fit,
            fit.boundary,
            ok(synthetic_ok),
            if primary { "" } else { "; primary gate not met, poor-fit flag and synthetic recovery substitute" }
        ),
    );
    assert!(pass);
}

#[test]
fn c10_determinism() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut config = CliConfig::default();
    config.run.n_shot = 4;
    config.run.master_seed = 77;
    config.run.squeeze = SqueezeSpec { r: 1.0, theta: 0.3 };
    let read = |name: &str| std::fs::read(dir.path().join(name).join("shots.csv")).unwrap();
    cmd_run(&config, &dir.path().join("a"), None).unwrap();
    cmd_run(&config, &dir.path().join("b"), None).unwrap();
    let repeat_ok = read("a") == read("b");
    let mut workers_ok = true;
    for w in [1, 4, 8] {
        let name = format!("w{w}");
        cmd_run(&config, &dir.path().join(&name), Some(w)).unwrap();
        workers_ok &= read(&name) == read("a");
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = repeat_ok && workers_ok && secs < 600.0;
    report(10, "determinism", pass, &format!("repeat identical [{}]; workers 1/4/8 identical [{}]; {secs:.0} s", ok(repeat_ok), ok(workers_ok)));
    assert!(pass);
}
