//! Independent checks of the split-operator solver.

use sqhhg::fieldgen::{mean_field, ModeVolumeSpec, PulseSpec, TimeGridSpec, FieldRealization};
use sqhhg::quadrature::QuadratureSample;
use sqhhg::spectral::{extract_cutoff, hhg_spectrum, CutoffProtocol, WindowKind};
use sqhhg::tdse::*;

/// Lowest eigenvalue of the 3-point finite-difference Hamiltonian on
/// `[-l, l]` with spacing `h`, by Sturm-sequence bisection.
fn fd_ground_energy(a: f64, l: f64, h: f64) -> f64 {
    let n = (2.0 * l / h) as usize - 1;
    let diag: Vec<f64> = (1..=n)
        .map(|i| {
            let x = -l + i as f64 * h;
            1.0 / (h * h) - 1.0 / (x * x + a * a).sqrt()
        })
        .collect();
    let off2 = (0.5 / (h * h)).powi(2);
    // number of eigenvalues below `lam`
    let count = |lam: f64| {
        let mut q = diag[0] - lam;
        let mut c = (q < 0.0) as usize;
        for d in &diag[1..] {
            let denom = if q == 0.0 { 1e-300 } else { q };
            q = d - lam - off2 / denom;
            c += (q < 0.0) as usize;
        }
        c
    };
    let (mut lo, mut hi) = (-2.0, 0.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Richardson-extrapolated O(h²) finite-difference ground energy.
fn fd_oracle(a: f64) -> f64 {
    let (e1, e2) = (fd_ground_energy(a, 60.0, 0.04), fd_ground_energy(a, 60.0, 0.02));
    (4.0 * e2 - e1) / 3.0
}

#[test]
fn ground_energy_matches_finite_difference_oracle() {
    let g = GridSpec::default();
    for a in [1.0, 2f64.sqrt(), 1.7] {
        let atom = AtomModel { softening_a: a, ip_target_ev: 0.0, ip_achieved_au: 0.0 };
        let e = ground_state(&atom, &g).unwrap().energy;
        let oracle = fd_oracle(a);
        assert!((e - oracle).abs() < 1e-5, "a={a}: {e} vs {oracle}");
    }
}

#[test]
fn calibration_reference_values() {
    let g = GridSpec::default();
    let atom = calibrate_softcore(DEFAULT_IP_EV, &g).unwrap();
    assert!((atom.ip_achieved_ev() - 15.76).abs() < CALIBRATION_TOL_EV);
    assert!(atom.softening_a > 1.0 && atom.softening_a < 1.4);
    assert!((atom.softening_a - 1.18924).abs() < 1e-4, "{}", atom.softening_a);
    // the calibrated well reproduces the oracle's ionization potential
    assert!((fd_oracle(atom.softening_a) + atom.ip_achieved_au).abs() < 1e-5);

    let h = calibrate_softcore(13.6, &g).unwrap();
    assert!((h.softening_a / 2f64.sqrt() - 1.0).abs() < 0.05, "{}", h.softening_a);
}

fn weak_field(g: &GridSpec) -> FieldRealization {
    let pulse = PulseSpec { peak_intensity_w_cm2: 1e11, ..PulseSpec::default() };
    let tg = pulse.time_grid(3.0, g.dt);
    mean_field(&pulse, ModeVolumeSpec::default().e_vac_au(&pulse).unwrap(), &tg).unwrap()
}

#[test]
fn ehrenfest_acceleration_matches_dipole_curvature() {
    let g = GridSpec::default();
    let atom = calibrate_softcore(DEFAULT_IP_EV, &g).unwrap();
    let gs = ground_state(&atom, &g).unwrap();
    let field = weak_field(&g);
    let tr = Propagator::new(&atom, &g).unwrap().propagate_with_dipole(&gs.wavefunction, &field).unwrap();
    let d = tr.dipole_au.as_ref().unwrap();
    let dt = g.dt;
    let scale = tr.a_au.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let worst = (1..d.len() - 1)
        .map(|n| ((d[n + 1] - 2.0 * d[n] + d[n - 1]) / (dt * dt) - tr.a_au[n]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-2 * scale, "worst {worst:e} vs scale {scale:e}");
}

fn mean_field_cutoff(g: GridSpec) -> f64 {
    let atom = calibrate_softcore(DEFAULT_IP_EV, &g).unwrap();
    let gs = ground_state(&atom, &g).unwrap();
    let pulse = PulseSpec::default();
    let tg: TimeGridSpec = pulse.time_grid(3.0, g.dt);
    let evac = ModeVolumeSpec::default().e_vac_au(&pulse).unwrap();
    let field = sqhhg::fieldgen::synthesize_field(
        QuadratureSample { x: pulse.e0_au() / evac, p: 0.0, shot_index: 0 },
        &pulse,
        evac,
        &tg,
    )
    .unwrap();
    let tr = Propagator::new(&atom, &g).unwrap().propagate(&gs.wavefunction, &field).unwrap();
    let w = pulse.omega_au();
    let s = hhg_spectrum(&tr, WindowKind::Blackman, w).unwrap().truncated(250.0);
    let hint = atom.ip_achieved_au + 3.17 * pulse.ponderomotive_au();
    extract_cutoff(&s, &CutoffProtocol::default(), hint).unwrap().h_ho
}

#[test]
fn cutoff_converged_in_dt_and_box() {
    let g = GridSpec::default();
    let base = mean_field_cutoff(g);
    let half_dt = mean_field_cutoff(GridSpec { dt: g.dt / 2.0, ..g });
    let wide = mean_field_cutoff(GridSpec { x_min: 2.0 * g.x_min, x_max: 2.0 * g.x_max, nx: 2 * g.nx, absorber_width: 2.0 * g.absorber_width, ..g });
    assert!((base - half_dt).abs() < 0.25, "{base} vs {half_dt}");
    assert!((base - wide).abs() < 0.25, "{base} vs {wide}");
}
