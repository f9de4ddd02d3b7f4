//! Acceptance suite: one check per criterion, each printing a single
//! PASS/FAIL line with the measured quantities.

use std::f64::consts::PI;
use std::time::Instant;

use nsac_core::diagnostics::{energy, energy_law_residual, mean_diagnostics};
use nsac_core::experiments::{
    bitwise_equal, contraction_experiment, convergence_study, dissipativity_sweep,
    homogeneous_ode_oracle, random_state, run_simulation, zero_perturbation_identical, Status,
};
use nsac_core::io::{
    read_diagnostics, read_snapshot, ConvergeKind, DiagnosticsWriter, InitialSpec, RunConfig,
};
use nsac_core::model::{korteweg_stress, taylor_green, ModelParams, RegMode, SystemState};
use nsac_core::spectral::{dealias_product, Grid, SpectralField};
use nsac_core::timestepper::{Scheme, Stepper, StepperConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, detail: String, started: Instant) {
    println!(
        "criterion {id:>2} [{}] {name}: {detail} ({:.1} s)",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn grid(n: usize) -> Grid {
    Grid::new(2, n).unwrap()
}

// ---------------------------------------------------------------------------
// 1. spectral operators against finite differences and direct convolution
// ---------------------------------------------------------------------------

fn smooth_fn(x: [f64; 3]) -> f64 {
    ((2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * x[1]).cos()).exp()
}

fn periodic(values: &[f64], n: usize, i: isize, j: isize) -> f64 {
    let n = n as isize;
    values[(i.rem_euclid(n) * n + j.rem_euclid(n)) as usize]
}

fn fd_partial(values: &[f64], n: usize, axis: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            let (p, m) = if axis == 0 {
                (periodic(values, n, i + 1, j), periodic(values, n, i - 1, j))
            } else {
                (periodic(values, n, i, j + 1), periodic(values, n, i, j - 1))
            };
            out[(i * n as isize + j) as usize] = (p - m) / (2.0 * h);
        }
    }
    out
}

fn fd_laplacian(values: &[f64], n: usize) -> Vec<f64> {
    let h2 = 1.0 / (n * n) as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            let c = periodic(values, n, i, j);
            let s = periodic(values, n, i + 1, j)
                + periodic(values, n, i - 1, j)
                + periodic(values, n, i, j + 1)
                + periodic(values, n, i, j - 1);
            out[(i * n as isize + j) as usize] = (s - 4.0 * c) / h2;
        }
    }
    out
}

fn fd_korteweg(values: &[f64], n: usize) -> [Vec<f64>; 2] {
    let gx = fd_partial(values, n, 0);
    let gy = fd_partial(values, n, 1);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (xx, xy, yy) = (prod(&gx, &gx), prod(&gx, &gy), prod(&gy, &gy));
    let dxx = fd_partial(&xx, n, 0);
    let dxy_y = fd_partial(&xy, n, 1);
    let dxy_x = fd_partial(&xy, n, 0);
    let dyy = fd_partial(&yy, n, 1);
    [
        dxx.iter().zip(&dxy_y).map(|(a, b)| -(a + b)).collect(),
        dxy_x.iter().zip(&dyy).map(|(a, b)| -(a + b)).collect(),
    ]
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn observed_orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn criterion_01_spectral_oracles() {
    let started = Instant::now();
    let mut errs = [Vec::new(), Vec::new(), Vec::new()];
    for n in [32usize, 64, 128] {
        let g = grid(n);
        let f = SpectralField::from_fn(g, smooth_fn);
        let values = f.to_physical().unwrap();
        let gx = f.partial(0).to_physical().unwrap();
        let gy = f.partial(1).to_physical().unwrap();
        errs[0].push(max_diff(&gx, &fd_partial(&values, n, 0)).max(max_diff(&gy, &fd_partial(&values, n, 1))));
        errs[1].push(max_diff(&f.laplacian().to_physical().unwrap(), &fd_laplacian(&values, n)));
        let k = korteweg_stress(&f);
        let fd = fd_korteweg(&values, n);
        errs[2].push(
            max_diff(&k[0].to_physical().unwrap(), &fd[0])
                .max(max_diff(&k[1].to_physical().unwrap(), &fd[1])),
        );
    }
    let orders: Vec<f64> = errs.iter().flat_map(|e| observed_orders(e)).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);

    let g = grid(16);
    let full = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); g.len()];
        for i in 0..g.len() {
            let j = g.conjugate_index(i);
            if i > j || g.is_nyquist(i) {
                continue;
            }
            let re = rng.gen_range(-1.0..1.0);
            let im = if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) };
            coeffs[i] = Complex64::new(re, im);
            coeffs[j] = Complex64::new(re, -im);
        }
        SpectralField::from_coeffs(g, coeffs).unwrap()
    };
    let (p, q) = (full(1), full(2));
    let product = dealias_product(&p, &q).unwrap();
    let mut conv_err = 0.0f64;
    for i in 0..g.len() {
        let k = g.wavenumber(i);
        let mut direct = Complex64::new(0.0, 0.0);
        if !g.is_nyquist(i) {
            for a_i in 0..g.len() {
                if g.is_nyquist(a_i) {
                    continue;
                }
                let ka = g.wavenumber(a_i);
                let kb = [k[0] - ka[0], k[1] - ka[1], 0];
                if let Some(b_i) = g.index_of(kb) {
                    if g.wavenumber(b_i) == kb && !g.is_nyquist(b_i) {
                        direct += p.coeffs()[a_i] * q.coeffs()[b_i];
                    }
                }
            }
        }
        conv_err = conv_err.max((product.coeffs()[i] - direct).norm());
    }
    let ok = min_order >= 1.9 && conv_err <= 1e-12 && started.elapsed().as_secs_f64() < 10.0;
    report(
        1,
        "spectral operators vs finite differences / convolution",
        ok,
        format!("min FD order {min_order:.3}, convolution error {conv_err:.2e}"),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 2. exact conservation of the velocity mean, mean-value ODEs
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_conservation() {
    let started = Instant::now();
    let g = grid(16);
    let params = ModelParams::default();
    let mut s = random_state(g, 5, 0.3, 0.5, 0.2);
    let mut stepper = Stepper::new(params.clone(), StepperConfig::default());
    let mut worst_mean = 0.0f64;
    let mut worst_ode = 0.0f64;
    for step in 0..10_000 {
        s = stepper.step(&s).unwrap();
        for c in s.u.components() {
            worst_mean = worst_mean.max(c.coeffs()[0].norm());
        }
        if step % 1000 == 0 {
            let m = mean_diagnostics(&s, &params);
            worst_ode = worst_ode
                .max(m.phi_residual.abs())
                .max(m.pi_residual.abs())
                .max(m.combined_residual.abs());
        }
    }
    let ok = worst_mean == 0.0 && worst_ode <= 1e-10;
    report(
        2,
        "velocity mean conserved over 10^4 CNAB2 steps; mean-value ODE residuals",
        ok,
        format!("max |u(0)| = {worst_mean:e}, max mean-ODE residual {worst_ode:.2e}"),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 3. continuous energy law
// ---------------------------------------------------------------------------

fn residual_window(
    s0: &SystemState,
    params: &ModelParams,
    cfg: StepperConfig,
    t_final: f64,
    t_skip: f64,
) -> f64 {
    let steps = (t_final / cfg.dt).round() as usize;
    let mut stepper = Stepper::new(params.clone(), cfg.clone());
    let mut s = s0.clone();
    let mut reports = vec![energy(&s, params)];
    for _ in 0..steps {
        s = stepper.step(&s).unwrap();
        reports.push(energy(&s, params));
    }
    let res = energy_law_residual(&reports).unwrap();
    res.t
        .iter()
        .zip(&res.values)
        .filter(|(t, _)| **t > t_skip)
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_03_energy_law() {
    let started = Instant::now();
    let g = grid(32);
    let params = ModelParams::default();
    // Lowest-mode data: the trapezoid average of D in the residual carries an
    // O(dt² D'') term, so the state must evolve on O(1) time scales.
    let s0 = SystemState::new(
        taylor_green(g, 0.02),
        SpectralField::from_fn(g, |x| 0.2 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[1]).sin()),
        SpectralField::from_fn(g, |x| 0.05 * (2.0 * PI * (x[0] + x[1])).sin()),
        0.0,
    )
    .unwrap();
    let rk = StepperConfig {
        dt: 1e-4,
        scheme: Scheme::Rk4,
        ..StepperConfig::default()
    };
    let rk_res = residual_window(&s0, &params, rk, 0.5, 0.0);
    let cn: Vec<f64> = [2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&dt| {
            let cfg = StepperConfig {
                dt,
                ..StepperConfig::default()
            };
            residual_window(&s0, &params, cfg, 0.5, 0.1)
        })
        .collect();
    let ratios: Vec<f64> = cn.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = rk_res <= 1e-6 && ratios.iter().all(|r| (r - 4.0).abs() <= 0.8);
    report(
        3,
        "energy law: RK4 residual, CNAB2 order-2 decay",
        ok,
        format!(
            "RK4 max residual {rk_res:.2e}; CNAB2 residuals {}, ratios {ratios:.3?}",
            cn.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" / ")
        ),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 4. pure phases are fixed points
// ---------------------------------------------------------------------------

fn max_coeff_change(a: &SystemState, b: &SystemState) -> f64 {
    let mut worst = 0.0f64;
    let mut fa: Vec<&SpectralField> = a.u.components().iter().collect();
    fa.extend([&a.phi, &a.pi]);
    let mut fb: Vec<&SpectralField> = b.u.components().iter().collect();
    fb.extend([&b.phi, &b.pi]);
    for (x, y) in fa.iter().zip(&fb) {
        for (p, q) in x.coeffs().iter().zip(y.coeffs()) {
            worst = worst.max((p - q).norm());
        }
    }
    worst
}

#[test]
fn criterion_04_equilibria() {
    let started = Instant::now();
    let g = grid(16);
    let mut worst = 0.0f64;
    for reg_mode in [RegMode::Linear, RegMode::Variational] {
        let params = ModelParams {
            sigma: 0.0,
            reg_mode,
            ..ModelParams::default()
        };
        for phi in [1.0, -1.0] {
            let mut stepper = Stepper::new(params.clone(), StepperConfig::default());
            let mut s = SystemState::homogeneous(g, phi, 0.0);
            for _ in 0..1000 {
                let next = stepper.step(&s).unwrap();
                worst = worst.max(max_coeff_change(&next, &s));
                s = next;
            }
        }
    }
    let ok = worst <= 1e-13;
    report(
        4,
        "pure phases phi = +-1 are fixed points",
        ok,
        format!("max per-step change {worst:.2e} over 10^3 steps"),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 5. homogeneous reduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_homogeneous_reduction() {
    let started = Instant::now();
    let g = grid(16);
    let params = ModelParams {
        kappa: 0.5,
        sigma: 0.0,
        ..ModelParams::default()
    };
    let dt = 2.5e-4;
    let oracle = homogeneous_ode_oracle(&params, 1.2, 0.0, 1.0, dt).unwrap();
    let cfg = StepperConfig {
        dt,
        scheme: Scheme::Rk4,
        ..StepperConfig::default()
    };
    let mut stepper = Stepper::new(params.clone(), cfg);
    let mut s = SystemState::homogeneous(g, 1.2, 0.0);
    let mut worst = 0.0f64;
    for &(_, phi, pi) in &oracle[1..] {
        s = stepper.step(&s).unwrap();
        worst = worst.max((s.phi.mean() - phi).abs()).max((s.pi.mean() - pi).abs());
    }
    let ok = worst <= 1e-8 && started.elapsed().as_secs_f64() < 5.0;
    report(
        5,
        "constant data follow the scalar ODE oracle",
        ok,
        format!("max deviation {worst:.2e} up to T = 1"),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 6. absorbing-set sweep
// ---------------------------------------------------------------------------

fn sweep_config(kappa: f64, delta: f64, sigma: f64) -> RunConfig {
    let mut c = RunConfig::new(grid(32), 40.0);
    c.params.kappa = kappa;
    c.params.delta = delta;
    c.params.sigma = sigma;
    c.stepper.dt = 5e-3;
    c.output_every = 5;
    c.seed = 17;
    c.initial = InitialSpec::Random {
        u_norm: 0.1,
        phi_norm: 0.5,
        pi_norm: 0.1,
    };
    c.sweep.scales = vec![1.0, 4.0, 16.0];
    c
}

#[test]
fn criterion_06_dissipativity() {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, c) in [
        ("sigma=0.5, delta=0", sweep_config(1.0, 0.0, 0.5)),
        ("sigma=0, delta=kappa=0.1", sweep_config(0.1, 0.1, 0.0)),
    ] {
        let r = dissipativity_sweep(&c).unwrap();
        ok &= r.status == Status::Pass;
        parts.push(format!(
            "{label}: C0_hat {:.4}, spread {:.2e}",
            r.value("C0_hat").unwrap_or(f64::NAN),
            r.value("spread").unwrap_or(f64::NAN)
        ));
        for n in &r.notes {
            parts.push(n.clone());
        }
    }
    ok &= started.elapsed().as_secs_f64() < 300.0;
    report(
        6,
        "absorbing set independent of the initial amplitude",
        ok,
        parts.join("; "),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 7. continuous dependence
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_contraction() {
    let started = Instant::now();
    let mut c = RunConfig::new(grid(32), 1.0);
    c.stepper.dt = 1e-3;
    c.output_every = 10;
    c.seed = 23;
    c.contract.perturbation = 1e-6;
    let r = contraction_experiment(&c).unwrap();
    let identical = zero_perturbation_identical(&c).unwrap();
    let rel = r.value("relative_difference").unwrap();
    let gap = r.value("max_curve_gap").unwrap();
    let ok = r.status == Status::Pass && rel <= 0.2 && gap <= 0.2 && identical;
    report(
        7,
        "linear response of trajectory differences",
        ok,
        format!(
            "C(T) {:.6} vs {:.6} (relative difference {rel:.2e}), D(T)/D(0) {:.6e} vs {:.6e}, max curve gap {gap:.2e}; zero perturbation bitwise identical: {identical}",
            r.value("C_T_full").unwrap(),
            r.value("C_T_half").unwrap(),
            r.value("final_ratio_full").unwrap(),
            r.value("final_ratio_half").unwrap()
        ),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 8. truncated nonlinearity
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_truncation() {
    let started = Instant::now();
    let mut c = RunConfig::new(grid(32), 1.0);
    c.stepper.dt = 2e-3;
    c.seed = 29;
    c.converge.kind = ConvergeKind::Truncation;
    c.converge.levels = vec![2.0, 4.0, 8.0];
    let r = convergence_study(&c).unwrap();
    let peak = r.value("max_abs_phi").unwrap();
    let worst = [2.0, 4.0, 8.0]
        .iter()
        .map(|l| r.value(&format!("difference[{l}]")).unwrap())
        .fold(0.0, f64::max);
    let ok = r.status == Status::Pass;
    report(
        8,
        "truncation levels 2, 4, 8 agree with the untruncated run",
        ok,
        format!("max |phi| {peak:.3}, max coefficient difference {worst:.2e}"),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 9. convergence orders
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_convergence() {
    let started = Instant::now();
    let mut base = RunConfig::new(grid(16), 0.2);
    base.seed = 31;
    base.converge.kind = ConvergeKind::Temporal;

    let mut cn = base.clone();
    cn.converge.dts = vec![4e-3, 2e-3, 1e-3];
    let rcn = convergence_study(&cn).unwrap();

    let mut rk = base.clone();
    rk.stepper.scheme = Scheme::Rk4;
    rk.converge.dts = vec![4e-4, 2e-4, 1e-4];
    rk.converge.reference_factor = 10;
    let rrk = convergence_study(&rk).unwrap();

    let mut sp = RunConfig::new(grid(16), 0.1);
    sp.initial = InitialSpec::Analytic { amplitude: 0.5 };
    sp.stepper.dt = 1e-3;
    sp.converge.kind = ConvergeKind::Spatial;
    sp.converge.resolutions = vec![16, 32, 64];
    let rsp = convergence_study(&sp).unwrap();

    let get = |r: &nsac_core::experiments::ExperimentReport, prefix: &str| -> Vec<f64> {
        r.summary
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .collect()
    };
    let ok = rcn.status == Status::Pass && rrk.status == Status::Pass && rsp.status == Status::Pass;
    report(
        9,
        "temporal orders and spectral spatial convergence",
        ok,
        format!(
            "CNAB2 orders {:.3?}, RK4 orders {:.3?}, spatial ratios {:.1?}",
            get(&rcn, "order"),
            get(&rrk, "order"),
            get(&rsp, "ratio")
        ),
        started,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 10. restart and CSV integrity
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_io_integrity() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(grid(16), 0.2);
    c.stepper.dt = 1e-3;
    c.seed = 37;
    c.output_every = 10;
    c.snapshot_every = Some(100);
    let full = run_simulation(&c, Some(dir.path())).unwrap();

    let snap_path = dir.path().join("snapshot_00000100.bin");
    let snap = read_snapshot(&snap_path).unwrap();
    let mut restart = c.clone();
    restart.initial = InitialSpec::Snapshot { path: snap_path };
    restart.snapshot_every = None;
    let resumed = run_simulation(&restart, None).unwrap();
    let restart_ok = bitwise_equal(&resumed.final_state, &full.final_state)
        && snap.step == 100
        && resumed.steps == full.steps;

    let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let rows = read_diagnostics(text.as_bytes()).unwrap();
    let mut rewritten = DiagnosticsWriter::new(Vec::new());
    for r in &full.energies {
        rewritten.write(r).unwrap();
    }
    let csv_ok = rows.len() == full.energies.len()
        && rows.iter().zip(&full.energies).all(|(row, r)| {
            row.iter()
                .zip(nsac_core::io::csv_row(r).iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
        })
        && String::from_utf8(rewritten.into_inner()).unwrap() == text;
    let ok = restart_ok && csv_ok;
    report(
        10,
        "snapshot restart is bitwise; CSV round trip is lossless",
        ok,
        format!("restart bitwise: {restart_ok}, CSV lossless: {csv_ok}"),
        started,
    );
    assert!(ok);
}
