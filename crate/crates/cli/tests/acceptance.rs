//! Acceptance criteria. Each criterion prints one PASS/FAIL line to the real
//! stdout, so the table is visible even when the harness captures output.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use detline_core::boundary::{
    self, check_self_adjoint, normalized_endpoint_data, reduced_boundary_form, SelfAdjointStatus,
};
use detline_core::expr::Params;
use detline_core::gelfand::{det_ratio, BCase, RatioOptions};
use detline_core::linalg::{c, real, CMatrix};
use detline_core::odeprop::{propagate_fundamental, propagate_fundamental_between, Potential};
use detline_core::oracle::{
    airy_dirichlet_ratio, analytic_fundamental_twisted, eigenvalue_scan, truncated_product_ratio,
    ScanOptions,
};
use detline_core::zeromode::{
    self, b_constant, det_ratio_primed, normalized_zero_mode, ZeroModeHandling,
};
use detline_core::{BoundarySpec, Controls, DetError, Problem};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Verdict);

fn report(id: usize, title: &str, verdict: &Verdict, seconds: f64) {
    let (status, detail) = match verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let line = format!("criterion {id:>2} [{status}] {title}: {detail} ({seconds:.1}s)\n");
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = lock.write_all(line.as_bytes());
    let _ = lock.flush();
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn scalar(q: &str) -> Result<Problem, String> {
    Problem::scalar(0.0, 1.0, q).map_err(|err| err.to_string())
}

fn opts() -> RatioOptions {
    RatioOptions::default()
}

fn airy_dirichlet() -> Verdict {
    let g = det_ratio(
        &scalar("x")?,
        &scalar("0")?,
        &BoundarySpec::dirichlet(1),
        &opts(),
    )
    .map_err(e)?
    .value();
    let reference = airy_dirichlet_ratio(0.0).map_err(e)?;
    check(
        (g - 1.085).abs() <= 1e-3 && (g - reference).abs() <= 1e-9,
        format!(
            "ratio {g:.10}, |ratio − 1.085| = {:.2e} ≤ 1e-3, Airy reference {reference:.10}",
            (g - 1.085).abs()
        ),
    )
}

fn airy_zero_mode() -> Verdict {
    let bc = BoundarySpec::dirichlet(1);
    let x0 = eigenvalue_scan(&scalar("x")?, &bc, 1, &ScanOptions::default())
        .map_err(e)?
        .eigenvalues[0];
    let p1 = scalar(&format!("x - ({x0:e})"))?;
    let v = det_ratio_primed(&p1, &scalar("0")?, &bc, &opts())
        .map_err(e)?
        .value();
    check(
        (x0 - 10.3685).abs() <= 1e-3 && (v - 0.050666).abs() <= 1e-4,
        format!(
            "x0 = {x0:.10}, det' ratio = {v:.10}, |Δ| = {:.2e} ≤ 1e-4",
            (v - 0.050666).abs()
        ),
    )
}

fn asymptotics() -> Verdict {
    let x0 = 0.0;
    let list = eigenvalue_scan(
        &scalar("x")?,
        &BoundarySpec::dirichlet(1),
        5,
        &ScanOptions::default(),
    )
    .map_err(e)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, l) in list.eigenvalues.iter().enumerate() {
        let n2pi2 = ((k + 1) as f64 * PI).powi(2);
        let dev = (l + x0 - (n2pi2 + 0.5)).abs() / n2pi2;
        ok &= dev <= 1e-4;
        parts.push(format!("n={} {:.3e}", k + 1, dev));
    }
    check(
        ok,
        format!("relative deviations [{}], bound 1e-4", parts.join(", ")),
    )
}

fn twisted_problem(mu: f64, l: f64) -> Result<Problem, String> {
    let q = Potential::parse_matrix(&[
        vec!["1 - 2*mu^2", "(1 - mu^2)*exp(2*i*mu*x)"],
        vec!["(1 - mu^2)*exp(-2*i*mu*x)", "1 - 2*mu^2"],
    ])
    .map_err(|err| err.to_string())?;
    let mut params = Params::new();
    params.insert("mu".into(), real(mu));
    Problem::new(-l / 2.0, l / 2.0, q, params).map_err(|err| err.to_string())
}

fn two_component() -> Verdict {
    let (mu, l) = (0.3, 4.0);
    let p1 = twisted_problem(mu, l)?;
    let zero = Potential::parse_matrix(&[vec!["0", "0"], vec!["0", "0"]])
        .map_err(|err| err.to_string())?;
    let p2 = Problem::new(-l / 2.0, l / 2.0, zero, Params::new()).map_err(|err| err.to_string())?;
    let bc = BoundarySpec::twisted(mu, l).map_err(|err| err.to_string())?;
    let rep = zeromode::ratio(&p1, &p2, &bc, ZeroModeHandling::Force, &opts()).map_err(e)?;
    let nu = (2.0 * (1.0 - 3.0 * mu * mu)).sqrt();
    let want = 8.0 * l * l * (1.0 - mu * mu) * (l * nu / 2.0).sinh().powi(2) / (nu * nu);
    let rel = (rep.numerator - want).norm() / want;
    check(
        rel <= 1e-6,
        format!(
            "f10 = {:.10}, closed form {want:.10}, relative {rel:.2e} ≤ 1e-6",
            rep.numerator.re
        ),
    )
}

fn appendix_oracle() -> Verdict {
    let (mu, l) = (0.25, 2.0);
    let p = twisted_problem(mu, l)?;
    let controls = Controls::default();
    let first =
        propagate_fundamental(&p, real(0.0), &controls.clone().with_trajectory()).map_err(e)?;
    let start = &first.trajectory.as_ref().ok_or("no trajectory")?[0];
    let exact_identity = start.0 == -l / 2.0 && start.1 == CMatrix::identity(4, 4);
    let mut worst: f64 = 0.0;
    for k in 1..=10 {
        let x = -l / 2.0 + l * k as f64 / 10.0;
        let numeric =
            propagate_fundamental_between(&p, real(0.0), -l / 2.0, x, &controls).map_err(e)?;
        let analytic = analytic_fundamental_twisted(x, mu, l).map_err(e)?;
        worst = worst.max(
            (numeric.end - analytic)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
        );
    }
    check(
        exact_identity && worst <= 1e-8,
        format!("Y(−l/2) = I₄ exactly: {exact_identity}; max entrywise error over 11 points {worst:.2e} ≤ 1e-8"),
    )
}

fn no_zero_mode_oracle() -> Verdict {
    let (p1, p2) = (scalar("x")?, scalar("0")?);
    let bc = BoundarySpec::dirichlet(1);
    let g = det_ratio(&p1, &p2, &bc, &opts()).map_err(e)?.value();
    let product =
        truncated_product_ratio(&p1, &p2, &bc, 200, false, &ScanOptions::default()).map_err(e)?;
    let d200 = (product.value - g).abs() / g;
    let d25 = (product.prefix(25).map_err(e)? - g).abs() / g;
    check(
        d200 <= 0.01 && d200 < d25,
        format!("N=200 deviation {d200:.3e} ≤ 1e-2, N=25 deviation {d25:.3e}"),
    )
}

fn zero_mode_oracle() -> Verdict {
    let (p1, p2) = (scalar("-pi^2")?, scalar("0")?);
    let bc = BoundarySpec::dirichlet(1);
    let v = det_ratio_primed(&p1, &p2, &bc, &opts()).map_err(e)?.value();
    let analytic = 0.05066059182;
    let product =
        truncated_product_ratio(&p1, &p2, &bc, 500, true, &ScanOptions::default()).map_err(e)?;
    let dev = (product.value - v).abs() / v;
    check(
        (v - analytic).abs() <= 1e-8 && (v - 0.5 / (PI * PI)).abs() <= 1e-8 && dev <= 5e-3,
        format!("det' ratio {v:.12}, |Δ| = {:.2e} ≤ 1e-8; skip-zero N=500 product deviation {dev:.3e} ≤ 5e-3", (v - analytic).abs()),
    )
}

fn periodic_closed_forms() -> Verdict {
    let bc = BoundarySpec::periodic(1);
    let primed = det_ratio_primed(&scalar("0")?, &scalar("1")?, &bc, &opts())
        .map_err(e)?
        .value();
    let plain = det_ratio(&scalar("1")?, &scalar("4")?, &bc, &opts())
        .map_err(e)?
        .value();
    let want_primed = 1.0 / (4.0 * 0.5f64.sinh().powi(2));
    let want_plain = 0.5f64.sinh().powi(2) / 1f64.sinh().powi(2);
    let (d1, d2) = ((primed - want_primed).abs(), (plain - want_plain).abs());
    check(
        d1 <= 1e-8 && d2 <= 1e-8,
        format!("det' deviation {d1:.2e}, plain deviation {d2:.2e}, bound 1e-8"),
    )
}

fn random_potential(rng: &mut StdRng) -> String {
    let c0: f64 = rng.random_range(-3.0..3.0);
    let c1: f64 = rng.random_range(-3.0..3.0);
    let c2: f64 = rng.random_range(-3.0..3.0);
    let w: f64 = rng.random_range(0.5..4.0);
    format!("({c0}) + ({c1})*x + ({c2})*cos(({w})*x)")
}

fn coupled(k: [f64; 4]) -> BoundarySpec {
    BoundarySpec::custom(
        1,
        -CMatrix::from_row_slice(2, 2, &k.map(real)),
        CMatrix::identity(2, 2),
    )
    .unwrap()
}

/// Robin (|A/B|, |C/D| ≤ 4), periodic, anti-periodic or an SL(2) coupling with |K₁₂| ≥ 0.5.
fn random_self_adjoint(rng: &mut StdRng) -> BoundarySpec {
    match rng.random_range(0..4) {
        0 => BoundarySpec::robin(
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..2.0),
        )
        .unwrap(),
        1 => BoundarySpec::periodic(1),
        2 => coupled([-1.0, 0.0, 0.0, -1.0]),
        _ => {
            let a: f64 = rng.random_range(0.5..2.0);
            let b: f64 = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let cc: f64 = rng.random_range(-1.0..1.0);
            coupled([a, b, cc, (1.0 + b * cc) / a])
        }
    }
}

fn property_suite() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let controls = Controls::default();

    // det H ≡ 1, problems with |H| ≲ 1e3.
    let mut drift: f64 = 0.0;
    for k in 0..100 {
        let r = 1 + k % 2;
        let diag = random_potential(&mut rng);
        let potential = if r == 1 {
            Potential::parse_scalar(&diag)
        } else {
            let off = format!("({})*sin(x)", rng.random_range(-2.0..2.0));
            Potential::parse_matrix(&[
                vec![diag.clone(), off.clone()],
                vec![off, random_potential(&mut rng)],
            ])
        }
        .map_err(|err| err.to_string())?;
        let len = rng.random_range(0.5..1.5);
        let p = Problem::new(0.0, len, potential, Params::new()).map_err(|err| err.to_string())?;
        let lam = c(rng.random_range(-2.0..30.0), rng.random_range(-2.0..2.0));
        let h = propagate_fundamental(&p, lam, &controls.clone().with_trajectory()).map_err(e)?;
        drift = drift.max(h.det_drift);
    }

    // det(M + N·H(b)) against the reduced boundary form.
    let mut reduced: f64 = 0.0;
    for k in 0..60 {
        let bc = if k % 3 == 2 {
            loop {
                let v: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
                let m = CMatrix::from_row_slice(2, 2, &[v[0], v[1], v[2], v[3]].map(real));
                let n = CMatrix::from_row_slice(2, 2, &[v[4], v[5], v[6], v[7]].map(real));
                if let Ok(bc) = BoundarySpec::custom(1, m, n) {
                    break bc;
                }
            }
        } else {
            random_self_adjoint(&mut rng)
        };
        let p = scalar(&random_potential(&mut rng))?;
        let h =
            propagate_fundamental(&p, real(rng.random_range(-10.0..40.0)), &controls).map_err(e)?;
        let direct = boundary::characteristic(&bc, &h).map_err(|err| err.to_string())?;
        let data = normalized_endpoint_data(&bc, &h).map_err(|err| err.to_string())?;
        let form = reduced_boundary_form(&bc, &data).map_err(|err| err.to_string())?;
        reduced = reduced.max((direct - form).norm() / direct.norm().max(1.0));
    }

    // Applicable 𝓑 cases on zero-mode instances with a spectral gap ≥ 1.
    let mut b_spread: f64 = 0.0;
    let mut instances = 0;
    while instances < 16 {
        let bc = random_self_adjoint(&mut rng);
        let q = random_potential(&mut rng);
        let scan = eigenvalue_scan(&scalar(&q)?, &bc, 2, &ScanOptions::default()).map_err(e)?;
        if scan.eigenvalues[1] - scan.eigenvalues[0] < 1.0 {
            continue;
        }
        let p = scalar(&format!("{q} - ({:e})", scan.eigenvalues[0]))?;
        let zm = normalized_zero_mode(&p, &bc, &opts()).map_err(e)?;
        let b = b_constant(&zm).map_err(e)?;
        b_spread = b_spread.max(b.discrepancy);
        instances += 1;
    }

    // p1 = p2 under the named conditions.
    let mut trivial: f64 = 0.0;
    for _ in 0..10 {
        let p = scalar(&random_potential(&mut rng))?;
        for bc in [
            BoundarySpec::dirichlet(1),
            BoundarySpec::neumann(1),
            BoundarySpec::robin(1.0, 0.5, 2.0, 1.0).unwrap(),
            BoundarySpec::periodic(1),
        ] {
            let rep = det_ratio(&p, &p, &bc, &opts()).map_err(e)?;
            trivial = trivial.max((rep.ratio - 1.0).norm());
        }
    }
    check(
        drift <= 1e-10 && reduced <= 1e-10 && b_spread <= 1e-8 && trivial <= 1e-12,
        format!(
            "det drift {drift:.2e} ≤ 1e-10, reduced form {reduced:.2e} ≤ 1e-10, 𝓑 spread {b_spread:.2e} ≤ 1e-8, trivial ratio {trivial:.2e} ≤ 1e-12"
        ),
    )
}

fn self_adjoint_gate() -> Verdict {
    let named = [
        BoundarySpec::dirichlet(1),
        BoundarySpec::neumann(1),
        BoundarySpec::robin(1.0, 2.0, 3.0, 4.0).unwrap(),
        BoundarySpec::periodic(1),
    ];
    let all_pass = named
        .iter()
        .all(|bc| matches!(check_self_adjoint(bc), Ok(r) if r.status == SelfAdjointStatus::Pass));
    let bad = BoundarySpec::custom(
        1,
        CMatrix::identity(2, 2),
        CMatrix::identity(2, 2) * real(-2.0),
    )
    .unwrap();
    let fails = check_self_adjoint(&bad)
        .map_err(|err| err.to_string())?
        .status
        == SelfAdjointStatus::Fail;
    let p1 = scalar("log(2)^2")?;
    let refused = matches!(
        det_ratio_primed(&p1, &scalar("1")?, &bad, &opts()),
        Err(DetError::NotSelfAdjoint { .. })
    );
    let file =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems/non_self_adjoint.json");
    let code = Command::new(env!("CARGO_BIN_EXE_detline"))
        .args(["ratio", "--problem", file.to_str().unwrap()])
        .output()
        .map_err(|err| err.to_string())?
        .status
        .code();
    check(
        all_pass && fails && refused && code == Some(1),
        format!("named specs pass: {all_pass}; M=I, N=−2I fails: {fails}; primed refuses: {refused}; CLI exit code {code:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (1, "Airy Dirichlet ratio", airy_dirichlet),
        (2, "zero-mode Airy", airy_zero_mode),
        (3, "eigenvalue asymptotics", asymptotics),
        (4, "two-component closed form", two_component),
        (5, "closed-form 4×4 propagation", appendix_oracle),
        (6, "oracle equivalence, no zero mode", no_zero_mode_oracle),
        (7, "oracle equivalence, zero mode", zero_mode_oracle),
        (8, "periodic closed forms", periodic_closed_forms),
        (9, "property suite", property_suite),
        (10, "self-adjointness gate", self_adjoint_gate),
    ];
    let mut failed = Vec::new();
    for (id, title, run) in criteria {
        let t = Instant::now();
        let verdict = run();
        report(id, title, &verdict, t.elapsed().as_secs_f64());
        if verdict.is_err() {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn b_case_for_twisted_is_system() {
    let (mu, l) = (0.3, 4.0);
    let p1 = twisted_problem(mu, l).unwrap();
    let zm = normalized_zero_mode(
        &p1,
        &BoundarySpec::twisted(mu, l).unwrap(),
        &RatioOptions {
            allow_unverified: true,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(b_constant(&zm).unwrap().case, BCase::System);
}
