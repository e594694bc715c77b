use eqpnp::analysis::composed_lipschitz;
use eqpnp::denoisers::{HaarSoftThresholdDenoiser, LinearMatrixDenoiser, TinyConvDenoiser};
use eqpnp::operators::{
    make_gaussian_kernel, simulate, BlurOperator, InpaintingOperator, LinearOperator, Measurement,
};
use eqpnp::solvers::{
    pnp_fb, pnp_fb_observed, red_gd, red_gd_observed, relative_change, ula, ula_observed,
    Equivariance, Init, SolverConfig,
};
use eqpnp::toy::toy_example;
use eqpnp::{DenseMatrix, ExecPolicy, GroupSpec, Image, SeededRng};

fn problem(seed: u64) -> (BlurOperator, Measurement, Image) {
    let x = eqpnp::io::make_phantom("shepp_like", 16, 16).unwrap();
    let a = BlurOperator::new(make_gaussian_kernel(1.0, 5).unwrap(), 16, 16).unwrap();
    let y = simulate(&a, &x, 0.02, &mut SeededRng::new(seed).derive("noise")).unwrap();
    (a, y, x)
}

fn modes() -> [Equivariance; 3] {
    [
        Equivariance::None,
        Equivariance::MonteCarlo(GroupSpec::D4),
        Equivariance::Reynolds(GroupSpec::D4),
    ]
}

#[test]
fn runs_are_bit_reproducible() {
    let (a, y, x) = problem(1);
    let d = TinyConvDenoiser::reference();
    for eq in modes() {
        let cfg = SolverConfig {
            gamma: 0.5,
            sigma: 0.05,
            max_iters: 30,
            seed: 4,
            equivariance: eq,
            ..SolverConfig::default()
        };
        let p1 = pnp_fb(&a, &y, &d, &cfg, Some(&x)).unwrap();
        let p2 = pnp_fb(&a, &y, &d, &cfg, Some(&x)).unwrap();
        assert_eq!(p1.x, p2.x);
        assert_eq!(p1.trace.to_csv(), p2.trace.to_csv());

        let red_cfg = SolverConfig {
            lambda: Some(0.5),
            ..cfg.clone()
        };
        let r1 = red_gd(&a, &y, &d, &red_cfg, Some(&x)).unwrap();
        let r2 = red_gd(&a, &y, &d, &red_cfg, Some(&x)).unwrap();
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.trace.to_csv(), r2.trace.to_csv());

        let ula_cfg = SolverConfig {
            gamma: 0.01,
            burn_in: 10,
            ..red_cfg
        };
        let u1 = ula(&a, &y, &d, &ula_cfg, Some(&x)).unwrap();
        let u2 = ula(&a, &y, &d, &ula_cfg, Some(&x)).unwrap();
        assert_eq!(u1.stats, u2.stats);
        assert_eq!(u1.trace.to_csv(), u2.trace.to_csv());
    }
}

#[test]
fn seeds_change_mc_runs_only() {
    let (a, y, _) = problem(1);
    let d = TinyConvDenoiser::reference();
    let run = |eq, seed| {
        let cfg = SolverConfig {
            gamma: 0.5,
            sigma: 0.05,
            max_iters: 10,
            seed,
            equivariance: eq,
            ..SolverConfig::default()
        };
        pnp_fb(&a, &y, &d, &cfg, None).unwrap().x
    };
    for eq in modes() {
        let same = run(eq, 1) == run(eq, 2);
        assert_eq!(same, !matches!(eq, Equivariance::MonteCarlo(_)), "{eq:?}");
    }
}

#[test]
fn trace_residual_is_the_relative_step() {
    let (a, y, x) = problem(2);
    let d = HaarSoftThresholdDenoiser::new(2, 1.0).unwrap();
    let cfg = SolverConfig {
        gamma: 1.0,
        sigma: 0.05,
        max_iters: 12,
        ..SolverConfig::default()
    };
    let mut iterates = Vec::new();
    let run = pnp_fb_observed(&a, &y, &d, &cfg, Some(&x), &mut |_, v| {
        iterates.push(v.clone())
    })
    .unwrap();
    assert_eq!(iterates.len(), 13);
    assert_eq!(iterates[0], a.adjoint(&y).unwrap());
    for r in &run.trace.records {
        let k = r.iter;
        let offline =
            (iterates[k].sub(&iterates[k - 1]).unwrap().norm2()) / iterates[k - 1].norm2();
        assert_eq!(r.residual, offline);
        assert_eq!(r.residual, relative_change(&iterates[k], &iterates[k - 1]));
    }
}

#[test]
fn monte_carlo_over_the_trivial_group_is_plain() {
    let (a, y, x) = problem(3);
    let d = TinyConvDenoiser::reference();
    let cfg = |eq| SolverConfig {
        gamma: 0.5,
        sigma: 0.05,
        max_iters: 20,
        equivariance: eq,
        ..SolverConfig::default()
    };
    let plain = pnp_fb(&a, &y, &d, &cfg(Equivariance::None), Some(&x)).unwrap();
    let mc = pnp_fb(
        &a,
        &y,
        &d,
        &cfg(Equivariance::MonteCarlo(GroupSpec::Trivial)),
        Some(&x),
    )
    .unwrap();
    let rey = pnp_fb(
        &a,
        &y,
        &d,
        &cfg(Equivariance::Reynolds(GroupSpec::Trivial)),
        Some(&x),
    )
    .unwrap();
    assert_eq!(plain.x, mc.x);
    assert_eq!(plain.x, rey.x);
}

#[test]
fn noiseless_ula_with_tiny_steps_is_red() {
    let (a, y, _) = problem(4);
    let d = TinyConvDenoiser::reference();
    let cfg = SolverConfig {
        gamma: 1e-6,
        lambda: Some(1.0),
        sigma: 0.05,
        max_iters: 50,
        langevin_noise: false,
        ..SolverConfig::default()
    };
    let mut red_path = Vec::new();
    red_gd_observed(&a, &y, &d, &cfg, None, &mut |_, v| red_path.push(v.clone())).unwrap();
    let mut ula_path = Vec::new();
    ula_observed(&a, &y, &d, &cfg, None, &mut |_, v| ula_path.push(v.clone())).unwrap();
    assert_eq!(red_path.len(), ula_path.len());
    for (r, u) in red_path.iter().zip(&ula_path) {
        let err = r
            .sub(u)
            .unwrap()
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-9, "{err:e}");
    }
}

#[test]
fn contraction_witness_bounds_the_steps() {
    let mut rng = SeededRng::new(5);
    let a = InpaintingOperator::random(4, 4, 0.5, &mut rng).unwrap();
    let m = DenseMatrix::new(16, 16, rng.gaussian_vec(256))
        .unwrap()
        .scale(0.05);
    let d = LinearMatrixDenoiser::new(m).unwrap();
    let y = Measurement::Real(Image::from_fn(4, 4, |_, _| rng.gaussian()));
    let probe = Image::from_fn(4, 4, |_, _| rng.gaussian());
    let rho = composed_lipschitz(&d, &a, 1.0, &probe, 0.0, ExecPolicy::Sequential).unwrap();
    assert!(rho < 1.0, "{rho}");
    let cfg = SolverConfig {
        gamma: 1.0,
        max_iters: 25,
        init: Init::Given(Image::from_fn(4, 4, |i, j| (i * 4 + j) as f64)),
        ..SolverConfig::default()
    };
    let mut path = Vec::new();
    pnp_fb_observed(&a, &y, &d, &cfg, None, &mut |_, v| path.push(v.clone())).unwrap();
    let steps: Vec<f64> = path
        .windows(2)
        .map(|w| w[1].sub(&w[0]).unwrap().norm2())
        .collect();
    for s in steps.windows(2) {
        // Below this the differences are round-off.
        if s[0] > 1e-12 {
            assert!(
                s[1] <= (rho + 1e-6) * s[0],
                "{} > ({rho} + 1e-6) * {}",
                s[1],
                s[0]
            );
        }
    }
}

#[test]
fn first_toy_example_diverges_without_averaging() {
    let p = toy_example(1).unwrap();
    let plain = p.run(false).unwrap();
    assert!(plain.run.status.is_diverged());
    let eq = p.run(true).unwrap();
    assert_eq!(eq.run.status.label(), "converged");
    assert_eq!(eq.limit(), [0.0, 0.0]);
}

#[test]
fn parallel_reynolds_matches_sequential() {
    let (a, y, x) = problem(6);
    let d = TinyConvDenoiser::reference();
    let cfg = |policy| SolverConfig {
        gamma: 0.5,
        sigma: 0.05,
        max_iters: 15,
        equivariance: Equivariance::Reynolds(GroupSpec::D4),
        policy,
        ..SolverConfig::default()
    };
    let s = pnp_fb(&a, &y, &d, &cfg(ExecPolicy::Sequential), Some(&x)).unwrap();
    let p = pnp_fb(&a, &y, &d, &cfg(ExecPolicy::Parallel), Some(&x)).unwrap();
    assert_eq!(s.x, p.x);
}
