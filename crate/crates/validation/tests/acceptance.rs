//! Acceptance run: one line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::Instant;

use disorder_chain::dynamics::apply_exponential;
use disorder_chain::linalg::CsrMatrix;
use disorder_chain::measures::{recurrence_analytic, recurrence_stieltjes};
use disorder_chain::prelude::*;
use disorder_chain::quadrature::gauss_rule;
use disorder_chain_validation::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), Box<dyn std::error::Error>>;

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn plus_state() -> Vec<C64> {
    let s = 0.5f64.sqrt();
    vec![real(s), real(s)]
}

/// Fig. 2 setting: E1 - E0 = 1 and each width parameter equal to it.
fn qubit_exactness(r: &mut Report) -> Outcome {
    let cases = [
        ("1", "gaussian", DisorderDistribution::gaussian(1.0)?),
        ("1", "semicircle", DisorderDistribution::semicircle(1.0)?),
        ("1", "uniform", DisorderDistribution::uniform(1.0)?),
    ];
    for (id, name, dist) in cases {
        let spec = qubit(0.0, 1.0, dist.clone());
        let plan = PropagationPlan::uniform(6.0, 200)?;
        let started = Instant::now();
        let c = plus_state();
        let run = auto_depth(&spec, &[], |b| localized_initial(&c, b), &plan, DEFAULT_DEPTH_CAP)?;
        let elapsed = started.elapsed();
        let exact = analytic_qubit(c[0], c[1], 0.0, 1.0, &dist, &plan.times)?;
        let err = run
            .trajectory
            .coherence(0, 1)
            .iter()
            .zip(exact.coherence(0, 1))
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0, f64::max);
        r.at_most(
            id,
            &format!("{name} qubit |rho01| chain vs closed form, depth {}", run.depths[0]),
            err,
            QUBIT_EXACTNESS,
        );
        r.check(
            id,
            elapsed <= QUBIT_RUNTIME,
            format!("{name} auto-depth runtime {:.2} s (limit {} s)", elapsed.as_secs_f64(), QUBIT_RUNTIME.as_secs()),
        );
    }
    Ok(())
}

fn cauchy_cutoff(r: &mut Report) -> Outcome {
    let uncut = DisorderDistribution::cauchy(1.0)?;
    let cut = apply_cutoff(&uncut, -30.0, 30.0)?;
    let spec = qubit(0.0, 1.0, cut);
    let plan = PropagationPlan::uniform(6.0, 121)?;
    let c = plus_state();
    let chain = auto_depth(&spec, &[], |b| localized_initial(&c, b), &plan, DEFAULT_DEPTH_CAP)?;
    let cfg = OracleConfig { samples: 100_000, seed: 20_240_601, ..Default::default() };
    let mc = mc_average(&spec, |_: &[f64]| c.clone(), &plan.times, &cfg)?;
    let (excess, ratio) = sem_excess(&chain.trajectory, &mc, SEM_BAND, SEM_FLOOR);
    r.at_most(
        "2a",
        &format!("cut Cauchy chain (depth {}) minus 4 SEM vs cut MC 1e5, worst |d|/SEM {ratio:.2}", chain.depths[0]),
        excess,
        0.0,
    );
    let exact = analytic_qubit(c[0], c[1], 0.0, 1.0, &uncut, &plan.times)?;
    r.at_most("2b", "cut Cauchy chain vs uncut closed form e^{-t}", chain.trajectory.max_abs_diff(&exact), CAUCHY_UNCUT);
    Ok(())
}

/// Fig. 3 dimer in cm^-1, two picoseconds; both methods use the same
/// five-sigma energy window.
fn dimer_populations(r: &mut Report) -> Outcome {
    let (e1, e2, v, sigma) = (12325.0, 12025.0, 273.0, 200.0);
    let spec = dimer(e1, e2, v, sigma, 5.0);
    let t_max = 2e-12 * 2.0 * PI * 2.997_924_58e10;
    let mut plan = PropagationPlan::uniform(t_max, 101)?;
    let depth = 256;
    let (basis, h) = chain_map(&spec, &[depth, depth])?;
    let psi0 = localized_initial(&[real(1.0), real(0.0)], &basis)?;
    plan.max_krylov_dim = 30;
    let (chain, ev) = evolve_reduced(&h, &psi0, &plan)?;
    let cfg = OracleConfig { quad_order: vec![300], ..Default::default() };
    let quad = quad_average(&spec, |_: &[f64]| vec![real(1.0), real(0.0)], &plan.times, &cfg)?;
    let err = chain
        .population(0)
        .iter()
        .zip(quad.population(0))
        .chain(chain.population(1).iter().zip(quad.population(1)))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.at_most(
        "3a",
        &format!("dimer populations chain {depth}x{depth} vs quadrature 300x300 (boundary population {:.1e})", ev.leakage.max()),
        err,
        DIMER_AGREEMENT,
    );

    let p1 = chain.population(0);
    let late = &p1[3 * (p1.len() - 1) / 4..];
    let mean = late.iter().sum::<f64>() / late.len() as f64;
    let var = late.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / late.len() as f64;
    r.above("3b", "variance of P1 over the last quarter", var, DIMER_LATE_VARIANCE);
    // disorder-free P1 = 1 - (V/Omega)^2 sin^2(Omega t)
    let omega2 = 0.25 * (e1 - e2) * (e1 - e2) + v * v;
    let lo = 1.0 - v * v / omega2;
    r.check(
        "3c",
        mean > lo && mean < 1.0,
        format!("late-time mean P1 {mean:.4} strictly inside unitary range ({lo:.4}, 1)"),
    );
    Ok(())
}

fn conservation(r: &mut Report) -> Outcome {
    let plan = PropagationPlan::uniform(6.0, 61)?;
    let mut worst_diag: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    let mut worst_herm: f64 = 0.0;
    let mut record = |traj: &DensityTrajectory, diagonal: bool| {
        if diagonal {
            for n in 0..traj.n() {
                let p = traj.population(n);
                worst_diag = p.iter().map(|x| (x - p[0]).abs()).fold(worst_diag, f64::max);
            }
        }
        worst_trace = worst_trace.max(traj.max_trace_defect());
        worst_eig = worst_eig.min(traj.min_eigenvalue());
        worst_herm = worst_herm.max(traj.max_hermiticity_defect());
    };

    let a = [real(0.6), C64::new(0.0, 0.8)];
    for dist in [
        DisorderDistribution::gaussian(1.0)?,
        DisorderDistribution::semicircle(1.0)?,
        DisorderDistribution::uniform(1.0)?,
    ] {
        let (basis, h) = chain_map(&qubit(0.0, 1.0, dist), &[128])?;
        let run = propagate(&h, &localized_initial(&a, &basis)?, &plan)?;
        record(&DensityTrajectory::from_states(&plan.times, &run.states), true);
    }

    // three levels, two diagonal disorder axes
    let mut h0 = CMatrix::zeros(3, 3);
    h0[(1, 1)] = real(1.0);
    h0[(2, 2)] = real(2.5);
    let mut c1 = CMatrix::zeros(3, 3);
    c1[(1, 1)] = real(1.0);
    let mut c2 = CMatrix::zeros(3, 3);
    c2[(2, 2)] = real(1.0);
    c2[(1, 1)] = real(-0.5);
    let spec = EnsembleSpec::new(
        h0.clone(),
        vec![Coupling::Linear(c1.clone()), Coupling::Linear(c2.clone())],
        vec![DisorderDistribution::gaussian(0.5)?, DisorderDistribution::uniform(0.7)?],
    )?;
    let three = [real(0.5), C64::new(0.0, 0.5), real(0.5f64.sqrt())];
    let plan4 = PropagationPlan::uniform(4.0, 41)?;
    let (basis, h) = chain_map(&spec, &[32, 32])?;
    let run = propagate(&h, &localized_initial(&three, &basis)?, &plan4)?;
    record(&DensityTrajectory::from_states(&plan4.times, &run.states), true);

    // same lattice with transverse couplings: only trace and positivity hold
    h0[(0, 1)] = real(0.3);
    h0[(1, 0)] = real(0.3);
    h0[(1, 2)] = C64::new(0.2, 0.1);
    h0[(2, 1)] = C64::new(0.2, -0.1);
    let spec = EnsembleSpec::new(
        h0,
        vec![Coupling::Linear(c1), Coupling::Linear(c2)],
        vec![DisorderDistribution::gaussian(0.5)?, DisorderDistribution::uniform(0.7)?],
    )?;
    let (basis, h) = chain_map(&spec, &[32, 32])?;
    let run = propagate(&h, &localized_initial(&three, &basis)?, &plan4)?;
    record(&DensityTrajectory::from_states(&plan4.times, &run.states), false);

    r.at_most("4", "dephasing models: max drift of diagonal rho entries", worst_diag, CONSERVATION);
    r.at_most("4", "max |tr rho - 1|", worst_trace, CONSERVATION);
    r.at_most("4", "most negative rho eigenvalue (negated)", -worst_eig, CONSERVATION);
    r.at_most("4", "max |rho - rho^dagger|", worst_herm, HERMITICITY);
    Ok(())
}

fn recurrences(r: &mut Report) -> Outcome {
    let order = 50;
    let points = 4000;
    let g = DisorderDistribution::gaussian(1.0)?;
    let cases = [
        ("gaussian", apply_cutoff(&g, -16.0, 16.0)?, g.clone()),
        ("semicircle", DisorderDistribution::semicircle(1.0)?, DisorderDistribution::semicircle(1.0)?),
        ("uniform", DisorderDistribution::uniform(1.0)?, DisorderDistribution::uniform(1.0)?),
    ];
    for (name, discretized, closed) in &cases {
        let s = recurrence_stieltjes(discretized, order, points)?;
        let a = recurrence_analytic(closed, order)?;
        let err = (0..=25)
            .map(|k| (s.alpha(k) - a.alpha(k)).abs().max((s.betas()[k] - a.betas()[k]).abs()))
            .fold(0.0, f64::max);
        r.at_most("5a", &format!("{name} Stieltjes vs closed-form coefficients, k <= 25"), err, RECURRENCE_AGREEMENT);
    }
    for (name, _, closed) in &cases {
        let table = recurrence_analytic(closed, 40)?;
        let mut worst: f64 = 0.0;
        for q in [1, 2, 3, 5, 10, 20, 40] {
            let rule = gauss_rule(&table, q)?;
            for m in 0..2 * q as u32 {
                let got = rule.integrate(|x| x.powi(m as i32));
                let exact = closed.moment(m)?;
                worst = worst.max((got - exact).abs() / absolute_moment(closed, m));
            }
        }
        r.at_most("5b", &format!("{name} Gauss rules Q <= 40, moments m <= 2Q-1, relative"), worst, MOMENT_EXACTNESS);
    }
    Ok(())
}

fn reverse_map(r: &mut Report) -> Outcome {
    let g = 1.0;
    let t_max = 20.0 / g;
    let spec = chain_to_ensemble(g, &CMatrix::zeros(1, 1), 0)?;
    let depth = 96;
    let (basis, h) = chain_map(&spec, &[depth])?;
    let plan = PropagationPlan::uniform(t_max, 201)?;
    let run = propagate(&h, &localized_initial(&[real(1.0)], &basis)?, &plan)?;
    let err = run
        .states
        .iter()
        .zip(&plan.times)
        .map(|(s, &t)| (s.amplitudes()[0] - real(bessel_envelope(2.0 * g * t))).norm())
        .fold(0.0, f64::max);
    r.at_most("6a", &format!("constant chain g=1 depth {depth}: survival amplitude vs 2J1(2gt)/(2gt)"), err, SURVIVAL_AGREEMENT);

    let g = 0.5;
    let mut cell = CMatrix::zeros(2, 2);
    cell[(0, 1)] = real(0.4);
    cell[(1, 0)] = real(0.4);
    cell[(1, 1)] = real(0.7);
    let spec = chain_to_ensemble(g, &cell, 1)?;
    let plan = PropagationPlan::uniform(10.0, 101)?;
    let (basis, h) = chain_map(&spec, &[64])?;
    let run = propagate(&h, &localized_initial(&[real(1.0), real(0.0)], &basis)?, &plan)?;
    let chain = DensityTrajectory::from_states(&plan.times, &run.states);
    let cfg = OracleConfig { samples: 100_000, seed: 7, ..Default::default() };
    let mc = mc_average(&spec, |_: &[f64]| vec![real(1.0), real(0.0)], &plan.times, &cfg)?;
    let (excess, ratio) = sem_excess(&chain, &mc, SEM_BAND, SEM_FLOOR);
    r.at_most("6b", &format!("qubit cell on a g=0.5 chain minus 4 SEM vs semicircle MC 1e5, worst |d|/SEM {ratio:.2}"), excess, 0.0);
    Ok(())
}

/// Random linear ensembles with lattice dimension at most 500.
fn random_lattice(rng: &mut ChaCha8Rng) -> Result<(LatticeOperator, LatticeState), Box<dyn std::error::Error>> {
    let n = rng.random_range(2..=4);
    let l = rng.random_range(1..=2);
    let herm = |rng: &mut ChaCha8Rng| {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = real(rng.random_range(-1.0..1.0));
            for j in i + 1..n {
                let z = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    };
    let h0 = herm(rng);
    let couplings = (0..l).map(|_| Coupling::Linear(herm(rng))).collect();
    let dists = (0..l)
        .map(|_| match rng.random_range(0..3) {
            0 => DisorderDistribution::gaussian(rng.random_range(0.2..1.5)),
            1 => DisorderDistribution::semicircle(rng.random_range(0.2..1.5)),
            _ => DisorderDistribution::uniform(rng.random_range(0.2..1.5)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = EnsembleSpec::new(h0, couplings, dists)?;
    let nodes_max = 500 / n;
    let depth = if l == 1 { nodes_max - 1 } else { (nodes_max as f64).sqrt() as usize - 1 };
    let (basis, h) = chain_map(&spec, &vec![depth; l])?;
    assert!(basis.dim() <= 500);
    let mut amp: Vec<C64> =
        (0..basis.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm = amp.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    amp.iter_mut().for_each(|v| *v /= norm);
    Ok((h, LatticeState::from_amplitudes(basis, amp)?))
}

fn energy(h: &CsrMatrix, psi: &[C64]) -> f64 {
    let mut y = vec![real(0.0); psi.len()];
    h.apply(psi, &mut y);
    psi.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn propagator_properties(r: &mut Report) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let t_max = 5.0;
    let plan = PropagationPlan::uniform(t_max, 26)?;
    let tol = plan.tol;
    let (mut unitarity, mut reversal, mut drift, mut halving): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let cases = 24;
    for _ in 0..cases {
        let (h, psi0) = random_lattice(&mut rng)?;
        let csr = h.to_csr();
        let e0 = energy(&csr, psi0.amplitudes());
        let mut last = Vec::new();
        let ev = evolve(&h, &psi0, &plan, |_, _, s| {
            unitarity = unitarity.max((s.norm() - 1.0).abs() / (10.0 * tol * t_max));
            drift = drift.max((energy(&csr, s.amplitudes()) - e0).abs() / e0.abs().max(1.0));
            last = s.amplitudes().to_vec();
        })?;

        let (forward, _) = apply_exponential(&h, psi0.amplitudes(), t_max, tol, plan.max_krylov_dim)?;
        let (back, _) = apply_exponential(&h, &forward, -t_max, tol, plan.max_krylov_dim)?;
        reversal = reversal.max(distance(&back, psi0.amplitudes()) / (100.0 * tol));

        let mut halved = plan.clone();
        halved.max_substep = Some(0.5 * ev.stats.max_substep);
        let mut last_halved = Vec::new();
        evolve(&h, &psi0, &halved, |_, _, s| last_halved = s.amplitudes().to_vec())?;
        halving = halving.max(distance(&last, &last_halved) / tol);
    }
    r.at_most("7", &format!("{cases} random lattices: max |norm - 1| / (10 tol t_max)"), unitarity, 1.0);
    r.at_most("7", "max |psi(t -> -t) - psi0| / (100 tol)", reversal, 1.0);
    r.at_most("7", "max relative energy drift", drift, ENERGY_DRIFT);
    r.at_most("7", "max |psi - psi(halved substeps)| / tol", halving, 1.0);
    Ok(())
}

/// `c(lambda) = (lambda, sqrt(1 - lambda^2))` under the unit semicircle.
fn semicircle_initial_state(r: &mut Report) -> Outcome {
    let dist = DisorderDistribution::semicircle(1.0)?;
    let c_fn = |x: &[f64]| vec![real(x[0]), real((1.0 - x[0] * x[0]).max(0.0).sqrt())];
    let q = 4000;
    let table = recurrence_analytic(&dist, q)?;
    let depth = 64;
    let basis = LatticeBasis::new(2, &[depth])?;
    let expanded = expanded_initial(c_fn, &[table], &basis, q, NormPolicy::default())?;
    let d = |n: usize, k: usize| expanded.state.amplitude(n, &[k]);

    let d0 = (0..=depth).map(|k| (d(0, k) - real(if k == 1 { 0.5 } else { 0.0 })).norm()).fold(0.0, f64::max);
    r.at_most("8a", "d_{0,k} vs delta_{1,k} / 2", d0, EXACT_COEFFICIENT);
    let series = |k: usize| {
        if k % 2 == 1 {
            0.0
        } else {
            let k = k as f64;
            -(8.0 / PI) / ((k + 3.0) * (k * k - 1.0))
        }
    };
    let d1 = (0..=20).map(|k| (d(1, k) - real(series(k))).norm()).fold(0.0, f64::max);
    r.at_most("8b", "d_{1,k} vs even-k closed-form series, k <= 20", d1, SERIES_AGREEMENT);

    let mut h0 = CMatrix::zeros(2, 2);
    h0[(0, 1)] = real(0.3);
    h0[(1, 0)] = real(0.3);
    h0[(1, 1)] = real(1.0);
    let mut c = CMatrix::zeros(2, 2);
    c[(1, 1)] = real(1.0);
    let spec = EnsembleSpec::linear(h0, c, dist)?;
    let (_, h) = chain_map(&spec, &[depth])?;
    let plan = PropagationPlan::uniform(10.0, 101)?;
    let (chain, ev) = evolve_reduced(&h, &expanded.state, &plan)?;
    let cfg = OracleConfig { samples: 100_000, seed: 11, ..Default::default() };
    let mc = mc_average(&spec, c_fn, &plan.times, &cfg)?;
    let (excess, ratio) = sem_excess(&chain, &mc, SEM_BAND, SEM_FLOOR);
    r.at_most(
        "8c",
        &format!(
            "expanded-state dynamics minus 4 SEM vs per-sample MC 1e5, worst |d|/SEM {ratio:.2}, norm defect {:.1e}, boundary {:.1e}",
            expanded.norm_defect,
            ev.leakage.max()
        ),
        excess,
        0.0,
    );
    Ok(())
}

fn main() {
    let mut report = Report::new();
    let criteria: [(&str, fn(&mut Report) -> Outcome); 8] = [
        ("1", qubit_exactness),
        ("2", cauchy_cutoff),
        ("3", dimer_populations),
        ("4", conservation),
        ("5", recurrences),
        ("6", reverse_map),
        ("7", propagator_properties),
        ("8", semicircle_initial_state),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    for (id, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let started = Instant::now();
        if let Err(e) = run(&mut report) {
            report.error(id, e);
        }
        eprintln!("criterion {id} took {:.1} s", started.elapsed().as_secs_f64());
    }
    println!("acceptance: {}", report.summary());
    if report.failures() > 0 {
        std::process::exit(1);
    }
}
