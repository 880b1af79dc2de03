use disorder_chain::prelude::*;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn qubit(dist: DisorderDistribution) -> EnsembleSpec {
    let mut h0 = CMatrix::zeros(2, 2);
    h0[(1, 1)] = c(1.0, 0.0);
    let mut cm = CMatrix::zeros(2, 2);
    cm[(1, 1)] = c(1.0, 0.0);
    EnsembleSpec::linear(h0, cm, dist).unwrap()
}

fn run(spec: &EnsembleSpec, depths: &[usize], amp: &[C64], t_max: f64, points: usize) -> (Vec<f64>, Vec<LatticeState>) {
    let (basis, h) = chain_map(spec, depths).unwrap();
    let plan = PropagationPlan::uniform(t_max, points).unwrap();
    let out = propagate(&h, &localized_initial(amp, &basis).unwrap(), &plan).unwrap();
    (plan.times, out.states)
}

fn projector(i: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(i, i)] = c(1.0, 0.0);
    m
}

#[test]
fn gaussian_qubit_coherence() {
    let sigma = 0.9;
    let s = 0.5f64.sqrt();
    let (times, states) = run(&qubit(DisorderDistribution::gaussian(sigma).unwrap()), &[96], &[c(s, 0.0), c(s, 0.0)], 5.0, 26);
    let coh = coherence_trace(&states, 0, 1);
    assert!((coh[0] - c(0.5, 0.0)).norm() < 1e-15);
    for (z, &t) in coh.iter().zip(&times) {
        // rho_01 = a b* e^{-i(E0 - E1)t} phi(t), E0 - E1 = -1
        let want = C64::from_polar(0.5 * (-0.5 * sigma * sigma * t * t).exp(), t);
        assert!((z - want).norm() < 1e-10, "t = {t}");
    }
}

#[test]
fn uniform_qubit_revives() {
    let v = 1.0;
    let s = 0.5f64.sqrt();
    let (times, states) = run(&qubit(DisorderDistribution::uniform(v).unwrap()), &[64], &[c(s, 0.0), c(s, 0.0)], 12.0, 121);
    let mag: Vec<f64> = coherence_trace(&states, 0, 1).iter().map(|z| z.norm()).collect();
    for (m, &t) in mag.iter().zip(&times).skip(1) {
        assert!((m - 0.5 * ((v * t).sin() / (v * t)).abs()).abs() < 1e-10, "t = {t}");
    }
    // first zero at v t = pi lies between samples 31 and 32, revival after
    assert!(mag[31] < 0.01 && mag[32] < 0.01 && mag[45] > 0.1);
}

#[test]
fn populations_and_identity() {
    let a = [c(0.6, 0.0), c(0.0, 0.8)];
    let (_, states) = run(&qubit(DisorderDistribution::semicircle(1.0).unwrap()), &[48], &a, 8.0, 17);
    for s in &states {
        assert!((observable_average(s, &CMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-10);
        assert!((observable_average(s, &projector(1)).unwrap() - 0.64).abs() < 1e-10);
    }

    let mut h0 = CMatrix::zeros(2, 2);
    h0[(0, 0)] = c(12325.0, 0.0);
    h0[(1, 1)] = c(12025.0, 0.0);
    h0[(0, 1)] = c(273.0, 0.0);
    h0[(1, 0)] = c(273.0, 0.0);
    let g = DisorderDistribution::gaussian(200.0).unwrap();
    let dimer = EnsembleSpec::new(
        h0,
        vec![Coupling::Linear(projector(0)), Coupling::Linear(projector(1))],
        vec![g.clone(), g],
    )
    .unwrap();
    let (basis, _) = chain_map(&dimer, &[4, 4]).unwrap();
    let psi0 = localized_initial(&[c(1.0, 0.0), c(0.0, 0.0)], &basis).unwrap();
    assert_eq!(observable_average(&psi0, &projector(0)).unwrap(), 1.0);
}

#[test]
fn purity_decays_for_gaussian_and_is_bounded_otherwise() {
    let s = 0.5f64.sqrt();
    let plus = [c(s, 0.0), c(s, 0.0)];
    let (times, states) = run(&qubit(DisorderDistribution::gaussian(1.0).unwrap()), &[128], &plus, 6.0, 61);
    let p = DensityTrajectory::from_states(&times, &states).purity();
    assert!((p[0] - 1.0).abs() < 1e-15);
    assert!(p.windows(2).all(|w| w[1] <= w[0] + 1e-10));

    let (times, states) = run(&qubit(DisorderDistribution::uniform(1.0).unwrap()), &[64], &plus, 12.0, 121);
    let p = DensityTrajectory::from_states(&times, &states).purity();
    assert!((p[0] - 1.0).abs() < 1e-15);
    assert!(p.iter().all(|&x| x <= 1.0 + 1e-10));
    assert!(p[45] > p[31], "bounded support should revive");
}

#[test]
fn method_labels() {
    let t = DensityTrajectory::new(vec![0.0], vec![CMatrix::identity(1, 1)], Method::ChainMap);
    assert_eq!(t.method.to_string(), "chain");
    assert_eq!(Method::MonteCarlo.as_str(), "mc");
    assert_eq!(Method::GaussQuadrature.as_str(), "quad");
    assert_eq!(Method::Analytic.as_str(), "analytic");
}

fn diag(values: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(values.len(), values.len());
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = c(v, 0.0);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Diagonal H0 and couplings leave every population fixed, while the
    /// reduced state stays a density matrix.
    #[test]
    fn diagonal_models_conserve_populations(
        e in prop::collection::vec(-1.0f64..1.0, 3),
        g in prop::collection::vec(-1.0f64..1.0, 6),
        amp in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
        kind in 0u8..3,
    ) {
        let dist = match kind {
            0 => DisorderDistribution::gaussian(0.6),
            1 => DisorderDistribution::semicircle(1.0),
            _ => DisorderDistribution::uniform(1.0),
        }
        .unwrap();
        let spec = EnsembleSpec::new(
            diag(&e),
            vec![Coupling::Linear(diag(&g[..3])), Coupling::Linear(diag(&g[3..]))],
            vec![dist.clone(), dist],
        )
        .unwrap();
        let mut a: Vec<C64> = amp.iter().map(|&(x, y)| c(x, y)).collect();
        let norm = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        a.iter_mut().for_each(|v| *v /= norm);
        let (times, states) = run(&spec, &[24, 24], &a, 3.0, 13);
        let traj = DensityTrajectory::from_states(&times, &states);
        for n in 0..3 {
            let p = traj.population(n);
            prop_assert!(p.iter().all(|x| (x - a[n].norm_sqr()).abs() <= 1e-10));
        }
        prop_assert!(traj.max_hermiticity_defect() <= 1e-12);
        prop_assert!(traj.max_trace_defect() <= 1e-10);
        prop_assert!(traj.min_eigenvalue() >= -1e-10);
    }
}
