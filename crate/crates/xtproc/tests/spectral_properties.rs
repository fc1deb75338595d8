//! Distributional properties of the spectral simulator: marginal laws,
//! sample-level max-stability, the unit-Frechet power identity, truncation
//! insensitivity, and the spectral-moment estimator.

mod common;

use common::{ks_statistic, ks_two_sample, Accumulator};
use nalgebra::DMatrix;
use xtproc::dependence::bivariate_extremal_coefficient;
use xtproc::model::{SpectralSettings, TailIndex};
use xtproc::numerics::normal_positive_moment;
use xtproc::samplers::RandomStream;
use xtproc::spectral::{
    empirical_extremal_coefficient, estimate_spectral_moment_mc, simulate_extremal_t_mv,
    SpectralMoment, SpectralSimulator,
};

fn tail(a: f64) -> TailIndex {
    TailIndex::new(a).unwrap()
}

fn pair_corr(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
}

#[test]
fn single_site_marginal_is_frechet() {
    // P(Z <= 1) = exp(-1) regardless of alpha, within 0.01 at 1e4 reps.
    let corr = DMatrix::identity(1, 1);
    for &alpha in &[0.7, 1.0, 3.0] {
        let sim = SpectralSimulator::gaussian_from_matrix(tail(alpha), &corr).unwrap();
        let reps = sim
            .simulate_batch(&SpectralSettings::gaussian_spectral(7).with_replicates(10_000))
            .unwrap();
        let p_hat = reps.iter().filter(|r| r.values[0] <= 1.0).count() as f64 / 1e4;
        assert!(
            (p_hat - (-1.0f64).exp()).abs() < 0.01,
            "alpha={alpha}: P(Z<=1) = {p_hat}"
        );
    }
}

#[test]
fn single_site_marginal_is_frechet_for_t_spectral() {
    let corr = DMatrix::identity(1, 1);
    let alpha = tail(1.0);
    let mut moment_stream = RandomStream::new(3, u64::MAX);
    let moment = estimate_spectral_moment_mc(alpha, 5.0, 1_000_000, &mut moment_stream).unwrap();
    let mut below = 0usize;
    let n = 10_000usize;
    let settings = SpectralSettings::t_spectral(11);
    for rep in 0..n {
        let mut stream = RandomStream::new(11, rep as u64);
        let z = simulate_extremal_t_mv(alpha, 5.0, &corr, moment, &settings, &mut stream).unwrap();
        if z.values[0] <= 1.0 {
            below += 1;
        }
    }
    let p_hat = below as f64 / n as f64;
    assert!(
        (p_hat - (-1.0f64).exp()).abs() < 0.01,
        "t-spectral P(Z<=1) = {p_hat}"
    );
}

#[test]
fn componentwise_maxima_are_max_stable_at_sample_level() {
    // The max of k iid replicates, scaled by k^(-1/alpha), matches a single
    // replicate in distribution (per-site two-sample KS < 0.02 at 1e4).
    let k = 5usize;
    let alpha = 1.0;
    let corr = pair_corr(0.5);
    let sim = SpectralSimulator::gaussian_from_matrix(tail(alpha), &corr).unwrap();
    let singles = sim
        .simulate_batch(&SpectralSettings::gaussian_spectral(100).with_replicates(10_000))
        .unwrap();
    let pool = sim
        .simulate_batch(&SpectralSettings::gaussian_spectral(101).with_replicates(10_000 * k))
        .unwrap();
    let scale = (k as f64).powf(-1.0 / alpha);
    for site in 0..2 {
        let a: Vec<f64> = singles.iter().map(|r| r.values[site]).collect();
        let b: Vec<f64> = pool
            .chunks_exact(k)
            .map(|group| {
                group
                    .iter()
                    .map(|r| r.values[site])
                    .fold(f64::NEG_INFINITY, f64::max)
                    * scale
            })
            .collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks < 0.02, "site {site}: KS = {ks}");
    }
}

#[test]
fn alpha_power_has_unit_frechet_margins() {
    // Z^alpha is the unit-Frechet construction: the normalization already
    // divides the raw maximum by the spectral moment, so the alpha-power of
    // the output needs no further scaling. (Equivalently: the raw maximum
    // to the alpha, divided by m_alpha, is unit Frechet.)
    let alpha = 2.0;
    let corr = DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 0.6, 0.3, 0.6, 1.0, 0.45, 0.3, 0.45, 1.0],
    );
    let sim = SpectralSimulator::gaussian_from_matrix(tail(alpha), &corr).unwrap();
    let reps = sim
        .simulate_batch(&SpectralSettings::gaussian_spectral(202).with_replicates(10_000))
        .unwrap();
    let m = normal_positive_moment(tail(alpha));
    for site in 0..3 {
        let powered: Vec<f64> = reps.iter().map(|r| r.values[site].powf(alpha)).collect();
        let ks = ks_statistic(&powered, |x| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 });
        assert!(ks < 0.015, "site {site}: KS vs Phi_1 = {ks}");
        // the raw (un-normalized) maximum to the alpha, divided by m_alpha,
        // is the same quantity
        let raw_scaled: Vec<f64> = reps
            .iter()
            .map(|r| (r.values[site] * m.powf(1.0 / alpha)).powf(alpha) / m)
            .collect();
        for (a, b) in powered.iter().zip(&raw_scaled) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}

#[test]
fn truncation_bound_choice_is_insensitive_at_defaults() {
    // Moving the bound from 4 to 8 changes the empirical coefficient by
    // less than the sampling noise band.
    let alpha = 2.0;
    let corr = pair_corr(0.5);
    let sim = SpectralSimulator::gaussian_from_matrix(tail(alpha), &corr).unwrap();
    let theta_at = |c: f64| {
        let settings = SpectralSettings {
            truncation_c: c,
            max_points: 100_000,
            replicates: 10_000,
            seed: 303,
        };
        let reps = sim.simulate_batch(&settings).unwrap();
        empirical_extremal_coefficient(&reps, tail(alpha), &[0, 1]).unwrap()
    };
    let lo = theta_at(4.0);
    let hi = theta_at(8.0);
    assert!(
        (lo - hi).abs() < 0.02,
        "theta(c=4) = {lo} vs theta(c=8) = {hi}"
    );
}

#[test]
fn near_full_dependence_drives_the_coefficient_to_one() {
    let corr = pair_corr(0.999);
    let sim = SpectralSimulator::gaussian_from_matrix(tail(1.0), &corr).unwrap();
    let reps = sim
        .simulate_batch(&SpectralSettings::gaussian_spectral(404).with_replicates(10_000))
        .unwrap();
    let theta = empirical_extremal_coefficient(&reps, tail(1.0), &[0, 1]).unwrap();
    assert!(theta < 1.1, "theta at rho = 0.999: {theta}");
    assert!(theta >= 1.0 - 0.02, "theta implausibly below 1: {theta}");
}

#[test]
fn cross_construction_coefficients_agree_at_alpha_one() {
    // Gaussian spectral vs heavy-df t spectral, same correlation: both
    // target the alpha = 1 dependence; coefficients agree within 0.03.
    let alpha = tail(1.0);
    let corr = pair_corr(0.0);
    let gaussian = SpectralSimulator::gaussian_from_matrix(alpha, &corr).unwrap();
    let g_reps = gaussian
        .simulate_batch(&SpectralSettings::gaussian_spectral(505).with_replicates(10_000))
        .unwrap();
    let mut ms = RandomStream::new(506, u64::MAX);
    let moment = estimate_spectral_moment_mc(alpha, 50.0, 1_000_000, &mut ms).unwrap();
    let t_sim = SpectralSimulator::elliptical_t(alpha, 50.0, &corr, moment).unwrap();
    let t_reps = t_sim
        .simulate_batch(&SpectralSettings::t_spectral(507).with_replicates(10_000))
        .unwrap();
    let tg = empirical_extremal_coefficient(&g_reps, alpha, &[0, 1]).unwrap();
    let tt = empirical_extremal_coefficient(&t_reps, alpha, &[0, 1]).unwrap();
    let closed = bivariate_extremal_coefficient(alpha, 0.0).unwrap();
    assert!((tg - tt).abs() < 0.03, "{tg} vs {tt}");
    assert!((tg - closed).abs() < 0.03, "gaussian {tg} vs closed {closed}");
}

#[test]
fn moderate_dimension_simulation_stays_well_behaved() {
    // 64 sites on a grid: exercises the dense path at a non-trivial size.
    let sites: Vec<Vec<f64>> = (0..64)
        .map(|i| vec![(i % 8) as f64, (i / 8) as f64])
        .collect();
    let sites = xtproc::SiteSet::new(sites).unwrap();
    let spec = xtproc::CorrelationSpec::Model(
        xtproc::CorrelationModel::exponential(3.0).unwrap(),
    );
    let corr = xtproc::build_correlation_matrix(&spec, &sites).unwrap();
    let sim = SpectralSimulator::gaussian_from_matrix(tail(1.0), &corr).unwrap();
    let reps = sim
        .simulate_batch(&SpectralSettings::gaussian_spectral(808).with_replicates(200))
        .unwrap();
    for rep in &reps {
        assert_eq!(rep.values.len(), 64);
        assert!(!rep.truncation_triggered);
        assert!(rep.values.iter().all(|&v| v > 0.0 && v.is_finite()));
    }
}

#[test]
fn moment_estimator_hits_known_values() {
    // Gaussian limit: huge spectral df at alpha = 2 approaches 1/2.
    let mut stream = RandomStream::new(606, 0);
    let big = estimate_spectral_moment_mc(tail(2.0), 1e6, 1_000_000, &mut stream).unwrap();
    assert!(
        (big.value - 0.5).abs() <= 3.0 * big.std_error,
        "nu=1e6: {} +- {}",
        big.value,
        big.std_error
    );
    // E[T3+] = sqrt(3)/pi
    let mut stream = RandomStream::new(607, 0);
    let half_mean = estimate_spectral_moment_mc(tail(1.0), 3.0, 1_000_000, &mut stream).unwrap();
    let want = 3f64.sqrt() / std::f64::consts::PI;
    assert!(
        (half_mean.value - want).abs() <= 3.0 * half_mean.std_error,
        "nu=3: {} +- {} vs {want}",
        half_mean.value,
        half_mean.std_error
    );
}

#[test]
fn moment_estimator_respects_the_symmetry_identity() {
    // E[(T+)^alpha] = E[|T|^alpha] / 2 for the symmetric t law.
    let alpha = 1.5;
    let nu = 6.0;
    let n = 1_000_000usize;
    let mut stream = RandomStream::new(608, 0);
    let est = estimate_spectral_moment_mc(tail(alpha), nu, n, &mut stream).unwrap();
    // independent draws for the absolute-moment route
    let mut stream = RandomStream::new(608, 1);
    let mut acc = Accumulator::default();
    let corr = DMatrix::identity(1, 1);
    let chol = xtproc::numerics::cholesky_with_jitter(&corr, 0.0).unwrap();
    for _ in 0..n {
        let t = xtproc::samplers::sample_t_process(&chol, nu, &mut stream)[0];
        acc.push(0.5 * t.abs().powf(alpha));
    }
    let band = 3.0 * (est.std_error.powi(2) + acc.se().powi(2)).sqrt();
    assert!(
        (est.value - acc.mean()).abs() <= band,
        "positive-part {} vs half-absolute {}",
        est.value,
        acc.mean()
    );
}

#[test]
fn provided_moment_scales_the_output() {
    // The mv path uses the supplied moment value; doubling it scales all
    // outputs by 2^(-1/alpha).
    let corr = pair_corr(0.3);
    let alpha = tail(2.0);
    let settings = SpectralSettings::t_spectral(909);
    let m1 = SpectralMoment {
        value: 0.4,
        std_error: 0.0,
        method: xtproc::spectral::SpectralMomentMethod::MonteCarlo,
    };
    let m2 = SpectralMoment { value: 0.8, ..m1 };
    let mut s1 = RandomStream::new(909, 5);
    let mut s2 = RandomStream::new(909, 5);
    let a = simulate_extremal_t_mv(alpha, 8.0, &corr, m1, &settings, &mut s1).unwrap();
    let b = simulate_extremal_t_mv(alpha, 8.0, &corr, m2, &settings, &mut s2).unwrap();
    let ratio = 2f64.powf(-1.0 / 2.0);
    for j in 0..2 {
        assert!(
            (b.values[j] / a.values[j] - ratio).abs() < 1e-12,
            "moment scaling broken at site {j}"
        );
    }
}
