//! Reproducible random streams and samplers for every stochastic object in
//! the pipeline: decreasing Poisson points, standard Gaussian fields,
//! t processes, and elliptical t vectors.
//!
//! Streams are counter-based (ChaCha12): an identical `(seed, stream_id)`
//! pair reproduces an identical draw sequence bit for bit, and distinct
//! stream ids give statistically independent streams. Replicates
//! parallelize by giving each its own stream id; a stream itself is
//! single-owner mutable state and is never shared between workers.

use rand::{RngExt, SeedableRng, TryRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use std::convert::Infallible;

use crate::model::TailIndex;
use crate::numerics::CholeskyFactor;

/// Name of the underlying generator, recorded in output metadata.
pub const GENERATOR_NAME: &str = "chacha12";

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded, splittable random stream.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha12Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(stream_id);
        RandomStream {
            rng,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn unit_exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Gamma(shape, scale) draw, retried on the (measure-zero) event of an
    /// underflow to zero so downstream divisions stay finite.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        let dist = Gamma::new(shape, scale).expect("gamma parameters must be positive");
        loop {
            let g: f64 = dist.sample(&mut self.rng);
            if g > 0.0 && g.is_finite() {
                return g;
            }
        }
    }
}

impl TryRng for RandomStream {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        self.rng.try_next_u32()
    }

    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        self.rng.try_next_u64()
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Infallible> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Decreasing Poisson points on (0, infinity) with intensity
/// alpha v^-(alpha+1) dv, generated through transformed unit-exponential
/// arrivals: V_i = (E_1 + ... + E_i)^(-1/alpha).
///
/// The first point follows the alpha-Frechet law and the sequence is
/// strictly decreasing, which is exactly what the spectral construction's
/// stopping rule needs.
#[derive(Debug, Clone)]
pub struct PoissonPointIterator {
    neg_inv_alpha: f64,
    arrival: f64,
    emitted: usize,
}

impl PoissonPointIterator {
    pub fn new(alpha: TailIndex) -> Self {
        PoissonPointIterator {
            neg_inv_alpha: -1.0 / alpha.value(),
            arrival: 0.0,
            emitted: 0,
        }
    }

    /// Next point V_i; strictly smaller than every point emitted before.
    pub fn next_point(&mut self, stream: &mut RandomStream) -> f64 {
        self.arrival += stream.unit_exponential();
        self.emitted += 1;
        self.arrival.powf(self.neg_inv_alpha)
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }
}

/// Uniform draw from the Euclidean unit sphere in R^d: iid normals scaled
/// by their norm, retrying the (floating-point-possible) zero-norm draw.
pub fn sample_sphere_uniform(d: usize, stream: &mut RandomStream) -> Vec<f64> {
    assert!(d >= 1, "sphere dimension must be >= 1");
    let mut v = vec![0.0; d];
    loop {
        for x in v.iter_mut() {
            *x = stream.standard_normal();
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for x in v.iter_mut() {
                *x /= norm;
            }
            return v;
        }
    }
}

/// One draw of a standard Gaussian field at the sites encoded by `chol`
/// (the factor of their correlation matrix), written into `out`.
pub fn sample_gaussian_field_into(
    chol: &CholeskyFactor,
    stream: &mut RandomStream,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    let d = chol.dim();
    debug_assert_eq!(out.len(), d);
    scratch.clear();
    scratch.extend((0..d).map(|_| stream.standard_normal()));
    chol.mul_into(scratch, out);
}

pub fn sample_gaussian_field(chol: &CholeskyFactor, stream: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; chol.dim()];
    let mut scratch = Vec::with_capacity(chol.dim());
    sample_gaussian_field_into(chol, stream, &mut scratch, &mut out);
    out
}

/// One draw of a centered t process with `nu` degrees of freedom: the
/// Gaussian field scaled by sqrt(Y) with nu/Y ~ Gamma(nu/2, 2). Margins are
/// standard Student t with `nu` degrees of freedom.
///
/// Draw order (gamma mixing variable first, then the field) is part of the
/// reproducibility contract.
pub fn sample_t_process_into(
    chol: &CholeskyFactor,
    nu: f64,
    stream: &mut RandomStream,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    assert!(nu > 0.0, "degrees of freedom must be positive");
    let y = nu / stream.gamma(0.5 * nu, 2.0);
    let s = y.sqrt();
    sample_gaussian_field_into(chol, stream, scratch, out);
    for x in out.iter_mut() {
        *x *= s;
    }
}

pub fn sample_t_process(chol: &CholeskyFactor, nu: f64, stream: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; chol.dim()];
    let mut scratch = Vec::with_capacity(chol.dim());
    sample_t_process_into(chol, nu, stream, &mut scratch, &mut out);
    out
}

/// One elliptical t vector through the radial representation R L U with
/// location zero: U uniform on the unit sphere, R = sqrt(d F) and
/// F = (G1/d)/(G2/nu) built from two gamma draws, so non-integer degrees of
/// freedom need no F quantile function.
pub fn sample_elliptical_t_vector_into(
    chol: &CholeskyFactor,
    nu: f64,
    stream: &mut RandomStream,
    out: &mut [f64],
) {
    assert!(nu > 0.0, "degrees of freedom must be positive");
    let d = chol.dim();
    debug_assert_eq!(out.len(), d);
    let u = sample_sphere_uniform(d, stream);
    let g1 = stream.gamma(0.5 * d as f64, 2.0);
    let g2 = stream.gamma(0.5 * nu, 2.0);
    let f = (g1 / d as f64) / (g2 / nu);
    let r = (d as f64 * f).sqrt();
    chol.mul_into(&u, out);
    for x in out.iter_mut() {
        *x *= r;
    }
}

pub fn sample_elliptical_t_vector(
    chol: &CholeskyFactor,
    nu: f64,
    stream: &mut RandomStream,
) -> Vec<f64> {
    let mut out = vec![0.0; chol.dim()];
    sample_elliptical_t_vector_into(chol, nu, stream, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cholesky_with_jitter;
    use nalgebra::DMatrix;
    use rand::Rng as _;

    fn alpha(a: f64) -> TailIndex {
        TailIndex::new(a).unwrap()
    }

    #[test]
    fn identical_seed_and_stream_reproduce_bit_for_bit() {
        let mut a = RandomStream::new(42, 3);
        let mut b = RandomStream::new(42, 3);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = RandomStream::new(42, 3);
        let mut b = RandomStream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(
                a.standard_normal().to_bits(),
                b.standard_normal().to_bits()
            );
        }
    }

    #[test]
    fn distinct_streams_and_seeds_diverge() {
        let mut a = RandomStream::new(42, 0);
        let mut b = RandomStream::new(42, 1);
        let mut c = RandomStream::new(43, 0);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn poisson_points_strictly_decrease() {
        for &a in &[0.3, 1.0, 4.0] {
            let mut stream = RandomStream::new(7, 0);
            let mut it = PoissonPointIterator::new(alpha(a));
            let mut prev = f64::INFINITY;
            for _ in 0..5000 {
                let v = it.next_point(&mut stream);
                assert!(v > 0.0 && v < prev);
                prev = v;
            }
            assert_eq!(it.emitted(), 5000);
        }
    }

    #[test]
    fn first_poisson_point_is_frechet_at_any_alpha() {
        // P(V1 <= 1) = exp(-1) regardless of alpha.
        for &a in &[0.5, 1.0, 3.0] {
            let n = 1_000_000usize;
            let mut below = 0usize;
            for rep in 0..n {
                let mut stream = RandomStream::new(11, rep as u64);
                let mut it = PoissonPointIterator::new(alpha(a));
                if it.next_point(&mut stream) <= 1.0 {
                    below += 1;
                }
            }
            let p = below as f64 / n as f64;
            let want = (-1.0f64).exp();
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (p - want).abs() < 4.0 * se,
                "alpha={a}: P(V1<=1) = {p}, want {want} +- {se}"
            );
        }
    }

    #[test]
    fn first_poisson_point_median_at_alpha_one() {
        // Median of Phi_1 is 1/ln 2.
        let n = 100_000usize;
        let mut draws: Vec<f64> = (0..n)
            .map(|rep| {
                let mut stream = RandomStream::new(5, rep as u64);
                PoissonPointIterator::new(alpha(1.0)).next_point(&mut stream)
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[n / 2];
        let want = 1.0 / 2f64.ln();
        // se of the sample median = 1 / (2 f(med) sqrt n), f = Phi_1 density
        let dens = want.powi(-2) * (-1.0 / want).exp();
        let se = 1.0 / (2.0 * dens * (n as f64).sqrt());
        assert!(
            (median - want).abs() < 4.0 * se,
            "median {median}, want {want} +- {se}"
        );
    }

    #[test]
    fn sphere_uniform_has_unit_norm() {
        let mut stream = RandomStream::new(0, 0);
        for &d in &[1usize, 2, 7, 40] {
            for _ in 0..50 {
                let u = sample_sphere_uniform(d, &mut stream);
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_uniform_in_one_dimension_is_a_sign() {
        let mut stream = RandomStream::new(9, 0);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let u = sample_sphere_uniform(1, &mut stream);
            assert!(u[0] == 1.0 || u[0] == -1.0);
            if u[0] == 1.0 {
                plus += 1;
            }
        }
        let p = plus as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.005, "sign frequency {p}");
    }

    #[test]
    fn gaussian_field_single_site_is_standard_normal_draw() {
        let chol = cholesky_with_jitter(&DMatrix::identity(1, 1), 0.0).unwrap();
        let mut a = RandomStream::new(3, 0);
        let mut b = RandomStream::new(3, 0);
        let field = sample_gaussian_field(&chol, &mut a);
        assert_eq!(field[0], b.standard_normal());
    }

    #[test]
    fn t_process_draws_are_reproducible() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let chol = cholesky_with_jitter(&m, 0.0).unwrap();
        let mut a = RandomStream::new(77, 12);
        let mut b = RandomStream::new(77, 12);
        assert_eq!(
            sample_t_process(&chol, 2.5, &mut a),
            sample_t_process(&chol, 2.5, &mut b)
        );
    }
}
