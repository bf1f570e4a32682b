//! Random Fourier feature maps for the RBF kernel.
//!
//! A map with `m` features sends `z` to `sqrt(2/m) * cos(G z + b)`,
//! where `G` has iid Gaussian entries of standard deviation `1/sigma`
//! and the phases `b` are uniform on `[0, 2*pi)`. Inner products of
//! feature vectors are unbiased estimates of the Gaussian kernel
//! `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`. All behavioral test
//! functions in this crate are linear functionals `<p, phi(x)>` of such
//! features.

use crate::error::{Error, Result};
use crate::rng;

/// Immutable random Fourier feature map. Evaluation is a pure function
/// of `(map, input)`, so maps are freely shared across threads.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    input_dim: usize,
    num_features: usize,
    sigma: f64,
    /// Row-major `m x d` projection, entries already scaled by `1/sigma`.
    proj: Vec<f64>,
    /// `m` phases in `[0, 2*pi)`.
    phases: Vec<f64>,
}

impl FeatureMap {
    /// Draws a map for inputs of dimension `d` with `m` features and
    /// kernel bandwidth `sigma`. Deterministic given `seed`.
    pub fn new(d: usize, m: usize, sigma: f64, seed: u64) -> Result<FeatureMap> {
        if d == 0 {
            return Err(Error::invalid("feature map input dimension must be >= 1"));
        }
        if m == 0 {
            return Err(Error::invalid("feature map must have >= 1 features"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "feature map bandwidth must be positive, got {sigma}"
            )));
        }
        let mut proj_rng = rng::stream(rng::derive_seed(seed, "rff.proj", 0));
        let mut proj = Vec::with_capacity(m * d);
        for _ in 0..m * d {
            proj.push(rng::standard_normal(&mut proj_rng) / sigma);
        }
        let mut phase_rng = rng::stream(rng::derive_seed(seed, "rff.phase", 0));
        let phases = (0..m)
            .map(|_| rng::uniform(&mut phase_rng) * std::f64::consts::TAU)
            .collect();
        Ok(FeatureMap {
            input_dim: d,
            num_features: m,
            sigma,
            proj,
            phases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `phi(z)`: entry `i` is `sqrt(2/m) * cos(<G_i, z> + b_i)`.
    /// The output always has Euclidean norm at most `sqrt(2)`.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        let scale = (2.0 / self.num_features as f64).sqrt();
        let mut out = Vec::with_capacity(self.num_features);
        for i in 0..self.num_features {
            let row = &self.proj[i * self.input_dim..(i + 1) * self.input_dim];
            let dot: f64 = row.iter().zip(z).map(|(g, zi)| g * zi).sum();
            out.push(scale * (dot + self.phases[i]).cos());
        }
        Ok(out)
    }

    /// Gradient of `z -> <p, phi(z)>` with respect to `z`:
    /// `-sqrt(2/m) * sum_i p_i sin(<G_i, z> + b_i) G_i`.
    ///
    /// Callers must pass `z` of length `input_dim` and `p` of length
    /// `num_features`.
    pub fn eval_input_grad(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.input_dim);
        debug_assert_eq!(p.len(), self.num_features);
        let scale = (2.0 / self.num_features as f64).sqrt();
        let mut grad = vec![0.0; self.input_dim];
        for i in 0..self.num_features {
            let row = &self.proj[i * self.input_dim..(i + 1) * self.input_dim];
            let dot: f64 = row.iter().zip(z).map(|(g, zi)| g * zi).sum();
            let coeff = -scale * p[i] * (dot + self.phases[i]).sin();
            for (g, out) in row.iter().zip(grad.iter_mut()) {
                *out += coeff * g;
            }
        }
        grad
    }

    /// Test-only constructor with explicit projection and phases.
    #[cfg(test)]
    pub(crate) fn from_parts(d: usize, m: usize, sigma: f64, proj: Vec<f64>, phases: Vec<f64>) -> FeatureMap {
        assert_eq!(proj.len(), m * d);
        assert_eq!(phases.len(), m);
        FeatureMap {
            input_dim: d,
            num_features: m,
            sigma,
            proj,
            phases,
        }
    }

    #[cfg(test)]
    pub(crate) fn proj_entries(&self) -> &[f64] {
        &self.proj
    }

    #[cfg(test)]
    pub(crate) fn phase_entries(&self) -> &[f64] {
        &self.phases
    }
}

/// `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`, the kernel the feature
/// map approximates. Used by tests and diagnostics.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn shapes_and_phase_range() {
        let map = FeatureMap::new(2, 100, 0.1, 7).unwrap();
        assert_eq!(map.proj_entries().len(), 200);
        assert_eq!(map.phase_entries().len(), 100);
        for &b in map.phase_entries() {
            assert!((0.0..std::f64::consts::TAU).contains(&b));
        }
    }

    #[test]
    fn single_feature_bounded() {
        let map = FeatureMap::new(1, 1, 1.0, 0).unwrap();
        let mut rng = rng::stream(3);
        for _ in 0..100 {
            let z = [rng::standard_normal(&mut rng) * 3.0];
            let v = map.eval(&z).unwrap();
            assert!(v[0].abs() <= 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(FeatureMap::new(0, 4, 1.0, 0).is_err());
        assert!(FeatureMap::new(4, 0, 1.0, 0).is_err());
        assert!(FeatureMap::new(4, 4, 0.0, 0).is_err());
        assert!(FeatureMap::new(4, 4, -1.0, 0).is_err());
        let map = FeatureMap::new(3, 4, 1.0, 0).unwrap();
        assert!(map.eval(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn projection_sample_std_matches_one_over_sigma() {
        // Frozen empirical moment of the seeded stream for
        // (d=4, m=4096, sigma=0.5, seed=1); entries are N(0, 1/sigma^2).
        let map = FeatureMap::new(4, 4096, 0.5, 1).unwrap();
        let entries = map.proj_entries();
        let n = entries.len() as f64;
        let mean = entries.iter().sum::<f64>() / n;
        let std = (entries.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 2.0).abs() < 0.05, "sample std {std}");
    }

    #[test]
    fn zero_argument_rows_give_constant_features() {
        // With G z + b = 0 for every row, each entry is sqrt(2/m).
        let m = 8;
        let map = FeatureMap::from_parts(2, m, 1.0, vec![0.0; 2 * m], vec![0.0; m]);
        let v = map.eval(&[0.4, -0.7]).unwrap();
        let want = (2.0 / m as f64).sqrt();
        for x in v {
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn self_inner_product_bounded_by_two() {
        let map = FeatureMap::new(3, 64, 0.7, 11).unwrap();
        let mut rng = rng::stream(4);
        for _ in 0..50 {
            let z: Vec<f64> = (0..3).map(|_| rng::standard_normal(&mut rng)).collect();
            let v = map.eval(&z).unwrap();
            let ip = dot(&v, &v);
            assert!((0.0..=2.0 + 1e-12).contains(&ip));
        }
    }

    #[test]
    fn kernel_estimate_close_pair() {
        // <phi(x), phi(y)> ~= exp(-0.005) for x=(0,0), y=(0.1,0), sigma=1.
        let map = FeatureMap::new(2, 8192, 1.0, 42).unwrap();
        let vx = map.eval(&[0.0, 0.0]).unwrap();
        let vy = map.eval(&[0.1, 0.0]).unwrap();
        let want = (-0.005f64).exp();
        assert!((dot(&vx, &vy) - want).abs() < 0.03);
    }

    #[test]
    fn kernel_approximation_average_error() {
        // 100 random pairs in [-1,1]^d, average |<phi(x),phi(y)> - k(x,y)|
        // at most 5/sqrt(m).
        let d = 3;
        let m = 8192;
        let sigma = 0.8;
        let map = FeatureMap::new(d, m, sigma, 9).unwrap();
        let mut rng = rng::stream(10);
        let mut total = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng::uniform(&mut rng) * 2.0 - 1.0).collect();
            let y: Vec<f64> = (0..d).map(|_| rng::uniform(&mut rng) * 2.0 - 1.0).collect();
            let est = dot(&map.eval(&x).unwrap(), &map.eval(&y).unwrap());
            total += (est - rbf_kernel(&x, &y, sigma)).abs();
        }
        let avg = total / 100.0;
        assert!(avg <= 5.0 / (m as f64).sqrt(), "avg error {avg}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = FeatureMap::new(5, 32, 0.3, 77).unwrap();
        let b = FeatureMap::new(5, 32, 0.3, 77).unwrap();
        let z = [0.1, -0.2, 0.3, 0.0, 2.0];
        assert_eq!(a.eval(&z).unwrap(), b.eval(&z).unwrap());
        assert_eq!(a.proj_entries(), b.proj_entries());
        let c = FeatureMap::new(5, 32, 0.3, 78).unwrap();
        assert_ne!(a.eval(&z).unwrap(), c.eval(&z).unwrap());
    }
}
