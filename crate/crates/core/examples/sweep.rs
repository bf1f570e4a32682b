// scratch: dual solver parameter sweep (deleted before ship)
use bgrl::rff::FeatureMap;
use bgrl::rng;
use bgrl::transport::*;

fn cloud(n: usize, dim: usize, shift: f64, scale: f64, seed: u64) -> EmpiricalEmbedding {
    let mut r = rng::stream(seed);
    let pts = (0..n)
        .map(|_| {
            (0..dim)
                .map(|k| scale * rng::standard_normal(&mut r) + if k == 0 { shift } else { 0.0 })
                .collect()
        })
        .collect();
    EmpiricalEmbedding::uniform(pts).unwrap()
}

fn main() {
    let mu = cloud(8, 2, 0.0, 1.0, 71);
    let nu = cloud(8, 2, 1.2, 1.0, 72);
    let exact = exact_ot_discrete(&mu, &nu, CostFn::L2).unwrap().value;
    println!("exact = {exact}");
    for sigma in [0.5, 1.0, 2.0] {
        for alpha in [0.005, 0.01, 0.02, 0.05] {
            for steps in [200_000usize] {
                let fm = FeatureMap::new(2, 256, sigma, rng::derive_seed(17, "map.mu", 0)).unwrap();
                let fn_ = FeatureMap::new(2, 256, sigma, rng::derive_seed(17, "map.nu", 0)).unwrap();
                let mut pot = DualPotentials::new(fm, fn_, 0.01, alpha).unwrap();
                wd_solve_empirical(&mut pot, &mu, &nu, CostFn::L2, steps, 73).unwrap();
                let est = pot.estimate_product(&mu, &nu, CostFn::L2).unwrap();
                println!("sigma={sigma} alpha={alpha} steps={steps} -> est={est:.4} (sat {})", pot.saturation_count());
            }
        }
    }
}
