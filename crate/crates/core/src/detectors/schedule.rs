use crate::scalar::Real;

/// Momentum factors `ρ_1 … ρ_{N_g}` from the recursion
/// `μ_0 = 1, μ_k = (1 + √(1 + 4μ_{k−1}²))/2, ρ_k = (μ_{k−1} − 1)/μ_k`.
pub fn momentum_schedule<T: Real>(iterations: usize) -> Vec<T> {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let mut mu_prev = one;
    (0..iterations)
        .map(|_| {
            let mu = (one + (one + four * mu_prev * mu_prev).sqrt()) / two;
            let rho = (mu_prev - one) / mu;
            mu_prev = mu;
            rho
        })
        .collect()
}
