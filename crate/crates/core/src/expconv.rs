//! Convolution of weighted point sets with a pointy kernel.
//!
//! Two routes are provided: a direct `O(N²)` sum valid for any kernel, and a
//! two-pass `O(N)` recursion specific to `½e^{-|x|}` that uses
//! `e^{-|x_j - x_i|} = e^{-|x_j - x_k|}·e^{-|x_k - x_i|}` for ordered nodes.

use crate::kernel::PointyKernel;

/// Node count above which the recursive path is used by default.
pub const FAST_PATH_THRESHOLD: usize = 512;

/// `Σ_{i≠j} ∂ₓK(x_j - x_i)·w_i` for every node `j`.
pub fn direct_hat_deriv(kernel: &dyn PointyKernel, positions: &[f64], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(positions.len(), weights.len());
    positions
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut acc = 0.0;
            for (i, (&xi, &wi)) in positions.iter().zip(weights).enumerate() {
                if i != j && wi != 0.0 {
                    acc += kernel.hat_deriv(xj - xi) * wi;
                }
            }
            acc
        })
        .collect()
}

/// `Σ_i K(x_j - x_i)·w_i` for every node `j`, self term included.
pub fn direct_potential(kernel: &dyn PointyKernel, positions: &[f64], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(positions.len(), weights.len());
    positions
        .iter()
        .map(|&xj| {
            positions
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&xi, &wi)| kernel.eval(xj - xi) * wi)
                .sum()
        })
        .collect()
}

/// Left and right exponentially damped partial sums over ordered nodes:
/// `left_j = Σ_{i<j} e^{-(x_j - x_i)} w_i`, `right_j = Σ_{i>j} e^{-(x_i - x_j)} w_i`.
fn damped_sums(positions: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let decay: Vec<f64> = positions.windows(2).map(|w| (-(w[1] - w[0])).exp()).collect();
    damped_sums_with(weights, |j| decay[j])
}

/// `decay(j)` is the factor between nodes `j` and `j + 1`.
fn damped_sums_with(weights: &[f64], decay: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let n = weights.len();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    if n == 0 {
        return (left, right);
    }
    for j in 1..n {
        left[j] = decay(j - 1) * (left[j - 1] + weights[j - 1]);
    }
    for j in (0..n - 1).rev() {
        right[j] = decay(j) * (right[j + 1] + weights[j + 1]);
    }
    (left, right)
}

/// [`exp_potential_and_deriv`] on equally spaced nodes, one exponential per call.
pub fn exp_potential_and_deriv_uniform(spacing: f64, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let r = (-spacing).exp();
    let (left, right) = damped_sums_with(weights, |_| r);
    combine(&left, &right, weights)
}

/// [`exp_hat_deriv`] on equally spaced nodes.
pub fn exp_hat_deriv_uniform(spacing: f64, weights: &[f64]) -> Vec<f64> {
    let r = (-spacing).exp();
    let (left, right) = damped_sums_with(weights, |_| r);
    left.iter().zip(&right).map(|(l, r)| 0.5 * (r - l)).collect()
}

fn combine(left: &[f64], right: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pot = left
        .iter()
        .zip(right)
        .zip(weights)
        .map(|((l, r), w)| 0.5 * (l + w + r))
        .collect();
    let der = left.iter().zip(right).map(|(l, r)| 0.5 * (r - l)).collect();
    (pot, der)
}

/// Linear-time hatted derivative convolution for `K = ½e^{-|x|}`.
/// `positions` must be nondecreasing; coincident nodes are excluded from each
/// other's sum only if they share an index.
pub fn exp_hat_deriv(positions: &[f64], weights: &[f64]) -> Vec<f64> {
    let (left, right) = damped_sums(positions, weights);
    left.iter().zip(&right).map(|(l, r)| 0.5 * (r - l)).collect()
}

/// Linear-time potential and hatted derivative for `K = ½e^{-|x|}`.
pub fn exp_potential_and_deriv(positions: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (left, right) = damped_sums(positions, weights);
    combine(&left, &right, weights)
}

/// Hatted derivative convolution, choosing the recursive path for the
/// exponential kernel above [`FAST_PATH_THRESHOLD`] nodes.
pub fn hat_deriv_conv(kernel: &dyn PointyKernel, positions: &[f64], weights: &[f64]) -> Vec<f64> {
    if kernel.is_exponential() && positions.len() > FAST_PATH_THRESHOLD {
        exp_hat_deriv(positions, weights)
    } else {
        direct_hat_deriv(kernel, positions, weights)
    }
}

/// Potential and hatted derivative, same dispatch rule as [`hat_deriv_conv`].
pub fn potential_and_deriv(
    kernel: &dyn PointyKernel,
    positions: &[f64],
    weights: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    if kernel.is_exponential() && positions.len() > FAST_PATH_THRESHOLD {
        exp_potential_and_deriv(positions, weights)
    } else {
        (
            direct_potential(kernel, positions, weights),
            direct_hat_deriv(kernel, positions, weights),
        )
    }
}

/// `max_j |a_j - b_j| / max_j |b_j|`, or the absolute difference when `b` vanishes.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
