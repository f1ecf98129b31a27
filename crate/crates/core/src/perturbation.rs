//! Formal power series `φ = Σ_j λ^j φ_j` of the Duhamel equation.
//!
//! Inserting the series into `φ = φ₀ − λ S∗φ^p` and collecting powers of λ
//! gives, for `j ≥ 1`,
//!
//! ```text
//! φ_j = −S ∗ Σ  p!/(n₀! n₁! ⋯) Π_i φ_i^{n_i}
//! ```
//!
//! summed over `n_i ≥ 0` with `Σ n_i = p` and `Σ i·n_i = j − 1`.

use rayon::prelude::*;

use crate::duhamel::{self, SpaceTimeField, TimeGrid};
use crate::error::{Error, Result};
use crate::kernels::{DispersionTable, ModelParams};
use crate::lattice::Field;

/// One index vector `(n₀, …, n_{j−1})` of the order-`j` sum with its multinomial weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionTerm {
    pub counts: Vec<u32>,
    pub coefficient: u64,
}

/// Exact multinomial `(Σ n)! / Π n!`, or `None` if it exceeds `u64`.
pub fn multinomial(counts: &[u32]) -> Option<u64> {
    let mut total: u128 = 0;
    let mut result: u128 = 1;
    for &n in counts {
        // multiply by C(total + n, n)
        let mut binom: u128 = 1;
        for k in 1..=n as u128 {
            binom = binom.checked_mul(total + k)? / k;
        }
        total += n as u128;
        result = result.checked_mul(binom)?;
        if result > u64::MAX as u128 {
            return None;
        }
    }
    u64::try_from(result).ok()
}

/// All `(n₀, …, n_{j−1})` with `Σ n_i = p`, `Σ i n_i = j − 1`, in descending lexicographic order.
pub fn enumerate_partitions(power: u32, order: usize) -> Result<Vec<PartitionTerm>> {
    if power < 1 {
        return Err(Error::InvalidParameter { name: "power", reason: "must be at least 1".into() });
    }
    if order < 1 {
        return Err(Error::InvalidParameter { name: "order", reason: "partitions start at order 1".into() });
    }
    let mut out = Vec::new();
    let mut counts = vec![0u32; order];
    fill(&mut counts, 0, power, order - 1, &mut out);
    out.into_iter()
        .map(|counts| {
            let coefficient =
                multinomial(&counts).ok_or(Error::CoefficientOverflow { power, order })?;
            Ok(PartitionTerm { counts, coefficient })
        })
        .collect()
}

fn fill(counts: &mut [u32], index: usize, left: u32, weight: usize, out: &mut Vec<Vec<u32>>) {
    if index == counts.len() {
        if left == 0 && weight == 0 {
            out.push(counts.to_vec());
        }
        return;
    }
    let cap = weight.checked_div(index).map_or(left, |w| left.min(w as u32));
    for n in (0..=cap).rev() {
        counts[index] = n;
        fill(counts, index + 1, left - n, weight - index * n as usize, out);
    }
    counts[index] = 0;
}

/// Coefficient `φ_j` of `λ^j` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderField {
    pub order: usize,
    pub field: SpaceTimeField,
}

/// `φ₀, …, φ_J` by the multinomial recursion.
pub fn compute_orders(
    max_order: usize,
    f: &Field,
    g: &Field,
    xi: &SpaceTimeField,
    params: &ModelParams,
    table: &DispersionTable,
    grid: &TimeGrid,
) -> Result<Vec<OrderField>> {
    let phi0 = duhamel::zeroth_order(f, g, xi, table, grid)?;
    let mut orders = vec![OrderField { order: 0, field: phi0 }];
    for j in 1..=max_order {
        let terms = enumerate_partitions(params.power, j)?;
        let products: Vec<SpaceTimeField> = terms
            .par_iter()
            .map(|term| {
                let mut product: Option<SpaceTimeField> = None;
                for (i, &n) in term.counts.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    let factor = orders[i].field.powi(n);
                    match product.as_mut() {
                        Some(p) => p.mul_assign(&factor),
                        None => product = Some(factor),
                    }
                }
                product.expect("every term has Σ n_i = p ≥ 1").scaled(term.coefficient as f64)
            })
            .collect();
        let mut source = SpaceTimeField::zeros(*f.spec(), *grid);
        for p in &products {
            source.add_scaled(1.0, p);
        }
        let field = duhamel::source_convolve(&source, table)?.scaled(-1.0);
        orders.push(OrderField { order: j, field });
    }
    Ok(orders)
}

/// `Σ_{j ≤ J} λ^j φ_j`, Horner-evaluated.
pub fn partial_sum(orders: &[OrderField], lambda: f64) -> SpaceTimeField {
    let mut iter = orders.iter().rev();
    let mut acc = iter.next().expect("at least the zeroth order").field.clone();
    for order in iter {
        acc = acc.scaled(lambda);
        acc.add_scaled(1.0, &order.field);
    }
    acc
}
