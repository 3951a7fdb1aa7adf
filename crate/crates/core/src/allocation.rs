//! Greedy distribution of the committed common rates to users that fall
//! short of their QoS target.
//!
//! The walk is written once over [`AllocValue`] so the same control flow
//! produces plain allocations and allocations linearized in the input rates.

use crate::channel::UserGroupLayout;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationInput<T> {
    /// Committed global common rate.
    pub common: T,
    /// Committed common rate per group.
    pub group_common: Vec<T>,
    pub private: Vec<T>,
    pub thresholds: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult<T> {
    pub allocated: Vec<T>,
}

/// Allocation together with `∂alloc_k / ∂r_j` along the branch taken, where
/// `r = [common, group_common.., private..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedAllocation<T> {
    pub allocated: Vec<T>,
    pub jacobian: Vec<Vec<T>>,
}

/// Arithmetic the allocation walk needs. Branches only look at `val`.
pub trait AllocValue<T: Real>: Clone {
    fn val(&self) -> T;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn over(&self, n: usize) -> Self;
    /// Constant with the same shape as `self`.
    fn constant(&self, c: T) -> Self;
}

impl<T: Real> AllocValue<T> for T {
    fn val(&self) -> T {
        *self
    }
    fn plus(&self, other: &Self) -> Self {
        *self + *other
    }
    fn minus(&self, other: &Self) -> Self {
        *self - *other
    }
    fn over(&self, n: usize) -> Self {
        *self / T::of(n as f64)
    }
    fn constant(&self, c: T) -> Self {
        c
    }
}

/// A value and its gradient with respect to the allocation inputs.
#[derive(Clone, Debug, PartialEq)]
struct Tracked<T> {
    value: T,
    coef: Vec<T>,
}

impl<T: Real> AllocValue<T> for Tracked<T> {
    fn val(&self) -> T {
        self.value
    }
    fn plus(&self, other: &Self) -> Self {
        Tracked { value: self.value + other.value, coef: self.coef.iter().zip(&other.coef).map(|(&a, &b)| a + b).collect() }
    }
    fn minus(&self, other: &Self) -> Self {
        Tracked { value: self.value - other.value, coef: self.coef.iter().zip(&other.coef).map(|(&a, &b)| a - b).collect() }
    }
    fn over(&self, n: usize) -> Self {
        let d = T::of(n as f64);
        Tracked { value: self.value / d, coef: self.coef.iter().map(|&a| a / d).collect() }
    }
    fn constant(&self, c: T) -> Self {
        Tracked { value: c, coef: vec![T::zero(); self.coef.len()] }
    }
}

fn deficient<T: Real, V: AllocValue<T>>(alloc: &[V], thresholds: &[T]) -> usize {
    alloc.iter().zip(thresholds).filter(|(a, &th)| a.val() - th < T::zero()).count()
}

/// Fills deficits of `users` in order from `budget`; any leftover is split
/// equally over `users`.
fn fill<T: Real, V: AllocValue<T>>(alloc: &mut [V], thresholds: &[T], users: &[usize], budget: &V) {
    let mut avail = budget.clone();
    for &k in users {
        if alloc[k].val() - thresholds[k] < T::zero() {
            let need = alloc[k].constant(thresholds[k]).minus(&alloc[k]);
            if avail.val() > need.val() {
                avail = avail.minus(&need);
                alloc[k] = alloc[k].plus(&need);
            } else {
                alloc[k] = alloc[k].plus(&avail);
                avail = avail.constant(T::zero());
                break;
            }
        }
    }
    if avail.val() > T::zero() {
        let share = avail.over(users.len());
        for &k in users {
            alloc[k] = alloc[k].plus(&share);
        }
    }
}

fn split<T: Real, V: AllocValue<T>>(alloc: &mut [V], users: &[usize], budget: &V) {
    let share = budget.over(users.len());
    for &k in users {
        alloc[k] = alloc[k].plus(&share);
    }
}

/// Runs the allocation walk on generic values.
pub fn allocate_generic<T: Real, V: AllocValue<T>>(
    common: &V,
    group_common: &[V],
    private: &[V],
    thresholds: &[T],
    layout: &UserGroupLayout<T>,
) -> Vec<V> {
    let all: Vec<usize> = (0..private.len()).collect();
    let mut alloc = private.to_vec();
    if deficient(&alloc, thresholds) > 0 {
        for (g, budget) in group_common.iter().enumerate() {
            fill(&mut alloc, thresholds, layout.members(g), budget);
        }
        if deficient(&alloc, thresholds) > 0 {
            fill(&mut alloc, thresholds, &all, common);
        } else {
            split(&mut alloc, &all, common);
        }
    } else {
        for (g, budget) in group_common.iter().enumerate() {
            split(&mut alloc, layout.members(g), budget);
        }
        split(&mut alloc, &all, common);
    }
    alloc
}

fn validate<T: Real>(input: &AllocationInput<T>, layout: &UserGroupLayout<T>) -> Result<()> {
    let k = layout.users();
    if input.private.len() != k || input.thresholds.len() != k || input.group_common.len() != layout.groups() {
        return Err(Error::InconsistentGrouping(format!(
            "layout has {k} users in {} groups; input has {} private rates, {} thresholds, {} group rates",
            layout.groups(),
            input.private.len(),
            input.thresholds.len(),
            input.group_common.len()
        )));
    }
    let values = std::iter::once(&input.common).chain(&input.group_common).chain(&input.private).chain(&input.thresholds);
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("allocation input"));
    }
    Ok(())
}

pub fn allocate_common_rates<T: Real>(input: &AllocationInput<T>, layout: &UserGroupLayout<T>) -> Result<AllocationResult<T>> {
    validate(input, layout)?;
    let allocated = allocate_generic(&input.common, &input.group_common, &input.private, &input.thresholds, layout);
    Ok(AllocationResult { allocated })
}

pub fn allocate_linearized<T: Real>(
    input: &AllocationInput<T>,
    layout: &UserGroupLayout<T>,
) -> Result<LinearizedAllocation<T>> {
    validate(input, layout)?;
    let n = 1 + input.group_common.len() + input.private.len();
    let seed = |value: T, slot: usize| {
        let mut coef = vec![T::zero(); n];
        coef[slot] = T::one();
        Tracked { value, coef }
    };
    let g = input.group_common.len();
    let common = seed(input.common, 0);
    let groups: Vec<_> = input.group_common.iter().enumerate().map(|(i, &v)| seed(v, 1 + i)).collect();
    let private: Vec<_> = input.private.iter().enumerate().map(|(i, &v)| seed(v, 1 + g + i)).collect();
    let out = allocate_generic(&common, &groups, &private, &input.thresholds, layout);
    Ok(LinearizedAllocation {
        allocated: out.iter().map(|t| t.value).collect(),
        jacobian: out.into_iter().map(|t| t.coef).collect(),
    })
}

/// Users whose allocation stays below target.
pub fn qos_violations<T: Real>(allocated: &[T], thresholds: &[T]) -> usize {
    deficient(allocated, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_group(k: usize) -> UserGroupLayout<f64> {
        UserGroupLayout::from_membership(vec![0; k], 1).unwrap()
    }

    #[test]
    fn no_deficit_splits_equally() {
        let input = AllocationInput { common: 1.0, group_common: vec![0.5], private: vec![1.0, 1.0], thresholds: vec![0.25; 2] };
        let r = allocate_common_rates(&input, &one_group(2)).unwrap();
        assert_eq!(r.allocated, vec![1.75, 1.75]);
    }

    #[test]
    fn hand_traced_partial_fill() {
        let input = AllocationInput { common: 0.3, group_common: vec![0.1], private: vec![0.0, 1.0], thresholds: vec![0.25; 2] };
        let r = allocate_common_rates(&input, &one_group(2)).unwrap();
        assert!((r.allocated[0] - 0.325).abs() < 1e-15);
        assert!((r.allocated[1] - 1.075).abs() < 1e-15);
    }

    #[test]
    fn zero_thresholds_conserve_budget() {
        let layout = UserGroupLayout::from_membership(vec![0, 0, 1], 2).unwrap();
        let input = AllocationInput { common: 0.7, group_common: vec![0.2, 0.4], private: vec![1.0, 0.5, 0.1], thresholds: vec![0.0; 3] };
        let r = allocate_common_rates(&input, &layout).unwrap();
        assert!((r.allocated.iter().sum::<f64>() - 2.9).abs() < 1e-12);
        assert!((r.allocated[2] - (0.1 + 0.4 + 0.7 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_groups() {
        let input = AllocationInput { common: 0.0, group_common: vec![0.0, 0.0], private: vec![0.0], thresholds: vec![0.0] };
        assert!(matches!(allocate_common_rates(&input, &one_group(1)), Err(Error::InconsistentGrouping(_))));
    }

    #[test]
    fn linearized_values_match_plain() {
        let layout = UserGroupLayout::from_membership(vec![0, 1, 0, 1], 2).unwrap();
        let input = AllocationInput {
            common: 0.4,
            group_common: vec![0.05, 0.3],
            private: vec![0.1, 0.0, 0.9, 0.2],
            thresholds: vec![0.25; 4],
        };
        let plain = allocate_common_rates(&input, &layout).unwrap();
        let lin = allocate_linearized(&input, &layout).unwrap();
        assert_eq!(plain.allocated, lin.allocated);
    }

    fn arb_instance() -> impl Strategy<Value = (UserGroupLayout<f64>, AllocationInput<f64>)> {
        (1usize..=4, 1usize..=12).prop_flat_map(|(g, k)| {
            let k = k.max(g);
            (
                proptest::collection::vec(0..g, k - g),
                0.0f64..2.0,
                proptest::collection::vec(0.0f64..1.0, g),
                proptest::collection::vec(0.0f64..2.0, k),
                proptest::collection::vec(0.0f64..1.0, k),
            )
                .prop_map(move |(extra, common, group_common, private, thresholds)| {
                    // first g users cover every group once
                    let mut group_of: Vec<usize> = (0..g).collect();
                    group_of.extend(extra);
                    let layout = UserGroupLayout::from_membership(group_of, g).unwrap();
                    (layout, AllocationInput { common, group_common, private, thresholds })
                })
        })
    }

    proptest! {
        #[test]
        fn conserves_and_never_harms((layout, input) in arb_instance()) {
            let r = allocate_common_rates(&input, &layout).unwrap();
            let total = input.common + input.group_common.iter().sum::<f64>() + input.private.iter().sum::<f64>();
            prop_assert!((r.allocated.iter().sum::<f64>() - total).abs() <= 1e-9);
            for (a, p) in r.allocated.iter().zip(&input.private) {
                prop_assert!(a >= p);
            }
            prop_assert_eq!(allocate_common_rates(&input, &layout).unwrap(), r);
        }

        #[test]
        fn jacobian_matches_small_perturbations((layout, input) in arb_instance()) {
            let lin = allocate_linearized(&input, &layout).unwrap();
            let base = allocate_common_rates(&input, &layout).unwrap();
            let h = 1e-7;
            let n = 1 + input.group_common.len() + input.private.len();
            for j in 0..n {
                let mut up = input.clone();
                match j {
                    0 => up.common += h,
                    j if j <= input.group_common.len() => up.group_common[j - 1] += h,
                    j => up.private[j - 1 - input.group_common.len()] += h,
                }
                let moved = allocate_common_rates(&up, &layout).unwrap();
                // skip perturbations that cross a branch boundary
                let same_branch = moved.allocated.iter().zip(&base.allocated).zip(&lin.jacobian)
                    .all(|((m, b), row)| ((m - b) / h - row[j]).abs() < 1e-4);
                let crossed = qos_violations(&moved.allocated, &input.thresholds) != qos_violations(&base.allocated, &input.thresholds);
                if !crossed && !same_branch {
                    // a genuine mismatch would show up at a smaller step too
                    let h2 = 1e-9;
                    let mut up2 = input.clone();
                    match j {
                        0 => up2.common += h2,
                        j if j <= input.group_common.len() => up2.group_common[j - 1] += h2,
                        j => up2.private[j - 1 - input.group_common.len()] += h2,
                    }
                    let m2 = allocate_common_rates(&up2, &layout).unwrap();
                    for ((m, b), row) in m2.allocated.iter().zip(&base.allocated).zip(&lin.jacobian) {
                        prop_assert!(((m - b) / h2 - row[j]).abs() < 1e-2, "slot {} row {:?}", j, row);
                    }
                }
            }
        }
    }
}
