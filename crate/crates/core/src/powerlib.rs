//! Signed powers and the elementary inequalities they satisfy.
//!
//! Each `check_*` function evaluates both sides of one inequality and reports
//! the signed slack. Constants come either in closed form or from a seeded
//! supremum search ([`certify_constant`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to every inequality check.
pub const SLACK: f64 = 1e-12;
/// Upper end of the `b` range explored by supremum searches.
pub const B_MAX: f64 = 1e3;
/// Headroom factor applied to numerically certified constants.
pub const HEADROOM: f64 = 1.05;

/// `|a|^{q−1}·a` without argument checks; `0` at `a = 0`.
#[inline]
pub fn spow(a: f64, q: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().powf(q - 1.0) * a
    }
}

/// `|a|^{q−1}·a`, with the removable value `0` at `a = 0`.
pub fn signed_power(a: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::NonpositiveExponent(q));
    }
    Ok(spow(a, q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InequalityId {
    /// `(a+b)^q ≤ max{1, 2^{q−1}}(a^q + b^q)` for `a, b ≥ 0`.
    SumPower,
    /// `(a+b)^{∗q} − a^{∗q} ≥ 2^{1−q} b^q` for `q ≥ 1`, `b ≥ 0`.
    IncrementGeq1,
    /// `a^{∗q} − (a−b)^{∗q} ≤ C_{M,1} max{b, b^q}` for `|a| ≤ M`, `b ≥ 0`.
    DiffUpper,
    /// `(a+b)^{∗q} − a^{∗q} ≥ C_{M,2} min{b, b^q}` for `|a| ≤ M`, `b ≥ 0`.
    IncrementBounded,
    /// `|(a+b)^{∗q} − a^{∗q}| ≤ C|b|^q` for `0 < q ≤ 1`.
    HolderDiff,
}

impl InequalityId {
    pub const ALL: [InequalityId; 5] = [
        InequalityId::SumPower,
        InequalityId::IncrementGeq1,
        InequalityId::DiffUpper,
        InequalityId::IncrementBounded,
        InequalityId::HolderDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InequalityId::SumPower => "SUM_POWER",
            InequalityId::IncrementGeq1 => "INCREMENT_GEQ1",
            InequalityId::DiffUpper => "DIFF_UPPER",
            InequalityId::IncrementBounded => "INCREMENT_BOUNDED",
            InequalityId::HolderDiff => "HOLDER_DIFF",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    ClosedForm,
    NumericSupSearch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityConstant {
    pub inequality_id: InequalityId,
    pub q: f64,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub value: f64,
    pub provenance: Provenance,
}

/// Both sides of one inequality evaluation. `gap` is positive when the
/// inequality holds with room to spare.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub bound: f64,
    pub gap: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn upper(lhs: f64, bound: f64, scale: f64) -> Self {
        let gap = bound - lhs;
        Self {
            lhs,
            bound,
            gap,
            holds: gap >= -SLACK * (1.0 + scale),
        }
    }

    fn lower(lhs: f64, bound: f64, scale: f64) -> Self {
        let gap = lhs - bound;
        Self {
            lhs,
            bound,
            gap,
            holds: gap >= -SLACK * (1.0 + scale),
        }
    }
}

fn positive_q(q: f64) -> Result<()> {
    if q > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveExponent(q))
    }
}

fn bounded_a(a: f64, m: f64) -> Result<()> {
    if a.abs() > m {
        Err(Error::OutOfRange { a, m })
    } else {
        Ok(())
    }
}

fn nonnegative_b(b: f64) -> Result<()> {
    if b < 0.0 {
        Err(Error::Domain(format!("b must be nonnegative, got {b}")))
    } else {
        Ok(())
    }
}

/// Closed-form constant of the sum-of-powers inequality.
pub fn sum_power_constant(q: f64) -> f64 {
    1f64.max(2f64.powf(q - 1.0))
}

/// Closed-form constant `C_{M,2}`: `2^{1−q}` for `q ≥ 1`, `q·2^{q−1}·min{1, M^{q−1}}` for `q < 1`.
pub fn increment_bounded_constant(q: f64, m: f64) -> f64 {
    if q >= 1.0 {
        2f64.powf(1.0 - q)
    } else {
        q * 2f64.powf(q - 1.0) * 1f64.min(m.powf(q - 1.0))
    }
}

pub fn check_sum_power(a: f64, b: f64, q: f64) -> Result<InequalityCheck> {
    positive_q(q)?;
    if a < 0.0 || b < 0.0 {
        return Err(Error::Domain(format!(
            "a and b must be nonnegative, got a = {a}, b = {b}"
        )));
    }
    let lhs = (a + b).powf(q);
    let rhs = sum_power_constant(q) * (a.powf(q) + b.powf(q));
    Ok(InequalityCheck::upper(lhs, rhs, rhs))
}

pub fn check_increment_geq1(a: f64, b: f64, q: f64) -> Result<InequalityCheck> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q must be at least 1, got {q}")));
    }
    nonnegative_b(b)?;
    let lhs = spow(a + b, q) - spow(a, q);
    let bound = 2f64.powf(1.0 - q) * b.powf(q);
    Ok(InequalityCheck::lower(
        lhs,
        bound,
        a.abs().powf(q) + b.powf(q),
    ))
}

pub fn check_diff_upper(
    m: f64,
    a: f64,
    b: f64,
    q: f64,
    c: &InequalityConstant,
) -> Result<InequalityCheck> {
    positive_q(q)?;
    bounded_a(a, m)?;
    nonnegative_b(b)?;
    let lhs = spow(a, q) - spow(a - b, q);
    let bound = c.value * b.max(b.powf(q));
    Ok(InequalityCheck::upper(
        lhs,
        bound,
        a.abs().powf(q) + (a - b).abs().powf(q) + bound,
    ))
}

pub fn check_increment_bounded(
    m: f64,
    a: f64,
    b: f64,
    q: f64,
    c: &InequalityConstant,
) -> Result<InequalityCheck> {
    positive_q(q)?;
    bounded_a(a, m)?;
    nonnegative_b(b)?;
    let lhs = spow(a + b, q) - spow(a, q);
    let bound = c.value * b.min(b.powf(q));
    Ok(InequalityCheck::lower(
        lhs,
        bound,
        a.abs().powf(q) + (a + b).abs().powf(q),
    ))
}

pub fn check_holder_diff(
    a: f64,
    b: f64,
    q: f64,
    c: &InequalityConstant,
) -> Result<InequalityCheck> {
    positive_q(q)?;
    if q > 1.0 {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    let lhs = (spow(a + b, q) - spow(a, q)).abs();
    let bound = c.value * b.abs().powf(q);
    Ok(InequalityCheck::upper(
        lhs,
        bound,
        a.abs().powf(q) + (a + b).abs().powf(q) + bound,
    ))
}

/// Effort spent by a supremum search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Points per axis of the structured grid.
    pub grid: usize,
    /// Additional uniformly random samples.
    pub random: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            grid: 400,
            random: 20_000,
            seed: 0x5eed,
        }
    }
}

/// Maximizes `ratio` over `a ∈ [a_lo, a_hi]`, `b ∈ [b_lo, b_hi]` (b log-spaced), then
/// polishes the best points by a shrinking compass search.
fn sup_search<F>(
    ratio: F,
    a_range: (f64, f64),
    b_range: (f64, f64),
    budget: &SearchBudget,
) -> Result<(f64, f64, f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let (a_lo, a_hi) = a_range;
    let (lb_lo, lb_hi) = (b_range.0.ln(), b_range.1.ln());
    let n = budget.grid.max(3);
    let mut cands: Vec<(f64, f64, f64)> = Vec::with_capacity(n * n + budget.random);
    let push = |a: f64, b: f64, cands: &mut Vec<(f64, f64, f64)>| -> Result<()> {
        let r = ratio(a, b);
        if !r.is_finite() || r > 1e12 {
            return Err(Error::SearchDiverged { ratio: r, a, b });
        }
        cands.push((r, a, b));
        Ok(())
    };
    let mut a_axis: Vec<f64> = (0..n)
        .map(|i| a_lo + (a_hi - a_lo) * i as f64 / (n - 1) as f64)
        .collect();
    a_axis.extend(
        [0.0, -0.5, 0.5]
            .iter()
            .filter(|v| (a_lo..=a_hi).contains(*v)),
    );
    for &a in &a_axis {
        for j in 0..n {
            let b = (lb_lo + (lb_hi - lb_lo) * j as f64 / (n - 1) as f64).exp();
            push(a, b, &mut cands)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    for _ in 0..budget.random {
        let a = rng.gen_range(a_lo..=a_hi);
        let b = rng.gen_range(lb_lo..=lb_hi).exp();
        push(a, b, &mut cands)?;
    }
    cands.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = cands[0];
    for &(r0, a0, b0) in cands.iter().take(8) {
        let (mut r, mut a, mut lb) = (r0, a0, b0.ln());
        let mut step_a = (a_hi - a_lo) / n as f64;
        let mut step_b = (lb_hi - lb_lo) / n as f64;
        while step_a > 1e-13 * (1.0 + a_hi.abs()) || step_b > 1e-13 {
            let mut improved = false;
            for (da, db) in [(step_a, 0.0), (-step_a, 0.0), (0.0, step_b), (0.0, -step_b)] {
                let na = (a + da).clamp(a_lo, a_hi);
                let nb = (lb + db).clamp(lb_lo, lb_hi);
                let nr = ratio(na, nb.exp());
                if !nr.is_finite() || nr > 1e12 {
                    return Err(Error::SearchDiverged {
                        ratio: nr,
                        a: na,
                        b: nb.exp(),
                    });
                }
                if nr > r {
                    r = nr;
                    a = na;
                    lb = nb;
                    improved = true;
                }
            }
            if !improved {
                step_a *= 0.5;
                step_b *= 0.5;
            }
        }
        if r > best.0 {
            best = (r, a, lb.exp());
        }
    }
    Ok(best)
}

/// Closed-form constant where one is known; otherwise `1.05 ×` a seeded numeric supremum.
///
/// The `b` range of searches is capped at [`B_MAX`]. Beyond it the ratios are
/// monotone: for `DIFF_UPPER` the ratio tends to 1 (`q ≥ 1`) or 0 (`q < 1`) as
/// `b → ∞`, and `HOLDER_DIFF` is scale invariant, so only `a/b` matters.
pub fn certify_constant(
    id: InequalityId,
    q: f64,
    m: Option<f64>,
    budget: &SearchBudget,
) -> Result<InequalityConstant> {
    positive_q(q)?;
    let need_m = || -> Result<f64> {
        match m {
            Some(m) if m > 0.0 => Ok(m),
            _ => Err(Error::Domain(format!("{} needs a bound M > 0", id.name()))),
        }
    };
    let closed = |value: f64, m: Option<f64>| InequalityConstant {
        inequality_id: id,
        q,
        m,
        value,
        provenance: Provenance::ClosedForm,
    };
    let searched = |value: f64, m: Option<f64>| InequalityConstant {
        inequality_id: id,
        q,
        m,
        value: HEADROOM * value,
        provenance: Provenance::NumericSupSearch,
    };
    match id {
        InequalityId::SumPower => Ok(closed(sum_power_constant(q), None)),
        InequalityId::IncrementGeq1 => {
            if q < 1.0 {
                return Err(Error::Domain(format!("q must be at least 1, got {q}")));
            }
            Ok(closed(2f64.powf(1.0 - q), None))
        }
        InequalityId::IncrementBounded => {
            let m = need_m()?;
            Ok(closed(increment_bounded_constant(q, m), Some(m)))
        }
        InequalityId::DiffUpper => {
            let m = need_m()?;
            let ratio = |a: f64, b: f64| (spow(a, q) - spow(a - b, q)) / b.max(b.powf(q));
            let (sup, _, _) = sup_search(ratio, (-m, m), (1e-9, B_MAX), budget)?;
            Ok(searched(sup, Some(m)))
        }
        InequalityId::HolderDiff => {
            if q > 1.0 {
                return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
            }
            // ratio depends on a/b only; fix b = 1 and scan a, the b axis being inert
            let ratio = |a: f64, _b: f64| (spow(a + 1.0, q) - spow(a, q)).abs();
            let (sup, _, _) = sup_search(ratio, (-50.0, 50.0), (1.0, 1.0 + 1e-9), budget)?;
            Ok(searched(sup, None))
        }
    }
}

/// Violation tally for one inequality family within one `(q, M)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyTally {
    pub inequality_id: InequalityId,
    pub applicable: bool,
    pub constant: Option<f64>,
    pub provenance: Option<Provenance>,
    pub checked: usize,
    pub violations: usize,
    /// Smallest normalized gap `gap / (1 + |bound|)` seen.
    pub worst_relative_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCell {
    pub q: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub samples: usize,
    pub seed: u64,
    pub families: Vec<FamilyTally>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalitySuiteReport {
    pub cells: Vec<InequalityCell>,
    pub total_checked: usize,
    pub total_violations: usize,
    pub holds: bool,
}

/// Derives the seed of the `counter`-th sub-task from a master seed (SplitMix64 step).
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Tally {
    checked: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            checked: 0,
            violations: 0,
            worst: f64::INFINITY,
        }
    }

    fn add(&mut self, c: InequalityCheck) {
        self.checked += 1;
        if !c.holds {
            self.violations += 1;
        }
        self.worst = self.worst.min(c.gap / (1.0 + c.bound.abs()));
    }
}

fn run_cell(
    q: f64,
    m: f64,
    samples: usize,
    seed: u64,
    budget: &SearchBudget,
) -> Result<InequalityCell> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_diff = certify_constant(InequalityId::DiffUpper, q, Some(m), budget)?;
    let c_inc = certify_constant(InequalityId::IncrementBounded, q, Some(m), budget)?;
    let c_hold = if q <= 1.0 {
        Some(certify_constant(InequalityId::HolderDiff, q, None, budget)?)
    } else {
        None
    };
    let mut t = [
        Tally::new(),
        Tally::new(),
        Tally::new(),
        Tally::new(),
        Tally::new(),
    ];
    // b mixes uniform samples on [0, 2M] with log-uniform magnitudes on [1e-6, B_MAX]
    let (lo, hi) = (1e-6f64.ln(), B_MAX.ln());
    for k in 0..samples {
        let a = rng.gen_range(-m..=m);
        let b = if k % 2 == 0 {
            rng.gen_range(0.0..=2.0 * m)
        } else {
            rng.gen_range(lo..=hi).exp()
        };
        let a_pos = rng.gen_range(0.0..=m);
        t[0].add(check_sum_power(a_pos, b, q)?);
        if q >= 1.0 {
            t[1].add(check_increment_geq1(a, b, q)?);
        }
        t[2].add(check_diff_upper(m, a, b, q, &c_diff)?);
        t[3].add(check_increment_bounded(m, a, b, q, &c_inc)?);
        if let Some(c) = &c_hold {
            let signed_b = if rng.gen::<bool>() { b } else { -b };
            t[4].add(check_holder_diff(a, signed_b, q, c)?);
        }
    }
    let constants = [
        Some((sum_power_constant(q), Provenance::ClosedForm)),
        (q >= 1.0).then(|| (2f64.powf(1.0 - q), Provenance::ClosedForm)),
        Some((c_diff.value, c_diff.provenance)),
        Some((c_inc.value, c_inc.provenance)),
        c_hold.map(|c| (c.value, c.provenance)),
    ];
    let families = InequalityId::ALL
        .iter()
        .zip(t.iter())
        .zip(constants)
        .map(|((&id, t), c)| FamilyTally {
            inequality_id: id,
            applicable: c.is_some(),
            constant: c.map(|c| c.0),
            provenance: c.map(|c| c.1),
            checked: t.checked,
            violations: t.violations,
            worst_relative_gap: (t.checked > 0).then_some(t.worst),
        })
        .collect();
    Ok(InequalityCell {
        q,
        m,
        samples,
        seed,
        families,
    })
}

/// Randomized check of all five inequalities over every `(q, M)` cell.
pub fn run_inequality_suite(
    qs: &[f64],
    ms: &[f64],
    samples: usize,
    seed: u64,
    budget: &SearchBudget,
) -> Result<InequalitySuiteReport> {
    let jobs: Vec<(f64, f64, u64)> = qs
        .iter()
        .flat_map(|&q| ms.iter().map(move |&m| (q, m)))
        .enumerate()
        .map(|(k, (q, m))| (q, m, derive_seed(seed, k as u64)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(q, m, s)| run_cell(q, m, samples, s, budget))
        .collect::<Result<Vec<_>>>()?;
    let total_checked = cells
        .iter()
        .flat_map(|c| &c.families)
        .map(|f| f.checked)
        .sum();
    let total_violations = cells
        .iter()
        .flat_map(|c| &c.families)
        .map(|f| f.violations)
        .sum();
    Ok(InequalitySuiteReport {
        cells,
        total_checked,
        total_violations,
        holds: total_violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> SearchBudget {
        SearchBudget {
            grid: 120,
            random: 2000,
            seed: 7,
        }
    }

    #[test]
    fn signed_power_examples() {
        assert_eq!(signed_power(2.0, 3.0).unwrap(), 8.0);
        assert_eq!(signed_power(-2.0, 2.0).unwrap(), -4.0);
        assert_eq!(signed_power(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(
            signed_power(1.0, 0.0).unwrap_err(),
            Error::NonpositiveExponent(0.0)
        );
    }

    #[test]
    fn sum_power_examples() {
        let c = check_sum_power(1.0, 1.0, 2.0).unwrap();
        assert_eq!((c.lhs, c.bound, c.holds), (4.0, 4.0, true));
        let c = check_sum_power(0.0, 5.0, 0.5).unwrap();
        assert!(
            (c.lhs - 5f64.sqrt()).abs() < 1e-15 && (c.bound - 5f64.sqrt()).abs() < 1e-15 && c.holds
        );
        let c = check_sum_power(3.0, 7.0, 1.7).unwrap();
        let lhs = 10f64.powf(1.7);
        let rhs = 2f64.powf(0.7) * (3f64.powf(1.7) + 7f64.powf(1.7));
        assert!(c.holds && lhs <= rhs && (c.lhs - lhs).abs() < 1e-12);
        assert!(matches!(
            check_sum_power(-1.0, 1.0, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn increment_geq1_examples() {
        let c = check_increment_geq1(0.0, 1.0, 2.0).unwrap();
        assert_eq!((c.lhs, c.bound), (1.0, 0.5));
        let c = check_increment_geq1(-0.5, 1.0, 2.0).unwrap();
        assert_eq!(c.lhs, 0.5);
        assert!(c.holds && c.gap.abs() < 1e-15);
        let c = check_increment_geq1(0.7, 0.0, 2.5).unwrap();
        assert_eq!(c.gap, 0.0);
        assert!(matches!(
            check_increment_geq1(0.0, 1.0, 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            check_increment_geq1(0.0, -1.0, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn diff_upper_examples() {
        let c = certify_constant(InequalityId::DiffUpper, 2.0, Some(1.0), &budget()).unwrap();
        assert_eq!(c.provenance, Provenance::NumericSupSearch);
        assert!(c.value > 0.0 && c.value.is_finite());
        assert!(check_diff_upper(1.0, 1.0, 2.0, 2.0, &c).unwrap().holds);
        let z = check_diff_upper(1.0, 0.0, 0.0, 2.0, &c).unwrap();
        assert_eq!((z.lhs, z.bound, z.holds), (0.0, 0.0, true));
        let c3 = certify_constant(InequalityId::DiffUpper, 3.0, Some(2.0), &budget()).unwrap();
        assert!(check_diff_upper(2.0, 1.5, 0.5, 3.0, &c3).unwrap().holds);
        assert!(matches!(
            check_diff_upper(1.0, 1.5, 0.5, 3.0, &c3),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn diff_upper_constant_for_q2() {
        // at a = −M: a^{∗2} − (a−b)^{∗2} = 2Mb + b², whose ratio to max{b, b²} peaks at 2M + 1 (b = 1)
        let c = certify_constant(InequalityId::DiffUpper, 2.0, Some(1.0), &budget()).unwrap();
        assert!((c.value / HEADROOM - 3.0).abs() < 1e-9);
        let c = certify_constant(InequalityId::DiffUpper, 2.0, Some(10.0), &budget()).unwrap();
        assert!((c.value / HEADROOM - 21.0).abs() < 1e-9);
    }

    #[test]
    fn increment_bounded_examples() {
        let c =
            certify_constant(InequalityId::IncrementBounded, 0.5, Some(1.0), &budget()).unwrap();
        assert_eq!(c.provenance, Provenance::ClosedForm);
        assert!((c.value - 0.5 * 2f64.powf(-0.5)).abs() < 1e-15);
        let r = check_increment_bounded(1.0, 0.0, 1.0, 0.5, &c).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.holds);
        let r = check_increment_bounded(1.0, -1.0, 2.0, 0.5, &c).unwrap();
        assert_eq!(r.lhs, 2.0);
        assert!(r.holds && (r.bound - c.value * 2f64.sqrt()).abs() < 1e-15);
        let r = check_increment_bounded(1.0, 0.3, 0.0, 0.5, &c).unwrap();
        assert_eq!((r.lhs, r.bound), (0.0, 0.0));
        let c2 =
            certify_constant(InequalityId::IncrementBounded, 2.0, Some(1.0), &budget()).unwrap();
        assert_eq!(c2.value, 0.5);
    }

    #[test]
    fn holder_examples() {
        let c = certify_constant(InequalityId::HolderDiff, 1.0, None, &budget()).unwrap();
        assert!((c.value - 1.05).abs() < 1e-9);
        let c = certify_constant(InequalityId::HolderDiff, 0.5, None, &budget()).unwrap();
        // the supremum 2^{1−q} is attained at a = −b/2
        assert!((c.value / HEADROOM - 2f64.powf(0.5)).abs() < 1e-9);
        assert!(c.value >= 1.0);
        assert!(check_holder_diff(0.0, 3.0, 0.5, &c).unwrap().holds);
        assert!(check_holder_diff(5.0, -10.0, 0.5, &c).unwrap().holds);
        let z = check_holder_diff(2.0, 0.0, 0.5, &c).unwrap();
        assert_eq!((z.lhs, z.bound), (0.0, 0.0));
        assert!(matches!(
            check_holder_diff(0.0, 1.0, 1.5, &c),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..16).map(|k| derive_seed(42, k)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 16);
        assert_eq!(derive_seed(42, 3), a[3]);
    }

    #[test]
    fn small_suite_has_no_violations() {
        let r = run_inequality_suite(&[0.3, 1.0, 3.0], &[1.0, 10.0], 2000, 1, &budget()).unwrap();
        assert_eq!(r.total_violations, 0);
        assert!(r.holds);
        assert_eq!(r.cells.len(), 6);
    }
}
