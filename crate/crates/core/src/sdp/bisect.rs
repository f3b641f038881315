use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct BisectOutcome<W> {
    /// Largest parameter found feasible.
    pub sup: f64,
    /// Witness returned by the predicate at `sup`.
    pub witness: W,
    /// True when the upper end of the bracket itself was feasible.
    pub capped: bool,
    pub evaluations: usize,
}

/// Bisection for the supremum of a monotone feasibility predicate on
/// `[lo, hi]`: feasible below the threshold, infeasible above it.
///
/// The predicate returns `Some(witness)` when feasible. On return the
/// predicate holds at `sup` and fails at `sup + tol` (unless `capped`).
pub fn bisect_sup<W>(
    lo: f64,
    hi: f64,
    tol: f64,
    mut predicate: impl FnMut(f64) -> Result<Option<W>>,
) -> Result<BisectOutcome<W>> {
    if !(lo <= hi) || !(tol > 0.0) {
        return Err(Error::input(format!(
            "bisection needs lo <= hi and tol > 0 (lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    let mut evaluations = 1;
    let Some(mut witness) = predicate(lo)? else {
        return Err(Error::NoFeasiblePoint(format!("predicate fails at lower end {lo}")));
    };
    evaluations += 1;
    if let Some(w) = predicate(hi)? {
        return Ok(BisectOutcome {
            sup: hi,
            witness: w,
            capped: true,
            evaluations,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        evaluations += 1;
        match predicate(mid)? {
            Some(w) => {
                a = mid;
                witness = w;
            }
            None => b = mid,
        }
    }
    Ok(BisectOutcome {
        sup: a,
        witness,
        capped: false,
        evaluations,
    })
}
