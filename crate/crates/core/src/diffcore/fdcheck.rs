use super::ParamVector;

/// Central-difference step used throughout the crate.
pub const FD_STEP: f64 = 1e-5;

/// Components smaller than this fraction of the largest magnitude are
/// compared against the floor instead of their own size.
const RELATIVE_FLOOR: f64 = 1e-3;

/// Outcome of a finite-difference audit.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub tol: f64,
    pub passed: bool,
    /// Set when the audited function returned a non-finite value.
    pub non_finite: bool,
    pub numeric: ParamVector,
}

/// Central differences of `f` at `p` along every coordinate.
pub fn central_difference<F>(mut f: F, p: &ParamVector, step: f64) -> ParamVector
where
    F: FnMut(&ParamVector) -> f64,
{
    let mut probe = p.clone();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let x = p.as_slice()[i];
        probe.as_mut_slice()[i] = x + step;
        let up = f(&probe);
        probe.as_mut_slice()[i] = x - step;
        let down = f(&probe);
        probe.as_mut_slice()[i] = x;
        out.push((up - down) / (2.0 * step));
    }
    ParamVector::from_vec(out)
}

fn componentwise(analytic: &ParamVector, numeric: &ParamVector) -> (f64, Option<usize>) {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let scale = analytic
        .as_slice()
        .iter()
        .chain(numeric.as_slice())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return (0.0, None);
    }
    let floor = RELATIVE_FLOOR * scale;
    let mut worst = (0.0, None);
    for (i, (a, n)) in analytic.as_slice().iter().zip(numeric.as_slice()).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if !(err <= worst.0) {
            worst = (err, Some(i));
        }
    }
    worst
}

/// Maximum componentwise relative error `|a - n| / max(|a|, |n|, floor)`,
/// where `floor` is a thousandth of the largest magnitude in either vector.
pub fn relative_error(analytic: &ParamVector, numeric: &ParamVector) -> f64 {
    componentwise(analytic, numeric).0
}

/// Audits `analytic` against central differences of `f` at `p`.
pub fn fd_check<F>(mut f: F, p: &ParamVector, analytic: &ParamVector, tol: f64) -> FdReport
where
    F: FnMut(&ParamVector) -> f64,
{
    let mut non_finite = !f(p).is_finite();
    let numeric = central_difference(&mut f, p, FD_STEP);
    non_finite |= !numeric.is_finite() || !analytic.is_finite();
    let (max_rel_error, worst_index) = if non_finite {
        (f64::INFINITY, None)
    } else {
        componentwise(analytic, &numeric)
    };
    FdReport {
        max_rel_error,
        worst_index,
        tol,
        passed: !non_finite && max_rel_error <= tol,
        non_finite,
        numeric,
    }
}
