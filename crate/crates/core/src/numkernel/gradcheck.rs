use super::params::ParamSet;
use super::rng::RngStream;

/// Largest coordinate count probed per array.
pub const MAX_COORDS_PER_ARRAY: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub probed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub arrays: Vec<ArrayCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ArrayCheck> {
        self.arrays.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Denominator floor of [`relative_error`]. Central differences of an O(10)
/// loss carry about 1e-11 of rounding noise at ε = 1e-4, so gradients below
/// this size are effectively compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss`.
///
/// Arrays larger than [`MAX_COORDS_PER_ARRAY`] are probed on a random subset
/// of coordinates drawn from `rng`.
pub fn finite_diff_gradcheck<F>(mut loss: F, params: &ParamSet, analytic: &ParamSet, epsilon: f64, rng: &mut RngStream) -> GradcheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut work = params.clone();
    let mut arrays = Vec::with_capacity(params.arrays.len());
    for (ai, arr) in params.arrays.iter().enumerate() {
        let mut idx: Vec<usize> = (0..arr.len()).collect();
        if idx.len() > MAX_COORDS_PER_ARRAY {
            rng.shuffle(&mut idx);
            idx.truncate(MAX_COORDS_PER_ARRAY);
            idx.sort_unstable();
        }
        let mut check = ArrayCheck {
            name: arr.name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            probed: idx.len(),
        };
        for &k in &idx {
            let orig = arr.values[k];
            work.arrays[ai].values[k] = orig + epsilon;
            let up = loss(&work);
            work.arrays[ai].values[k] = orig - epsilon;
            let down = loss(&work);
            work.arrays[ai].values[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.arrays[ai].values[k];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || (check.max_rel_error == 0.0 && k == idx[0]) {
                check.max_rel_error = err;
                check.worst_index = k;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        arrays.push(check);
    }
    GradcheckReport { arrays }
}
