use crate::{Error, Result};

/// Dynamic time warping cost with squared pointwise cost and no band.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("dtw of an empty sequence".into()));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let d = (x - b[j - 1]).powi(2);
            cur[j] = d + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let out = prev[m];
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFinite("dtw".into()))
    }
}
