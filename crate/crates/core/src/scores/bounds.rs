use crate::distributions::Distribution;
use crate::error::{check_dim, Result};
use crate::functionals::FunctionalSpec;

/// `B(x, t) = -t_k + sum_m (p_m/q_m) (t_m - x_m) (q_m - 1{t_m < x_m})`.
///
/// Does not depend on `x_k`.
pub fn b_bound(spec: &FunctionalSpec, x: &[f64], t: &[f64]) -> Result<f64> {
    let k = spec.k();
    check_dim(k, x.len())?;
    check_dim(k, t.len())?;
    let mut b = -t[k - 1];
    for (m, &q) in spec.levels().iter().enumerate() {
        let ind = if t[m] < x[m] { 1.0 } else { 0.0 };
        b += spec.ratio(m) * (t[m] - x[m]) * (q - ind);
    }
    Ok(b)
}

/// `C(z, F) = sum_m (p_m/q_m) (LPM_F(z_m) - q_m z_m)`.
///
/// Does not depend on `z_k`.
pub fn c_bound(spec: &FunctionalSpec, z: &[f64], d: &Distribution) -> Result<f64> {
    check_dim(spec.k(), z.len())?;
    Ok(spec
        .levels()
        .iter()
        .enumerate()
        .map(|(m, &q)| spec.ratio(m) * (d.lpm(z[m]) - q * z[m]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_hand_values() {
        let f = FunctionalSpec::var_es(0.05).unwrap();
        assert_eq!(b_bound(&f, &[2.0, 7.0], &[0.0, 0.0]).unwrap(), 38.0);
        assert!((b_bound(&f, &[-1.0, -3.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(b_bound(&f, &[0.3, 1.0], &[0.3, -0.2]).unwrap(), 0.2);
    }

    #[test]
    fn c_hand_values() {
        let f = FunctionalSpec::var_es(0.05).unwrap();
        let d = Distribution::point(0.0);
        assert!((c_bound(&f, &[2.0, 0.0], &d).unwrap() - 38.0).abs() < 1e-12);
        assert_eq!(c_bound(&f, &[2.0, 0.0], &d).unwrap(), c_bound(&f, &[2.0, -9.0], &d).unwrap());
        let n = Distribution::standard_normal();
        let t = f.evaluate(&n).unwrap();
        assert!((c_bound(&f, &t, &n).unwrap() + t[1]).abs() < 1e-12);
    }
}
