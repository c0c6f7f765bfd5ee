//! Fast evaluation of `x^e` for fixed nonnegative-base exponents inside
//! solver sweeps: integer and half-integer exponents reduce to
//! multiplications and a square root.

#[derive(Debug, Clone, Copy)]
pub(crate) enum PowExp {
    Int(i32),
    /// `x^k * sqrt(x)`
    HalfInt(i32),
    General(f64),
}

impl PowExp {
    pub(crate) fn new(e: f64) -> Self {
        let twice = 2.0 * e;
        if twice.fract() == 0.0 && twice.abs() < 2.0e2 {
            let k2 = twice as i32;
            if k2 % 2 == 0 {
                PowExp::Int(k2 / 2)
            } else {
                PowExp::HalfInt((k2 - 1) / 2)
            }
        } else {
            PowExp::General(e)
        }
    }

    /// Requires `x >= 0`.
    #[inline]
    pub(crate) fn apply(&self, x: f64) -> f64 {
        match *self {
            PowExp::Int(k) => x.powi(k),
            PowExp::HalfInt(k) => x.powi(k) * x.sqrt(),
            PowExp::General(e) => x.powf(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_powf() {
        for &e in &[2.0, 4.0, 0.5, 1.5, 3.5, 2.75, 5.0] {
            let pe = PowExp::new(e);
            for &x in &[0.0, 0.3, 1.0, 2.7, 14.2] {
                let got = pe.apply(x);
                let want = f64::powf(x, e);
                assert!(
                    (got - want).abs() <= 1e-14 * want.max(1.0),
                    "x={x} e={e}: {got} vs {want}"
                );
            }
        }
    }
}
