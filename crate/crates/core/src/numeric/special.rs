/// The error function, accurate to within a few ulps.
#[inline]
pub fn erf(z: f64) -> f64 {
    libm::erf(z)
}

#[cfg(test)]
mod tests {
    use super::erf;

    /// Independent reference: Maclaurin series near zero, Lentz continued
    /// fraction for erfc in the tails.
    fn erf_reference(z: f64) -> f64 {
        let a = z.abs();
        let v = if a <= 2.0 {
            let mut term = a;
            let mut sum = a;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -a * a / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-18 {
                    break;
                }
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        } else {
            // erfc(a) = exp(-a^2)/sqrt(pi) * 1/(a + 1/2/(a + 1/(a + 3/2/(a + ...))))
            let tiny = 1e-300;
            let mut f = a;
            let mut c = a;
            let mut d = 0.0;
            for k in 1..300 {
                let an = k as f64 / 2.0;
                d = a + an * d;
                d = if d.abs() < tiny { tiny } else { d };
                c = a + an / c;
                c = if c.abs() < tiny { tiny } else { c };
                d = 1.0 / d;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            1.0 - (-a * a).exp() / (std::f64::consts::PI.sqrt() * f)
        };
        v.copysign(z)
    }

    #[test]
    fn known_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert!((erf_reference(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14);
    }

    #[test]
    fn matches_reference_on_grid() {
        let mut prev = -1.0;
        for i in -600..=600 {
            let z = i as f64 * 0.01;
            let got = erf(z);
            assert!((got - erf_reference(z)).abs() < 1e-12, "z={z}");
            assert!((got + erf(-z)).abs() == 0.0);
            assert!(got >= prev);
            assert!((-1.0..=1.0).contains(&got));
            // Saturates to +-1 in f64 beyond |z| ~ 5.9.
            if z.abs() <= 5.0 {
                assert!(got > -1.0 && got < 1.0);
            }
            prev = got;
        }
        assert!(erf(3.0) < 1.0 && erf(-3.0) > -1.0);
    }
}
