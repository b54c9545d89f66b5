/// A normalized call-price surface `y(m, tau) = c~(K, S_t, tau) / S_t`
/// with the partial derivatives the rationality checks need.
///
/// Implementors override the derivatives they have in closed form; the
/// defaults are central finite differences.
pub trait PricingSurface {
    fn value(&self, m: f64, tau: f64) -> f64;

    fn dm(&self, m: f64, tau: f64) -> f64 {
        let h = FD_STEP_FIRST;
        if m > h {
            (self.value(m + h, tau) - self.value(m - h, tau)) / (2.0 * h)
        } else {
            (self.value(m + h, tau) - self.value(m, tau)) / h
        }
    }

    fn d2m(&self, m: f64, tau: f64) -> f64 {
        let h = FD_STEP_SECOND;
        let m = m.max(h);
        (self.value(m + h, tau) - 2.0 * self.value(m, tau) + self.value(m - h, tau)) / (h * h)
    }

    fn dtau(&self, m: f64, tau: f64) -> f64 {
        let h = FD_STEP_FIRST;
        if tau > h {
            (self.value(m, tau + h) - self.value(m, tau - h)) / (2.0 * h)
        } else {
            (self.value(m, tau + h) - self.value(m, tau)) / h
        }
    }

    /// Whether [`PricingSurface::d2m`] is exact rather than a difference quotient.
    fn has_analytic_d2m(&self) -> bool {
        false
    }
}

pub const FD_STEP_FIRST: f64 = 1e-5;
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Adapts a plain `Fn(m, tau) -> y` into a surface with finite-difference derivatives.
pub struct FnSurface<F>(pub F);

impl<F> PricingSurface for FnSurface<F>
where
    F: Fn(f64, f64) -> f64,
{
    fn value(&self, m: f64, tau: f64) -> f64 {
        (self.0)(m, tau)
    }
}
