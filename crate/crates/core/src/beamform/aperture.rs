use std::f64::consts::PI;

use crate::model::{AcquisitionContext, ApodizationSpec, Window};

/// Receive weight of every element for the pixel at `(x, z)`.
///
/// An element is active when the f-number is 0 or `|x_elem - x| <= z / (2 F)`.
/// Inactive elements get exactly 0. The Hann window is laid over the active
/// span, so its first and last active elements get 0 as well.
pub fn active_aperture(ctx: &AcquisitionContext, pixel: (f64, f64), apod: &ApodizationSpec) -> Vec<f64> {
    let (x, z) = pixel;
    let n = ctx.n_elements();
    let half_width = if apod.f_number > 0.0 {
        z / (2.0 * apod.f_number)
    } else {
        f64::INFINITY
    };
    let active = |i: usize| (ctx.element_x(i) - x).abs() <= half_width;

    let mut weights = vec![0.0; n];
    let Some(lo) = (0..n).find(|&i| active(i)) else {
        return weights;
    };
    let hi = (lo..n).take_while(|&i| active(i)).last().unwrap_or(lo);
    let span = hi - lo + 1;
    for (r, w) in weights[lo..=hi].iter_mut().enumerate() {
        *w = match apod.window {
            Window::Rectangular => 1.0,
            Window::Hann if span == 1 => 1.0,
            Window::Hann => 0.5 * (1.0 - (2.0 * PI * r as f64 / (span - 1) as f64).cos()),
        };
    }
    weights
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TxScheme;

    fn ctx(n: usize, pitch: f64) -> AcquisitionContext {
        AcquisitionContext::builder(1540.0, 40e6, n, pitch, TxScheme::Sta(vec![0]))
            .build()
            .unwrap()
    }

    #[test]
    fn full_aperture_rectangular_is_all_ones() {
        let c = ctx(16, 0.3e-3);
        let w = active_aperture(&c, (0.001, 0.03), &ApodizationSpec::default());
        assert_eq!(w, vec![1.0; 16]);
    }

    #[test]
    fn f_number_gates_by_half_width() {
        let c = ctx(64, 0.3e-3);
        let apod = ApodizationSpec::new(Window::Rectangular, 2.0).unwrap();
        let w = active_aperture(&c, (0.0, 0.02), &apod);
        for (i, &wi) in w.iter().enumerate() {
            let inside = c.element_x(i).abs() <= 0.005;
            assert_eq!(wi, if inside { 1.0 } else { 0.0 }, "element {i}");
        }
        assert!(w.contains(&0.0) && w.contains(&1.0));
    }

    #[test]
    fn hann_over_three_active_elements() {
        // pitch 1 mm, F = 1, z = 2 mm: half width 1 mm -> elements at -1, 0, +1 mm
        let c = ctx(7, 1e-3);
        let apod = ApodizationSpec::new(Window::Hann, 1.0).unwrap();
        let w = active_aperture(&c, (0.0, 2e-3), &apod);
        assert_eq!(w, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn hann_full_aperture_tapers() {
        let c = ctx(5, 1e-3);
        let apod = ApodizationSpec::new(Window::Hann, 0.0).unwrap();
        let w = active_aperture(&c, (0.0, 0.01), &apod);
        let want = [0.0, 0.5, 1.0, 0.5, 0.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_stay_in_unit_interval() {
        let c = ctx(33, 0.25e-3);
        for f in [0.0, 0.5, 1.0, 3.0] {
            for window in [Window::Rectangular, Window::Hann] {
                let apod = ApodizationSpec::new(window, f).unwrap();
                for z in [0.0, 1e-3, 1e-2] {
                    let w = active_aperture(&c, (0.5e-3, z), &apod);
                    assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }
    }
}
