//! Library of test observables `F(<M, f>)`.
//!
//! The spatial parts are chosen so that the ones used with generator and
//! fluctuation diagnostics are C^2 with vanishing normal derivative on the
//! box boundary; the ball ramp is merely continuous and is rejected by those
//! diagnostics.

use crate::geometry::{dist2, Domain, Point, ORIGIN};

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialPart {
    /// f(y) = 1.
    One,
    /// Product of cos^2(pi u_i) humps over the box, u = (y - lo)/side.
    /// Flat (zero normal derivative) on every face.
    Bump,
    /// Product of 16 u^2 (1-u)^2 per axis; quartic, flat on every face.
    FlatQuartic,
    /// Smoothed ball indicator: 1 inside radius - ramp, linear to 0 at
    /// radius. Continuous but not C^2.
    BallRamp { center: Point, radius: f64, ramp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outer {
    Identity,
    Square,
    /// Bounded smooth choice: F(v) = tanh(v).
    Tanh,
}

impl Outer {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Outer::Identity => v,
            Outer::Square => v * v,
            Outer::Tanh => v.tanh(),
        }
    }

    pub fn d1(&self, v: f64) -> f64 {
        match self {
            Outer::Identity => 1.0,
            Outer::Square => 2.0 * v,
            Outer::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn d2(&self, v: f64) -> f64 {
        match self {
            Outer::Identity => 0.0,
            Outer::Square => 2.0,
            Outer::Tanh => {
                let t = v.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    /// Restrict f to one species; `None` applies to all.
    pub species: Option<usize>,
    pub spatial: SpatialPart,
    pub outer: Outer,
    pub domain: Domain,
}

impl Observable {
    pub fn species_indicator(species: usize, domain: &Domain) -> Self {
        Observable {
            species: Some(species),
            spatial: SpatialPart::One,
            outer: Outer::Identity,
            domain: domain.clone(),
        }
    }

    pub fn applies_to(&self, species: usize) -> bool {
        self.species.map_or(true, |s| s == species)
    }

    /// True when f is C^2 with flat normal derivative, as the generator and
    /// quadratic-variation diagnostics require.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.spatial, SpatialPart::BallRamp { .. })
    }

    pub fn eval(&self, species: usize, y: &Point) -> f64 {
        if !self.applies_to(species) {
            return 0.0;
        }
        self.spatial_value(y)
    }

    pub fn spatial_value(&self, y: &Point) -> f64 {
        let d = &self.domain;
        match &self.spatial {
            SpatialPart::One => 1.0,
            SpatialPart::Bump => {
                let mut v = 1.0;
                for i in 0..d.dim {
                    let u = (y[i] - d.lo[i]) / d.side(i);
                    let c = (std::f64::consts::PI * u).cos();
                    v *= c * c;
                }
                v
            }
            SpatialPart::FlatQuartic => {
                let mut v = 1.0;
                for i in 0..d.dim {
                    let u = (y[i] - d.lo[i]) / d.side(i);
                    v *= 16.0 * u * u * (1.0 - u) * (1.0 - u);
                }
                v
            }
            SpatialPart::BallRamp { center, radius, ramp } => {
                let dist = dist2(center, y, d.dim).sqrt();
                if dist >= *radius {
                    0.0
                } else if dist <= radius - ramp {
                    1.0
                } else {
                    (radius - dist) / ramp
                }
            }
        }
    }

    /// Spatial gradient; zero for the non-smooth ramp (callers must check
    /// `is_smooth` first).
    pub fn gradient(&self, y: &Point) -> Point {
        let d = &self.domain;
        let mut g = ORIGIN;
        match &self.spatial {
            SpatialPart::One | SpatialPart::BallRamp { .. } => {}
            SpatialPart::Bump => {
                for i in 0..d.dim {
                    let mut gi = 1.0;
                    for j in 0..d.dim {
                        let u = (y[j] - d.lo[j]) / d.side(j);
                        let pi = std::f64::consts::PI;
                        if i == j {
                            gi *= -(pi / d.side(j)) * (2.0 * pi * u).sin();
                        } else {
                            let c = (pi * u).cos();
                            gi *= c * c;
                        }
                    }
                    g[i] = gi;
                }
            }
            SpatialPart::FlatQuartic => {
                for i in 0..d.dim {
                    let mut gi = 1.0;
                    for j in 0..d.dim {
                        let u = (y[j] - d.lo[j]) / d.side(j);
                        if i == j {
                            gi *= 32.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / d.side(j);
                        } else {
                            gi *= 16.0 * u * u * (1.0 - u) * (1.0 - u);
                        }
                    }
                    g[i] = gi;
                }
            }
        }
        g
    }

    /// Spatial Laplacian.
    pub fn laplacian(&self, y: &Point) -> f64 {
        let d = &self.domain;
        match &self.spatial {
            SpatialPart::One | SpatialPart::BallRamp { .. } => 0.0,
            SpatialPart::Bump => {
                let mut total = 0.0;
                for i in 0..d.dim {
                    let mut t = 1.0;
                    for j in 0..d.dim {
                        let u = (y[j] - d.lo[j]) / d.side(j);
                        let pi = std::f64::consts::PI;
                        if i == j {
                            let s = d.side(j);
                            t *= -(2.0 * pi * pi / (s * s)) * (2.0 * pi * u).cos();
                        } else {
                            let c = (pi * u).cos();
                            t *= c * c;
                        }
                    }
                    total += t;
                }
                total
            }
            SpatialPart::FlatQuartic => {
                let mut total = 0.0;
                for i in 0..d.dim {
                    let mut t = 1.0;
                    for j in 0..d.dim {
                        let u = (y[j] - d.lo[j]) / d.side(j);
                        if i == j {
                            let s = d.side(j);
                            t *= 32.0 * (1.0 - 6.0 * u + 6.0 * u * u) / (s * s);
                        } else {
                            t *= 16.0 * u * u * (1.0 - u) * (1.0 - u);
                        }
                    }
                    total += t;
                }
                total
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_from;

    fn dom() -> Domain {
        Domain::new(&[[-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn gradient_vanishes_on_boundary() {
        for spatial in [SpatialPart::Bump, SpatialPart::FlatQuartic] {
            let obs = Observable {
                species: None,
                spatial,
                outer: Outer::Identity,
                domain: dom(),
            };
            for y in [-1.0, 1.0] {
                let g = obs.gradient(&point_from(&[y]));
                assert!(g[0].abs() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for spatial in [SpatialPart::Bump, SpatialPart::FlatQuartic] {
            let obs = Observable {
                species: None,
                spatial,
                outer: Outer::Identity,
                domain: dom(),
            };
            for &y in &[-0.7, -0.2, 0.1, 0.6] {
                let f = |v: f64| obs.spatial_value(&point_from(&[v]));
                let g_fd = (f(y + h) - f(y - h)) / (2.0 * h);
                let l_fd = (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h);
                assert!((obs.gradient(&point_from(&[y]))[0] - g_fd).abs() < 1e-6);
                assert!((obs.laplacian(&point_from(&[y])) - l_fd).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn outer_derivatives() {
        for outer in [Outer::Identity, Outer::Square, Outer::Tanh] {
            for &v in &[-1.3, 0.0, 0.4, 2.0] {
                let h = 1e-6;
                let d1_fd = (outer.eval(v + h) - outer.eval(v - h)) / (2.0 * h);
                assert!((outer.d1(v) - d1_fd).abs() < 1e-6);
                let d2_fd = (outer.d1(v + h) - outer.d1(v - h)) / (2.0 * h);
                assert!((outer.d2(v) - d2_fd).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn ball_ramp_profile() {
        let obs = Observable {
            species: None,
            spatial: SpatialPart::BallRamp {
                center: point_from(&[0.0]),
                radius: 0.2,
                ramp: 0.02,
            },
            outer: Outer::Identity,
            domain: dom(),
        };
        assert!(!obs.is_smooth());
        assert_eq!(obs.spatial_value(&point_from(&[0.0])), 1.0);
        assert_eq!(obs.spatial_value(&point_from(&[0.25])), 0.0);
        assert!((obs.spatial_value(&point_from(&[0.19])) - 0.5).abs() < 1e-12);
    }
}
