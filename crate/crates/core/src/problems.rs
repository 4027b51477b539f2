//! Benchmark problem catalog: coefficients, manufactured sources, exact
//! solutions and their hand-derived derivatives.
//!
//! Every manufactured source is a hand-coded closed form; the
//! finite-difference residual oracle (`strong_form_residual`) guards
//! against transcription errors in the test suite.

use std::f64::consts::PI;

use crate::assembly::PointwiseFn;
use crate::elements::ElementFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    UnitDisk,
}

pub type SpatialFn = Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Box<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Data for the time-dependent transport benchmark.
pub struct TimeDependence {
    pub dt: f64,
    pub t_end: f64,
    pub initial: SpatialFn,
    pub exact: SpaceTimeFn,
    pub source: SpaceTimeFn,
    /// convective group `f(u) = u^2`
    pub convective: PointwiseFn,
}

/// A problem in the form
/// `-div(a(u, grad u) grad u) + [c_tilde(u) + 1_lin] u + c(u) = d`
/// with Dirichlet data on the whole boundary.
///
/// The split across `mass_coeff` (implicit weighted mass), `linear_mass`
/// and `explicit_coeff` (lagged vector) fixes which terms the fixed-point
/// iteration treats implicitly.
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    /// constant diffusion scale; ignored when `diffusion` is set
    pub nu: f64,
    /// nonlinear diffusion coefficient `a(u, grad u)`
    pub diffusion: Option<PointwiseFn>,
    /// implicit reaction coefficient `c_tilde`, contributing
    /// `M(c_tilde, u^n) u^{n+1}`
    pub mass_coeff: Option<PointwiseFn>,
    /// plain `M u^{n+1}` term
    pub linear_mass: bool,
    /// lagged reaction vector `c`, contributing `int c(u^n) phi_i`
    pub explicit_coeff: Option<PointwiseFn>,
    pub source: SpatialFn,
    pub dirichlet: SpatialFn,
    pub exact: Option<SpatialFn>,
    /// approximation space for the interpolated nonlinearity
    pub default_w: ElementFamily,
    /// quadrature exactness degree for per-iteration assembly; the
    /// matching embedded rule makes the interpolated and assembled
    /// operators coincide
    pub sga_quad_degree: usize,
    pub load_quad_degree: usize,
    pub gfem_available: bool,
    pub time: Option<TimeDependence>,
}

impl ProblemSpec {
    /// Total lower-order term `(c_tilde + 1_lin) u + c` at a pointwise state.
    pub fn lower_order(&self, u: f64, g: [f64; 2], x: [f64; 2]) -> f64 {
        let mut out = 0.0;
        if let Some(ct) = &self.mass_coeff {
            out += ct.eval(u, g, x) * u;
        }
        if self.linear_mass {
            out += u;
        }
        if let Some(c) = &self.explicit_coeff {
            out += c.eval(u, g, x);
        }
        out
    }

    pub fn diffusion_at(&self, u: f64, g: [f64; 2], x: [f64; 2]) -> f64 {
        match &self.diffusion {
            Some(a) => a.eval(u, g, x),
            None => self.nu,
        }
    }

    pub fn has_nonlinearity(&self) -> bool {
        self.diffusion.is_some() || self.mass_coeff.is_some() || self.explicit_coeff.is_some()
    }
}

fn stationary_defaults(name: &str, domain: Domain) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        domain,
        nu: 1.0,
        diffusion: None,
        mass_coeff: None,
        linear_mass: false,
        explicit_coeff: None,
        source: Box::new(|_| 0.0),
        dirichlet: Box::new(|_| 0.0),
        exact: None,
        default_w: ElementFamily::LagrangeP1,
        sga_quad_degree: 3,
        load_quad_degree: 6,
        gfem_available: true,
        time: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcVariant {
    Polynomial,
    Trig,
}

/// `-lap(u) + u^2 = d` on the unit square.
pub fn quadratic_problem(bc: BcVariant) -> ProblemSpec {
    let mut spec = stationary_defaults(
        match bc {
            BcVariant::Polynomial => "quadratic",
            BcVariant::Trig => "quadratic-trig",
        },
        Domain::UnitSquare,
    );
    spec.explicit_coeff = Some(PointwiseFn::of_u(|u| u * u, |u| 2.0 * u));
    spec.default_w = ElementFamily::LagrangeP2;
    spec.sga_quad_degree = 3;
    match bc {
        BcVariant::Polynomial => {
            let u = |x: [f64; 2]| x[0] * x[1] * (x[0] + x[1]);
            spec.exact = Some(Box::new(u));
            spec.dirichlet = Box::new(u);
            spec.source = Box::new(move |x| {
                let s = x[0] + x[1];
                -2.0 * s + x[0] * x[0] * x[1] * x[1] * s * s
            });
        }
        BcVariant::Trig => {
            let u = |x: [f64; 2]| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
            spec.exact = Some(Box::new(u));
            spec.dirichlet = Box::new(u);
            spec.source = Box::new(move |x| {
                let v = u(x);
                8.0 * PI * PI * v + v * v
            });
        }
    }
    spec
}

/// Viscous Burgers equation `u_t + u (u_x1 + u_x2) - nu lap(u) = d` with a
/// manufactured space-time solution and homogeneous Dirichlet data.
pub fn burgers_problem(nu: f64, t_end: f64) -> ProblemSpec {
    let mut spec = stationary_defaults("burgers", Domain::UnitSquare);
    spec.nu = nu;
    spec.load_quad_degree = 4;

    // u(x, t) = P(x) g(x, t) with bubble P and oscillatory-decay g
    fn p(x: [f64; 2]) -> f64 {
        10.0 * x[0] * x[1] * (x[0] - 1.0) * (x[1] - 1.0)
    }
    fn exact(x: [f64; 2], t: f64) -> f64 {
        let g = (2.0 * x[0] * t).sin() * (-t / 2.0).exp()
            + (x[1] * t).cos() * (-t / 4.0).exp()
            + (x[0] * x[1] * t).sin() * (-t).exp();
        p(x) * g
    }
    let source = move |x: [f64; 2], t: f64| {
        let (x1, x2) = (x[0], x[1]);
        let (q1, q2) = (x1 * x1 - x1, x2 * x2 - x2);
        let pv = 10.0 * q1 * q2;
        let p1 = 10.0 * (2.0 * x1 - 1.0) * q2;
        let p2 = 10.0 * q1 * (2.0 * x2 - 1.0);
        let (p11, p22) = (20.0 * q2, 20.0 * q1);

        let (e1, e2, e3) = ((-t / 2.0).exp(), (-t / 4.0).exp(), (-t).exp());
        let (s1, c1) = (2.0 * x1 * t).sin_cos();
        let (s2, c2) = (x2 * t).sin_cos();
        let (s3, c3) = (x1 * x2 * t).sin_cos();

        let g = s1 * e1 + c2 * e2 + s3 * e3;
        let g_t = (2.0 * x1 * c1 - 0.5 * s1) * e1
            + (-x2 * s2 - 0.25 * c2) * e2
            + (x1 * x2 * c3 - s3) * e3;
        let g_1 = 2.0 * t * c1 * e1 + x2 * t * c3 * e3;
        let g_2 = -t * s2 * e2 + x1 * t * c3 * e3;
        let g_11 = -4.0 * t * t * s1 * e1 - x2 * x2 * t * t * s3 * e3;
        let g_22 = -t * t * c2 * e2 - x1 * x1 * t * t * s3 * e3;

        let u = pv * g;
        let u_t = pv * g_t;
        let u_1 = p1 * g + pv * g_1;
        let u_2 = p2 * g + pv * g_2;
        let u_11 = p11 * g + 2.0 * p1 * g_1 + pv * g_11;
        let u_22 = p22 * g + 2.0 * p2 * g_2 + pv * g_22;

        u_t + u * (u_1 + u_2) - nu * (u_11 + u_22)
    };

    spec.time = Some(TimeDependence {
        dt: 1e-2,
        t_end,
        initial: Box::new(|x| exact(x, 0.0)),
        exact: Box::new(exact),
        source: Box::new(source),
        convective: PointwiseFn::of_u(|u| u * u, |u| 2.0 * u),
    });
    spec.default_w = ElementFamily::LagrangeP2;
    spec.sga_quad_degree = 3;
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScFormulation {
    A,
    B,
    C,
}

/// Simplified Ginzburg-Landau model `-nu lap(u) + u^3 + u = d`, with the
/// cubic reaction split three analytically equivalent ways:
/// (a) implicit weighted mass with `c_tilde = u^2 + 1`,
/// (b) plain mass plus lagged `u^3` vector,
/// (c) fully lagged `u^3 + u` vector.
pub fn superconductivity_problem(nu: f64, formulation: ScFormulation) -> ProblemSpec {
    let mut spec = stationary_defaults(
        match formulation {
            ScFormulation::A => "superconductivity-a",
            ScFormulation::B => "superconductivity-b",
            ScFormulation::C => "superconductivity-c",
        },
        Domain::UnitSquare,
    );
    spec.nu = nu;
    spec.sga_quad_degree = 4;
    match formulation {
        ScFormulation::A => {
            spec.mass_coeff = Some(PointwiseFn::of_u(|u| u * u + 1.0, |u| 2.0 * u));
            spec.default_w = ElementFamily::LagrangeP2;
        }
        ScFormulation::B => {
            spec.linear_mass = true;
            spec.explicit_coeff = Some(PointwiseFn::of_u(|u| u * u * u, |u| 3.0 * u * u));
            spec.default_w = ElementFamily::LagrangeP3;
        }
        ScFormulation::C => {
            spec.explicit_coeff = Some(PointwiseFn::of_u(|u| u * u * u + u, |u| 3.0 * u * u + 1.0));
            spec.default_w = ElementFamily::LagrangeP3;
        }
    }

    let u = |x: [f64; 2]| {
        (1.0 / 6.0) * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * (2.0 * x[0]).exp()
    };
    spec.exact = Some(Box::new(u));
    spec.dirichlet = Box::new(u);
    spec.source = Box::new(move |x| {
        let v = u(x);
        // d2/dx1^2 [sin(2 pi x1) e^{2 x1}] = ((4 - 4 pi^2) sin + 8 pi cos) e^{2 x1}
        let lap = (1.0 / 6.0)
            * (2.0 * PI * x[1]).sin()
            * (2.0 * x[0]).exp()
            * ((4.0 - 4.0 * PI * PI) * (2.0 * PI * x[0]).sin()
                + 8.0 * PI * (2.0 * PI * x[0]).cos())
            - 4.0 * PI * PI * v;
        -nu * lap + v * v * v + v
    });
    spec
}

/// Michaelis-Menten style reaction `-lap(u) + sigma u / (k + u) = d`.
///
/// The rational coefficient has no matching polynomial space; outside its
/// domain (`k + u <= 0`, unreachable for the manufactured solution) it
/// returns NaN, which divergence detection picks up.
pub fn biochemical_problem(sigma: f64, k: f64) -> ProblemSpec {
    let mut spec = stationary_defaults("biochemical", Domain::UnitSquare);
    spec.mass_coeff = Some(PointwiseFn::of_u(
        move |u| {
            if k + u > 0.0 {
                sigma / (k + u)
            } else {
                f64::NAN
            }
        },
        move |u| -sigma / ((k + u) * (k + u)),
    ));
    spec.default_w = ElementFamily::QuadratureEmbedded(2);
    spec.sga_quad_degree = 2;

    let u = |x: [f64; 2]| x[0] * x[1] * (x[0] + x[1]);
    spec.exact = Some(Box::new(u));
    spec.dirichlet = Box::new(u);
    spec.source = Box::new(move |x| {
        let v = u(x);
        -2.0 * (x[0] + x[1]) + sigma * v / (k + v)
    });
    spec
}

/// `-div(|grad u|^{p-2} grad u) = 1` on the unit disk with zero boundary
/// values; the radially symmetric closed-form solution is known.
///
/// For `p < 2` the coefficient is singular where `grad u = 0`, so it is
/// evaluated as `(|g|^2 + eps^2)^{(p-2)/2}` with `eps = 1e-10` — far below
/// discretization level.
pub fn plaplace_problem(p: f64) -> ProblemSpec {
    assert!(p > 1.0, "p-Laplace exponent must exceed 1");
    let mut spec = stationary_defaults("p-laplace", Domain::UnitDisk);
    let eps2 = 1e-20;
    spec.diffusion = Some(PointwiseFn::of_grad(
        move |g| {
            let q = g[0] * g[0] + g[1] * g[1] + eps2;
            q.powf((p - 2.0) / 2.0)
        },
        move |g| {
            let q = g[0] * g[0] + g[1] * g[1] + eps2;
            let s = (p - 2.0) * q.powf((p - 4.0) / 2.0);
            [s * g[0], s * g[1]]
        },
    ));
    spec.default_w = ElementFamily::LagrangeP0;
    spec.sga_quad_degree = 1;
    spec.load_quad_degree = 2;
    spec.gfem_available = false;
    spec.source = Box::new(|_| 1.0);
    spec.dirichlet = Box::new(|_| 0.0);
    let q = p / (p - 1.0);
    spec.exact = Some(Box::new(move |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        2f64.powf(-1.0 / (p - 1.0)) * (p - 1.0) / p * (1.0 - r.powf(q))
    }));
    spec
}

/// Minimal surface equation `-div(grad u / sqrt(1 + |grad u|^2)) = d` with
/// a manufactured polynomial solution on the unit square.
pub fn minimal_surface_problem() -> ProblemSpec {
    let mut spec = stationary_defaults("minimal-surface", Domain::UnitSquare);
    spec.diffusion = Some(PointwiseFn::of_grad(
        |g| 1.0 / (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt(),
        |g| {
            let s = -(1.0 + g[0] * g[0] + g[1] * g[1]).powf(-1.5);
            [s * g[0], s * g[1]]
        },
    ));
    spec.default_w = ElementFamily::LagrangeP0;
    spec.sga_quad_degree = 1;
    spec.gfem_available = false;

    let u = |x: [f64; 2]| x[0] * x[1] * (x[0] + x[1]);
    spec.exact = Some(Box::new(u));
    spec.dirichlet = Box::new(u);
    spec.source = Box::new(|x| {
        let (x1, x2) = (x[0], x[1]);
        let g = [2.0 * x1 * x2 + x2 * x2, x1 * x1 + 2.0 * x1 * x2];
        let q = 1.0 + g[0] * g[0] + g[1] * g[1];
        let lap = 2.0 * (x1 + x2);
        // Hessian of x1 x2 (x1 + x2)
        let (h11, h12, h22) = (2.0 * x2, 2.0 * (x1 + x2), 2.0 * x1);
        let ghg = h11 * g[0] * g[0] + 2.0 * h12 * g[0] * g[1] + h22 * g[1] * g[1];
        -lap / q.sqrt() + ghg / q.powf(1.5)
    });
    spec
}

/// Finite-difference residual of the strong form at `x` for the exact
/// solution; the oracle that guards every hand-derived source term.
pub fn strong_form_residual(spec: &ProblemSpec, x: [f64; 2]) -> f64 {
    let exact = spec.exact.as_ref().expect("problem has no exact solution");
    let h = 1e-4;
    let hg = 1e-6;
    let grad = |y: [f64; 2]| -> [f64; 2] {
        [
            (exact([y[0] + hg, y[1]]) - exact([y[0] - hg, y[1]])) / (2.0 * hg),
            (exact([y[0], y[1] + hg]) - exact([y[0], y[1] - hg])) / (2.0 * hg),
        ]
    };
    let flux = |y: [f64; 2], axis: usize| -> f64 {
        let g = grad(y);
        spec.diffusion_at(exact(y), g, y) * g[axis]
    };
    let div_flux = (flux([x[0] + h, x[1]], 0) - flux([x[0] - h, x[1]], 0)) / (2.0 * h)
        + (flux([x[0], x[1] + h], 1) - flux([x[0], x[1] - h], 1)) / (2.0 * h);
    let u = exact(x);
    let source = (spec.source)(x);
    let residual = -div_flux + spec.lower_order(u, grad(x), x) - source;
    // scale by the local source magnitude so the tolerance is meaningful
    // for strongly oscillatory manufactured terms
    residual / (1.0 + source.abs())
}

/// Same oracle for the time-dependent benchmark at `(x, t)`.
pub fn burgers_residual(spec: &ProblemSpec, x: [f64; 2], t: f64) -> f64 {
    let td = spec.time.as_ref().expect("not a time-dependent problem");
    let exact = &td.exact;
    let h = 1e-5;
    let u = exact(x, t);
    let u_t = (exact(x, t + h) - exact(x, t - h)) / (2.0 * h);
    let u_1 = (exact([x[0] + h, x[1]], t) - exact([x[0] - h, x[1]], t)) / (2.0 * h);
    let u_2 = (exact([x[0], x[1] + h], t) - exact([x[0], x[1] - h], t)) / (2.0 * h);
    let lap = (exact([x[0] + h, x[1]], t) - 2.0 * u + exact([x[0] - h, x[1]], t)) / (h * h)
        + (exact([x[0], x[1] + h], t) - 2.0 * u + exact([x[0], x[1] - h], t)) / (h * h);
    let source = (td.source)(x, t);
    (u_t + u * (u_1 + u_2) - spec.nu * lap - source) / (1.0 + source.abs())
}

pub fn all_stationary() -> Vec<ProblemSpec> {
    vec![
        quadratic_problem(BcVariant::Polynomial),
        quadratic_problem(BcVariant::Trig),
        superconductivity_problem(1.0, ScFormulation::A),
        biochemical_problem(1.0, 1.0),
        plaplace_problem(1.5),
        minimal_surface_problem(),
    ]
}
