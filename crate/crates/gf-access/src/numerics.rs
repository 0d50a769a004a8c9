//! Special functions and the discretized-density convolution engine shared by
//! the analytic outage evaluations.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("Kummer 1F1 series did not converge within {0} terms")]
    NoConvergence(usize),
    #[error("grid mismatch: step {0} vs {1}")]
    GridMismatch(f64, f64),
}

/// Shape/scale parametrization of the gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Self {
        assert!(shape >= 0.0 && scale > 0.0, "invalid gamma parameters");
        Self { shape, scale }
    }
}

/// Gamma pdf with real shape `k` and scale `a`, f(x) = x^{k-1} e^{-x/a} / (Γ(k) a^k).
pub fn gamma_pdf(x: f64, params: GammaParams) -> f64 {
    let (k, a) = (params.shape, params.scale);
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        // limit values; k < 1 diverges at the origin
        return match k.partial_cmp(&1.0).unwrap() {
            std::cmp::Ordering::Less => f64::INFINITY,
            std::cmp::Ordering::Equal => 1.0 / a,
            std::cmp::Ordering::Greater => 0.0,
        };
    }
    let ln = (k - 1.0) * x.ln() - x / a - statrs::function::gamma::ln_gamma(k) - k * a.ln();
    ln.exp()
}

/// Gamma cdf: regularized lower incomplete gamma P(k, x/a). Shape 0 is the
/// cdf of a point mass at 0.
pub fn gamma_cdf(x: f64, params: GammaParams) -> f64 {
    let (k, a) = (params.shape, params.scale);
    if x <= 0.0 {
        return if x == 0.0 && k == 0.0 { 1.0 } else { 0.0 };
    }
    if k == 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_lr(k, x / a)
}

/// Quantile of the gamma distribution by bisection on the cdf.
pub fn gamma_quantile(p: f64, params: GammaParams) -> f64 {
    assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return 0.0;
    }
    let mean = params.shape * params.scale;
    let mut hi = (mean + params.scale).max(1.0);
    while gamma_cdf(hi, params) < p {
        hi *= 2.0;
        assert!(hi.is_finite());
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_cdf(mid, params) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Mean of a gamma(shape, scale) variable truncated to X < z:
/// E[X | X < z] = scale * γ(shape+1, z/scale) / γ(shape, z/scale).
///
/// Shape 0 is the limit of vanishing accumulated power and returns 0.
pub fn truncated_gamma_mean(z: f64, shape: f64, scale: f64) -> f64 {
    assert!(z > 0.0 && shape >= 0.0 && scale > 0.0);
    if shape == 0.0 {
        return 0.0;
    }
    let x = z / scale;
    let num = statrs::function::gamma::gamma_li(shape + 1.0, x);
    let den = statrs::function::gamma::gamma_li(shape, x);
    scale * num / den
}

/// Beta prime cdf F(x; a, b) = I_{x/(1+x)}(a, b) (regularized incomplete beta).
pub fn beta_prime_cdf(x: f64, alpha: f64, beta: f64) -> f64 {
    assert!(alpha > 0.0 && beta > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    statrs::function::beta::beta_reg(alpha, beta, x / (1.0 + x))
}

/// Kummer's confluent hypergeometric function 1F1(a; b; x) by direct series,
/// to relative tolerance 1e-10.
pub fn kummer_1f1(a: f64, b: f64, x: f64) -> Result<f64, NumericsError> {
    assert!(b > 0.0, "1F1 requires b > 0");
    const MAX_TERMS: usize = 10_000;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) / (b + nf) * x / (nf + 1.0);
        sum += term;
        if term.abs() <= 1e-10 * sum.abs().max(1e-300) && n > 2 {
            return Ok(sum);
        }
    }
    Err(NumericsError::NoConvergence(MAX_TERMS))
}

/// A nonnegative-support density sampled on the uniform grid z = 0, Δz, ..., z_max,
/// or the exact Dirac identity (zero-fold convolution).
#[derive(Debug, Clone)]
pub enum DiscretizedPdf {
    /// Exact pass-through element: f ∗ δ = f.
    Dirac,
    Grid {
        step: f64,
        values: Vec<f64>,
    },
}

impl DiscretizedPdf {
    /// Sample a density on `points + 1` grid nodes covering [0, z_max].
    pub fn sample(f: impl Fn(f64) -> f64, z_max: f64, points: usize) -> Self {
        assert!(z_max > 0.0 && points >= 2);
        let step = z_max / points as f64;
        let values = (0..=points).map(|i| f(i as f64 * step)).collect();
        DiscretizedPdf::Grid { step, values }
    }

    pub fn step(&self) -> Option<f64> {
        match self {
            DiscretizedPdf::Dirac => None,
            DiscretizedPdf::Grid { step, .. } => Some(*step),
        }
    }

    /// Trapezoidal mass over the sampled support.
    pub fn mass(&self) -> f64 {
        match self {
            DiscretizedPdf::Dirac => 1.0,
            DiscretizedPdf::Grid { step, values } => trapezoid(values, *step),
        }
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Discrete convolution of two densities on a common grid, truncated to the
/// grid length of the inputs. Valid for nonnegative summands when the result
/// is only used up to z_max.
pub fn convolve(f: &DiscretizedPdf, g: &DiscretizedPdf) -> Result<DiscretizedPdf, NumericsError> {
    match (f, g) {
        (DiscretizedPdf::Dirac, other) | (other, DiscretizedPdf::Dirac) => Ok(other.clone()),
        (
            DiscretizedPdf::Grid {
                step: s1,
                values: a,
            },
            DiscretizedPdf::Grid {
                step: s2,
                values: b,
            },
        ) => {
            if (s1 - s2).abs() > 1e-12 * s1.max(*s2) {
                return Err(NumericsError::GridMismatch(*s1, *s2));
            }
            let n = a.len().min(b.len());
            let step = *s1;
            // Trapezoidal accumulation of (f*g)(i Δz) = ∫ f(s) g(i Δz - s) ds.
            let mut out = vec![0.0; n];
            for (i, o) in out.iter_mut().enumerate().skip(1) {
                let mut acc = 0.0;
                for j in 0..=i {
                    let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                    acc += w * a[j] * b[i - j];
                }
                *o = acc * step;
            }
            Ok(DiscretizedPdf::Grid { step, values: out })
        }
    }
}

/// Evaluate P(X0 + X1 + ... + Xn <= z) where X0 has cdf `cdf_factor` and the
/// Xi have the densities `fs` (all on a grid with z_max = z). With `fs` empty
/// this is just `cdf_factor(z)`.
pub fn cdf_of_convolution(
    fs: &[DiscretizedPdf],
    cdf_factor: impl Fn(f64) -> f64,
    z: f64,
) -> Result<f64, NumericsError> {
    let mut density: Option<DiscretizedPdf> = None;
    for f in fs {
        density = Some(match density {
            None => f.clone(),
            Some(d) => convolve(&d, f)?,
        });
    }
    match density {
        None | Some(DiscretizedPdf::Dirac) => Ok(cdf_factor(z)),
        Some(DiscretizedPdf::Grid { step, values }) => {
            // ∫_0^z F(z - s) g(s) ds by the trapezoidal rule.
            let n = ((z / step).round() as usize).min(values.len() - 1);
            let mut acc = 0.0;
            for (j, &gj) in values.iter().enumerate().take(n + 1) {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += w * cdf_factor(z - j as f64 * step) * gj;
            }
            Ok(acc * step)
        }
    }
}

/// Default number of grid intervals for [0, 2^R - 1].
pub const DEFAULT_GRID_POINTS: usize = 4096;

/// Adaptive Simpson quadrature, used both by the analytic module and as an
/// independent oracle in tests.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_cdf_exponential_special_case() {
        let theta = 3.7;
        let p = gamma_cdf(theta, GammaParams::new(1.0, theta));
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn gamma_cdf_shape4_tail() {
        // small-argument series value, cross-checked by quadrature below
        let p = gamma_cdf(3.0, GammaParams::new(4.0, 10.0));
        assert!((p - 2.658e-4).abs() < 1e-5, "got {p}");
        let q = adaptive_simpson(
            &|x| gamma_pdf(x, GammaParams::new(4.0, 10.0)),
            0.0,
            3.0,
            1e-12,
        );
        assert!((p - q).abs() < 1e-9);
    }

    #[test]
    fn gamma_pdf_integrates_to_cdf() {
        let params = GammaParams::new(2.5, 1.3);
        for &x in &[0.5, 1.0, 4.0] {
            let q = adaptive_simpson(&|t| gamma_pdf(t, params), 0.0, x, 1e-12);
            assert!((q - gamma_cdf(x, params)).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_quantile_inverts_cdf() {
        let params = GammaParams::new(4.0, 2.0);
        for &p in &[1e-6, 1e-3, 0.5, 0.99] {
            let x = gamma_quantile(p, params);
            assert!((gamma_cdf(x, params) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn truncated_mean_shape_zero_and_untruncated_limits() {
        assert_eq!(truncated_gamma_mean(1.0, 0.0, 2.0), 0.0);
        // z -> inf recovers the untruncated mean k*theta
        let m = truncated_gamma_mean(1e4, 3.0, 2.0);
        assert!((m - 6.0).abs() < 1e-8);
    }

    #[test]
    fn truncated_mean_shape_one_closed_form() {
        let (z, theta) = (1.5, 2.0);
        let m = truncated_gamma_mean(z, 1.0, theta);
        let x = z / theta;
        let closed = theta - z * (-x).exp() / (1.0 - (-x).exp());
        assert!((m - closed).abs() < 1e-12);
    }

    #[test]
    fn beta_prime_cdf_closed_form() {
        // F(x; 1, 2) = 1 - (1 + x)^{-2} - 2x/... integrate: pdf = (1+x)^{-3} * 2
        // direct closed form for alpha=1, beta=2: 1 - (1+2x)/(1+x)^2... check by quadrature
        let pdf = |x: f64| (1.0 + x).powi(-3) / statrs::function::beta::beta(1.0, 2.0);
        for &x in &[0.3, 1.0, 5.0] {
            let q = adaptive_simpson(&pdf, 0.0, x, 1e-12);
            assert!((beta_prime_cdf(x, 1.0, 2.0) - q).abs() < 1e-9);
        }
        assert!((beta_prime_cdf(1.0, 1.0, 2.0) - 0.75).abs() < 1e-12);
        assert_eq!(beta_prime_cdf(0.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn kummer_identities() {
        // 1F1(a; a; x) = e^x
        for &x in &[0.1, 1.0, 3.0] {
            let v = kummer_1f1(2.5, 2.5, x).unwrap();
            assert!((v - x.exp()).abs() < 1e-8 * x.exp());
        }
        assert!((kummer_1f1(0.0, 2.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
        let v = kummer_1f1(1.0, 2.0, 1.0).unwrap();
        assert!((v - (1.0f64.exp() - 1.0)).abs() < 1e-9);
    }

    fn gamma_grid(params: GammaParams, z_max: f64, points: usize) -> DiscretizedPdf {
        DiscretizedPdf::sample(|x| gamma_pdf(x, params), z_max, points)
    }

    #[test]
    fn gamma_closure_under_convolution() {
        let theta = 1.0;
        let z_max = 4.0;
        let f = gamma_grid(GammaParams::new(1.0, theta), z_max, 4096);
        let conv = convolve(&f, &f).unwrap();
        if let DiscretizedPdf::Grid { step, values } = &conv {
            let target = GammaParams::new(2.0, theta);
            let sup = values
                .iter()
                .enumerate()
                .map(|(i, v)| (v - gamma_pdf(i as f64 * step, target)).abs())
                .fold(0.0, f64::max);
            assert!(sup < 1e-4, "sup-norm deviation {sup}");
        } else {
            panic!("expected grid");
        }
    }

    #[test]
    fn dirac_is_identity() {
        let f = gamma_grid(GammaParams::new(2.0, 1.0), 3.0, 128);
        let conv = convolve(&f, &DiscretizedPdf::Dirac).unwrap();
        match (&f, &conv) {
            (DiscretizedPdf::Grid { values: a, .. }, DiscretizedPdf::Grid { values: b, .. }) => {
                assert_eq!(a, b)
            }
            _ => panic!("dirac convolution must pass through"),
        }
    }

    #[test]
    fn cdf_of_convolution_closure_check() {
        let theta = 1.0;
        let z = 2.0;
        let f = gamma_grid(GammaParams::new(1.0, theta), z, 4096);
        let got =
            cdf_of_convolution(&[f], |x| gamma_cdf(x, GammaParams::new(1.0, theta)), z).unwrap();
        let want = gamma_cdf(z, GammaParams::new(2.0, theta));
        assert!((got - want).abs() < 1e-5, "got {got}, want {want}");
    }

    #[test]
    fn cdf_of_convolution_grid_refinement() {
        let theta = 2.0;
        let z = 3.0;
        let run = |points| {
            let f = gamma_grid(GammaParams::new(1.0, theta), z, points);
            cdf_of_convolution(
                &[f.clone(), f],
                |x| gamma_cdf(x, GammaParams::new(1.0, theta)),
                z,
            )
            .unwrap()
        };
        let coarse = run(DEFAULT_GRID_POINTS);
        let fine = run(2 * DEFAULT_GRID_POINTS);
        assert!((coarse - fine).abs() < 1e-4);
        let want = gamma_cdf(z, GammaParams::new(3.0, theta));
        assert!((fine - want).abs() < 1e-4);
    }

    #[test]
    fn special_functions_vs_quadrature_random_points() {
        // cross-validation on pseudo-random parameter points
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            // shapes >= 1 keep the pdf finite at the origin for the quadrature
            let k = 1.0 + 4.5 * next();
            let a = 0.5 + 3.0 * next();
            let x = 0.1 + 5.0 * next();
            let params = GammaParams::new(k, a);
            let q = adaptive_simpson(&|t| gamma_pdf(t, params), 0.0, x, 1e-13);
            let c = gamma_cdf(x, params);
            assert!((q - c).abs() <= 1e-7 * c + 1e-12, "k={k} a={a} x={x}");
        }
    }
}
