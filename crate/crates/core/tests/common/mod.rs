//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uqbench::nn::{
    build_cnn, build_mlp, mve_heads, nig_heads, HeadActivation, HeadSpec, LayerSpec, Network, NetworkSpec,
    ParamStore, Shape, Tape,
};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Max relative error between reverse-mode and central-difference
/// gradients, over all parameters and inputs, for `L = Σ c ⊙ f(x)`.
pub fn gradient_error(spec: &NetworkSpec, batch: usize, seed: u64) -> f64 {
    let network = Network::new(spec.clone()).unwrap();
    assert!(network.param_count() <= 200, "{} parameters", network.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = network.init_params(seed);
    for v in params.values.iter_mut() {
        *v += 0.1 * rng.random_range(-1.0..1.0);
    }
    let x = random_matrix(&mut rng, batch, network.input_size());
    let c = random_matrix(&mut rng, batch, network.n_heads());
    let loss = |p: &ParamStore, x: &Array2<f64>| (network.forward(p, x.view()).unwrap() * &c).sum();

    let mut tape = Tape::new();
    network.forward_train(&params, x.view(), &mut tape).unwrap();
    let dx = network.backward(&mut params, &tape, c.view()).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p.values[i] += FD_STEP;
        let up = loss(&p, &x);
        p.values[i] -= 2.0 * FD_STEP;
        let down = loss(&p, &x);
        worst = worst.max(rel_err(params.grads[i], (up - down) / (2.0 * FD_STEP)));
    }
    for idx in 0..x.len() {
        let mut xp = x.clone();
        xp.as_slice_mut().unwrap()[idx] += FD_STEP;
        let up = loss(&params, &xp);
        xp.as_slice_mut().unwrap()[idx] -= 2.0 * FD_STEP;
        let down = loss(&params, &xp);
        worst = worst.max(rel_err(dx.as_slice().unwrap()[idx], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn image(side: usize, channels: usize) -> Shape {
    Shape::Image {
        height: side,
        width: side,
        channels,
    }
}

fn spec(input_shape: Shape, layers: Vec<LayerSpec>, heads: Vec<HeadSpec>) -> NetworkSpec {
    NetworkSpec {
        input_shape,
        layers,
        heads,
    }
}

fn linear_head() -> Vec<HeadSpec> {
    vec![HeadSpec::new("out", HeadActivation::Linear)]
}

pub struct GradientCase {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub batch: usize,
    pub seed: u64,
}

/// Every layer kind in isolation plus both architectures, all ≤ 200 parameters.
pub fn gradient_cases() -> Vec<GradientCase> {
    let conv = |kernel, stride| {
        spec(
            image(6, 2),
            vec![LayerSpec::Conv2D { filters: 2, kernel, stride }, LayerSpec::Flatten],
            linear_head(),
        )
    };
    let heads = vec![
        HeadSpec::new("a", HeadActivation::Linear),
        HeadSpec::new("b", HeadActivation::Softplus),
        HeadSpec::new("c", HeadActivation::SoftplusPlusOne),
    ];
    let case = |name, spec, batch, seed| GradientCase { name, spec, batch, seed };
    vec![
        case("dense", spec(Shape::Flat(5), vec![LayerSpec::Dense { units: 7 }], linear_head()), 4, 1),
        case(
            "relu",
            spec(Shape::Flat(5), vec![LayerSpec::Dense { units: 7 }, LayerSpec::Relu], linear_head()),
            6,
            2,
        ),
        case("conv 3x3", conv(3, 1), 3, 3),
        case("conv 5x5", conv(5, 1), 3, 3),
        case("conv 3x3 stride 2", conv(3, 2), 3, 3),
        case(
            "pool",
            spec(image(6, 2), vec![LayerSpec::Pool2D { window: 2 }, LayerSpec::Flatten], linear_head()),
            3,
            4,
        ),
        case("flatten", spec(image(3, 2), vec![LayerSpec::Flatten], linear_head()), 2, 5),
        case("heads", spec(Shape::Flat(4), vec![LayerSpec::Dense { units: 5 }], heads), 5, 6),
        case("mlp mve", build_mlp(2, &[6, 6], mve_heads()), 8, 7),
        case("mlp nig", build_mlp(2, &[6, 6], nig_heads()), 8, 8),
        case("cnn mve", build_cnn(8, [1, 1, 1, 1, 2], 4, mve_heads()), 3, 9),
        case("cnn nig", build_cnn(8, [1, 1, 1, 1, 2], 4, nig_heads()), 3, 10),
    ]
}

/// Composite Gauss–Legendre over `[a, b]` split into `panels` equal pieces.
pub fn integrate<F: FnMut(f64) -> f64>(rule: &GaussLegendre, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            rule.integrate(lo, lo + w, &mut f)
        })
        .sum()
}

pub fn gauss_legendre(degree: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(degree).unwrap())
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `p(y) = ∫∫ N(y | μ, v) N(μ | γ, v/ν) InvGamma(v | α, β) dμ dv`, by brute
/// force: Gauss–Legendre in μ around the product's centre, and in `t = ln v`
/// over the bulk of the inverse-gamma mass.
pub fn nig_marginal(y: f64, gamma: f64, nu: f64, alpha: f64, beta: f64, rule: &GaussLegendre) -> f64 {
    let ln_norm_ig = alpha * beta.ln() - ln_gamma(alpha);
    let normal = |x: f64, mean: f64, var: f64| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let t_mode = (beta / alpha).ln();
    let (t_lo, t_hi) = (t_mode - 6.0, t_mode + 40.0 / (alpha + 0.5) + 2.0);
    integrate(rule, t_lo, t_hi, 80, |t| {
        let v = t.exp();
        // InvGamma(v) dv = InvGamma(v) v dt
        let ig = (ln_norm_ig - (alpha + 1.0) * t - beta / v).exp() * v;
        let centre = (nu * gamma + y) / (nu + 1.0);
        let width = 12.0 * (v / (nu + 1.0)).sqrt();
        let inner = integrate(rule, centre - width, centre + width, 4, |mu| {
            normal(y, mu, v) * normal(mu, gamma, v / nu)
        });
        ig * inner
    })
}
