mod common;

use common::*;
use metamorph_core::features::FeatureMap;
use metamorph_core::grid::{DeformationField, GridDims, ScalarField, VectorField2};
use metamorph_core::optimizer::{linearization_lambda, prox_deformation, LinearizedMismatch};
use metamorph_core::warp::warp_channel;
use rand::Rng;

/// `tau/2 ||phi - phi0||^2 + (K/delta) D~(phi)` over the interior unknowns,
/// assembled from the warped channels and linearization gradients only.
struct Objective {
    dims: GridDims,
    tau: f64,
    weight: f64,
    phi0: DeformationField,
    phi_tilde: DeformationField,
    warped: Vec<ScalarField>,
    reference: Vec<ScalarField>,
    lambdas: Vec<VectorField2>,
}

impl Objective {
    fn new(
        f: &FeatureMap,
        g: &FeatureMap,
        phi_tilde: &DeformationField,
        phi0: &DeformationField,
        tau: f64,
        steps: usize,
        delta: f64,
    ) -> Self {
        let dims = f.dims();
        let s = dims.scale();
        let lambdas = linearization_lambda(f, g, phi_tilde)
            .unwrap()
            .into_iter()
            .map(|l| VectorField2::from_fn(dims, |i, j| [l.get(i, j)[0] / s[0], l.get(i, j)[1] / s[1]]))
            .collect();
        Objective {
            dims,
            tau,
            weight: steps as f64 / delta,
            phi0: phi0.clone(),
            phi_tilde: phi_tilde.clone(),
            warped: g.channels().iter().map(|c| warp_channel(c, phi_tilde).unwrap()).collect(),
            reference: f.channels().to_vec(),
            lambdas,
        }
    }

    fn interior(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for j in 1..self.dims.height() - 1 {
            for i in 1..self.dims.width() - 1 {
                v.push((i, j));
            }
        }
        v
    }

    fn to_field(&self, x: &[f64]) -> DeformationField {
        let mut phi = self.phi0.clone();
        for (n, &(i, j)) in self.interior().iter().enumerate() {
            phi.set(i, j, [x[2 * n], x[2 * n + 1]]);
        }
        phi
    }

    fn residual(&self, c: usize, phi: &DeformationField, i: usize, j: usize) -> f64 {
        let l = self.lambdas[c].get(i, j);
        let p = phi.get(i, j);
        let q = self.phi_tilde.get(i, j);
        self.warped[c].get(i, j) + l[0] * (p[0] - q[0]) + l[1] * (p[1] - q[1]) - self.reference[c].get(i, j)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let phi = self.to_field(x);
        let n = self.dims.len() as f64;
        let ch = self.reference.len() as f64;
        let mut prox = 0.0;
        let mut mis = 0.0;
        for j in 0..self.dims.height() {
            for i in 0..self.dims.width() {
                let (p, p0) = (phi.get(i, j), self.phi0.get(i, j));
                prox += (p[0] - p0[0]).powi(2) + (p[1] - p0[1]).powi(2);
                for c in 0..self.reference.len() {
                    mis += self.residual(c, &phi, i, j).powi(2);
                }
            }
        }
        0.5 * self.tau * prox / n + self.weight * mis / (2.0 * ch * n)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.to_field(x);
        let n = self.dims.len() as f64;
        let ch = self.reference.len() as f64;
        let mut g = Vec::with_capacity(x.len());
        for &(i, j) in &self.interior() {
            let (p, p0) = (phi.get(i, j), self.phi0.get(i, j));
            let mut gi = [self.tau * (p[0] - p0[0]) / n, self.tau * (p[1] - p0[1]) / n];
            for c in 0..self.reference.len() {
                let r = self.residual(c, &phi, i, j);
                let l = self.lambdas[c].get(i, j);
                gi[0] += self.weight * r * l[0] / (ch * n);
                gi[1] += self.weight * r * l[1] / (ch * n);
            }
            g.extend_from_slice(&gi);
        }
        g
    }

    fn flatten(&self, phi: &DeformationField) -> Vec<f64> {
        self.interior().iter().flat_map(|&(i, j)| phi.get(i, j)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients on the quadratic objective, Hessian products taken
/// from gradient differences.
fn minimize(obj: &Objective, mut x: Vec<f64>) -> Vec<f64> {
    let mut g = obj.gradient(&x);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let g0 = dot(&g, &g).sqrt();
    for _ in 0..10 * x.len() {
        if dot(&g, &g).sqrt() < 1e-15 * g0.max(1e-300) {
            break;
        }
        let probe: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let hd: Vec<f64> = obj.gradient(&probe).iter().zip(&g).map(|(a, b)| a - b).collect();
        let curv = dot(&d, &hd);
        if curv <= 0.0 {
            break;
        }
        let alpha = -dot(&g, &d) / curv;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += alpha * di;
        }
        let g_new = obj.gradient(&x);
        let beta = dot(&g_new, &hd) / curv;
        for (di, gi) in d.iter_mut().zip(&g_new) {
            *di = -gi + beta * *di;
        }
        g = g_new;
    }
    x
}

#[test]
fn prox_matches_numerical_minimizer() {
    let mut r = rng(31);
    let d = dims(8, 8);
    for trial in 0..10 {
        let deep = trial % 3;
        let f = random_feature(&mut r, d, deep);
        let g = random_feature(&mut r, d, deep);
        let phi_tilde = random_deformation(&mut r, d, 0.3);
        let phi0 = random_deformation(&mut r, d, 0.3);
        let tau = r.gen_range(0.2..5.0);
        let (steps, delta) = (15, r.gen_range(0.5..2.0));

        let out = prox_deformation(&phi0, tau, &f, &g, &phi_tilde, steps, delta).unwrap();
        let obj = Objective::new(&f, &g, &phi_tilde, &phi0, tau, steps, delta);
        let x_prox = obj.flatten(&out);
        let x_ref = minimize(&obj, obj.flatten(&phi0));

        let gap = obj.value(&x_prox) - obj.value(&x_ref);
        assert!(gap.abs() < 1e-6, "trial {trial}: gap {gap}");
        // first-order residual in the averaged inner product
        let n = d.len() as f64;
        let res = obj.gradient(&x_prox).iter().map(|v| (v * n).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-8, "trial {trial}: residual {res}");
        assert!(out.boundary_is_identity());
    }
}

#[test]
fn scalar_prox_closed_form() {
    // one deep channel carrying a pure x-ramp; all other channels constant, so
    // every pixel sees Lambda = (slope, 0) and the prox is a scalar shrinkage
    let d = dims(9, 9);
    let slope = 0.05;
    let mut channels = vec![ScalarField::constant(d, 0.2); 3];
    channels.push(ScalarField::from_fn(d, |i, _| slope * i as f64));
    let f = FeatureMap::from_channels(channels.clone(), 1.0).unwrap();
    channels[3] = ScalarField::from_fn(d, |i, _| slope * i as f64 + 0.03);
    let g = FeatureMap::from_channels(channels, 1.0).unwrap();
    let id = DeformationField::identity(d);
    let point = DeformationField::from_displacement(d, |_, _| [0.1, -0.2]);
    let (tau, steps, delta) = (3.0, 15, 1.0);
    let out = prox_deformation(&point, tau, &f, &g, &id, steps, delta).unwrap();

    let lin = LinearizedMismatch::new(&f, &g, &id).unwrap();
    let c = steps as f64 / (tau * delta * 4.0);
    for j in 2..7 {
        for i in 2..7 {
            let l = lin.lambdas_unit()[3].get(i, j)[0] / 8.0;
            assert!((l - slope).abs() < 1e-12);
            let r0 = 0.03;
            // x + c l (r0 + l x) = x0
            let x0 = 0.1;
            let x = (x0 - c * l * r0) / (1.0 + c * l * l);
            let disp = out.displacement(i, j);
            assert!((disp[0] - x).abs() < 1e-12, "{} vs {x}", disp[0]);
            assert!((disp[1] + 0.2).abs() < 1e-12);
        }
    }
}
