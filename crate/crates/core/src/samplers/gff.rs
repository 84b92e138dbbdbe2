use rand::Rng;
use rand_distr::StandardNormal;

use crate::calculus::{d, dstar, neg_laplacian, solve_poisson, Form};
use crate::error::Result;
use crate::lattice::LatticeGeometry;

use super::check_beta;

/// Exact draw of the GFF with covariance `(-Δ)⁻¹/β` on rooted 0- or 2-forms.
///
/// With a direct factor `-Δ = L Lᵀ` this is `L⁻ᵀ z / √β`. Without one the
/// white-noise construction is used, which is exact up to the solver
/// tolerance.
pub fn gff_sample<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    degree: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Form> {
    check_beta(beta)?;
    let op = neg_laplacian(g, degree)?;
    if let Some(l) = op.cholesky() {
        let scale = beta.sqrt().recip();
        let mut z: Vec<f64> = (0..op.dim()).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        l.backward(&mut z);
        return Ok(Form { degree, values: op.extend(&z) });
    }
    let (phi, phit) = gff_from_white_noise(g, beta, rng)?;
    Ok(if degree == 0 { phi } else { phit })
}

/// Draws iid edge noise `W` of variance `1/β` and returns
/// `(Δ⁻¹ d* W, Δ⁻¹ d W)`, an independent pair of GFFs on 0- and 2-forms.
pub fn gff_from_white_noise<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    beta: f64,
    rng: &mut R,
) -> Result<(Form, Form)> {
    check_beta(beta)?;
    let scale = beta.sqrt().recip();
    let w = Form {
        degree: 1,
        values: (0..g.edge_count()).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect(),
    };
    gff_from_edge_field(g, &w)
}

/// The deterministic map `W ↦ (Δ⁻¹ d* W, Δ⁻¹ d W)`.
pub fn gff_from_edge_field(g: &LatticeGeometry, w: &Form) -> Result<(Form, Form)> {
    let phi = solve_poisson(g, &dstar(g, w)?)?;
    let phit = solve_poisson(g, &d(g, w)?)?;
    Ok((phi, phit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{green, green_column};
    use crate::lattice::{build_lattice, BoundaryCondition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_is_zero_and_scaling_is_exact() {
        let g = build_lattice(2, BoundaryCondition::Free).unwrap();
        for degree in [0, 2] {
            let a = gff_sample(&g, degree, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let b = gff_sample(&g, degree, 4.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert_eq!(a.values[g.root_cell(degree).unwrap()], 0.0);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x / 2.0 - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empirical_variance_matches_green() {
        let g = build_lattice(4, BoundaryCondition::Free).unwrap();
        let v = g.vertex_at(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = gff_sample(&g, 0, 1.0, &mut rng).unwrap().values[v];
            s2 += x * x;
        }
        let var = s2 / n as f64;
        let gvv = green(&g, 0, v, v).unwrap();
        // Var of x² over n draws of a centred normal is 2σ⁴/n
        let se = (2.0 * gvv * gvv / n as f64).sqrt();
        assert!((var - gvv).abs() < 4.0 * se, "{var} vs {gvv}");
    }

    #[test]
    fn exact_gradient_noise_returns_potential() {
        let g = build_lattice(2, BoundaryCondition::Zero).unwrap();
        let mut w0 = vec![0.0; g.vertex_count()];
        for (i, x) in w0.iter_mut().enumerate() {
            *x = ((i * 13) % 7) as f64 - 3.0;
        }
        w0[g.root_vertex()] = 0.0;
        let w = Form { degree: 0, values: w0.clone() };
        let (phi, phit) = gff_from_edge_field(&g, &d(&g, &w).unwrap()).unwrap();
        for (a, b) in phi.values.iter().zip(&w0) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(phit.max_abs() < 1e-9);
    }

    #[test]
    fn white_noise_matches_covariance_and_is_uncorrelated() {
        let g = build_lattice(2, BoundaryCondition::Free).unwrap();
        let v = g.vertex_at(1, 0).unwrap();
        let f = g.square_at(0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 40_000;
        let (mut vv, mut ff, mut vf) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (a, b) = gff_from_white_noise(&g, 2.0, &mut rng).unwrap();
            vv += a.values[v] * a.values[v];
            ff += b.values[f] * b.values[f];
            vf += a.values[v] * b.values[f];
        }
        let n = n as f64;
        let gv = green(&g, 0, v, v).unwrap() / 2.0;
        let gf = green_column(&g, 2, f).unwrap().values[f] / 2.0;
        assert!((vv / n - gv).abs() < 4.0 * (2.0 * gv * gv / n).sqrt());
        assert!((ff / n - gf).abs() < 4.0 * (2.0 * gf * gf / n).sqrt());
        assert!((vf / n).abs() < 4.0 * (gv * gf / n).sqrt());
    }
}
