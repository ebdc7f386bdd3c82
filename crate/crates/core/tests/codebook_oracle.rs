//! Codebook spectra and sketches checked against independent oracles.

use hsq_core::codebook::{Codebook, CodebookMethod, SketchPath, SketchedCodebook};
use hsq_core::metrics::sketch_error;
use hsq_core::SplitMix64;

/// Cyclic Jacobi eigenvalues of a symmetric matrix (row-major `n × n`).
fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn gram(cb: &Codebook) -> Vec<f64> {
    let (d, m) = (cb.dim(), cb.count());
    let c = cb.columns();
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            g[i * d + j] = (0..m).map(|k| c[(i, k)] * c[(j, k)]).sum();
        }
    }
    g
}

#[test]
fn singular_values_match_jacobi() {
    for (method, d, m) in [
        (CodebookMethod::RandomRotation, 8, 8),
        (CodebookMethod::RandomGaussian, 8, 8),
        (CodebookMethod::RandomGaussian, 12, 30),
        (CodebookMethod::KMeansGaussian, 6, 24),
    ] {
        let cb = Codebook::generate(method, d, m, 17).unwrap();
        let ev = jacobi_eigenvalues(gram(&cb), d);
        let smin = ev[0].sqrt();
        let smax = ev[d - 1].sqrt();
        assert!(
            (cb.sigma_min() - smin).abs() < 1e-8,
            "{method:?}: {} vs {smin}",
            cb.sigma_min()
        );
        assert!(
            (cb.sigma_max() - smax).abs() < 1e-8,
            "{method:?}: {} vs {smax}",
            cb.sigma_max()
        );
    }
}

#[test]
fn jacobi_oracle_on_known_matrix() {
    // [[2,1],[1,2]] has eigenvalues 1 and 3.
    let ev = jacobi_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2);
    assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
}

#[test]
fn pseudoinverse_is_right_inverse() {
    let cb = Codebook::generate(CodebookMethod::RandomGaussian, 10, 25, 4).unwrap();
    let prod = cb.columns() * cb.pinv();
    for i in 0..10 {
        for j in 0..10 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((prod[(i, j)] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn codebooks_regenerate_bit_identically() {
    for method in CodebookMethod::ALL {
        let (d, m) = if method.requires_square() { (8, 8) } else { (8, 20) };
        let a = Codebook::generate(method, d, m, 99).unwrap();
        let b = Codebook::generate(method, d, m, 99).unwrap();
        let bits = |cb: &Codebook| cb.columns().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{method:?}");
    }
}

fn mean_sketch_error(cb: &Codebook, k: usize, path: SketchPath) -> f64 {
    let mut total = 0.0;
    let trials = 40;
    for t in 0..trials {
        let sk = SketchedCodebook::new(cb, k, 1000 + t, path).unwrap();
        let g = SplitMix64::new(t).gaussian_vec(cb.dim());
        total += sketch_error(&sk, &g);
    }
    total / trials as f64
}

#[test]
fn sketch_error_shrinks_with_k() {
    let cb = Codebook::generate(CodebookMethod::RandomGaussian, 64, 128, 5).unwrap();
    for path in [SketchPath::Unbiased, SketchPath::Greedy] {
        let e16 = mean_sketch_error(&cb, 16, path);
        let e32 = mean_sketch_error(&cb, 32, path);
        let e48 = mean_sketch_error(&cb, 48, path);
        assert!(e32 < 0.5, "{path:?}: {e32}");
        assert!(e48 < e16, "{path:?}: {e48} vs {e16}");
        // Typical error of a Gaussian sketch is about sqrt(2/(πk)).
        assert!(
            e32 < 2.0 * (2.0 / (std::f64::consts::PI * 32.0)).sqrt(),
            "{path:?}: {e32}"
        );
    }
}
