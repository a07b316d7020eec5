use jointgraph::fpca::{compute_scores, fit_basis, score_covariance, ScoreMatrix};
use jointgraph::simulate::{generate_dataset, SimConfig};
use nalgebra::{DMatrix, SymmetricEigen};

#[test]
#[ignore]
fn speed_probe() {
    let config = SimConfig { p: 20, n: 100, k: 3, m: 3, nu: 100, s: 0.05, rho: 0.0, sigma2: 0.05, seed: 1, ..SimConfig::default() };
    let data = generate_dataset(&config).unwrap();
    let w = config.gap();
    let g = &data.groups[0];
    let c = g.panel.centered();
    let basis = fit_basis(&c, config.m).unwrap();
    let s0 = compute_scores(&c, &basis).unwrap();
    let rescaled = ScoreMatrix::new(s0.matrix() / w.sqrt(), s0.p(), s0.m()).unwrap();
    let sigma = score_covariance(&rescaled);
    let (p, m) = (20usize, 3usize);
    let n = p * m;
    let s = sigma.data().clone();
    let b = 1.0f64;
    let lambda = 0.3f64;
    let mut z = DMatrix::<f64>::from_element(n, n, 1.0);
    let mut v = DMatrix::<f64>::zeros(n, n);
    let mut omega;
    for t in 1..=3000 {
        let a = {
            let mut a = &z - (&s + &v) / b;
            let at = a.transpose(); a += at; a *= 0.5; a
        };
        let eig = SymmetricEigen::new(a);
        let mapped = eig.eigenvalues.map(|l| 0.5 * (l + (l * l + 4.0 / b).sqrt()));
        let mut sc = eig.eigenvectors.clone();
        for (cix, &d) in mapped.iter().enumerate() { sc.column_mut(cix) *= d; }
        omega = &sc * eig.eigenvectors.transpose();
        let ot = omega.transpose(); omega += ot; omega *= 0.5;
        let cmat = &omega + &v / b;
        let zprev = z.clone();
        for j in 0..p {
            for l in 0..p {
                let blk = cmat.view((j*m, l*m), (m, m)).into_owned();
                if j == l { z.view_mut((j*m, l*m), (m, m)).copy_from(&blk); continue; }
                let nrm = blk.norm();
                let shrink = if nrm == 0.0 { 0.0 } else { f64::max(0.0, 1.0 - lambda / (b * nrm)) };
                z.view_mut((j*m, l*m), (m, m)).copy_from(&(blk * shrink));
            }
        }
        let gap = &omega - &z;
        v += &gap * b;
        if t % 250 == 0 || t <= 2 {
            let edges = (0..p).flat_map(|j| ((j+1)..p).map(move |l| (j,l)))
                .filter(|&(j,l)| z.view((j*m, l*m), (m,m)).iter().any(|&x| x != 0.0)).count();
            println!("t={t}: primal={:.3e} dual={:.3e} |Z|={:.3e} |V|={:.3e} |Omega|={:.3e} edges={edges}",
                gap.norm(), b * (&z - &zprev).norm(), z.norm(), v.norm(), omega.norm());
        }
    }
}
