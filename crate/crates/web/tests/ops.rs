use bmssl_web::ops::{augment_gallery, chain_spectrum, quadratic_meta_paths};

#[test]
fn gallery_holds_source_and_views() {
    let g = augment_gallery(3, "A4", 5, 7).unwrap();
    assert_eq!(g.count(), 6);
    assert_eq!(g.pixels().len(), 6 * g.width() * g.height());
    assert!(g.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(g.descriptions().lines().next(), Some("source"));
    assert_eq!(g, augment_gallery(3, "A4", 5, 7).unwrap());
    assert!(augment_gallery(16, "A4", 1, 0).is_err());
    assert!(augment_gallery(0, "A9", 1, 0).is_err());
}

#[test]
fn mild_crop_level_only_crops() {
    let g = augment_gallery(0, "A1", 8, 1).unwrap();
    assert!(g.descriptions().lines().skip(1).all(|l| l.split(" + ").all(|op| op.starts_with("CropResize"))));
}

#[test]
fn spectrum_reports_optimal_eigen_subspace() {
    let s = chain_spectrum(8, 3, 2, 300, 4).unwrap();
    let ev = s.eigenvalues();
    assert_eq!(ev.len(), 8);
    assert!((ev[0] - 1.0).abs() < 1e-10);
    assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(s.random_gaps().len(), 300);
    assert!(s.optimal());
    assert!(s.random_gaps().iter().all(|&g| g >= s.eigen_gap() - 1e-9));
    assert!(chain_spectrum(8, 3, 8, 10, 0).is_err());
}

#[test]
fn quadratic_paths_follow_closed_forms() {
    let (theta, c, alpha, beta, l, delta) = (2.0, -1.0, 0.1, 0.3, 3, 2);
    let p = quadratic_meta_paths(theta, c, alpha, beta, l, delta, 20).unwrap();
    assert_eq!(p.standard().len(), 21);
    assert_eq!(p.kl().len(), 20);
    // Standard gradient on this objective is (1 - alpha)^(2L) (theta - c).
    let rate = 1.0 - beta * (1.0_f64 - alpha).powi(2 * l as i32);
    for (i, s) in p.standard().iter().enumerate() {
        assert!((s - (c + rate.powi(i as i32) * (theta - c))).abs() < 1e-12);
    }
    let b = p.bootstrapped();
    assert!(b.windows(2).all(|w| (w[1] - c).abs() < (w[0] - c).abs()));
    assert!(p.kl().windows(2).all(|w| w[1] < w[0]));
    assert!(quadratic_meta_paths(0.0, 0.0, 0.1, 0.1, 1, 0, 1).is_err());
}
