use xychain_web::{chi_curve_data, gap_histogram_data, spectrum_data, MAX_LENGTH};

#[test]
fn clean_curve_peaks_at_critical_field() {
    let curve = chi_curve_data(true, 1.0, 0.0, 33, 2, 1, 0.5, 1.5, 11).unwrap();
    assert_eq!(curve.len(), 33);
    let rows: Vec<&[f64]> = curve.chunks(3).collect();
    let peak = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((peak[0] - 1.0).abs() < 1e-12);
    // No disorder: average and typical coincide.
    assert!(rows.iter().all(|r| (r[1] - r[2]).abs() <= 1e-12 * r[1]));
}

#[test]
fn gap_histogram_is_normalized() {
    let h = gap_histogram_data(0.5, 0.14, 0.3, 32, 200, 5, 20).unwrap();
    assert_eq!(h.len(), 40);
    let width = 2.0 * h[0];
    let mass: f64 = h.chunks(2).map(|p| p[1] * width).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn spectrum_is_sorted_and_matches_clean_dispersion() {
    let s = spectrum_data(1.5, 1.0, 0.0, 16, 0).unwrap();
    assert_eq!(s.len(), 16);
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
    // Clean Ising chain: the lowest mode sits at k = 0, 2|λ - 1|.
    assert!((s[0] - 1.0).abs() < 1e-10);
}

#[test]
fn oversized_requests_are_rejected() {
    assert!(spectrum_data(1.0, 1.0, 0.1, MAX_LENGTH + 1, 0).is_err());
    assert!(chi_curve_data(true, 1.0, 0.1, 16, 2, 0, 1.0, 1.0, 5).is_err());
}
