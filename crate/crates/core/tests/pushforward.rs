use fracmap::analysis::{box_dimension, default_levels, estimate_bilipschitz};
use fracmap::fmi::{
    default_image_domain, forward_image_points, rasterize_points, verify_pushforward, PlaneMap,
};
use fracmap::geometry::TriangleDomain;
use fracmap::schemes::{
    membership_grid, CarpetScheme, EscapeCriterion, GasketScheme, Scheme, SineParams,
};
use fracmap::{GridSpec, Point2, RectDomain};

fn all_schemes() -> Vec<(&'static str, Scheme)> {
    let p = SineParams::new(3.0, 3.0).unwrap();
    vec![
        ("tent", CarpetScheme::Tent2D.into()),
        ("mod-tent", CarpetScheme::ModTent2D.into()),
        ("sine", CarpetScheme::Sine(p).into()),
        ("auto-sine", CarpetScheme::AutoSine(p).into()),
        ("gasket", GasketScheme::classical().into()),
    ]
}

fn source_domain(scheme: &Scheme) -> RectDomain {
    if scheme.is_gasket() {
        TriangleDomain.bounding_box()
    } else {
        RectDomain::unit_square()
    }
}

#[test]
fn invertible_registry_maps_push_forward_every_scheme() {
    let maps = [
        "identity",
        "sum-squares",
        "sine-shift",
        "affine:1.5,0.3,-0.2,0.8,0.1,0.2",
    ];
    let mut failures = Vec::new();
    for name in maps {
        let map = PlaneMap::parse(name).unwrap();
        assert!(map.has_inverse());
        for (label, scheme) in all_schemes() {
            let source = GridSpec::new(source_domain(&scheme), 243, 243).unwrap();
            let target =
                GridSpec::new(default_image_domain(&map, &scheme).unwrap(), 243, 243).unwrap();
            for k in 1..=4 {
                let r = verify_pushforward(
                    &map,
                    &scheme,
                    EscapeCriterion::BothSimultaneous,
                    &source,
                    &target,
                    k,
                )
                .unwrap();
                if r.agreement() < 0.99 {
                    failures.push(format!(
                        "{name} / {label} / depth {k}: {:.4}",
                        r.agreement()
                    ));
                }
            }
        }
    }
    assert!(
        failures.is_empty(),
        "agreement below 0.99:\n{}",
        failures.join("\n")
    );
}

#[test]
fn box_dimension_survives_bilipschitz_maps() {
    let scheme: Scheme = CarpetScheme::ModTent2D.into();
    let unit = RectDomain::unit_square();
    let spec = GridSpec::new(unit, 729, 729).unwrap();
    let carpet = membership_grid(&scheme, EscapeCriterion::BothSimultaneous, &spec, 6).unwrap();
    let levels = default_levels(729, 729);
    let base = box_dimension(&carpet, levels).unwrap().slope;
    let maps = [
        "identity",
        "sum-squares",
        "sine-shift",
        "quadratic-shear",
        "cbrt-shear",
        "x + 0.3*y, y + 0.1*sin(x)",
        "affine:2,0,0,2,0,0",
    ];
    let mut checked = 0;
    for text in maps {
        let map = PlaneMap::parse(text).unwrap();
        let lip = estimate_bilipschitz(&map, &unit, 100_000).unwrap();
        if lip.l1 < 0.1 {
            continue;
        }
        let image = forward_image_points(&map, &carpet);
        let target = GridSpec::new(default_image_domain(&map, &scheme).unwrap(), 729, 729).unwrap();
        let mapped = box_dimension(&rasterize_points(&image.points, &target), levels).unwrap();
        assert!(
            (mapped.slope - base).abs() <= 0.07,
            "{text}: {:.4} vs {base:.4}",
            mapped.slope
        );
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn sum_of_squares_distortion() {
    let map = PlaneMap::sum_of_squares();
    let lip = estimate_bilipschitz(&map, &RectDomain::unit_square(), 100_000).unwrap();
    assert!(lip.l2 < 3.5 && lip.l2 <= 10f64.sqrt(), "l2 {}", lip.l2);
    assert!(0.0 < lip.l1 && lip.l1 <= lip.l2);

    // The Jacobian [[2x, 2y], [1, -1]] is singular on x = -y, so pairs near the
    // origin along the diagonal contract: for u = 0, v = (s, s) the ratio is
    // |(2s^2, 0)| / (s sqrt 2) = s sqrt 2.
    let ratio = |s: f64| {
        let v = Point2::new(s, s);
        map.forward(v)
            .unwrap()
            .distance(map.forward(Point2::ORIGIN).unwrap())
            / v.norm()
    };
    assert!((ratio(0.1) - 0.1 * 2f64.sqrt()).abs() < 1e-12);
    assert!(
        lip.l1 < 0.5,
        "l1 {} exceeds the contraction near the origin",
        lip.l1
    );
}
