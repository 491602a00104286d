use std::path::Path;

use coreg_cli::csvio::{data_matrix_csv, parse_table};
use coreg_cli::svg::{render_heatmap, render_roc, render_venn_panel, VennRow};
use coreg_core::{DataMatrix, SymmetricMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Fill colour of the rectangle covering point (x, y); later rectangles win.
fn color_at(doc: &roxmltree::Document, x: f64, y: f64) -> Option<String> {
    let num = |n: &roxmltree::Node, a: &str| n.attribute(a).unwrap().parse::<f64>().unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("fill").is_some_and(|f| f != "none"))
        .rfind(|n| {
            let (rx, ry, w, h) = (num(n, "x"), num(n, "y"), num(n, "width"), num(n, "height"));
            x >= rx && x < rx + w && y >= ry && y < ry + h
        })
        .map(|n| n.attribute("fill").unwrap().to_string())
}

// Heatmap geometry: 600 px square grid at (10, 30).
fn cell_center(p: usize, r: usize, c: usize) -> (f64, f64) {
    let cell = 600.0 / p as f64;
    (10.0 + (c as f64 + 0.5) * cell, 30.0 + (r as f64 + 0.5) * cell)
}

#[test]
fn identity_heatmap_colors() {
    let svg = render_heatmap(&SymmetricMatrix::identity(5), None, "identity");
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    for r in 0..5 {
        for c in 0..5 {
            let (x, y) = cell_center(5, r, c);
            let want = if r == c { "#b2182b" } else { "#ffffff" };
            assert_eq!(color_at(&doc, x, y).as_deref(), Some(want), "cell ({r},{c})");
        }
    }
}

#[test]
fn permuted_two_block_heatmap_is_contiguous() {
    // Even indices form block A (corr 0.8), odd indices block B (corr −0.5
    // against A, 0.6 within). Sorting A before B must give four solid
    // quadrants.
    let p = 8;
    let m = DMatrix::from_fn(p, p, |i, j| match (i == j, i % 2, j % 2) {
        (true, _, _) => 1.0,
        (_, 0, 0) => 0.8,
        (_, 1, 1) => 0.6,
        _ => -0.5,
    });
    let m = SymmetricMatrix::new(m).unwrap();
    let perm = [0, 2, 4, 6, 1, 3, 5, 7];
    let doc_text = render_heatmap(&m, Some(&perm), "blocks");
    let doc = roxmltree::Document::parse(&doc_text).unwrap();
    let expect = |a: f64| coreg_cli::svg::diverging_color(a);
    for r in 0..p {
        for c in 0..p {
            let (x, y) = cell_center(p, r, c);
            let want = match (r == c, r < 4, c < 4) {
                (true, _, _) => expect(1.0),
                (_, true, true) => expect(0.8),
                (_, false, false) => expect(0.6),
                _ => expect(-0.5),
            };
            assert_eq!(color_at(&doc, x, y).unwrap(), want, "cell ({r},{c})");
        }
    }
    // Unpermuted, the same matrix alternates colours along the first row.
    let plain = render_heatmap(&m, None, "blocks");
    let doc = roxmltree::Document::parse(&plain).unwrap();
    let (x1, y) = cell_center(p, 0, 1);
    let (x2, _) = cell_center(p, 0, 2);
    assert_ne!(color_at(&doc, x1, y), color_at(&doc, x2, y));
}

#[test]
fn roc_and_venn_are_well_formed() {
    let roc = render_roc(
        &[
            ("CoReg".into(), vec![(0.0, 0.0), (0.1, 0.8), (1.0, 1.0)]),
            ("OLS".into(), vec![(0.0, 0.0), (1.0, 1.0)]),
        ],
        "roc",
    );
    let doc = roxmltree::Document::parse(&roc).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 2);
    let ticks: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("text"))
        .filter_map(|n| n.text())
        .collect();
    for t in ["0.0", "0.1", "0.5", "1.0"] {
        assert!(ticks.contains(&t), "missing tick {t}");
    }

    let venn = render_venn_panel(
        &[VennRow {
            label: "CoReg".into(),
            only_arm1: 3.5,
            intersection: 90.0,
            only_arm2: 1.25,
            proportions: [0.037, 0.95, 0.013],
        }],
        ["a", "b"],
        "overlap",
    );
    let doc = roxmltree::Document::parse(&venn).unwrap();
    let texts: String = doc.descendants().filter_map(|n| n.text()).collect::<Vec<_>>().join("|");
    assert!(
        texts.contains("90.00") && texts.contains("3.50") && texts.contains("1.25"),
        "{texts}"
    );
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(
        rows in 1usize..6,
        cols in 1usize..5,
        seed in proptest::collection::vec(-1e300f64..1e300, 30),
        scale in prop_oneof![Just(1.0), Just(1e-300), Just(1e-5), Just(3.0)],
    ) {
        let m = DMatrix::from_fn(rows, cols, |r, c| seed[(r * cols + c) % seed.len()] * scale / 7.0);
        let dm = DataMatrix::samples_by_variables(m.clone()).unwrap();
        let names: Vec<String> = (0..cols).map(|c| format!("v{c}")).collect();
        let text = String::from_utf8(data_matrix_csv(&dm, &names)).unwrap();
        let t = parse_table(&text, Path::new("mem.csv"), None).unwrap();
        prop_assert_eq!(t.columns, names);
        prop_assert_eq!(t.values, m);
    }
}
