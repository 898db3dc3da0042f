use morphrom::mesh::{build_parent_disk_mesh, build_parent_spline_mesh, parse_mesh, render_mesh};
use morphrom::pipeline::rba::Array;
use morphrom::pipeline::{dataset, RunConfig};
use morphrom::surrogate;
use proptest::prelude::*;

#[test]
fn generated_meshes_round_trip_exactly() {
    for mesh in [build_parent_disk_mesh(0.225, 4).unwrap(), build_parent_spline_mesh(4).unwrap()] {
        let text = render_mesh(&mesh);
        let back = parse_mesh(&text).unwrap();
        assert_eq!(back.nodes, mesh.nodes);
        assert_eq!(back.elements, mesh.elements);
        assert_eq!(back.periodic_pairs, mesh.periodic_pairs);
        assert_eq!(render_mesh(&back), text);
    }
}

#[test]
fn truncated_mesh_text_is_rejected() {
    let text = render_mesh(&build_parent_disk_mesh(0.225, 2).unwrap());
    for cut in [0, 7, text.len() / 3, text.len() / 2, text.len() - 20] {
        assert!(parse_mesh(&text[..cut]).is_err(), "cut at {cut}");
    }
}

proptest! {
    #[test]
    fn mesh_parser_never_panics(s in "\\PC{0,400}") {
        let _ = parse_mesh(&s);
    }

    #[test]
    fn mesh_parser_survives_line_edits(drop in 0usize..200, junk in "[ -~]{0,12}") {
        let text = render_mesh(&build_parent_disk_mesh(0.225, 2).unwrap());
        let mut lines: Vec<&str> = text.lines().collect();
        let i = drop % lines.len();
        lines[i] = &junk;
        let _ = parse_mesh(&lines.join("\n"));
    }

    #[test]
    fn arrays_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
        let data: Vec<f64> = (0..rows * cols).map(|k| (seed.wrapping_mul(k as u64 + 1) as f64).sin()).collect();
        let a = Array::new(vec![rows, cols], data).unwrap();
        let bytes = a.encode();
        prop_assert_eq!(bytes.len(), 4 + 2 + 16 + 8 * rows * cols);
        prop_assert_eq!(Array::decode(&bytes).unwrap(), a);
    }

    #[test]
    fn array_decoder_rejects_every_truncation(n in 1usize..5, cut in 0usize..100) {
        let a = Array::new(vec![n], vec![1.5; n]).unwrap();
        let bytes = a.encode();
        let cut = cut % bytes.len();
        prop_assert!(Array::decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn array_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut b = b"RBA1".to_vec();
        b.extend(bytes);
        let _ = Array::decode(&b);
    }

    #[test]
    fn manifest_parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
        let _ = surrogate::parse_manifest(&bytes);
        let _ = dataset::parse_manifest(&bytes);
        if let Ok(s) = std::str::from_utf8(&bytes) {
            let _ = RunConfig::from_json(s);
        }
    }
}

#[test]
fn rank_and_dtype_are_checked() {
    let mut b = Array::new(vec![2], vec![1.0, 2.0]).unwrap().encode();
    b[4] = 2;
    assert!(Array::decode(&b).is_err());
    let mut b = Array::new(vec![1], vec![1.0]).unwrap().encode();
    b[5] = 200;
    assert!(Array::decode(&b).is_err());
    let mut b = Array::new(vec![1], vec![1.0]).unwrap().encode();
    b.push(0);
    assert!(Array::decode(&b).is_err());
}
