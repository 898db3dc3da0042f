#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = morphrom::mesh::parse_mesh(text) {
            // Accepted meshes must survive a render/parse round trip.
            let again = morphrom::mesh::parse_mesh(&morphrom::mesh::render_mesh(&mesh)).expect("rendered mesh parses");
            assert_eq!(again.n_nodes(), mesh.n_nodes());
            assert_eq!(again.n_elements(), mesh.n_elements());
        }
    }
});
