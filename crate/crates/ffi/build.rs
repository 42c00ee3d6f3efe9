fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let mut config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("PERFDYN_H".to_owned()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };
    config.enumeration.prefix_with_name = true;
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("unable to generate C bindings")
        .write_to_file(std::path::Path::new(&crate_dir).join("include/perfdyn.h"));
    println!("cargo:rerun-if-changed=src/lib.rs");
}
