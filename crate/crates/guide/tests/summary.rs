use std::path::Path;

// Every chapter listed in SUMMARY.md must exist and be compiled by lib.rs.
#[test]
fn summary_chapters_are_compiled() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
    let summary = std::fs::read_to_string(root.join("SUMMARY.md")).unwrap();
    let lib = include_str!("../src/lib.rs");
    let mut count = 0;
    for line in summary.lines() {
        let Some(start) = line.find("](") else { continue };
        let file = &line[start + 2..line.len() - 1];
        assert!(root.join(file).exists(), "{file} listed but missing");
        assert!(lib.contains(&format!("book/src/{file}")), "{file} not compiled");
        count += 1;
    }
    assert_eq!(count, 8);
}
