use std::path::Path;
use std::process::Command;

const PROGRAM: &str = r#"
#include "qem.h"
int main(void) {
    QemBeam *b = NULL;
    double lam = 0.0;
    if (qem_beam_new(300000.0, 20.0, 300.0, &b) != QEM_STATUS_OK) return 1;
    if (qem_beam_info(b, &lam, NULL, NULL) != QEM_STATUS_OK) return 2;
    qem_beam_free(b);
    return lam > 0.0 ? 0 : 3;
}
"#;

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/qem.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let mut n = 0;
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from qem.h");
            n += 1;
        }
    }
    assert!(n >= 15, "{n}");
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = std::env::temp_dir().join(format!("qem-header-{}.c", std::process::id()));
    std::fs::write(&tmp, PROGRAM).unwrap();
    let res = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&tmp)
        .output();
    let _ = std::fs::remove_file(&tmp);
    match res {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipped: no C compiler ({e})"),
    }
}
