use std::path::Path;
use std::process::Command;

const PROGRAM: &str = r#"
#include "slim.h"
#include <stdio.h>

int main(void) {
    size_t d = 0;
    if (slim_max_message_dim(8.0, 1.0, 1, &d) != SLIM_STATUS_OK || d != 8) return 1;
    SlimBudget *b = NULL;
    if (slim_budget_new(1.0, 2, 4, 4.0, &b) != SLIM_STATUS_OK) return 2;
    uint8_t ok = 1;
    slim_budget_feasible(b, &ok);
    slim_budget_free(b);
    if (ok != 0) return 3;
    const char *cfg = "[environment]\nname = \"traffic_junction\"\n";
    SlimEnv *env = NULL;
    if (slim_env_new(cfg, &env) != SLIM_STATUS_OK) return 4;
    SlimEnvSpec spec;
    slim_env_spec(env, &spec);
    slim_env_free(env);
    printf("%zu\n", spec.n_agents);
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static
/// library; skipped when no C compiler or archive is available.
#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("slim.h").exists(), "header was not generated");
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libslim_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "5");
}
