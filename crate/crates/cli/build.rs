use std::process::Command;

fn main() {
    let desc = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_default();
    println!("cargo:rustc-env=RAB_GIT_DESCRIBE={desc}");
    println!("cargo:rerun-if-changed=build.rs");
}
