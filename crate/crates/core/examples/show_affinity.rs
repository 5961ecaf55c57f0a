//! Print the calling thread's allowed CPUs, one line:
//! `affinity=<comma-separated ids>`. Used by the integration tests to
//! check what a child process inherited; also a minimal read-back demo.

fn main() {
    match nodeperf::pin::read_affinity() {
        Ok(cpus) => {
            let ids: Vec<String> = cpus.iter().map(|c| c.to_string()).collect();
            println!("affinity={}", ids.join(","));
        }
        Err(e) => {
            eprintln!("cannot read affinity: {e}");
            std::process::exit(1);
        }
    }
}
