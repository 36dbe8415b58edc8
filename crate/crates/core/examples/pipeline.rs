//! The command-line pipeline driven in-process: phantom, forward data,
//! reconstruction and selftest, all in a temporary directory.
fn main() {
    let dir = std::env::temp_dir().join("ptomo-pipeline-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let p = |name: &str| dir.join(name).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["phantom".into(), "--n".into(), "24".into(), "-o".into(), p("truth.vol")],
        vec!["forward".into(), "--angles".into(), "48".into(), "-i".into(), p("truth.vol"), "-o".into(), p("s11.sin")],
        vec![
            "reconstruct".into(),
            "--angles".into(),
            "48".into(),
            "--max-iters".into(),
            "4".into(),
            "-i".into(),
            p("s11.sin"),
            "--truth".into(),
            p("truth.vol"),
            "--history".into(),
            p("history.csv"),
            "--heatmaps".into(),
            p("maps"),
            "-o".into(),
            p("recon.vol"),
        ],
        vec!["norms".into(), "-i".into(), p("recon.vol")],
        vec!["selftest".into(), "--quick".into()],
    ];
    for args in runs {
        println!("$ ptomo {}", args.join(" "));
        let argv = std::iter::once("ptomo".to_string()).chain(args);
        let code = ptomo::cli::main_with_args(argv, &mut std::io::stdout(), &mut std::io::stderr());
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("outputs in {}", dir.display());
}
