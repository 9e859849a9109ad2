use clap::Parser;

use tsplat_cli::args::{Cli, Command};
use tsplat_cli::commands::{
    cmd_ablate, cmd_eval, cmd_fit, cmd_render, cmd_scenegen, exit_code_for, Global,
};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage; this tool reserves 2 for data
            // errors, so remap.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure {threads} threads: {e}");
            std::process::exit(1);
        }
    }

    let global = Global {
        seed: cli.seed,
        deterministic: cli.deterministic,
    };

    let result: anyhow::Result<()> = match &cli.command {
        Command::Scenegen(args) => cmd_scenegen(args, &global).map(|dir| {
            println!("dataset written to {}", dir.display());
        }),
        Command::Fit(args) => cmd_fit(args, &global).map(|out| {
            println!(
                "fitted scene: {} (final loss {:.6}, psnr {:.2} dB)",
                out.fitted_scene.display(),
                out.final_loss,
                out.final_psnr
            );
        }),
        Command::Render(args) => cmd_render(args, &global).map(|files| {
            println!("wrote {} frame(s)", files.len());
        }),
        Command::Eval(args) => cmd_eval(args, &global).map(|_| ()),
        Command::Ablate(args) => cmd_ablate(args, &global).map(|_| ()),
    };

    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code_for(&e));
    }
}
