use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hillscope_core::config::ScenarioConfig;
use hillscope_core::HillError;

mod run;

use run::{Ctx, Manifest};

#[derive(Parser)]
#[command(name = "hillscope", version, about = "Jacobi-Maupertuis geometry near the Hill boundary")]
struct Invocation {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and export it.
    Simulate(Flags),
    /// Closed-form throw family and envelope of the constant-force model.
    ModelEnvelope(Flags),
    /// Conjugate locus of the geodesic family through a base point.
    ConjugateLocus(Flags),
    /// Fold classification of every conjugate event.
    FoldReport(Flags),
    /// Aperture of the downward conjugate cone.
    DownwardCone(Flags),
    /// Build a Seifert chart and check its axioms and metric.
    SeifertBuild(Flags),
    /// Near-boundary properties (1)-(5) in a Seifert chart.
    SeifertProperties(Flags),
    /// Rescaled geodesics against the model arcs.
    RescaleCompare(Flags),
    /// Conjugate pairs of geodesics passing close to the chart centre.
    Theorem1Scan(Flags),
    /// Every check that applies to the blocks of the scenario.
    VerifyAll(Flags),
}

#[derive(clap::Args)]
struct Flags {
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, overrides_with = "no_svg")]
    svg: bool,
    #[arg(long = "no-svg", overrides_with = "svg")]
    no_svg: bool,
    /// Worker threads; numerical output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Reserved; every pipeline is a deterministic grid.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

type Pipeline = fn(&mut Ctx) -> anyhow::Result<()>;

impl Command {
    fn split(self) -> (&'static str, Pipeline, Flags) {
        match self {
            Command::Simulate(f) => ("simulate", run::simulate, f),
            Command::ModelEnvelope(f) => ("model-envelope", run::model_envelope, f),
            Command::ConjugateLocus(f) => ("conjugate-locus", run::conjugate_locus, f),
            Command::FoldReport(f) => ("fold-report", run::fold_report, f),
            Command::DownwardCone(f) => ("downward-cone", run::downward_cone, f),
            Command::SeifertBuild(f) => ("seifert-build", run::seifert_build, f),
            Command::SeifertProperties(f) => ("seifert-properties", run::seifert_properties, f),
            Command::RescaleCompare(f) => ("rescale-compare", run::rescale_compare, f),
            Command::Theorem1Scan(f) => ("theorem1-scan", run::theorem1_scan, f),
            Command::VerifyAll(f) => ("verify-all", run::verify_all, f),
        }
    }
}

fn is_schema_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<HillError>(),
        Some(HillError::Config { .. } | HillError::DimensionMismatch { .. })
    )
}

fn main() -> ExitCode {
    let (name, pipeline, flags) = Invocation::parse().command.split();
    if let Some(n) = flags.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let started = Instant::now();
    let cfg = match ScenarioConfig::from_path(&flags.scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut ctx = match Ctx::new(cfg, flags.out.clone(), flags.svg || !flags.no_svg) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if is_schema_error(&e) { 2 } else { 1 });
        }
    };
    let outcome = pipeline(&mut ctx);
    let error = outcome.as_ref().err().map(|e| format!("{e:#}"));
    let manifest = Manifest::new(
        &ctx,
        name,
        &flags.scenario,
        flags.seed,
        error.clone(),
        started.elapsed().as_secs_f64(),
    );
    if let Err(e) = ctx.write_manifest(&manifest) {
        eprintln!("error: cannot write manifest: {e:#}");
        return ExitCode::from(1);
    }
    for c in &ctx.checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    match outcome {
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_schema_error(&e) { 2 } else { 1 })
        }
        Ok(()) if manifest.pass => ExitCode::SUCCESS,
        Ok(()) => ExitCode::from(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grammar() {
        Invocation::command().debug_assert();
        let inv = Invocation::try_parse_from(["hillscope", "theorem1-scan", "s.json", "--no-svg", "--threads", "2"]).unwrap();
        let (name, _, flags) = inv.command.split();
        assert_eq!(name, "theorem1-scan");
        assert!(flags.no_svg && !flags.svg);
        assert_eq!(flags.out, PathBuf::from("out"));
        assert_eq!(flags.threads, Some(2));
        let inv = Invocation::try_parse_from(["hillscope", "verify-all", "s.json", "--no-svg", "--svg"]).unwrap();
        let (_, _, flags) = inv.command.split();
        assert!(flags.svg && !flags.no_svg);
        assert!(Invocation::try_parse_from(["hillscope", "bogus", "s.json"]).is_err());
        assert!(Invocation::try_parse_from(["hillscope", "simulate"]).is_err());
    }
}
