//! `stemvine` command-line interface.

mod checks;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stemvine::bounds::total_r;
use stemvine::cert::{certify, generalization_bound};
use stemvine::eval::{empirical_ramp_risk, zero_one_error};
use stemvine::graph::{
    load_network, resnet34_template, serialize_network, ResNetProfiles, ResNetWidths,
};
use stemvine::linalg::load_matrix;
use stemvine::oracle::{make_blobs, train_tiny, TrainConfig};
use stemvine::{
    Error, LabeledDataset, Nonlinearity, NormProfile, StemElement, StemVineNetwork, Vine, WeightSet,
};

use output::write_out;

#[derive(Parser)]
#[command(
    name = "stemvine",
    version,
    about = "Covering-number generalization certificates for residual networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an architecture file and list every structural violation.
    Validate { arch: PathBuf },
    /// Write a built-in architecture.
    Template(TemplateArgs),
    /// Certify trained weights on a dataset.
    Certify(CertifyArgs),
    /// Compare greedy covers of brute-force grid classes with the covering bounds.
    OracleCover(SeedArgs),
    /// Compare exact and Monte-Carlo Rademacher complexities with the entropy bound.
    OracleRademacher(RademacherArgs),
    /// Scale the declared norm bounds and report R and the bound at each factor.
    SweepNorms(SweepArgs),
    /// Compare covering terms of matched chain and stem-vine networks.
    SweepPlacement(PlacementArgs),
    /// Train a small residual network on synthetic blobs and certify it.
    TrainDemo(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateName {
    Resnet34,
}

#[derive(Args)]
struct TemplateArgs {
    name: TemplateName,
    /// Input feature dimension.
    #[arg(long, default_value_t = 3)]
    input: usize,
    /// Widths of the four stages.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Spectral bound declared for every weight.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Reference-distance bound declared for every weight.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Report,
    Csv,
}

#[derive(Args)]
struct CertArgs {
    /// Margin scale of the ramp loss.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
    /// Failure probability of the bound.
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Report)]
    format: Format,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    arch: PathBuf,
    /// Directory holding `<slot>.svm` and optional `<slot>.ref.svm` files.
    /// Defaults to the architecture's `[weights]` table.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    cert: CertArgs,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RademacherArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    Both,
    B,
    S,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    arch: PathBuf,
    /// Sets the input norm and sample size; with `--weights` also the ramp risk.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    factors: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Scale::Both)]
    scale: Scale,
    /// Input norm when no dataset is given.
    #[arg(long, default_value_t = 1.0, conflicts_with = "data")]
    input_norm: f64,
    /// Sample size when no dataset is given.
    #[arg(long, default_value_t = 1000, conflicts_with = "data")]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct PlacementArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    cases: usize,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training points.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[command(flatten)]
    cert: CertArgs,
}

/// Bad flag values; exits with status 2 like a parse error.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn check_cert_flags(lambda: f64, delta: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(usage(format!("--lambda must be positive, got {lambda}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(usage(format!("--delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Runs one subcommand; `Ok(false)` reports violations or failed checks.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Validate { arch } => cmd_validate(&arch),
        Command::Template(a) => cmd_template(a).map(|_| true),
        Command::Certify(a) => cmd_certify(a).map(|_| true),
        Command::OracleCover(a) => checks::oracle_cover(a.seed),
        Command::OracleRademacher(a) => checks::oracle_rademacher(a.seed, a.trials),
        Command::SweepNorms(a) => cmd_sweep_norms(a).map(|_| true),
        Command::SweepPlacement(a) => checks::sweep_placement(a.seed, a.cases),
        Command::TrainDemo(a) => cmd_train_demo(a).map(|_| true),
    }
}

fn cmd_validate(arch: &Path) -> Result<bool> {
    match load_network(arch) {
        Ok((net, _)) => {
            println!(
                "ok: {} vertices, {} vines, {} weight matrices",
                net.vertex_count(),
                net.vines.len(),
                net.weight_count()
            );
            Ok(true)
        }
        Err(Error::Semantic(violations)) => {
            for v in &violations {
                println!("violation: {v}");
            }
            eprintln!("{}: {} violation(s)", arch.display(), violations.len());
            Ok(false)
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", arch.display())),
    }
}

fn cmd_template(a: TemplateArgs) -> Result<()> {
    let TemplateName::Resnet34 = a.name;
    let widths = ResNetWidths {
        input: a.input,
        stages: a
            .widths
            .clone()
            .try_into()
            .map_err(|_| usage("--widths takes four values"))?,
        classes: a.classes,
    };
    let net = resnet34_template(&ResNetProfiles::uniform(a.s, a.b), &widths)
        .map_err(|e| usage(e.to_string()))?;
    write_out(&a.out, &serialize_network(&net))
}

/// Loads `<slot>.svm` for every slot in `dir`, attaching `<slot>.ref.svm`
/// as the slot's reference when present.
fn load_weight_dir(net: &mut StemVineNetwork, dir: &Path) -> Result<WeightSet> {
    let mut weights = WeightSet::new();
    for slot in net.weight_slots() {
        let path = dir.join(format!("{}.svm", slot.id));
        let m = load_matrix(&path).with_context(|| format!("loading {}", path.display()))?;
        weights.insert(slot.id.clone(), m);
        let ref_path = dir.join(format!("{}.ref.svm", slot.id));
        if ref_path.exists() {
            let r = load_matrix(&ref_path)
                .with_context(|| format!("loading {}", ref_path.display()))?;
            net.profile_mut(&slot.id).expect("slot exists").reference = Some(r);
        }
    }
    net.ensure_valid()?;
    Ok(weights)
}

fn load_weight_table(table: &BTreeMap<stemvine::SlotId, PathBuf>) -> Result<WeightSet> {
    table
        .iter()
        .map(|(slot, path)| {
            let m = load_matrix(path).with_context(|| format!("loading {}", path.display()))?;
            Ok((slot.clone(), m))
        })
        .collect()
}

fn load_weights(arch: &Path, dir: Option<&Path>) -> Result<(StemVineNetwork, WeightSet)> {
    let (mut net, table) =
        load_network(arch).with_context(|| format!("reading {}", arch.display()))?;
    let weights = match dir {
        Some(dir) => load_weight_dir(&mut net, dir)?,
        None if !table.is_empty() => load_weight_table(&table)?,
        None => {
            return Err(usage(
                "no weights: pass --weights or add a [weights] table to the architecture",
            ))
        }
    };
    Ok((net, weights))
}

fn render(report: &stemvine::BoundReport, format: Format) -> String {
    match format {
        Format::Report => report.to_toml(),
        Format::Csv => report.to_csv(),
    }
}

fn cmd_certify(a: CertifyArgs) -> Result<()> {
    check_cert_flags(a.cert.lambda, a.cert.delta)?;
    let (net, weights) = load_weights(&a.arch, a.weights.as_deref())?;
    let data =
        LabeledDataset::load(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let report = certify(&net, &weights, &data, a.cert.lambda, a.cert.delta)?;
    write_out(&a.cert.out, &render(&report, a.cert.format))
}

fn cmd_sweep_norms(a: SweepArgs) -> Result<()> {
    check_cert_flags(a.lambda, a.delta)?;
    if a.factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(usage("--factors must be nonnegative"));
    }
    let (net, input_norm, n, ramp) = match &a.data {
        Some(path) => {
            let data = LabeledDataset::load(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let (net, ramp) = match &a.weights {
                Some(dir) => {
                    let (net, w) = load_weights(&a.arch, Some(dir))?;
                    let ramp = empirical_ramp_risk(&net, &w, &data, a.lambda)?;
                    (net, ramp)
                }
                None => (load_network(&a.arch)?.0, 0.0),
            };
            (net, data.x.frobenius_norm(), data.len(), ramp)
        }
        None => (load_network(&a.arch)?.0, a.input_norm, a.n, 0.0),
    };
    let mut csv = String::from("factor,r,bound\n");
    for &f in &a.factors {
        let scaled = net.map_profiles(|_, p| {
            let s = if a.scale == Scale::B { p.s } else { p.s * f };
            let b = if a.scale == Scale::S { p.b } else { p.b * f };
            NormProfile {
                s,
                b,
                reference: p.reference.clone(),
            }
        });
        let r = total_r(&scaled, input_norm)?;
        let bound = generalization_bound(ramp, r, n, a.delta)?;
        csv.push_str(&format!("{f:e},{r:e},{bound:e}\n"));
    }
    write_out(&a.out, &csv)
}

/// 2 → 16 → 16 → 16 → 4 with an identity skip over the middle block.
fn demo_network() -> StemVineNetwork {
    let p = NormProfile::new(1.0, 1.0);
    StemVineNetwork::new(
        vec![
            StemElement::weight(2, 16, p.clone()),
            StemElement::nonlin(16, Nonlinearity::Relu),
            StemElement::weight(16, 16, p.clone()),
            StemElement::nonlin(16, Nonlinearity::Relu),
            StemElement::weight(16, 16, p.clone()),
            StemElement::nonlin(16, Nonlinearity::Relu),
            StemElement::weight(16, 4, p),
            StemElement::nonlin(4, Nonlinearity::Identity),
        ],
        vec![Vine::identity(3, 7)],
    )
}

fn cmd_train_demo(a: DemoArgs) -> Result<()> {
    check_cert_flags(a.cert.lambda, a.cert.delta)?;
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let train = make_blobs(a.n, 2, 4, 0.4, a.seed)?;
    let test = make_blobs(2000, 2, 4, 0.4, a.seed.wrapping_add(10_000))?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        weight_decay: a.weight_decay,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let model = train_tiny(&demo_network(), &train, &cfg).map_err(|e| match e {
        Error::Param(m) => usage(m),
        e => anyhow!(e),
    })?;
    let report = certify(
        &model.net,
        &model.weights,
        &train,
        a.cert.lambda,
        a.cert.delta,
    )?;
    let test_err = zero_one_error(&model.net, &model.weights, &test)?;
    eprintln!(
        "train loss {:.4}, train ramp risk {:.4}, test error {:.4}, bound {:.4}",
        model.final_loss, report.empirical_ramp_risk, test_err, report.generalization_bound
    );
    if test_err - report.empirical_ramp_risk > report.components.remainder() {
        bail!("observed gap exceeds the certified remainder");
    }
    write_out(&a.cert.out, &render(&report, a.cert.format))
}
