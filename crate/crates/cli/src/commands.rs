use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use psead_core::attention::{equivariance_report, Variant};
use psead_core::groups::{verify_homomorphism, FiniteGroup};
use psead_core::irreps::{projector_set, verify_projector_set, ProjectorSet};
use psead_core::layer::{train, PseadLayer, TrainConfig};
use psead_core::metrics::activation_mapping;
use psead_core::synth::{
    encode_onehot, make_dataset, parse_dna, Dataset, DatasetSpec, Task, DNA_ALPHABET,
};
use psead_core::{Matrix, Rng};

use crate::descriptor::GroupDescriptor;
use crate::formats;
use crate::CliError;

/// Deviation allowed for the projector identities.
pub const PROJECTOR_TOLERANCE: f64 = 1e-12;
/// Largest equivariance error `check` accepts.
pub const EQUIVARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(
    name = "psead",
    version,
    about = "Permutation-symmetric attention decomposition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print order, classes and axiom checks of a group.
    GroupInfo {
        #[command(flatten)]
        group: GroupArgs,
        /// Also write the group as a JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build, verify and export the isotypic projectors of a group.
    Projectors {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a projector file written by `projectors`.
    VerifyProjectors { file: PathBuf },
    /// Measure equivariance of a randomly initialised layer.
    Check {
        #[command(flatten)]
        group: GroupArgs,
        /// Feature dimension of the random inputs.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        dim: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "pre", value_parser = parse_variant)]
        variant: Variant,
    },
    /// Decompose one DNA window under the mirror symmetry.
    DemoDna {
        sequence: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the per-irrep attention weight CSVs.
        #[arg(long, default_value = "psead-demo")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset as JSONL.
    Dataset {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single layer and write per-epoch metrics as JSONL.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Read windows from a dataset file instead of generating them.
        #[arg(long)]
        data_file: Option<PathBuf>,
        #[arg(long, default_value = "pre", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        batch_size: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write per-irrep attention mass (positives vs negatives of the
        /// validation split) as CSV.
        #[arg(long)]
        activation: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct GroupArgs {
    /// `cyclic:n`, `dihedral:n`, `symmetric:k` or `mirror:k`.
    #[arg(long)]
    group: Option<GroupDescriptor>,
    /// Group JSON file written by `group-info --out`.
    #[arg(long)]
    group_file: Option<PathBuf>,
}

impl GroupArgs {
    fn load(&self) -> Result<(String, FiniteGroup), CliError> {
        match (&self.group, &self.group_file) {
            (Some(d), _) => Ok((d.to_string(), d.build()?)),
            (None, Some(path)) => {
                let g = formats::read_group(&read(path)?)?;
                Ok((g.kind().to_string(), g))
            }
            (None, None) => Err(CliError::Usage(
                "one of --group or --group-file is required".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskName {
    Palindrome,
    Cyclic,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value_t = TaskName::Palindrome)]
    task: TaskName,
    /// Period of the cyclic task; defaults to the largest proper divisor of k.
    #[arg(long)]
    period: Option<usize>,
    /// Window length.
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Total windows, split 80/20 into train and validation.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Per-position resampling probability.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn task(&self) -> Result<Task, CliError> {
        match (self.task, self.period) {
            (TaskName::Palindrome, None) => Ok(Task::Palindrome),
            (TaskName::Palindrome, Some(_)) => Err(CliError::Usage(
                "--period only applies to the cyclic task".into(),
            )),
            (TaskName::Cyclic, Some(period)) => Ok(Task::Cyclic { period }),
            (TaskName::Cyclic, None) => {
                Task::default_cyclic(self.k).map_err(|e| CliError::Usage(e.to_string()))
            }
        }
    }

    fn spec(&self) -> Result<DatasetSpec, CliError> {
        let task = self.task()?;
        task.symmetry_group(self.k)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(CliError::Usage(format!(
                "--noise must lie in [0, 1], got {}",
                self.noise
            )));
        }
        Ok(DatasetSpec {
            task,
            n: self.samples,
            k: self.k,
            noise_p: self.noise,
            seed: self.seed,
            alphabet_size: DNA_ALPHABET.len(),
        })
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_name(s)
        .ok_or_else(|| format!("unknown variant '{s}' (expected baseline, pre or post)"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| CliError::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { say($out, format_args!($($arg)*)) };
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GroupInfo { group, out: file } => group_info(&group, file.as_deref(), out),
        Command::Projectors { group, out: file } => {
            let (name, g) = group.load()?;
            let ps = projector_set(&g)?;
            write(&file, &formats::write_projectors(&ps))?;
            say!(
                out,
                "group {name} window {} irreps {}",
                ps.window(),
                ps.len()
            )?;
            report_projectors(&ps, out)
        }
        Command::VerifyProjectors { file } => {
            let ps = formats::read_projectors(&read(&file)?)?;
            say!(
                out,
                "group {} window {} irreps {}",
                ps.group().kind(),
                ps.window(),
                ps.len()
            )?;
            report_projectors(&ps, out)
        }
        Command::Check {
            group,
            dim,
            trials,
            seed,
            variant,
        } => check(&group, dim as usize, trials as usize, seed, variant, out),
        Command::DemoDna {
            sequence,
            seed,
            out: dir,
        } => demo_dna(&sequence, seed, &dir, out),
        Command::Dataset { data, out: file } => {
            let dataset = make_dataset(&data.spec()?)?;
            write(&file, &formats::dataset_jsonl(&dataset))?;
            say!(
                out,
                "wrote {} train and {} validation windows",
                dataset.train.len(),
                dataset.validation.len()
            )
        }
        Command::Train {
            data,
            data_file,
            variant,
            epochs,
            lr,
            batch_size,
            out: file,
            activation,
        } => {
            let opts = TrainOptions {
                variant,
                epochs,
                lr,
                batch_size: batch_size as usize,
            };
            run_train(
                &data,
                data_file.as_deref(),
                &opts,
                &file,
                activation.as_deref(),
                out,
            )
        }
    }
}

fn group_info(args: &GroupArgs, file: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let (name, g) = args.load()?;
    say!(out, "group {name}")?;
    say!(out, "degree {}", g.degree())?;
    say!(out, "order {}", g.order())?;
    say!(out, "abelian {}", g.is_abelian())?;
    say!(out, "classes {}", g.classes().len())?;
    let sizes: Vec<String> = g.class_sizes().iter().map(|s| s.to_string()).collect();
    say!(out, "class sizes {}", sizes.join(" "))?;
    say!(out, "kernel {}", g.kernel().len())?;
    let axioms = g.check_axioms();
    say!(
        out,
        "axioms {}",
        if axioms.is_ok() { "ok" } else { "violated" }
    )?;
    let hom = verify_homomorphism(&g);
    say!(
        out,
        "homomorphism violations {} of {}",
        hom.violations.len(),
        hom.pairs_checked
    )?;
    if let Some(path) = file {
        write(path, &formats::write_group(&g))?;
    }
    if !axioms.is_ok() || !hom.violations.is_empty() {
        return Err(CliError::Failed("group checks failed".into()));
    }
    Ok(())
}

fn report_projectors(ps: &ProjectorSet, out: &mut dyn Write) -> Result<(), CliError> {
    for item in ps.items() {
        say!(
            out,
            "irrep {} dim {} multiplicity {}",
            item.irrep.label(),
            item.irrep.dim(),
            item.multiplicity
        )?;
    }
    let r = verify_projector_set(ps);
    say!(out, "idempotency deviation {:.3e}", r.idempotency)?;
    say!(out, "orthogonality deviation {:.3e}", r.orthogonality)?;
    say!(out, "completeness deviation {:.3e}", r.completeness)?;
    say!(out, "symmetry deviation {:.3e}", r.symmetry)?;
    say!(out, "commutation deviation {:.3e}", r.commutation)?;
    let worst = r.max_deviation();
    if worst > PROJECTOR_TOLERANCE {
        return Err(CliError::Failed(format!(
            "projector identities deviate by {worst:.3e} (tolerance {PROJECTOR_TOLERANCE:.0e})"
        )));
    }
    Ok(())
}

fn check(
    args: &GroupArgs,
    dim: usize,
    trials: usize,
    seed: u64,
    variant: Variant,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (name, g) = args.load()?;
    let ps = projector_set(&g)?;
    let mut init = Rng::derive(seed, 0);
    let layer = PseadLayer::new(variant, ps, dim, 1, &mut init)?;
    let mut inputs = Rng::derive(seed, 1);
    let r = equivariance_report(
        |x: &Matrix| layer.window_output(x),
        &g,
        dim,
        trials,
        &mut inputs,
    )?;
    say!(
        out,
        "group {name} variant {variant} dim {dim} evaluations {}",
        r.evaluations
    )?;
    say!(out, "max equivariance error {:.3e}", r.max)?;
    say!(out, "mean equivariance error {:.3e}", r.mean)?;
    if r.max < EQUIVARIANCE_TOLERANCE {
        say!(out, "PASS")
    } else {
        Err(CliError::Failed(format!(
            "max equivariance error {:.3e} exceeds {EQUIVARIANCE_TOLERANCE:.0e}",
            r.max
        )))
    }
}

fn demo_dna(sequence: &str, seed: u64, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let symbols = parse_dna(sequence).map_err(|e| CliError::Usage(e.to_string()))?;
    let g = FiniteGroup::mirror(symbols.len()).map_err(|e| CliError::Usage(e.to_string()))?;
    let x = encode_onehot(&symbols, DNA_ALPHABET.len())?;
    let ps = projector_set(&g)?;
    let layer = PseadLayer::new(Variant::Pre, ps, DNA_ALPHABET.len(), 1, &mut Rng::new(seed))?;
    let dec = layer.decompose(&x)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    say!(
        out,
        "sequence {sequence} window {} seed {seed}",
        symbols.len()
    )?;
    for c in &dec.channels {
        write(
            &dir.join(format!("weights_{}.csv", c.label)),
            &formats::matrix_csv(&c.weights),
        )?;
        say!(out, "channel {} norm {:.6e}", c.label, c.output.frobenius())?;
    }
    say!(out, "total norm {:.6e}", dec.total.frobenius())
}

struct TrainOptions {
    variant: Variant,
    epochs: usize,
    lr: f64,
    batch_size: usize,
}

fn run_train(
    args: &DataArgs,
    data_file: Option<&Path>,
    opts: &TrainOptions,
    file: &Path,
    activation: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(CliError::Usage(format!(
            "--lr must be finite and non-negative, got {}",
            opts.lr
        )));
    }
    if opts.epochs == 0 {
        return Err(CliError::Usage("--epochs must be at least 1".into()));
    }
    let data: Dataset = match data_file {
        Some(path) => formats::read_dataset(&read(path)?)?,
        None => make_dataset(&args.spec()?)?,
    };
    let Some(first) = data.train.first() else {
        return Err(CliError::Usage("training set is empty".into()));
    };
    let k = first.window();
    let task = args.task()?;
    let symmetry = task
        .symmetry_group(k)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut init = Rng::derive(args.seed, 7);
    let layer_ps = projector_set(&symmetry)?;
    let mut layer = PseadLayer::new(opts.variant, layer_ps, first.alphabet_size, 1, &mut init)?;
    let mut cfg = TrainConfig::new(opts.epochs, opts.lr, args.seed);
    cfg.batch_size = opts.batch_size;
    cfg.symmetry = Some(symmetry);
    let history = train(&mut layer, &data, &cfg)?;
    write(file, &formats::metrics_jsonl(&history))?;
    let last = history.last().expect("at least one epoch");
    let fmt_opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
    say!(
        out,
        "variant {} epochs {} train_loss {:.6} train_acc {:.6} val_loss {} val_acc {} equivariance_max {:.3e}",
        opts.variant,
        last.epoch,
        last.train_loss,
        last.train_acc,
        fmt_opt(last.val_loss),
        fmt_opt(last.val_acc),
        last.equivariance_max
    )?;
    if let Some(path) = activation {
        let pick = |label: u8| -> Vec<Matrix> {
            data.validation
                .iter()
                .filter(|w| w.label == label)
                .map(|w| w.features.clone())
                .collect()
        };
        let report = activation_mapping(&layer, &pick(1), &pick(0))?;
        write(path, &formats::activation_csv(&report))?;
    }
    Ok(())
}
