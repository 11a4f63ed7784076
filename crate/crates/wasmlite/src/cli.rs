//! The `wasmlite` command line.
//!
//! Results go to `out`, diagnostics and traces to `err`. When the exit code
//! is 2 or higher nothing is written to `out`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use wasmlite_core::alloc_corpus::{gen_alloc_script, load_allocator, run_script, AllocScript};
use wasmlite_core::harness::GenConfig;
use wasmlite_core::interp::{instantiate, ExecOptions, InvokeError, Outcome, Value, DEFAULT_CALL_DEPTH_LIMIT};
use wasmlite_core::syntax::{parse_i32_literal, parse_module, print_module, ModuleAst};
use wasmlite_core::validator::{validate_module, Features, Mutation, ValidatedModule};

use crate::fuzz_parallel;
use crate::script::{parse_script, print_script, render_alloc_report};

/// Process exit status. Each run outcome has its own code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    /// Also used for internal errors, fuzz assertion failures and allocator
    /// violations: a run that ended in a defined failure.
    Trap = 1,
    Validation = 2,
    Parse = 3,
    Exception = 4,
    Fuel = 5,
    Usage = 6,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn of(outcome: &Outcome) -> Exit {
        match outcome {
            Outcome::Returned(_) => Exit::Ok,
            Outcome::Trap(_) => Exit::Trap,
            Outcome::UncaughtException(_) => Exit::Exception,
            Outcome::FuelExhausted => Exit::Fuel,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wasmlite", version, about = "Parse, validate, run and fuzz wasmlite modules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a module in canonical form.
    Parse { file: PathBuf },
    /// Type-check a module.
    Validate {
        file: PathBuf,
        #[arg(long)]
        enable_exceptions: bool,
    },
    /// Invoke an exported function.
    Run {
        file: PathBuf,
        #[arg(long)]
        invoke: String,
        /// Decimal or 0x-hex 32-bit integers; negative values are stored
        /// two's complement.
        #[arg(long, num_args = 1.., allow_negative_numbers = true, value_parser = parse_arg)]
        args: Vec<i32>,
        /// Step budget; unlimited when absent.
        #[arg(long)]
        fuel: Option<u64>,
        #[arg(long, default_value_t = 16)]
        max_pages: u32,
        #[arg(long, default_value_t = DEFAULT_CALL_DEPTH_LIMIT)]
        call_depth: usize,
        #[arg(long)]
        enable_exceptions: bool,
        /// Print one line per step to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Generate, validate and run random well-typed modules.
    Fuzz {
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5_000)]
        fuel: u64,
        #[arg(long, default_value_t = 3)]
        max_funcs: usize,
        #[arg(long, default_value_t = 16)]
        max_body_len: usize,
        #[arg(long, default_value_t = 3)]
        max_block_depth: usize,
        #[arg(long, default_value_t = 3)]
        max_locals: usize,
        #[arg(long)]
        no_exceptions: bool,
        #[arg(long)]
        no_memory: bool,
        /// Validate with the branch-depth check switched off; the run should
        /// then report failures.
        #[arg(long)]
        skip_br_depth_check: bool,
        /// Also write the report as key=value lines.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Drive the bundled allocator with a script file or a generated script.
    Alloc {
        /// Script file; a script is generated from the options below when
        /// absent.
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000)]
        ops: usize,
        #[arg(long, default_value_t = 1)]
        min_size: u32,
        #[arg(long, default_value_t = 256)]
        max_size: u32,
        #[arg(long, default_value_t = 0.4)]
        free_prob: f64,
        #[arg(long, default_value_t = 16)]
        max_pages: u32,
        /// Print the script instead of running it.
        #[arg(long)]
        emit: bool,
    },
}

fn parse_arg(s: &str) -> Result<i32, String> {
    parse_i32_literal(s).ok_or_else(|| format!("`{s}` is not a 32-bit integer"))
}

/// Parses `args` and runs the command. Help and version requests exit 0;
/// other argument errors exit 6.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{}", e.render());
            Exit::Ok
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            Exit::Usage
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = match cli.command {
        Command::Parse { file } => cmd_parse(&file, out, err),
        Command::Validate { file, enable_exceptions } => cmd_validate(&file, enable_exceptions, out, err),
        Command::Run {
            file,
            invoke,
            args,
            fuel,
            max_pages,
            call_depth,
            enable_exceptions,
            trace,
        } => {
            let options = ExecOptions {
                fuel,
                call_depth_limit: call_depth,
                ..ExecOptions::default()
            };
            let req = RunRequest {
                file: &file,
                invoke: &invoke,
                args: &args,
                max_pages,
                options,
                features: Features {
                    exceptions: enable_exceptions,
                },
                trace,
            };
            cmd_run(&req, out, err)
        }
        Command::Fuzz {
            n,
            seed,
            fuel,
            max_funcs,
            max_body_len,
            max_block_depth,
            max_locals,
            no_exceptions,
            no_memory,
            skip_br_depth_check,
            report,
        } => {
            let cfg = GenConfig {
                seed,
                max_funcs,
                max_body_len,
                max_block_depth,
                max_locals,
                enable_exceptions: !no_exceptions,
                enable_memory: !no_memory,
                fuel,
            };
            let mutation = skip_br_depth_check.then_some(Mutation::SkipBrDepthCheck);
            cmd_fuzz(n, &cfg, mutation, report.as_deref(), out, err)
        }
        Command::Alloc {
            script,
            seed,
            ops,
            min_size,
            max_size,
            free_prob,
            max_pages,
            emit,
        } => {
            let source = match script {
                Some(path) => ScriptSource::File(path),
                None => ScriptSource::Generated {
                    seed,
                    ops,
                    min_size,
                    max_size,
                    free_prob,
                },
            };
            cmd_alloc(&source, max_pages, emit, out, err)
        }
    };
    // A failed write to `out` or `err` leaves nothing sensible to report.
    result.unwrap_or(Exit::Usage)
}

fn read(file: &Path, err: &mut dyn Write) -> io::Result<Option<String>> {
    match fs::read_to_string(file) {
        Ok(text) => Ok(Some(text)),
        Err(e) => {
            writeln!(err, "{}: {e}", file.display())?;
            Ok(None)
        }
    }
}

/// Reads and parses `file`; `Err` carries the exit code after the
/// diagnostic has been written.
fn load(file: &Path, err: &mut dyn Write) -> io::Result<Result<ModuleAst, Exit>> {
    let Some(text) = read(file, err)? else {
        return Ok(Err(Exit::Usage));
    };
    match parse_module(&text) {
        Ok(ast) => Ok(Ok(ast)),
        Err(e) => {
            for (pos, msg) in &e.diagnostics {
                writeln!(err, "{}:{pos}: parse error: {msg}", file.display())?;
            }
            Ok(Err(Exit::Parse))
        }
    }
}

fn check(file: &Path, ast: &ModuleAst, features: Features, err: &mut dyn Write) -> io::Result<Result<ValidatedModule, Exit>> {
    match validate_module(ast, features) {
        Ok(module) => Ok(Ok(module)),
        Err(errors) => {
            for e in &errors {
                writeln!(err, "{}:{e}", file.display())?;
            }
            Ok(Err(Exit::Validation))
        }
    }
}

pub fn cmd_parse(file: &Path, out: &mut dyn Write, err: &mut dyn Write) -> io::Result<Exit> {
    let ast = match load(file, err)? {
        Ok(ast) => ast,
        Err(code) => return Ok(code),
    };
    out.write_all(print_module(&ast).as_bytes())?;
    Ok(Exit::Ok)
}

pub fn cmd_validate(file: &Path, exceptions: bool, out: &mut dyn Write, err: &mut dyn Write) -> io::Result<Exit> {
    let ast = match load(file, err)? {
        Ok(ast) => ast,
        Err(code) => return Ok(code),
    };
    if let Err(code) = check(file, &ast, Features { exceptions }, err)? {
        return Ok(code);
    }
    writeln!(out, "OK")?;
    Ok(Exit::Ok)
}

pub struct RunRequest<'a> {
    pub file: &'a Path,
    pub invoke: &'a str,
    pub args: &'a [i32],
    pub max_pages: u32,
    pub options: ExecOptions,
    pub features: Features,
    pub trace: bool,
}

pub fn cmd_run(req: &RunRequest<'_>, out: &mut dyn Write, err: &mut dyn Write) -> io::Result<Exit> {
    let ast = match load(req.file, err)? {
        Ok(ast) => ast,
        Err(code) => return Ok(code),
    };
    let module = match check(req.file, &ast, req.features, err)? {
        Ok(module) => module,
        Err(code) => return Ok(code),
    };
    let mut inst = match instantiate(module, req.max_pages) {
        Ok(inst) => inst,
        Err(e) => {
            writeln!(err, "{e}")?;
            return Ok(Exit::Usage);
        }
    };
    let args: Vec<Value> = req.args.iter().copied().map(Value).collect();
    let result = if req.trace {
        let fuel = req.options.fuel.unwrap_or(u64::MAX);
        let mut write_failed = None;
        let result = inst.trace_each(req.invoke, &args, fuel, req.options, |record| {
            if write_failed.is_none() {
                if let Err(e) = writeln!(err, "{record}") {
                    write_failed = Some(e);
                }
            }
        });
        if let Some(e) = write_failed {
            return Err(e);
        }
        result
    } else {
        inst.invoke(req.invoke, &args, req.options)
    };
    let outcome = match result {
        Ok(outcome) => outcome,
        Err(e @ InvokeError::Internal(_)) => {
            writeln!(err, "{e}")?;
            return Ok(Exit::Trap);
        }
        Err(e) => {
            writeln!(err, "{e}")?;
            return Ok(Exit::Usage);
        }
    };
    let code = Exit::of(&outcome);
    if code.code() < 2 {
        writeln!(out, "{outcome}")?;
    } else {
        writeln!(err, "{outcome}")?;
    }
    Ok(code)
}

pub fn cmd_fuzz(
    n: u64,
    cfg: &GenConfig,
    mutation: Option<Mutation>,
    report_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> io::Result<Exit> {
    if n == 0 || !cfg.is_valid() {
        writeln!(err, "fuzz needs n >= 1, every maximum >= 1 and fuel >= 1")?;
        return Ok(Exit::Usage);
    }
    let report = fuzz_parallel(n, cfg, mutation);
    if let Some(path) = report_path {
        if let Err(e) = fs::write(path, report.to_key_values()) {
            writeln!(err, "{}: {e}", path.display())?;
            return Ok(Exit::Usage);
        }
    }
    write!(out, "{report}")?;
    Ok(if report.passed() { Exit::Ok } else { Exit::Trap })
}

pub enum ScriptSource {
    File(PathBuf),
    Generated {
        seed: u64,
        ops: usize,
        min_size: u32,
        max_size: u32,
        free_prob: f64,
    },
}

pub fn cmd_alloc(
    source: &ScriptSource,
    max_pages: u32,
    emit: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> io::Result<Exit> {
    let script: AllocScript = match source {
        ScriptSource::File(path) => {
            let Some(text) = read(path, err)? else {
                return Ok(Exit::Usage);
            };
            match parse_script(&text) {
                Ok(script) => script,
                Err(e) => {
                    writeln!(err, "{}:{e}", path.display())?;
                    return Ok(Exit::Parse);
                }
            }
        }
        &ScriptSource::Generated {
            seed,
            ops,
            min_size,
            max_size,
            free_prob,
        } => {
            if min_size > max_size || !(0.0..=1.0).contains(&free_prob) {
                writeln!(err, "need min-size <= max-size and 0 <= free-prob <= 1")?;
                return Ok(Exit::Usage);
            }
            gen_alloc_script(seed, ops, min_size..=max_size, free_prob)
        }
    };
    if let Err(e) = script.check() {
        writeln!(err, "{e}")?;
        return Ok(Exit::Validation);
    }
    if emit {
        out.write_all(print_script(&script).as_bytes())?;
        return Ok(Exit::Ok);
    }
    let mut inst = match load_allocator(max_pages) {
        Ok(inst) => inst,
        Err(e) => {
            writeln!(err, "{e}")?;
            return Ok(Exit::Usage);
        }
    };
    let report = run_script(&mut inst, &script);
    out.write_all(render_alloc_report(&script, &report).as_bytes())?;
    for (op, name) in &report.violations {
        writeln!(err, "op {op}: violated {name}")?;
    }
    Ok(if report.passed() { Exit::Ok } else { Exit::Trap })
}
