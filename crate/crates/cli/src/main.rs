mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use pfista::experiment::{
    compare_steprules, prepare_spirit, run_recon, run_sweep, verify_bound_dense, BoundOutput, Dataset, ReconRequest,
    RunOutcome, SpiritSetup, StepChoice,
};
use pfista::io::{self, roles, ArrayHeader};
use pfista::mask::make_mask;
use pfista::par;
use pfista::spirit::{calibrate_kernels, calibration_residual, kernels_to_image_weights, spirit_bound, Ridge};
use pfista::{
    gen_phantom, Error, FrameSpec, MaskSpec, ModelKind, PhantomSpec, SamplingMask, SensitivitySet, SpiritKernelSet,
    StepRule,
};
use serde_json::{json, Value};

use args::{Cli, Command, DataArgs, MaskArgs, PhantomArgs, SolverArgs};

const VERSION: &str = env!("PFISTA_GIT_DESCRIBE");

/// Exit status 1 for usage and I/O problems, 2 for a divergence stop.
enum Failure {
    Usage(String),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { iteration, reason, .. } => Failure::Diverged(format!("iteration {iteration}: {reason}")),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    // clap exits with 2 on bad usage, which is reserved for divergence here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let jobs = cli.jobs;
    match par::with_jobs(jobs, move || dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Phantom { phantom, out } => cmd_phantom(&phantom, &out),
        Command::Mask {
            rows,
            cols,
            seed,
            mask,
            out,
        } => cmd_mask(rows, cols, seed, &mask, &out),
        Command::Calibrate { data, kernel_size, out } => cmd_calibrate(&data, kernel_size, &out),
        Command::Bound {
            data,
            kernel_size,
            lambda1,
            kernels,
            verify_dense,
            out,
        } => cmd_bound(&data, kernel_size, lambda1, kernels.as_deref(), verify_dense, out.as_deref()),
        Command::Recon {
            data,
            solver,
            kernels,
            out,
        } => cmd_recon(&data, &solver, kernels.as_deref(), &out),
        Command::Sweep { data, solver, gammas, out } => cmd_sweep(&data, &solver, &gammas, &out),
        Command::CompareSteprules { data, solver, out } => cmd_compare(&data, &solver, &out),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_file(path, &text)
}

fn phantom_spec(p: &PhantomArgs) -> PhantomSpec {
    PhantomSpec {
        kind: p.phantom,
        rows: p.rows,
        cols: p.cols,
        coils: p.coils,
        noise_std: p.noise,
        seed: p.seed,
    }
}

fn mask_spec(m: &MaskArgs, seed: u64) -> MaskSpec {
    MaskSpec {
        rate: m.rate,
        acs_lines: m.acs_lines,
        seed: m.mask_seed.unwrap_or(seed),
        density: m.density,
    }
}

fn load_mask(stem: &Path) -> Result<SamplingMask, Failure> {
    let grid = io::load_array(stem)?
        .into_image()
        .ok_or_else(|| Failure::Usage(format!("{}: mask must be a 2-D array", stem.display())))?;
    Ok(SamplingMask::from_grid(&grid)?)
}

fn load_dataset(d: &DataArgs) -> Result<(Dataset, Value), Failure> {
    let Some(kspace) = &d.kspace else {
        if d.mask.is_some() || d.maps.is_some() || d.truth.is_some() {
            return Err(Failure::Usage("--mask, --maps and --truth need --kspace".into()));
        }
        let ps = phantom_spec(&d.phantom);
        let ms = mask_spec(&d.mask_spec, ps.seed);
        let data = Dataset::synthetic(&ps, &ms)?;
        return Ok((data, json!({ "source": "synthetic", "phantom": ps, "mask": ms })));
    };
    let mask_path = d
        .mask
        .as_ref()
        .ok_or_else(|| Failure::Usage("--kspace needs --mask".into()))?;
    let y = io::load_array(kspace)?
        .into_kspace()
        .ok_or_else(|| Failure::Usage(format!("{}: k-space must be a 3-D array", kspace.display())))?;
    let mask = load_mask(mask_path)?;
    if mask.dims() != y.dims() {
        return Err(Failure::Usage(format!(
            "{}: mask is {:?} but k-space is {:?}",
            mask_path.display(),
            mask.dims(),
            y.dims()
        )));
    }
    // unsampled entries are ignored, whatever the file holds
    let y = pfista::mask::apply_undersample(&y, &mask)?;
    let maps = match &d.maps {
        Some(p) => {
            let stack = io::load_array(p)?
                .into_multicoil()
                .ok_or_else(|| Failure::Usage(format!("{}: maps must be a 3-D array", p.display())))?;
            Some(SensitivitySet::new(stack.into_coils())?.normalized())
        }
        None => None,
    };
    let truth = match &d.truth {
        Some(p) => Some(
            io::load_array(p)?
                .into_image()
                .ok_or_else(|| Failure::Usage(format!("{}: truth must be a 2-D array", p.display())))?,
        ),
        None => None,
    };
    let desc = json!({
        "source": "files",
        "kspace": kspace,
        "mask": mask_path,
        "maps": d.maps,
        "truth": d.truth,
    });
    Ok((Dataset { truth, maps, mask, y }, desc))
}

fn load_kernels(stem: &Path) -> Result<SpiritKernelSet, Failure> {
    let (header, data) = io::load_raw(stem)?;
    match header.dims.as_slice() {
        &[a, b, k, k2] if a == b && k == k2 => Ok(SpiritKernelSet::from_flat(a, k, &data)?),
        dims => Err(Failure::Usage(format!(
            "{}: kernels must have dims [J, J, k, k], got {dims:?}",
            stem.display()
        ))),
    }
}

fn setup_from_kernels(kernels: SpiritKernelSet, data: &Dataset, lambda1: f64) -> Result<SpiritSetup, Failure> {
    let (rows, cols) = data.dims();
    if kernels.num_coils() != data.y.num_coils() {
        return Err(Failure::Usage(format!(
            "kernels are for {} coils, data has {}",
            kernels.num_coils(),
            data.y.num_coils()
        )));
    }
    let weights = kernels_to_image_weights(&kernels, rows, cols)?;
    let bound = spirit_bound(&weights, lambda1)?;
    Ok(SpiritSetup { kernels, weights, bound })
}

fn cmd_phantom(p: &PhantomArgs, out: &Path) -> CmdResult {
    create_dir(out)?;
    let spec = phantom_spec(p);
    let ph = gen_phantom(&spec)?;
    io::save_array(out.join("truth"), &ph.truth)?;
    io::save_array(out.join("coils"), &ph.coils)?;
    io::save_array(out.join("kspace"), &ph.kspace)?;
    io::save_array_with_role(out.join("maps"), &ph.maps.as_stack(), roles::SENSITIVITY)?;
    write_json(&out.join("metadata.json"), &json!({ "command": "phantom", "version": VERSION, "phantom": spec }))
}

fn cmd_mask(rows: usize, cols: usize, seed: u64, m: &MaskArgs, out: &Path) -> CmdResult {
    create_dir(out)?;
    let spec = mask_spec(m, seed);
    let mask = make_mask(&spec, rows, cols)?;
    io::save_array_with_role(out.join("mask"), &mask.to_grid(), roles::MASK)?;
    write_json(
        &out.join("metadata.json"),
        &json!({
            "command": "mask",
            "version": VERSION,
            "rows": rows,
            "cols": cols,
            "mask": spec,
            "selected_columns": mask.selected_columns(),
            "acs_band": { "start": mask.acs_band().start, "len": mask.acs_band().len },
        }),
    )
}

fn cmd_calibrate(d: &DataArgs, kernel_size: usize, out: &Path) -> CmdResult {
    let (data, desc) = load_dataset(d)?;
    create_dir(out)?;
    let band = data.mask.acs_band();
    let kernels = calibrate_kernels(&data.y, band, kernel_size, Ridge::default())?;
    let residual = calibration_residual(&data.y, band, &kernels);
    let (rows, cols) = data.dims();
    let weights = kernels_to_image_weights(&kernels, rows, cols)?;
    let j = kernels.num_coils();
    io::save_raw(
        out.join("kernels"),
        &ArrayHeader::new(vec![j, j, kernel_size, kernel_size], roles::SPIRIT_KERNELS),
        &kernels.to_flat(),
    )?;
    io::save_raw(
        out.join("weights"),
        &ArrayHeader::new(vec![j, j, rows, cols], roles::SPIRIT_WEIGHTS),
        &weights.to_flat(),
    )?;
    let meta = json!({
        "command": "calibrate",
        "version": VERSION,
        "data": desc,
        "kernel_size": kernel_size,
        "acs_band": { "start": band.start, "len": band.len },
        "calibration_residual": residual,
    });
    println!("calibration residual {residual:.6e}");
    write_json(&out.join("metadata.json"), &meta)
}

fn cmd_bound(
    d: &DataArgs,
    kernel_size: usize,
    lambda1: f64,
    kernels: Option<&Path>,
    verify_dense: bool,
    out: Option<&Path>,
) -> CmdResult {
    let (data, _) = load_dataset(d)?;
    let setup = match kernels {
        Some(p) => setup_from_kernels(load_kernels(p)?, &data, lambda1)?,
        None => prepare_spirit(&data, kernel_size, Ridge::default(), lambda1)?,
    };
    let mut report = BoundOutput {
        report: setup.bound.clone(),
        dense_lambda_max: None,
        slack: None,
    };
    if verify_dense {
        let (lmax, slack) = verify_bound_dense(&setup, &data.mask, lambda1)?;
        report.dense_lambda_max = Some(lmax);
        report.slack = Some(slack);
    }
    let value = serde_json::to_value(&report).expect("bound report serializes");
    println!("{}", serde_json::to_string_pretty(&value).expect("json values serialize"));
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("bound.json"), &value)?;
    }
    Ok(())
}

fn request(s: &SolverArgs) -> ReconRequest {
    let mut req = ReconRequest::new(s.model);
    if let Some(l) = s.lambda {
        req.lambda = l;
    }
    req.lambda1 = s.lambda1;
    req.bound = s.bound;
    req.max_iters = s.iters;
    req.rel_change_tol = s.tol;
    req.record_every = s.record_every;
    req.kernel_size = s.kernel_size;
    req.frame = FrameSpec {
        threshold_scaling_band: !s.keep_scaling_band,
        ..FrameSpec::new(s.frame, s.levels)
    };
    req.step = match (s.gamma, s.gamma_mult) {
        (Some(gamma), _) => StepChoice::Gamma { gamma },
        (None, Some(factor)) => StepChoice::Multiplier { factor },
        (None, None) => StepChoice::Rule(step_rule(s)),
    };
    req
}

fn step_rule(s: &SolverArgs) -> StepRule {
    StepRule {
        kind: s.step_rule,
        gamma_init: s.gamma_init,
        eta: s.eta,
        power_iters: s.power_iters,
        power_tol: s.power_tol,
    }
}

fn run_summary(r: &RunOutcome) -> Value {
    json!({
        "step": r.step,
        "bound": r.bound,
        "stop_reason": r.stop_reason,
        "diverged": r.diverged,
        "iterations": r.trace.last().map(|row| row.iter),
        "final_objective": r.final_objective(),
        "final_rlne": r.final_rlne(),
        "zero_filled_rlne": r.zero_filled_rlne,
        "final_gamma": r.final_gamma,
        "op_apps": r.trace.last().map(|row| row.op_apps),
    })
}

fn save_outcome(dir: &Path, r: &RunOutcome) -> CmdResult {
    create_dir(dir)?;
    write_file(&dir.join("trace.csv"), &r.trace.to_csv(true))?;
    if let Some(img) = &r.image {
        match r.request.model {
            ModelKind::Sense => io::save_array(dir.join("recon"), img.coil(0))?,
            ModelKind::Spirit => {
                io::save_array(dir.join("recon_coils"), img)?;
                let combined = pfista::ComplexImage::from_vec(
                    img.rows(),
                    img.cols(),
                    pfista::tensor::ssos(img).into_iter().map(|v| v.into()).collect(),
                )?;
                io::save_array(dir.join("recon"), &combined)?;
            }
        }
    }
    Ok(())
}

fn cmd_recon(d: &DataArgs, s: &SolverArgs, kernels: Option<&Path>, out: &Path) -> CmdResult {
    let (data, desc) = load_dataset(d)?;
    let req = request(s);
    let setup = match (req.model, kernels) {
        (ModelKind::Spirit, Some(p)) => Some(setup_from_kernels(load_kernels(p)?, &data, req.lambda1)?),
        (ModelKind::Spirit, None) => Some(prepare_spirit(&data, req.kernel_size, Ridge::default(), req.lambda1)?),
        (ModelKind::Sense, Some(_)) => return Err(Failure::Usage("--kernels only applies to --model spirit".into())),
        (ModelKind::Sense, None) => None,
    };
    let outcome = run_recon(&data, &req, setup.as_ref())?;
    save_outcome(out, &outcome)?;
    let meta = json!({
        "command": "recon",
        "version": VERSION,
        "data": desc,
        "request": req,
        "result": run_summary(&outcome),
    });
    write_json(&out.join("metadata.json"), &meta)?;
    println!(
        "{}: {} iterations, objective {:.6e}, rlne {}",
        if outcome.is_diverged() { "diverged" } else { "done" },
        outcome.trace.last().map(|r| r.iter).unwrap_or(0),
        outcome.final_objective(),
        outcome.final_rlne().map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into())
    );
    match outcome.diverged {
        Some(msg) => Err(Failure::Diverged(msg)),
        None => Ok(()),
    }
}

fn cmd_sweep(d: &DataArgs, s: &SolverArgs, gammas: &[f64], out: &Path) -> CmdResult {
    if s.gamma.is_some() || s.gamma_mult.is_some() {
        return Err(Failure::Usage("sweep takes --gammas multipliers, not --gamma or --gamma-mult".into()));
    }
    let (data, desc) = load_dataset(d)?;
    let req = request(s);
    let sweep = run_sweep(&data, &req, gammas, par::current_threads())?;
    create_dir(out)?;
    let mut runs = Vec::new();
    for (i, r) in sweep.runs.iter().enumerate() {
        let dir = run_dir(out, i, gammas[i]);
        save_outcome(&dir, r)?;
        runs.push(json!({ "dir": dir.file_name().map(|n| n.to_string_lossy().into_owned()), "gamma_mult": gammas[i], "result": run_summary(r) }));
    }
    write_file(&out.join("summary.csv"), &sweep.to_csv())?;
    let ordering = sweep.ordering_holds();
    let meta = json!({
        "command": "sweep",
        "version": VERSION,
        "data": desc,
        "request": req,
        "gammas": gammas,
        "target_objective": sweep.target,
        "ordering_holds": ordering,
        "runs": runs,
    });
    write_json(&out.join("metadata.json"), &meta)?;
    print!("{}", sweep.to_csv());
    println!("ordering {}", if ordering { "holds" } else { "violated" });
    Ok(())
}

fn run_dir(out: &Path, i: usize, mult: f64) -> PathBuf {
    out.join(format!("run_{i:02}_x{mult}"))
}

fn cmd_compare(d: &DataArgs, s: &SolverArgs, out: &Path) -> CmdResult {
    if s.gamma.is_some() || s.gamma_mult.is_some() {
        return Err(Failure::Usage("compare-steprules runs every rule; drop --gamma and --gamma-mult".into()));
    }
    let (data, desc) = load_dataset(d)?;
    let req = request(s);
    let cmp = compare_steprules(&data, &req, step_rule(s))?;
    create_dir(out)?;
    write_file(&out.join("steprules.csv"), &cmp.to_csv())?;
    let meta = json!({
        "command": "compare-steprules",
        "version": VERSION,
        "data": desc,
        "request": req,
        "target_objective": cmp.target,
        "rows": cmp.rows,
    });
    write_json(&out.join("metadata.json"), &meta)?;
    print!("{}", cmp.to_csv());
    Ok(())
}
