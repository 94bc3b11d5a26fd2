//! Command-line front end: file-in/file-out wrappers around the planning,
//! stability, rendering, grounding, and simulation pipeline.
//!
//! Exit codes: 0 success, 1 domain failure (no feasible plan, invalid
//! plan, failed registration, ...), 2 usage or file problems. All output
//! is a pure function of the input files and flags.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use brickplan::executor::{monte_carlo, report_to_json, skill_model_from_json, ExecError, Policy};
use brickplan::grid::{structure_from_json, Structure};
use brickplan::grounding::{centroid_init, ecc_align, mask_to_gray, AlignmentResult, GroundingError};
use brickplan::img::{read_pgm_mask, write_pgm_ids, write_pgm_mask, write_ppm, Mask, RgbImage};
use brickplan::planner::{plan_from_json, plan_to_json, skills_from_json, Plan, PlanError};
use brickplan::render::{
    extract_masks, perturb_camera, render_scene, Camera, PerturbSpec, StepMasks,
};
use brickplan::stability::equilibrium_system;
use brickplan::{
    assess_stability, grounding, plan_assembly, validate_plan, Brick, ContactRef, PlannerConfig,
    StabilityParams, TaskEncoding, BASEPLATE,
};

/// Layers between a held brick and its destination in manual renders.
const HOVER_LAYERS: i32 = 2;

/// Print without panicking when the reader hangs up (e.g. `| head`).
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.write_all(b"\n");
}

#[derive(Parser)]
#[command(name = "brickplan", version, about = "Brick assembly planning, manuals, and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for a feasible assembly order for a design.
    Plan {
        #[arg(long)]
        design: PathBuf,
        /// JSON skill library: {"skills": [[0,0,1,0], [1,0,1,0], ...]}.
        #[arg(long)]
        skills: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a plan and check every step against all four criteria.
    Validate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve the static-equilibrium program and print the report.
    Stability {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Rasterize a design; writes <prefix>.rgb.ppm and <prefix>.id.pgm.
    Render {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// Build the situated manual image for one plan step (1-based).
    Manual {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        camera: PathBuf,
        /// Camera jitter applied to the synthetic observation.
        #[arg(long)]
        perturb: Option<PathBuf>,
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
        /// Registration quality below this fails the step.
        #[arg(long, default_value_t = 0.9)]
        rho_threshold: f64,
    },
    /// Monte-carlo execution of a plan under a stochastic skill model.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long = "skill-model")]
        skill_model: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        policy: PolicyArg,
        /// Start each trial with the first brick already placed.
        #[arg(long = "first-placed")]
        first_placed: bool,
        /// Run trials on a thread pool (same report bytes either way).
        #[arg(long)]
        parallel: bool,
        /// Also write the report JSON here (it always prints to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Register one mask image onto another and print the transform.
    Align {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        observed: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum PolicyArg {
    #[default]
    Abort,
    Skip,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Policy {
        match p {
            PolicyArg::Abort => Policy::Abort,
            PolicyArg::Skip => Policy::Skip,
        }
    }
}

struct Failure {
    code: u8,
    message: anyhow::Error,
}

fn domain(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, message: e.into() }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, message: e.into() }
}

/// Sort library errors into domain failures (the inputs are well-formed
/// but the task fails) versus usage problems (bad files or arguments).
fn classify(e: brickplan::Error) -> Failure {
    use brickplan::Error as E;
    let code = match &e {
        E::Grid(_) => 1,
        E::Plan(PlanError::BadConfig(_)) => 2,
        E::Plan(_) => 1,
        E::Grounding(GroundingError::DimensionMismatch) => 2,
        E::Grounding(_) => 1,
        E::Exec(ExecError::MissingSkill(_)) => 1,
        E::Exec(_) => 2,
        E::Image(_) | E::Json(_) | E::Io(_) => 2,
    };
    Failure { code, message: e.into() }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn load_design(path: &Path) -> Result<Structure, Failure> {
    structure_from_json(&read_file(path)?).map_err(classify)
}

fn load_camera(path: &Path) -> Result<Camera, Failure> {
    serde_json::from_str(&read_file(path)?)
        .with_context(|| format!("parsing camera file {}", path.display()))
        .map_err(usage)
}

/// Optional planner-config overlay; every field falls back to the
/// workspace defaults.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    skills: Option<Vec<TaskEncoding>>,
    cameras: Option<Vec<Camera>>,
    gripper_padding: Option<i32>,
    clearance_height: Option<i32>,
    stability: Option<StabilityParams>,
    max_states: Option<usize>,
    per_stud_rays: Option<bool>,
}

fn build_config(design: &Structure, path: Option<&Path>) -> Result<PlannerConfig, Failure> {
    let mut cfg = PlannerConfig::for_workspace(&design.workspace);
    let Some(path) = path else {
        return Ok(cfg);
    };
    let file: ConfigFile = serde_json::from_str(&read_file(path)?)
        .with_context(|| format!("parsing config file {}", path.display()))
        .map_err(usage)?;
    if let Some(v) = file.skills {
        cfg.skills = v;
    }
    if let Some(v) = file.cameras {
        cfg.cameras = v;
    }
    if let Some(v) = file.gripper_padding {
        cfg.gripper_padding = v;
    }
    if let Some(v) = file.clearance_height {
        cfg.clearance_height = v;
    }
    if let Some(v) = file.stability {
        cfg.stability = v;
    }
    if let Some(v) = file.max_states {
        cfg.max_states = v;
    }
    if let Some(v) = file.per_stud_rays {
        cfg.per_stud_rays = v;
    }
    Ok(cfg)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_ppm_file(path: &Path, img: &RgbImage) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_ppm(img, &mut buf).map_err(|e| usage(brickplan::Error::Image(e)))?;
    fs::write(path, buf)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn write_mask_file(path: &Path, mask: &Mask) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_pgm_mask(mask, &mut buf).map_err(|e| usage(brickplan::Error::Image(e)))?;
    fs::write(path, buf)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn format_alignment(r: &AlignmentResult) -> String {
    let p = r.h.params();
    format!(
        "h: [{:.6}, {:.6}, {:.6}; {:.6}, {:.6}, {:.6}]\nrho: {:.6}\niterations: {}\nconverged: {}\n",
        p[0], p[1], p[2], p[3], p[4], p[5], r.rho, r.iterations, r.converged
    )
}

fn cmd_plan(
    design: &Path,
    skills: &Path,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let design = load_design(design)?;
    let mut cfg = build_config(&design, config)?;
    cfg.skills = skills_from_json(&read_file(skills)?).map_err(classify)?;
    let plan = plan_assembly(&design, &cfg).map_err(|e| classify(e.into()))?;
    write_file(out, &plan_to_json(&plan))?;
    emit(&format!("plan: {} steps -> {}", plan.steps.len(), out.display()));
    Ok(())
}

fn cmd_validate(plan: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let plan = plan_from_json(&read_file(plan)?).map_err(classify)?;
    let cfg = build_config(&plan.design, config)?;
    validate_plan(&plan.design, &plan.steps, &cfg).map_err(domain)?;
    emit("valid");
    Ok(())
}

fn cmd_stability(design: &Path, params: Option<&Path>) -> Result<(), Failure> {
    let design = load_design(design)?;
    let params: StabilityParams = match params {
        None => StabilityParams::default(),
        Some(p) => serde_json::from_str(&read_file(p)?)
            .with_context(|| format!("parsing params file {}", p.display()))
            .map_err(usage)?,
    };
    let report = assess_stability(&design, &params);
    emit(&format!("stable: {}", report.stable));
    match report.utilization {
        Some(u) => emit(&format!("utilization: {u:.6}")),
        None => emit("utilization: n/a (no force balance exists)"),
    }
    if let Some(forces) = &report.forces {
        let system = equilibrium_system(&design, &params);
        emit(&format!("studs: {}", forces.len()));
        for (stud, force) in system.studs.iter().zip(forces) {
            let lower = match stud.lower {
                ContactRef::Baseplate => "baseplate".to_string(),
                ContactRef::Brick(i) => format!("brick {i}"),
            };
            emit(&format!(
                "stud ({}, {}) z={} {} -> brick {}: {:.6}",
                stud.cell.0, stud.cell.1, stud.interface_z, lower, stud.upper, force
            ));
        }
    }
    Ok(())
}

fn cmd_render(design: &Path, camera: &Path, out_prefix: &Path) -> Result<(), Failure> {
    let design = load_design(design)?;
    let camera = load_camera(camera)?;
    let out = render_scene(&design, &camera, None, None).map_err(usage)?;
    write_ppm_file(&with_suffix(out_prefix, ".rgb.ppm"), &out.rgb)?;
    let mut buf = Vec::new();
    write_pgm_ids(&out.id_buffer, &mut buf).map_err(|e| usage(brickplan::Error::Image(e)))?;
    let id_path = with_suffix(out_prefix, ".id.pgm");
    fs::write(&id_path, buf)
        .with_context(|| format!("writing {}", id_path.display()))
        .map_err(usage)?;
    emit(&format!("rendered {}x{} -> {}.{{rgb.ppm,id.pgm}}", out.rgb.w, out.rgb.h, out_prefix.display()));
    Ok(())
}

/// Rebuild the structure as of just before `step` (1-based) and return
/// it with the held target brick and the prefix index of the reference.
fn step_scene(plan: &Plan, step: usize) -> Result<(Structure, Brick, i64), Failure> {
    if step == 0 || step > plan.steps.len() {
        return Err(usage(anyhow::anyhow!(
            "step {} out of range 1..={}",
            step,
            plan.steps.len()
        )));
    }
    let mut prefix = Structure::new(plan.design.workspace, plan.design.types().to_vec())
        .map_err(|e| classify(e.into()))?;
    let mut placed_at: HashMap<usize, usize> = HashMap::new();
    for st in &plan.steps[..step - 1] {
        let brick = plan
            .design
            .brick(st.tgt_index)
            .ok_or_else(|| domain(anyhow::anyhow!("step target {} not in design", st.tgt_index)))?;
        let idx = prefix.add_brick(*brick).map_err(|e| classify(e.into()))?;
        placed_at.insert(st.tgt_index, idx);
    }
    let st = &plan.steps[step - 1];
    let designed = *plan
        .design
        .brick(st.tgt_index)
        .ok_or_else(|| domain(anyhow::anyhow!("step target {} not in design", st.tgt_index)))?;
    let ref_prefix: i64 = if st.ref_index == BASEPLATE {
        BASEPLATE
    } else {
        let idx = placed_at
            .get(&(st.ref_index as usize))
            .ok_or_else(|| domain(anyhow::anyhow!("reference {} not placed yet", st.ref_index)))?;
        *idx as i64
    };
    Ok((prefix, designed, ref_prefix))
}

fn cmd_manual(
    plan: &Path,
    step: usize,
    camera: &Path,
    perturb: Option<&Path>,
    out_prefix: &Path,
    rho_threshold: f64,
) -> Result<(), Failure> {
    let plan = plan_from_json(&read_file(plan)?).map_err(classify)?;
    let camera = load_camera(camera)?;
    let spec: PerturbSpec = match perturb {
        None => PerturbSpec::default(),
        Some(p) => serde_json::from_str(&read_file(p)?)
            .with_context(|| format!("parsing perturb file {}", p.display()))
            .map_err(usage)?,
    };

    let (prefix_structure, designed, ref_prefix) = step_scene(&plan, step)?;
    let mut held = designed;
    held.pos[2] += HOVER_LAYERS;
    let (w, d) = prefix_structure.footprint(&held);
    let top = (held.pos[2] + prefix_structure.brick_type(&held).height as i32) as f64;
    let grip = (
        [held.pos[0] as f64, held.pos[1] as f64, top],
        [(held.pos[0] + w) as f64, (held.pos[1] + d) as f64, top + 1.0],
    );

    let reference =
        render_scene(&prefix_structure, &camera, Some(&held), Some(grip)).map_err(usage)?;
    let ref_masks: StepMasks =
        extract_masks(&reference, prefix_structure.len(), ref_prefix).map_err(usage)?;

    let obs_cam = perturb_camera(&camera, &spec);
    let observation = render_scene(&prefix_structure, &obs_cam, None, None).map_err(usage)?;
    let obs_structure =
        extract_masks(&observation, prefix_structure.len(), BASEPLATE).map_err(usage)?.m_str;

    let manual = grounding::ground_step(&ref_masks, &observation.rgb, &obs_structure, rho_threshold)
        .map_err(|e| classify(e.into()))?;

    write_ppm_file(&with_suffix(out_prefix, ".manual.ppm"), &manual.image)?;
    write_mask_file(&with_suffix(out_prefix, ".mask_ref.pgm"), &manual.m_ref)?;
    write_mask_file(&with_suffix(out_prefix, ".mask_tgt.pgm"), &manual.m_tgt)?;
    write_mask_file(&with_suffix(out_prefix, ".mask_grip.pgm"), &manual.m_grip)?;
    write_file(&with_suffix(out_prefix, ".align.txt"), &format_alignment(&manual.alignment))?;
    emit(&format!(
        "manual for step {step}: rho {:.6} -> {}.{{manual.ppm,mask_*.pgm,align.txt}}",
        manual.alignment.rho,
        out_prefix.display()
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    plan: &Path,
    skill_model: &Path,
    trials: usize,
    seed: u64,
    policy: PolicyArg,
    first_placed: bool,
    parallel: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let plan = plan_from_json(&read_file(plan)?).map_err(classify)?;
    let model = skill_model_from_json(&read_file(skill_model)?).map_err(classify)?;
    let report = monte_carlo(&plan, &model, trials, policy.into(), first_placed, seed, parallel)
        .map_err(|e| classify(e.into()))?;
    let text = report_to_json(&report);
    if let Some(path) = out {
        write_file(path, &text)?;
    }
    emit(&text);
    Ok(())
}

fn cmd_align(template: &Path, observed: &Path) -> Result<(), Failure> {
    let load = |path: &Path| -> Result<Mask, Failure> {
        let bytes = fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        read_pgm_mask(&bytes[..]).map_err(|e| usage(brickplan::Error::Image(e)))
    };
    let template = load(template)?;
    let observed = load(observed)?;
    let init = centroid_init(&template, &observed).map_err(|e| classify(e.into()))?;
    let result = ecc_align(&mask_to_gray(&template), &mask_to_gray(&observed), &init)
        .map_err(|e| classify(e.into()))?;
    emit(format_alignment(&result).trim_end());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Plan { design, skills, config, out } => {
            cmd_plan(&design, &skills, config.as_deref(), &out)
        }
        Cmd::Validate { plan, config } => cmd_validate(&plan, config.as_deref()),
        Cmd::Stability { design, params } => cmd_stability(&design, params.as_deref()),
        Cmd::Render { design, camera, out_prefix } => cmd_render(&design, &camera, &out_prefix),
        Cmd::Manual { plan, step, camera, perturb, out_prefix, rho_threshold } => {
            cmd_manual(&plan, step, &camera, perturb.as_deref(), &out_prefix, rho_threshold)
        }
        Cmd::Simulate { plan, skill_model, trials, seed, policy, first_placed, parallel, out } => {
            cmd_simulate(
                &plan,
                &skill_model,
                trials,
                seed,
                policy,
                first_placed,
                parallel,
                out.as_deref(),
            )
        }
        Cmd::Align { template, observed } => cmd_align(&template, &observed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.message);
            ExitCode::from(f.code)
        }
    }
}
