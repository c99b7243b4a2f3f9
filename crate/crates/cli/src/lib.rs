//! Configuration-driven front end: runs pipeline stages and writes JSON/CSV artifacts.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use shearwave::dispersion::{
    calibrate_sigma, dispersion_residual, dispersion_scan, find_kernel_set, kernel_cutoff_radius, DispersionError, ResonantSet,
};
use shearwave::fields::{assemble_kernel, trivial_state, FieldSetup, FieldsError, KernelFields};
use shearwave::obstruction::{averaged_bilinears, mode_data, solvability_average, theorem_verdict, ObstructionError};
use shearwave::profiles::{validate_profile, LatticeSpec, ProfileError, ShearProfile, WaveParams};
use shearwave::residuals::{linear_residual, nonlinear_residual, order_scaling_probe, ResidualError, ResidualReport};
use shearwave::riccati::{RiccatiError, RiccatiSolver};
use shearwave::spectral::Grid3D;
use shearwave::vertical::VerticalGrid;

pub use config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Obstruction(#[from] ObstructionError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io { .. } => "io",
            Self::Profile(_) => "profile",
            Self::Riccati(_) => "riccati",
            Self::Dispersion(_) => "dispersion",
            Self::Fields(_) => "fields",
            Self::Residual(_) => "residuals",
            Self::Obstruction(_) => "obstruction",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable error document.
    pub fn record(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            Self::Config { path, .. } => err["path"] = json!(path),
            Self::Io { path, .. } => err["path"] = json!(path.display().to_string()),
            _ => {}
        }
        json!({ "schema_version": SCHEMA_VERSION, "error": err })
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    DispersionScan,
    Calibrate,
    Kernel,
    Verify,
    Probe,
    Obstruct,
    Report,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Self::DispersionScan,
        Self::Calibrate,
        Self::Kernel,
        Self::Verify,
        Self::Probe,
        Self::Obstruct,
        Self::Report,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DispersionScan => "dispersion-scan",
            Self::Calibrate => "calibrate",
            Self::Kernel => "kernel",
            Self::Verify => "verify",
            Self::Probe => "probe",
            Self::Obstruct => "obstruct",
            Self::Report => "report",
        }
    }
}

/// Resolved inputs shared by every subcommand.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub profile: ShearProfile,
    pub lattice: LatticeSpec,
    pub params: WaveParams,
    pub calibrated: Option<[i64; 2]>,
    pub solver: RiccatiSolver,
    pub vgrid: Arc<VerticalGrid>,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        let profile = cfg.profile.build()?;
        validate_profile(&profile, shearwave::profiles::SCAN_NODES)?.require_zero_free()?;
        let lattice = cfg.lattice()?;
        let solver = RiccatiSolver::new(cfg.tolerances.riccati);
        let (params, calibrated) = cfg
            .params
            .build(|target| Ok(calibrate_sigma(&profile, cfg.params.g, &lattice, target, &solver)?))?;
        let vgrid = Arc::new(cfg.vgrid(profile.depth()));
        Ok(Self {
            cfg,
            profile,
            lattice,
            params,
            calibrated,
            solver,
            vgrid,
            out,
        })
    }

    fn setup(&self) -> Result<FieldSetup, CliError> {
        Ok(FieldSetup::new(
            self.profile.clone(),
            self.params.clone(),
            self.lattice,
            self.vgrid.clone(),
        )?)
    }

    fn resonant(&self) -> Result<ResonantSet, CliError> {
        Ok(find_kernel_set(
            &self.profile,
            &self.params,
            &self.lattice,
            self.cfg.tolerances.membership,
            &self.solver,
            self.vgrid.nodes(),
        )?)
    }

    fn kernel(&self, resonant: &ResonantSet) -> Result<KernelFields, CliError> {
        Ok(assemble_kernel(&self.setup()?, resonant, &self.cfg.amplitudes, &self.solver)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))
    }

    fn write_csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<String, CliError> {
        self.ensure_out()?;
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(name.to_string())
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        self.ensure_out()?;
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("json serializes");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }

    fn envelope(&self, command: Command, result: Value) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": command.name(),
            "config_hash": self.cfg.hash(),
            "result": result,
        })
    }

    /// Runs one subcommand, writes `<command>.json` into the output directory and returns the document.
    pub fn run(&self, command: Command) -> Result<Value, CliError> {
        let result = match command {
            Command::DispersionScan => self.dispersion_scan()?,
            Command::Calibrate => self.calibrate()?,
            Command::Kernel => self.kernel_dump()?,
            Command::Verify => self.verify()?,
            Command::Probe => self.probe()?,
            Command::Obstruct => self.obstruct()?,
            Command::Report => self.report()?,
        };
        let doc = self.envelope(command, result);
        self.write_json(&format!("{}.json", command.name()), &doc)?;
        Ok(doc)
    }

    fn dispersion_scan(&self) -> Result<Value, CliError> {
        let radius = match self.cfg.scan.radius {
            Some(r) => r,
            None => kernel_cutoff_radius(&self.profile, &self.params, &self.lattice)?,
        };
        let rows = dispersion_scan(&self.profile, &self.params, &self.lattice, radius, &self.solver)?;
        #[derive(Serialize)]
        struct Row {
            i: i64,
            j: i64,
            k1: f64,
            k2: f64,
            k_norm: f64,
            q0: f64,
            rhs: f64,
            residual: f64,
        }
        let tol = self.cfg.tolerances.membership;
        let resonant: Vec<[i64; 2]> = rows.iter().filter(|r| r.residual.abs() <= tol).map(|r| [r.i, r.j]).collect();
        let file = self.write_csv(
            "dispersion_scan.csv",
            rows.iter().map(|r| Row {
                i: r.i,
                j: r.j,
                k1: r.k1,
                k2: r.k2,
                k_norm: r.k_norm,
                q0: r.q0,
                rhs: r.rhs,
                residual: r.residual,
            }),
        )?;
        Ok(json!({
            "radius": radius,
            "rows": rows.len(),
            "resonant": resonant,
            "sigma": self.params.sigma,
            "csv": file,
        }))
    }

    fn calibrate(&self) -> Result<Value, CliError> {
        let Some(target) = self.calibrated else {
            return Err(CliError::Config {
                path: "params.sigma".into(),
                message: "calibrate needs sigma = {\"calibrate\": [i, j]}".into(),
            });
        };
        let k = self.lattice.wavevector(target[0], target[1]);
        let residual = dispersion_residual(&self.profile, &self.params, k, &self.solver)?;
        Ok(json!({
            "target": target,
            "k": k,
            "sigma": self.params.sigma,
            "residual": residual,
        }))
    }

    fn kernel_dump(&self) -> Result<Value, CliError> {
        let resonant = self.resonant()?;
        let kernel = self.kernel(&resonant)?;
        let (n1, n2) = (self.cfg.grid.n1, self.cfg.grid.n2);
        let grids: Vec<(&str, Grid3D)> = vec![
            ("eta", kernel.eta.synthesize(n1, n2).map_err(FieldsError::from)?),
            ("wp", kernel.wp.synthesize(n1, n2).map_err(FieldsError::from)?),
            ("u1", kernel.u.component(0).synthesize(n1, n2).map_err(FieldsError::from)?),
            ("u2", kernel.u.component(1).synthesize(n1, n2).map_err(FieldsError::from)?),
            ("u3", kernel.u.component(2).synthesize(n1, n2).map_err(FieldsError::from)?),
        ];
        let mut fields = serde_json::Map::new();
        for (name, grid) in &grids {
            #[derive(Serialize)]
            struct Row {
                x1: f64,
                x2: f64,
                x3: f64,
                value: f64,
            }
            let file = self.write_csv(
                &format!("kernel_{name}.csv"),
                grid.rows().map(|[x1, x2, x3, value]| Row { x1, x2, x3, value }),
            )?;
            fields.insert(name.to_string(), json!({ "header": grid.header(), "csv": file }));
        }
        let linear = linear_residual(&kernel.to_state(), &self.setup()?)?;
        Ok(json!({
            "resonant": resonant_summary(&resonant),
            "fields": fields,
            "linear_residual": linear,
        }))
    }

    fn verify(&self) -> Result<Value, CliError> {
        let spec = &self.cfg.verify;
        let (a, j) = spec.modulation.map_or((0.0, 0), |m| (m.amplitude, m.j));
        let kappa2 = self.lattice.kappa2();
        let profile = &self.profile;
        let base = trivial_state(
            self.lattice,
            self.vgrid.clone(),
            |x2, x3| profile.value(x3) * (1.0 + a * (j as f64 * kappa2 * x2).cos()),
            self.cfg.grid.n2,
        )?;
        let has_amplitudes = self.cfg.amplitudes != Default::default();
        let mut linear: Option<ResidualReport> = None;
        let state = if has_amplitudes {
            let resonant = self.resonant()?;
            let kernel = self.kernel(&resonant)?;
            linear = Some(linear_residual(&kernel.to_state(), &self.setup()?)?);
            base.perturbed(spec.eps, &kernel.to_state())?
        } else {
            base
        };
        let report = nonlinear_residual(&state, &self.params, self.cfg.grid.n1, self.cfg.grid.n2)?;
        Ok(json!({
            "eps": spec.eps,
            "modulation": spec.modulation,
            "nonlinear": report,
            "nonlinear_max": report.max_norm(),
            "linear": linear,
        }))
    }

    fn probe(&self) -> Result<Value, CliError> {
        let resonant = self.resonant()?;
        let kernel = self.kernel(&resonant)?;
        let probe = order_scaling_probe(
            &self.setup()?,
            &kernel.to_state(),
            &self.cfg.probe.eps,
            self.cfg.grid.n1,
            self.cfg.grid.n2,
        )?;
        #[derive(Serialize)]
        struct Row {
            eps: f64,
            momentum_max: f64,
            divergence_max: f64,
            kinematic_top_max: f64,
            kinematic_bottom_max: f64,
            dynamic_max: f64,
        }
        let file = self.write_csv(
            "probe.csv",
            probe.rows.iter().map(|r| Row {
                eps: r.eps,
                momentum_max: r.report.momentum_max(),
                divergence_max: r.report.divergence.max,
                kinematic_top_max: r.report.kinematic_top.max,
                kinematic_bottom_max: r.report.kinematic_bottom.max,
                dynamic_max: r.report.dynamic.max,
            }),
        )?;
        Ok(json!({
            "slope": probe.slope,
            "exact": probe.exact,
            "csv": file,
            "rows": probe.rows,
        }))
    }

    fn obstruct(&self) -> Result<Value, CliError> {
        let resonant = self.resonant()?;
        let setup = self.setup()?;
        let verdict = theorem_verdict(&setup, &resonant, &self.cfg.amplitudes, &self.solver)?;
        let kernel = self.kernel(&resonant)?;
        let data = mode_data(&setup, &self.cfg.amplitudes, &self.solver)?;
        let (n1, n2) = (self.cfg.grid.n1, self.cfg.grid.n2);
        let bilinears = averaged_bilinears(&kernel.v, &data, &setup, n1, n2)?;
        let solv = solvability_average(&kernel.v, &data, &setup, n1, n2)?;
        #[derive(Serialize)]
        struct Row {
            x3: f64,
            f: f64,
            f_prime: f64,
            u_prime_f: f64,
        }
        let p = &verdict.profile;
        let file = self.write_csv(
            "obstruction_profile.csv",
            (0..p.nodes.len()).map(|l| Row {
                x3: p.nodes[l],
                f: p.f[l],
                f_prime: p.f_prime[l],
                u_prime_f: p.u_prime_f[l],
            }),
        )?;
        let contributions: Vec<Value> = p
            .contributions
            .iter()
            .map(|c| json!({ "index": c.index, "k": c.k, "a": c.a, "max_abs_f": c.max_abs }))
            .collect();
        Ok(json!({
            "classification": verdict.classification,
            "max_abs_u_prime": verdict.max_abs_u_prime,
            "max_abs_f": verdict.max_abs_f,
            "max_abs_u_prime_f": verdict.max_abs_u_prime_f,
            "ratio": verdict.ratio,
            "threshold": verdict.threshold,
            "threshold_met": verdict.threshold_met,
            "positivity_delta": p.positivity_delta,
            "contributions": contributions,
            "bilinears_max_difference": bilinears.max_difference,
            "solvability": {
                "max_abs_grid": solv.max_abs_grid,
                "max_abs_closed": solv.max_abs_closed,
                "relative_difference": solv.relative_difference,
            },
            "profile_csv": file,
        }))
    }

    fn report(&self) -> Result<Value, CliError> {
        let mut sections = serde_json::Map::new();
        let mut commands = vec![Command::DispersionScan];
        if self.calibrated.is_some() {
            commands.push(Command::Calibrate);
        }
        commands.extend([Command::Kernel, Command::Verify, Command::Probe, Command::Obstruct]);
        for c in commands {
            let doc = self.run(c)?;
            sections.insert(c.name().to_string(), doc["result"].clone());
        }
        Ok(json!({
            "config": self.cfg,
            "sections": sections,
        }))
    }
}

fn resonant_summary(set: &ResonantSet) -> Value {
    json!({
        "cutoff_radius": set.cutoff_radius,
        "membership_tol": set.membership_tol,
        "modes": set.modes.iter().map(|m| json!({
            "index": m.index,
            "k": m.k,
            "q_surface": m.q_surface,
            "residual": m.residual,
        })).collect::<Vec<_>>(),
    })
}
