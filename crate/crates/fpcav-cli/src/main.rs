//! `fpcav`: spectra, fits, loss budgets, design maps and cavity-QED
//! projections for a near-confocal millimeter-wave Fabry-Perot cavity.
//!
//! Exit codes: 0 success, 2 input/parse error, 3 numerical failure.
//! Frequencies in files and flags are Hz; lengths meters; fields tesla.

mod commands;
mod io;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Numeric,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Parse,
            message: message.into(),
        }
    }
    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Numeric,
            message: message.into(),
        }
    }
}

impl From<fpcav::Error> for CliError {
    fn from(e: fpcav::Error) -> Self {
        match e {
            fpcav::Error::Invalid(_) => CliError::parse(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "fpcav", version, about = "Quasioptical Fabry-Perot cavity toolkit")]
struct Cli {
    /// JSON file whose top-level keys override unset command options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict the labelled mode spectrum inside a frequency window.
    Spectrum {
        /// Geometry JSON file.
        #[arg(long)]
        geometry: PathBuf,
        /// Window start, Hz.
        #[arg(long)]
        from: f64,
        /// Window end, Hz.
        #[arg(long)]
        to: f64,
        /// Highest transverse order to include.
        #[arg(long, default_value_t = 8)]
        nmax: usize,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        output: OutputFormat,
    },
    /// Fit cavity geometry to assigned TEM00 frequencies.
    FitGeometry {
        /// Assignment CSV: freq_hz,q,pol,sigma_hz.
        #[arg(long)]
        assignments: PathBuf,
        /// Initial-guess geometry JSON.
        #[arg(long)]
        initial: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
    },
    /// Rational fit of an S21 sweep; reports the dominant resonance.
    FitS21 {
        /// Sweep CSV: freq_hz,re,im.
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long, default_value_t = 3)]
        poles: usize,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Scalar feedline insertion loss, dB.
        #[arg(long)]
        insertion_loss_db: Option<f64>,
        /// Frequency-tabulated insertion loss CSV: freq_hz,loss_db.
        #[arg(long)]
        thru_cal: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
    },
    /// Ensemble ringdown decay fit.
    FitRingdown {
        /// Ringdown CSV: shot_id,time_s,re,im.
        #[arg(long)]
        shots: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
    },
    /// Combine superconductor and diffraction loss channels.
    LossBudget {
        /// Built-in material preset name.
        #[arg(long, default_value = "niobium-film")]
        material: String,
        /// Material JSON file overriding the preset.
        #[arg(long)]
        material_file: Option<PathBuf>,
        /// Temperature, K.
        #[arg(long, short = 'T')]
        t: Option<f64>,
        /// Mode frequency, Hz.
        #[arg(long, short = 'f')]
        f: Option<f64>,
        /// Trapped perpendicular field, tesla.
        #[arg(long, short = 'B')]
        b: Option<f64>,
        /// RMS surface roughness, m.
        #[arg(long)]
        h: Option<f64>,
        /// Geometry JSON (with mirror_radius) to add the clipping channel.
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
    },
    /// Numerical-aperture design map over (L/zR, zR/lambda).
    DesignMap {
        #[arg(long, default_value_t = 0.2)]
        lzr_min: f64,
        #[arg(long, default_value_t = 4.0)]
        lzr_max: f64,
        #[arg(long, default_value_t = 200)]
        lzr_steps: usize,
        #[arg(long, default_value_t = 1.0)]
        zrl_min: f64,
        #[arg(long, default_value_t = 40.0)]
        zrl_max: f64,
        #[arg(long, default_value_t = 200)]
        zrl_steps: usize,
        /// Clipping-finesse target used to size the mirrors.
        #[arg(long, default_value_t = 1e10)]
        fclip: f64,
        /// Design wavelength, m.
        #[arg(long, default_value_t = 3.26e-3)]
        wavelength: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        output: OutputFormat,
    },
    /// Atom-cavity figures of merit for a circular Rydberg transition.
    Cqed {
        /// Measured finesse.
        #[arg(long)]
        finesse: Option<f64>,
        /// Geometry JSON file.
        #[arg(long)]
        geometry: PathBuf,
        /// Upper principal quantum number of the circular transition.
        #[arg(long)]
        n: Option<u32>,
        /// |eps_a . eps_c|^2 polarization overlap.
        #[arg(long)]
        overlap_sq: Option<f64>,
        /// Branching ratio of the cavity-coupled decay channel.
        #[arg(long)]
        branching: Option<f64>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
    },
    /// Infidelity of the cavity-mediated iSWAP gate versus detuning.
    GateScan {
        /// Use the projected hardware rates 2pi x (22e3, 55, 13, 15) Hz.
        #[arg(long)]
        rates: Option<String>,
        /// Vacuum Rabi frequency, Hz.
        #[arg(long)]
        g_hz: Option<f64>,
        /// Cavity linewidth, Hz.
        #[arg(long)]
        kappa_hz: Option<f64>,
        /// Upper-state decay, Hz.
        #[arg(long)]
        gamma_up_hz: Option<f64>,
        /// Lower-state decay, Hz.
        #[arg(long)]
        gamma_down_hz: Option<f64>,
        /// `special` evaluates the exact-return points (Delta_m, t_m);
        /// `fixed` sweeps detuning at the dispersive gate time.
        #[arg(long, default_value = "special")]
        mode: String,
        #[arg(long, default_value_t = 2)]
        m_min: u32,
        #[arg(long, default_value_t = 25)]
        m_max: u32,
        /// Detuning sweep bounds in units of g (fixed mode).
        #[arg(long, default_value_t = 2.0)]
        delta_over_g_min: f64,
        #[arg(long, default_value_t = 12.0)]
        delta_over_g_max: f64,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        /// Drop the decay terms (unitary dynamics).
        #[arg(long)]
        unitary: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.config.as_deref().map(commands::load_config).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(e),
    };
    let result = match cli.command {
        Command::Spectrum {
            geometry,
            from,
            to,
            nmax,
            output,
        } => commands::spectrum(&geometry, from, to, nmax, output),
        Command::FitGeometry {
            assignments,
            initial,
            output,
        } => commands::fit_geometry(&assignments, &initial, output),
        Command::FitS21 {
            sweep,
            poles,
            iterations,
            insertion_loss_db,
            thru_cal,
            output,
        } => commands::fit_s21(&sweep, poles, iterations, insertion_loss_db, thru_cal.as_deref(), output),
        Command::FitRingdown { shots, output } => commands::fit_ringdown(&shots, output),
        Command::LossBudget {
            material,
            material_file,
            t,
            f,
            b,
            h,
            geometry,
            output,
        } => commands::loss_budget(
            &material,
            material_file.as_deref(),
            t,
            f,
            b,
            h,
            geometry.as_deref(),
            &config,
            output,
        ),
        Command::DesignMap {
            lzr_min,
            lzr_max,
            lzr_steps,
            zrl_min,
            zrl_max,
            zrl_steps,
            fclip,
            wavelength,
            output,
        } => commands::design_map(
            lzr_min, lzr_max, lzr_steps, zrl_min, zrl_max, zrl_steps, fclip, wavelength, output,
        ),
        Command::Cqed {
            finesse,
            geometry,
            n,
            overlap_sq,
            branching,
            output,
        } => commands::cqed(&geometry, finesse, n, overlap_sq, branching, &config, output),
        Command::GateScan {
            rates,
            g_hz,
            kappa_hz,
            gamma_up_hz,
            gamma_down_hz,
            mode,
            m_min,
            m_max,
            delta_over_g_min,
            delta_over_g_max,
            steps,
            unitary,
        } => commands::gate_scan(commands::GateScanArgs {
            rates,
            g_hz,
            kappa_hz,
            gamma_up_hz,
            gamma_down_hz,
            mode,
            m_min,
            m_max,
            delta_over_g_min,
            delta_over_g_max,
            steps,
            unitary,
            config: config.clone(),
        }),
    };
    match result {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    let kind = match e.kind {
        ErrorKind::Parse => "parse",
        ErrorKind::Numeric => "numeric",
    };
    eprintln!(
        "{}",
        serde_json::json!({
            "schema_version": "1",
            "error": { "kind": kind, "message": e.message }
        })
    );
    match e.kind {
        ErrorKind::Parse => ExitCode::from(2),
        ErrorKind::Numeric => ExitCode::from(3),
    }
}
