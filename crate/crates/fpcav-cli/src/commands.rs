//! Command implementations. Each returns the stdout payload; primary
//! outputs are byte-reproducible for identical inputs.

use crate::io;
use crate::{CliError, OutputFormat};
use fpcav::constants::TAU;
use fpcav::core::{derive_gaussian_params, free_spectral_range, MaterialProps};
use fpcav::{cqed as cq, design, geomfit, loss, measurement, spectrum};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

pub type Config = serde_json::Map<String, serde_json::Value>;

pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    value
        .as_object()
        .cloned()
        .ok_or_else(|| CliError::parse(format!("{}: config must be a JSON object", path.display())))
}

/// Explicit flag > config key > built-in default.
fn resolve(flag: Option<f64>, config: &Config, key: &str, default: Option<f64>) -> Result<f64, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(v) = config.get(key) {
        return v
            .as_f64()
            .ok_or_else(|| CliError::parse(format!("config key `{key}` must be a number")));
    }
    default.ok_or_else(|| CliError::parse(format!("missing required option `{key}`")))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::numeric(format!("serialization: {e}")))
}

#[derive(Serialize)]
struct SpectrumRow {
    freq_hz: f64,
    q: i64,
    n: u32,
    l: i32,
    p: u32,
    pol: String,
    dominant_fraction: f64,
}

pub fn spectrum(
    geometry: &Path,
    from: f64,
    to: f64,
    nmax: usize,
    output: OutputFormat,
) -> Result<String, CliError> {
    let geom = io::read_geometry(geometry)?;
    let lines = spectrum::predict_spectrum(&geom, from, to, nmax).map_err(CliError::from)?;
    let rows: Vec<SpectrumRow> = lines
        .iter()
        .map(|line| {
            let (label, frac) = line
                .composition
                .first()
                .map(|(l, w)| (*l, *w))
                .expect("every line carries a composition");
            SpectrumRow {
                freq_hz: line.frequency_hz,
                q: label.q,
                n: label.transverse_n,
                l: label.angular_l,
                p: label.radial_p,
                pol: label.polarization.to_string(),
                dominant_fraction: frac,
            }
        })
        .collect();
    match output {
        OutputFormat::Csv => {
            let mut out = String::from("freq_hz,q,n,l,p,pol,dominant_fraction\n");
            for r in rows {
                writeln!(
                    out,
                    "{:.6},{},{},{},{},{},{:.9}",
                    r.freq_hz, r.q, r.n, r.l, r.p, r.pol, r.dominant_fraction
                )
                .unwrap();
            }
            Ok(out)
        }
        OutputFormat::Json => to_json(&serde_json::json!({
            "schema_version": "1",
            "modes": rows,
        })),
    }
}

#[derive(Serialize)]
struct GeometryFitOut {
    schema_version: String,
    length_m: f64,
    mean_curvature_m: f64,
    astigmatism: f64,
    aspheric: f64,
    gbar: f64,
    length_sigma_m: f64,
    mean_curvature_sigma_m: f64,
    astigmatism_sigma: f64,
    aspheric_sigma: f64,
    residual_rms_hz: f64,
}

pub fn fit_geometry(assignments: &Path, initial: &Path, output: OutputFormat) -> Result<String, CliError> {
    let a = io::read_assignments(assignments)?;
    let init = io::read_geometry(initial)?;
    let fit = geomfit::fit_geometry(&a, &init).map_err(CliError::from)?;
    let out = GeometryFitOut {
        schema_version: "1".into(),
        length_m: fit.geometry.length,
        mean_curvature_m: fit.geometry.mean_curvature,
        astigmatism: fit.geometry.astigmatism,
        aspheric: fit.geometry.aspheric,
        gbar: fit.geometry.gbar(),
        length_sigma_m: fit.covariance[(0, 0)].max(0.0).sqrt(),
        mean_curvature_sigma_m: fit.covariance[(1, 1)].max(0.0).sqrt(),
        astigmatism_sigma: fit.covariance[(2, 2)].max(0.0).sqrt(),
        aspheric_sigma: fit.covariance[(3, 3)].max(0.0).sqrt(),
        residual_rms_hz: fit.residual_rms_hz,
    };
    match output {
        OutputFormat::Json => to_json(&out),
        OutputFormat::Csv => {
            let mut s = String::from(
                "length_m,mean_curvature_m,astigmatism,aspheric,gbar,residual_rms_hz\n",
            );
            writeln!(
                s,
                "{:.12e},{:.12e},{:.9e},{:.9e},{:.9e},{:.6e}",
                out.length_m, out.mean_curvature_m, out.astigmatism, out.aspheric, out.gbar, out.residual_rms_hz
            )
            .unwrap();
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct ResonanceOut {
    schema_version: String,
    omega0_hz: f64,
    kappa_hz: f64,
    sqrt_k1k2_hz: f64,
    omega0_sigma_hz: f64,
    kappa_sigma_hz: f64,
    sqrt_k1k2_sigma_hz: f64,
    q_circle_diameter: f64,
    insertion_loss_db: f64,
    finesse_vs_fsr_hz: Option<f64>,
    model_rms: f64,
}

pub fn fit_s21(
    sweep: &Path,
    poles: usize,
    iterations: usize,
    insertion_loss_db: Option<f64>,
    thru_cal: Option<&Path>,
    output: OutputFormat,
) -> Result<String, CliError> {
    let trace = io::read_sweep(sweep)?;
    let model = measurement::vector_fit(&trace, poles, iterations).map_err(CliError::from)?;
    let (params, refined) = measurement::refine_resonance(&model, &trace).map_err(CliError::from)?;
    let f_lo = trace.points.first().unwrap().0;
    let f_hi = trace.points.last().unwrap().0;
    let star = refined
        .dominant_pole_in(f_lo, f_hi)
        .ok_or_else(|| CliError::numeric("no resonance pole inside the sweep"))?;
    let il = match (insertion_loss_db, thru_cal) {
        (Some(db), None) => db,
        (None, Some(path)) => {
            let table = io::read_thru_cal(path)?;
            let f0 = params.omega0 / TAU;
            measurement::interpolate_insertion_loss(&table, f0).map_err(CliError::from)?
        }
        (None, None) => 0.0,
        (Some(_), Some(_)) => {
            return Err(CliError::parse(
                "give either --insertion-loss-db or --thru-cal, not both",
            ))
        }
    };
    let sqrt_k1k2 =
        measurement::extract_probe_coupling(&params, refined.residues[star], il).map_err(CliError::from)?;
    let out = ResonanceOut {
        schema_version: "1".into(),
        omega0_hz: params.omega0 / TAU,
        kappa_hz: params.kappa / TAU,
        sqrt_k1k2_hz: sqrt_k1k2 / TAU,
        omega0_sigma_hz: params.omega0_sigma / TAU,
        kappa_sigma_hz: params.kappa_sigma / TAU,
        sqrt_k1k2_sigma_hz: params.sqrt_k1k2_sigma / TAU * 10f64.powf(il / 20.0),
        q_circle_diameter: measurement::q_circle_diameter(sqrt_k1k2, params.kappa),
        insertion_loss_db: il,
        finesse_vs_fsr_hz: None,
        model_rms: refined.rms_error,
    };
    match output {
        OutputFormat::Json => to_json(&out),
        OutputFormat::Csv => {
            let mut s = String::from("omega0_hz,kappa_hz,sqrt_k1k2_hz,q_circle_diameter,model_rms\n");
            writeln!(
                s,
                "{:.6},{:.6e},{:.6e},{:.6e},{:.3e}",
                out.omega0_hz, out.kappa_hz, out.sqrt_k1k2_hz, out.q_circle_diameter, out.model_rms
            )
            .unwrap();
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct RingdownOut {
    schema_version: String,
    kappa_hz: f64,
    kappa_sigma_hz: f64,
    amplitude_sq: f64,
    noise_sq: f64,
    s_inf_re: f64,
    s_inf_im: f64,
    low_snr: bool,
}

pub fn fit_ringdown(shots: &Path, output: OutputFormat) -> Result<String, CliError> {
    let shots = io::read_ringdown_shots(shots)?;
    let fit = measurement::ringdown_fit_ensemble(&shots).map_err(CliError::from)?;
    let out = RingdownOut {
        schema_version: "1".into(),
        kappa_hz: fit.kappa / TAU,
        kappa_sigma_hz: fit.kappa_sigma / TAU,
        amplitude_sq: fit.amplitude_sq,
        noise_sq: fit.noise_sq,
        s_inf_re: fit.s_inf.re,
        s_inf_im: fit.s_inf.im,
        low_snr: fit.low_snr,
    };
    match output {
        OutputFormat::Json => to_json(&out),
        OutputFormat::Csv => {
            let mut s = String::from("kappa_hz,kappa_sigma_hz,amplitude_sq,noise_sq,low_snr\n");
            writeln!(
                s,
                "{:.6e},{:.3e},{:.6e},{:.6e},{}",
                out.kappa_hz, out.kappa_sigma_hz, out.amplitude_sq, out.noise_sq, out.low_snr
            )
            .unwrap();
            Ok(s)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn loss_budget(
    material: &str,
    material_file: Option<&Path>,
    t: Option<f64>,
    f: Option<f64>,
    b: Option<f64>,
    h: Option<f64>,
    geometry: Option<&Path>,
    config: &Config,
    output: OutputFormat,
) -> Result<String, CliError> {
    let mat: MaterialProps = match material_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
            loss::material_from_json(&text).map_err(CliError::from)?
        }
        None => loss::material_preset(material)
            .ok_or_else(|| CliError::parse(format!("unknown material preset `{material}`")))?,
    };
    let t = resolve(t, config, "t", None)?;
    let f = resolve(f, config, "f", None)?;
    let b = resolve(b, config, "b", Some(0.0))?;
    let h = resolve(h, config, "h", Some(0.0))?;
    let omega = TAU * f;
    let k = omega / fpcav::constants::C;

    let mut channels: Vec<(String, f64)> = Vec::new();
    let r_bcs = loss::bcs_surface_resistance(&mat, t, omega).map_err(CliError::from)?;
    channels.push(("bcs".into(), loss::finesse_from_surface_resistance(r_bcs)));
    if b > 0.0 {
        let r_flux = loss::vortex_resistance_limit(&mat, b).map_err(CliError::from)?;
        channels.push(("flux".into(), loss::finesse_from_surface_resistance(r_flux)));
    }
    if h > 0.0 {
        channels.push(("roughness".into(), loss::roughness_finesse(k, h)));
    }
    if let Some(path) = geometry {
        let geom = io::read_geometry(path)?;
        let rm = geom.mirror_radius.ok_or_else(|| {
            CliError::parse(format!("{}: geometry needs mirror_radius for clipping", path.display()))
        })?;
        let w1 = derive_gaussian_params(&geom, f)
            .map_err(CliError::from)?
            .mirror_spot_w1;
        channels.push(("clipping".into(), loss::clipping_finesse(rm, w1)));
    }
    let budget = loss::combine_losses(&channels).map_err(CliError::from)?;

    match output {
        OutputFormat::Json => {
            let mut map = serde_json::Map::new();
            map.insert("schema_version".into(), "1".into());
            let mut ch = serde_json::Map::new();
            for (name, fin) in &budget.channels {
                ch.insert(name.clone(), serde_json::json!(fin));
            }
            map.insert("channels".into(), serde_json::Value::Object(ch));
            map.insert("total_finesse".into(), serde_json::json!(budget.total_finesse));
            to_json(&serde_json::Value::Object(map))
        }
        OutputFormat::Csv => {
            let mut s = String::from("channel,finesse\n");
            for (name, fin) in &budget.channels {
                writeln!(s, "{name},{fin:.6e}").unwrap();
            }
            writeln!(s, "total,{:.6e}", budget.total_finesse).unwrap();
            Ok(s)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn design_map(
    lzr_min: f64,
    lzr_max: f64,
    lzr_steps: usize,
    zrl_min: f64,
    zrl_max: f64,
    zrl_steps: usize,
    fclip: f64,
    wavelength: f64,
    output: OutputFormat,
) -> Result<String, CliError> {
    if lzr_steps < 2 || zrl_steps < 2 {
        return Err(CliError::parse("need at least 2 steps along each axis"));
    }
    if !(lzr_min > 0.0 && lzr_max > lzr_min && zrl_min > 0.0 && zrl_max > zrl_min) {
        return Err(CliError::parse("grid bounds must be positive and ordered"));
    }
    let xs: Vec<f64> = (0..lzr_steps)
        .map(|i| lzr_min + (lzr_max - lzr_min) * i as f64 / (lzr_steps - 1) as f64)
        .collect();
    // log-spaced divergence axis
    let ys: Vec<f64> = (0..zrl_steps)
        .map(|i| zrl_min * (zrl_max / zrl_min).powf(i as f64 / (zrl_steps - 1) as f64))
        .collect();
    let map = design::design_map(&xs, &ys, fclip, wavelength);
    match output {
        OutputFormat::Csv => {
            let mut s = String::from("L_over_zR,zR_over_lambda,na,length_over_lambda\n");
            for p in &map {
                if p.valid {
                    writeln!(
                        s,
                        "{:.9},{:.9},{:.9},{:.6}",
                        p.l_over_zr, p.zr_over_lambda, p.numerical_aperture, p.length_over_lambda
                    )
                    .unwrap();
                } else {
                    writeln!(s, "{:.9},{:.9},,{:.6}", p.l_over_zr, p.zr_over_lambda, p.length_over_lambda)
                        .unwrap();
                }
            }
            Ok(s)
        }
        OutputFormat::Json => to_json(&serde_json::json!({
            "schema_version": "1",
            "metadata": {
                "l_over_zr_grid": xs,
                "zr_over_lambda_grid": ys,
                "f_clip": fclip,
                "wavelength_m": wavelength,
            },
            "points": map,
        })),
    }
}

#[derive(Serialize)]
struct CqedOut {
    schema_version: String,
    n_upper: u32,
    frequency_hz: f64,
    wavelength_m: f64,
    dipole_ea0: f64,
    asymptotic_dipole_ea0: f64,
    mode_volume_m3: f64,
    rayleigh_range_m: f64,
    e_rms_v_per_m: f64,
    g_hz: f64,
    kappa_hz: f64,
    gamma_hz: f64,
    eta_geometric: f64,
    eta_rate_form: f64,
    overlap_sq: f64,
    branching_ratio: f64,
    finesse: f64,
}

pub fn cqed(
    geometry: &Path,
    finesse: Option<f64>,
    n: Option<u32>,
    overlap_sq: Option<f64>,
    branching: Option<f64>,
    config: &Config,
    output: OutputFormat,
) -> Result<String, CliError> {
    let geom = io::read_geometry(geometry)?;
    let finesse = resolve(finesse, config, "finesse", None)?;
    let n = match (n, config.get("n")) {
        (Some(v), _) => v,
        (None, Some(v)) => v
            .as_u64()
            .ok_or_else(|| CliError::parse("config key `n` must be an integer"))? as u32,
        (None, None) => return Err(CliError::parse("missing required option `n`")),
    };
    let overlap_sq = resolve(overlap_sq, config, "overlap_sq", Some(0.5))?;
    let branching = resolve(branching, config, "branching", Some(1.0))?;

    let tr = cq::rydberg_circular_transition(n).map_err(CliError::from)?;
    let f_hz = tr.params.frequency_hz;
    let params = derive_gaussian_params(&geom, f_hz).map_err(CliError::from)?;
    let v = params.mode_volume(geom.length);
    let g = cq::vacuum_rabi(tr.params.dipole, f_hz, v, overlap_sq);
    let kappa = TAU * free_spectral_range(geom.length) / finesse;
    let gamma = cq::spontaneous_rate(tr.params.dipole, f_hz);
    let lambda = fpcav::constants::C / f_hz;
    let eta = cq::cooperativity(finesse, lambda, params.rayleigh_zr, overlap_sq, branching);
    let out = CqedOut {
        schema_version: "1".into(),
        n_upper: n,
        frequency_hz: f_hz,
        wavelength_m: lambda,
        dipole_ea0: tr.params.dipole / (fpcav::constants::E_CHARGE * fpcav::constants::A_0),
        asymptotic_dipole_ea0: tr.asymptotic_dipole / (fpcav::constants::E_CHARGE * fpcav::constants::A_0),
        mode_volume_m3: v,
        rayleigh_range_m: params.rayleigh_zr,
        e_rms_v_per_m: cq::vacuum_field_rms(f_hz, v),
        g_hz: g / TAU,
        kappa_hz: kappa / TAU,
        gamma_hz: gamma / TAU,
        eta_geometric: eta,
        // the total decay of the upper state is the coupled-channel rate
        // divided by its branching ratio
        eta_rate_form: cq::cooperativity_from_rates(g, kappa, gamma / branching),
        overlap_sq,
        branching_ratio: branching,
        finesse,
    };
    match output {
        OutputFormat::Json => to_json(&out),
        OutputFormat::Csv => {
            let mut s = String::from("g_hz,kappa_hz,gamma_hz,eta\n");
            writeln!(s, "{:.6e},{:.6e},{:.6e},{:.6e}", out.g_hz, out.kappa_hz, out.gamma_hz, out.eta_geometric)
                .unwrap();
            Ok(s)
        }
    }
}

pub struct GateScanArgs {
    pub rates: Option<String>,
    pub g_hz: Option<f64>,
    pub kappa_hz: Option<f64>,
    pub gamma_up_hz: Option<f64>,
    pub gamma_down_hz: Option<f64>,
    pub mode: String,
    pub m_min: u32,
    pub m_max: u32,
    pub delta_over_g_min: f64,
    pub delta_over_g_max: f64,
    pub steps: usize,
    pub unitary: bool,
    pub config: Config,
}

pub fn gate_scan(args: GateScanArgs) -> Result<String, CliError> {
    let paper_defaults = match args.rates.as_deref() {
        Some("paper") => true,
        Some(other) => {
            return Err(CliError::parse(format!(
                "unknown rates preset `{other}` (only `paper` is built in)"
            )))
        }
        None => false,
    };
    let default = |v: f64| if paper_defaults { Some(v) } else { None };
    let g_hz = resolve(args.g_hz, &args.config, "g_hz", default(22e3))?;
    let kappa_hz = resolve(args.kappa_hz, &args.config, "kappa_hz", default(55.0))?;
    let gamma_up_hz = resolve(args.gamma_up_hz, &args.config, "gamma_up_hz", default(13.0))?;
    let gamma_down_hz = resolve(args.gamma_down_hz, &args.config, "gamma_down_hz", default(15.0))?;

    let base = cq::GateParams {
        g: TAU * g_hz,
        kappa: if args.unitary { 0.0 } else { TAU * kappa_hz },
        gamma_up: if args.unitary { 0.0 } else { TAU * gamma_up_hz },
        gamma_down: if args.unitary { 0.0 } else { TAU * gamma_down_hz },
        detuning: 0.0,
        duration: 1.0,
        photon_truncation: 2,
    };
    let (mode, points) = match args.mode.as_str() {
        "special" => {
            if args.m_min < 2 || args.m_max < args.m_min {
                return Err(CliError::parse("need 2 <= m_min <= m_max"));
            }
            let ms: Vec<f64> = (args.m_min..=args.m_max).map(|m| m as f64).collect();
            (
                cq::ScanMode::SpecialM,
                cq::scan_iswap(&base, &ms, cq::ScanMode::SpecialM).map_err(CliError::from)?,
            )
        }
        "fixed" => {
            if args.steps < 2 {
                return Err(CliError::parse("need at least 2 steps"));
            }
            let deltas: Vec<f64> = (0..args.steps)
                .map(|i| {
                    base.g
                        * (args.delta_over_g_min
                            + (args.delta_over_g_max - args.delta_over_g_min) * i as f64
                                / (args.steps - 1) as f64)
                })
                .collect();
            (
                cq::ScanMode::FixedTauG,
                cq::scan_iswap(&base, &deltas, cq::ScanMode::FixedTauG).map_err(CliError::from)?,
            )
        }
        other => return Err(CliError::parse(format!("unknown mode `{other}`"))),
    };
    let mode_name = match mode {
        cq::ScanMode::SpecialM => "special_m",
        cq::ScanMode::FixedTauG => "fixed_tau_g",
    };
    let mut s = String::from("delta_over_g,infidelity,mode\n");
    for (delta, infidelity) in points {
        writeln!(s, "{:.9},{:.9e},{}", delta / base.g, infidelity, mode_name).unwrap();
    }
    Ok(s)
}
