//! Run configuration and the stages driven by the `fch` binary.
//!
//! Every stage writes plain-text artifacts into the output directory. Data
//! files carry no time stamps, so identical configurations reproduce
//! byte-identical outputs regardless of the worker count.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FchError, Result};
use crate::grid::HalfLineGrid;
use crate::normalform::{
    manifold_point, nf_integrate, Branch, IntegrateOptions, NormalFormParams, NormalFormState, Trajectory,
};
use crate::pearling::{classify, pearling_report, PearlingReport, Regime, REGIME_TOL};
use crate::potential::{validate_well, PotentialSpec, WellKind, WellReport};
use crate::profile1d::{
    first_order_seed, solve_bilayer_eps, solve_homoclinic, solve_u1, BilayerProfile, ProfileParams,
};
use crate::spectral1d::{build_operator, SpectralData};
use crate::tangential::{convolve_gk0, greens_csv, greens_params, xi_fourier, GreensParams, Inhomogeneity};
use crate::undulation2d::{
    build_undulation, field_tgrid, phi0_picard_refine, prepare_background, residual_F, residual_bare, scaling_csv,
    Physics, PicardReport, ScalingRow, UndulationField, UndulationOptions,
};

/// Largest admissible eps.
pub const EPS_MAX: f64 = 0.05;
/// delta = eps^q needs q above this.
pub const Q_MIN: f64 = 0.75;
/// t-resolution of the exported Green's function, finer than the field's.
pub const GREENS_POINTS_PER_PERIOD: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gamma: f64,
    pub eta1: f64,
    pub eta20: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            gamma: 1.0,
            eta1: 1.0,
            eta20: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaRule {
    Exponent { q: f64 },
    Explicit { value: f64 },
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Exponent { q: 1.0 }
    }
}

impl DeltaRule {
    pub fn delta(&self, eps: f64) -> f64 {
        match self {
            DeltaRule::Exponent { q } => eps.powf(*q),
            DeltaRule::Explicit { value } => *value,
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        match self {
            DeltaRule::Exponent { q } => Some(*q),
            DeltaRule::Explicit { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiConfig {
    BumpTransitional { half_width: f64, amplitude: f64 },
    DbumpLocalized { half_width: f64, amplitude: f64 },
    Tabulated { t0: f64, h: f64, xi_prime: Vec<f64> },
}

impl Default for XiConfig {
    fn default() -> Self {
        XiConfig::DbumpLocalized {
            half_width: 2.0,
            amplitude: 1.0,
        }
    }
}

impl XiConfig {
    pub fn build(&self) -> Result<Inhomogeneity> {
        match self {
            XiConfig::BumpTransitional { half_width, amplitude } => {
                Inhomogeneity::bump_transitional(*half_width, *amplitude)
            }
            XiConfig::DbumpLocalized { half_width, amplitude } => {
                Inhomogeneity::dbump_localized(*half_width, *amplitude)
            }
            XiConfig::Tabulated { t0, h, xi_prime } => Inhomogeneity::tabulated(*t0, *h, xi_prime.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Half-line radius R in r.
    pub radius: f64,
    pub n: usize,
    /// t half-length is kappa / B.
    pub kappa: f64,
    pub points_per_period: f64,
    pub hyperbolic_correction: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            radius: 12.0,
            n: 241,
            kappa: 14.0,
            points_per_period: 24.0,
            hyperbolic_correction: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PearlingConfig {
    /// eps values at which the pencil eigenvalues are tracked (0 allowed).
    pub track_eps: Vec<f64>,
}

impl Default for PearlingConfig {
    fn default() -> Self {
        PearlingConfig {
            track_eps: vec![0.0, 1e-3, 2e-3, 4e-3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub eps_ladder: Vec<f64>,
    /// Refine phi0 by fixed-point iteration in the `undulate` stage.
    pub picard: bool,
    pub picard_iters: usize,
    pub picard_tol: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            eps_ladder: vec![2e-2, 1e-2, 5e-3],
            picard: false,
            picard_iters: 12,
            picard_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalFormStart {
    Stable,
    Unstable,
    Zero,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormConfig {
    /// Taken from the pearling diagnostics when absent.
    pub alpha0: Option<f64>,
    pub omega1: f64,
    pub alpha2: f64,
    pub alpha7: f64,
    pub alpha8: f64,
    pub start: NormalFormStart,
    /// Manifold amplitude and phase for stable/unstable starts.
    pub amplitude: f64,
    pub phase: f64,
    /// [re C1, im C1, re C2, im C2] for a custom start.
    pub state: [f64; 4],
    /// Integration span in units of 1 / sqrt(-alpha0 eps), or absolute
    /// time when alpha0 >= 0. Manifold starts are hyperbolic, so round-off
    /// grows like exp(2 span) and long spans leave the manifold.
    pub span: f64,
    pub tol: f64,
    pub escape_radius: f64,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        NormalFormConfig {
            alpha0: None,
            omega1: 1.0,
            alpha2: 1.0,
            alpha7: 1.0,
            alpha8: 1.0,
            start: NormalFormStart::Stable,
            amplitude: 0.1,
            phase: 0.0,
            state: [0.1, 0.0, 0.0, 0.0],
            span: 10.0,
            tol: 1e-10,
            escape_radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep every stride-th t-row and r-column in field.csv.
    pub stride_t: usize,
    pub stride_r: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            stride_t: 4,
            stride_r: 2,
        }
    }
}

fn default_eps() -> Vec<f64> {
    vec![1e-2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub well: WellKind,
    #[serde(default)]
    pub physics: PhysicsConfig,
    /// The first entry drives the profile, greens and undulate stages.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub delta: DeltaRule,
    #[serde(default)]
    pub xi: XiConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub pearling: PearlingConfig,
    #[serde(default)]
    pub residual: ResidualConfig,
    #[serde(default)]
    pub normalform: NormalFormConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn config_err(msg: impl Into<String>) -> FchError {
    FchError::Config(msg.into())
}

fn check_eps_list(name: &str, list: &[f64], allow_zero: bool) -> Result<()> {
    if list.is_empty() {
        return Err(config_err(format!("{name} is empty")));
    }
    for e in list {
        let low_ok = if allow_zero { *e >= 0.0 } else { *e > 0.0 };
        if !(low_ok && *e <= EPS_MAX) {
            return Err(config_err(format!("{name} entry {e} outside (0, {EPS_MAX}]")));
        }
    }
    Ok(())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_eps_list("eps", &self.eps, false)?;
        check_eps_list("residual.eps_ladder", &self.residual.eps_ladder, false)?;
        check_eps_list("pearling.track_eps", &self.pearling.track_eps, true)?;
        match self.delta {
            DeltaRule::Exponent { q } if !(q > Q_MIN) => {
                return Err(config_err(format!("delta exponent q = {q} must exceed {Q_MIN}")))
            }
            DeltaRule::Explicit { value } if !(value >= 0.0) => {
                return Err(config_err(format!("explicit delta must be >= 0, got {value}")))
            }
            _ => {}
        }
        for (name, x) in [
            ("physics.gamma", self.physics.gamma),
            ("physics.eta1", self.physics.eta1),
            ("physics.eta20", self.physics.eta20),
        ] {
            if !x.is_finite() {
                return Err(config_err(format!("{name} is not finite")));
            }
        }
        let g = &self.grid;
        positive("grid.radius", g.radius)?;
        positive("grid.kappa", g.kappa)?;
        positive("grid.points_per_period", g.points_per_period)?;
        if g.n < 11 {
            return Err(config_err(format!("grid.n = {} too small", g.n)));
        }
        match &self.xi {
            XiConfig::BumpTransitional { half_width, .. } | XiConfig::DbumpLocalized { half_width, .. } => {
                positive("xi.half_width", *half_width)?
            }
            XiConfig::Tabulated { h, .. } => positive("xi.h", *h)?,
        }
        let nf = &self.normalform;
        positive("normalform.span", nf.span)?;
        positive("normalform.escape_radius", nf.escape_radius)?;
        if !(1e-12..=1e-6).contains(&nf.tol) {
            return Err(config_err(format!("normalform.tol = {} outside [1e-12, 1e-6]", nf.tol)));
        }
        if self.residual.picard_iters == 0 {
            return Err(config_err("residual.picard_iters must be positive"));
        }
        positive("residual.picard_tol", self.residual.picard_tol)?;
        if self.output.stride_t == 0 || self.output.stride_r == 0 {
            return Err(config_err("output strides must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration,
    /// excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_string(&c).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn physics(&self) -> Physics {
        Physics {
            gamma: self.physics.gamma,
            eta1: self.physics.eta1,
            eta20: self.physics.eta20,
        }
    }

    pub fn eta_d(&self) -> f64 {
        self.physics().eta_d0()
    }

    pub fn undulation_options(&self) -> UndulationOptions {
        UndulationOptions {
            kappa: self.grid.kappa,
            points_per_period: self.grid.points_per_period,
            hyperbolic: self.grid.hyperbolic_correction,
        }
    }
}

/// Parses a comma-separated eps list.
pub fn parse_eps_ladder(s: &str) -> Result<Vec<f64>> {
    let list = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| config_err(format!("eps ladder entry {x:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_eps_list("--eps-ladder", &list, false)?;
    Ok(list)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Well,
    Profile,
    Spectrum,
    Pearling,
    Greens,
    Undulate,
    Residual,
    NormalForm,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Well => "well",
            Stage::Profile => "profile",
            Stage::Spectrum => "spectrum",
            Stage::Pearling => "pearling",
            Stage::Greens => "greens",
            Stage::Undulate => "undulate",
            Stage::Residual => "residual",
            Stage::NormalForm => "normalform",
        }
    }
}

pub const PIPELINE: [Stage; 6] = [
    Stage::Profile,
    Stage::Spectrum,
    Stage::Pearling,
    Stage::Greens,
    Stage::Undulate,
    Stage::Residual,
];

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: FchError,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage.name(), self.error)
    }
}

#[derive(Serialize)]
struct SpectrumSummary {
    lambda0: f64,
    lambda2: f64,
    lambda1: f64,
    essential_edge: f64,
    even_condition: f64,
    even_eigenvalues: Vec<f64>,
}

#[derive(Serialize)]
struct GreensSummary<'a> {
    eps: f64,
    beta0: f64,
    params: &'a GreensParams,
    fourier: crate::tangential::FourierPair,
}

#[derive(Serialize)]
struct ResidualSummary<'a> {
    config_hash: &'a str,
    rows: &'a [ScalingRow],
}

#[derive(Serialize)]
struct NormalFormSummary {
    params: NormalFormParams,
    start: NormalFormStart,
    t_end: f64,
    points: usize,
    escaped: bool,
    k_drift: f64,
    h_drift: f64,
}

/// Shared state of one invocation; 1D data is computed once and reused by
/// later stages.
pub struct Session {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
    spec: Option<PotentialSpec>,
    base: Option<(BilayerProfile, SpectralData)>,
    pearling: Option<PearlingReport>,
}

impl Session {
    pub fn new(cfg: RunConfig, out: PathBuf, quiet: bool) -> Self {
        Session {
            cfg,
            out,
            quiet,
            spec: None,
            base: None,
            pearling: None,
        }
    }

    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| FchError::InvalidArgument(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    fn spec(&mut self) -> Result<PotentialSpec> {
        if self.spec.is_none() {
            self.spec = Some(PotentialSpec::from_kind(&self.cfg.well)?);
        }
        Ok(self.spec.clone().expect("set above"))
    }

    fn grid(&self) -> Result<HalfLineGrid> {
        HalfLineGrid::new(self.cfg.grid.radius, self.cfg.grid.n)
    }

    fn base(&mut self) -> Result<(BilayerProfile, SpectralData)> {
        if self.base.is_none() {
            let spec = self.spec()?;
            let u0 = solve_homoclinic(&spec, &self.grid()?)?;
            let spectral = build_operator(&u0, &spec)?;
            self.base = Some((u0, spectral));
        }
        Ok(self.base.clone().expect("set above"))
    }

    fn pearling(&mut self) -> Result<PearlingReport> {
        if self.pearling.is_none() {
            let spec = self.spec()?;
            let (u0, spectral) = self.base()?;
            let p = &self.cfg.physics;
            let report = pearling_report(
                &spec,
                &u0,
                &spectral,
                p.gamma,
                p.eta1,
                self.cfg.eta_d(),
                &self.cfg.pearling.track_eps,
            )?;
            self.pearling = Some(report);
        }
        Ok(self.pearling.clone().expect("set above"))
    }

    pub fn run(&mut self, stage: Stage) -> std::result::Result<(), StageError> {
        let r = match stage {
            Stage::Well => self.cmd_well().map(|_| ()),
            Stage::Profile => self.cmd_profile(),
            Stage::Spectrum => self.cmd_spectrum(),
            Stage::Pearling => self.cmd_pearling(),
            Stage::Greens => self.cmd_greens(),
            Stage::Undulate => self.cmd_undulate(),
            Stage::Residual => self.cmd_residual(),
            Stage::NormalForm => self.cmd_normalform(),
        };
        r.map_err(|error| StageError { stage, error })
    }

    pub fn pipeline(&mut self) -> std::result::Result<(), StageError> {
        for stage in PIPELINE {
            self.run(stage)?;
        }
        Ok(())
    }

    pub fn cmd_well(&mut self) -> Result<WellReport> {
        let spec = self.spec()?;
        let report = validate_well(&spec)?;
        if !report.w3_negative_on_interval {
            eprintln!("warning: W''' is not negative on (0, u_max); beta0 < 0 is not guaranteed");
        }
        self.write_json("well.json", &report)?;
        if !self.quiet {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
        }
        Ok(report)
    }

    pub fn cmd_profile(&mut self) -> Result<()> {
        let spec = self.spec()?;
        let (u0, spectral) = self.base()?;
        let p = self.cfg.physics.clone();
        let eta_d = self.cfg.eta_d();
        let u1 = solve_u1(&spectral, &spec, p.gamma, eta_d)?;
        let mut out = String::from("profile,eps,r,u,u_prime,residual\n");
        let mut append = |label: &str, eps: f64, prof: &BilayerProfile| {
            for line in prof.to_csv(&spec).lines().skip(1) {
                out.push_str(&format!("{label},{eps:e},{line}\n"));
            }
        };
        append("u0", 0.0, &u0);
        append("u1", 0.0, &u1);
        for &eps in &self.cfg.eps {
            let params = ProfileParams::new(eps, p.gamma, p.eta1, eta_d);
            let uh = solve_bilayer_eps(&spec, &u0.grid, params, &first_order_seed(&u0, &u1, params))?;
            append("uh", eps, &uh);
        }
        self.write("profiles.csv", &out)?;
        self.say(&format!(
            "profiles.csv: u0, u1 and u_h at {} eps values",
            self.cfg.eps.len()
        ));
        Ok(())
    }

    pub fn cmd_spectrum(&mut self) -> Result<()> {
        let (_, spectral) = self.base()?;
        self.write("spectrum.csv", &spectral.to_csv())?;
        let summary = SpectrumSummary {
            lambda0: spectral.lambda0,
            lambda2: spectral.lambda2,
            lambda1: spectral.lambda1_numeric,
            essential_edge: spectral.essential_edge,
            even_condition: spectral.even_condition(),
            even_eigenvalues: spectral.even_eigenvalues(6),
        };
        self.write_json("spectrum.json", &summary)?;
        self.say(&format!(
            "lambda0 = {:e}, lambda1 = {:e}",
            spectral.lambda0, spectral.lambda1_numeric
        ));
        Ok(())
    }

    pub fn cmd_pearling(&mut self) -> Result<()> {
        let report = self.pearling()?;
        self.write_json("pearling.json", &report)?;
        self.write("pearling_tracks.csv", &report.tracks_csv())?;
        self.say(&format!(
            "alpha0 = {:e} ({:?}), beta0 = {:e}, c1 = {:e}",
            report.alpha0, report.regime, report.beta0.direct, report.c1
        ));
        Ok(())
    }

    fn require_undulation(&mut self) -> Result<PearlingReport> {
        let report = self.pearling()?;
        if classify(report.alpha0, REGIME_TOL) != Regime::Undulation {
            return Err(FchError::Regime(format!(
                "alpha0 = {:e} is not negative ({} regime): the tangential operator has no decaying Green's function",
                report.alpha0, report.regime
            )));
        }
        Ok(report)
    }

    pub fn cmd_greens(&mut self) -> Result<()> {
        let report = self.require_undulation()?;
        let eps = self.cfg.eps[0];
        let xi = self.cfg.xi.build()?;
        let g = greens_params(eps, report.c1, report.alpha0)?;
        let fp = xi_fourier(&xi)?;
        let tgrid = field_tgrid(&g, self.cfg.grid.kappa, GREENS_POINTS_PER_PERIOD)?;
        let beta0 = report.beta0.direct;
        let gk0 = convolve_gk0(&g, beta0, &xi, &tgrid)?;
        self.write("greens.csv", &greens_csv(&g, &tgrid, &gk0, beta0, &fp))?;
        self.write_json(
            "greens.json",
            &GreensSummary {
                eps,
                beta0,
                params: &g,
                fourier: fp,
            },
        )?;
        self.say(&format!("A = {:e}, B = {:e}, |Xi1| = {:e}", g.a, g.b, fp.magnitude));
        Ok(())
    }

    /// Assembled field at the first eps (optionally Picard-refined).
    pub fn field(&mut self) -> Result<(UndulationField, Option<PicardReport>)> {
        self.require_undulation()?;
        let spec = self.spec()?;
        let eps = self.cfg.eps[0];
        let delta = self.cfg.delta.delta(eps);
        let xi = self.cfg.xi.build()?;
        let bg = prepare_background(&spec, self.cfg.physics(), eps, &self.grid()?)?;
        let mut field = build_undulation(
            &bg,
            &xi,
            delta,
            self.cfg.delta.exponent(),
            &self.cfg.undulation_options(),
        )?;
        field.meta.config_hash = Some(self.cfg.hash());
        let mut picard = None;
        if self.cfg.residual.picard {
            let (phi, rep) = phi0_picard_refine(
                &field,
                &spec,
                self.cfg.residual.picard_iters,
                self.cfg.residual.picard_tol,
            )?;
            field.phi0 = phi;
            field.meta.phi0_source = "picard".into();
            picard = Some(rep);
        }
        Ok((field, picard))
    }

    pub fn cmd_undulate(&mut self) -> Result<()> {
        let spec = self.spec()?;
        let (field, picard) = self.field()?;
        let bare = residual_bare(&field, &spec)?;
        let full = residual_F(&field, &spec)?;
        self.write(
            "field.csv",
            &field.to_csv(self.cfg.output.stride_t, self.cfg.output.stride_r),
        )?;
        #[derive(Serialize)]
        struct Meta<'a> {
            #[serde(flatten)]
            meta: &'a crate::undulation2d::FieldMeta,
            stride_t: usize,
            stride_r: usize,
            residual_bare: crate::undulation2d::ResidualReport,
            residual: crate::undulation2d::ResidualReport,
            picard: Option<PicardReport>,
        }
        self.write_json(
            "field.meta.json",
            &Meta {
                meta: &field.meta,
                stride_t: self.cfg.output.stride_t,
                stride_r: self.cfg.output.stride_r,
                residual_bare: bare,
                residual: full,
                picard,
            },
        )?;
        self.say(&format!(
            "field {} x {}: residual {:e} (bare {:e})",
            field.n_t(),
            field.n_r(),
            full.sup,
            bare.sup
        ));
        Ok(())
    }

    pub fn cmd_residual(&mut self) -> Result<()> {
        self.require_undulation()?;
        let spec = self.spec()?;
        let xi = self.cfg.xi.build()?;
        let mut ladder = self.cfg.residual.eps_ladder.clone();
        ladder.sort_by(|a, b| b.total_cmp(a));
        ladder.dedup();
        let rows = match self.cfg.delta {
            DeltaRule::Exponent { q } => crate::undulation2d::residual_scaling(
                &spec,
                self.cfg.physics(),
                &self.grid()?,
                &xi,
                &ladder,
                q,
                &self.cfg.undulation_options(),
            )?,
            DeltaRule::Explicit { value } => explicit_scaling(
                &spec,
                self.cfg.physics(),
                &self.grid()?,
                &xi,
                &ladder,
                value,
                &self.cfg.undulation_options(),
            )?,
        };
        self.write("residual_scaling.csv", &scaling_csv(&rows))?;
        let hash = self.cfg.hash();
        self.write_json(
            "residual_scaling.json",
            &ResidualSummary {
                config_hash: &hash,
                rows: &rows,
            },
        )?;
        for r in &rows {
            self.say(&format!(
                "eps {:e}: bare {:e}, ansatz {:e}, improvement {:.2}",
                r.eps, r.sup_bare, r.sup_ansatz, r.improvement
            ));
        }
        Ok(())
    }

    pub fn normalform_params(&mut self) -> Result<NormalFormParams> {
        let alpha0 = match self.cfg.normalform.alpha0 {
            Some(a) => a,
            None => self.pearling()?.alpha0,
        };
        let nf = &self.cfg.normalform;
        Ok(NormalFormParams {
            eps: self.cfg.eps[0],
            alpha0,
            omega1: nf.omega1,
            alpha2: nf.alpha2,
            alpha7: nf.alpha7,
            alpha8: nf.alpha8,
        })
    }

    pub fn trajectory(&mut self) -> Result<(NormalFormParams, Trajectory)> {
        let p = self.normalform_params()?;
        let nf = self.cfg.normalform.clone();
        let scale = if p.alpha0 < 0.0 { 1.0 / p.decay_rate()? } else { 1.0 };
        let span = nf.span * scale;
        let (x0, t_end) = match nf.start {
            NormalFormStart::Stable => (manifold_point(Branch::Stable, nf.amplitude, nf.phase, 0.0, &p)?, span),
            NormalFormStart::Unstable => (
                manifold_point(Branch::Unstable, nf.amplitude, nf.phase, 0.0, &p)?,
                -span,
            ),
            NormalFormStart::Zero => (NormalFormState::default(), span),
            NormalFormStart::Custom => {
                let s = nf.state;
                (
                    NormalFormState::new(Complex64::new(s[0], s[1]), Complex64::new(s[2], s[3])),
                    span,
                )
            }
        };
        let opts = IntegrateOptions {
            tol: nf.tol,
            escape_radius: nf.escape_radius,
            ..IntegrateOptions::default()
        };
        Ok((p, nf_integrate(&p, x0, 0.0, t_end, &opts)?))
    }

    pub fn cmd_normalform(&mut self) -> Result<()> {
        let (p, tr) = self.trajectory()?;
        self.write("normalform.csv", &tr.to_csv(&p))?;
        let (k_drift, h_drift) = tr.invariant_drift(&p);
        let summary = NormalFormSummary {
            params: p,
            start: self.cfg.normalform.start,
            t_end: *tr.t.last().unwrap_or(&0.0),
            points: tr.t.len(),
            escaped: tr.escaped,
            k_drift,
            h_drift,
        };
        self.write_json("normalform.json", &summary)?;
        self.say(&format!(
            "{} points to t = {:e}; K drift {:e}, H drift {:e}",
            summary.points, summary.t_end, k_drift, h_drift
        ));
        Ok(())
    }
}

/// Scaling table with a fixed delta across the ladder.
fn explicit_scaling(
    spec: &PotentialSpec,
    physics: Physics,
    rgrid: &HalfLineGrid,
    xi: &Inhomogeneity,
    ladder: &[f64],
    delta: f64,
    opts: &UndulationOptions,
) -> Result<Vec<ScalingRow>> {
    use rayon::prelude::*;
    ladder
        .par_iter()
        .map(|&eps| {
            let bg = prepare_background(spec, physics, eps, rgrid)?;
            let field = build_undulation(&bg, xi, delta, None, opts)?;
            let bare = residual_bare(&field, spec)?;
            let full = residual_F(&field, spec)?;
            Ok(ScalingRow::new(eps, delta, &bare, &full))
        })
        .collect()
}
