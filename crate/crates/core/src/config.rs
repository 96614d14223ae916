//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! [problem]
//! epsilon = 0.005
//! ell = 1
//! flux = burgers          # zero | burgers | shifted_burgers | linear | cubic
//! u_star = sqrt_eps       # u(-ell) = u_star, u(ell) = -u_star
//!
//! [run]
//! grid = 400
//! times = 10, 100, 1e3
//! ```
//!
//! Every line is blank, a comment (`#` or `;`), a `[section]` header or a
//! `key = value` pair. `#` also starts a trailing comment. Keys before the
//! first header belong to `[problem]`. Quantities may be written as a number,
//! as `eps` or `sqrt_eps`, or as a number times one of those
//! (`0.5 eps`, `0.25 sqrt_eps`). Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Convection, Diffusion, Discretization};
use crate::family::ThetaMode;
use crate::problem::{Direction, Flux, Grid, GridField, ProblemSpec};

const SECTIONS: [&str; 6] = ["problem", "run", "family", "spectrum", "reduce", "tables"];

/// Initial datum of an evolution run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDatum {
    /// `m + a ((x/ell)^2/2 - x/ell - 1/2)` with `m`, `a` the mean and half
    /// difference of `u(-ell)`, `u(ell)`.
    Quadratic,
    /// Straight line between the boundary values.
    Linear,
}

/// Linearization profile of the `spectrum` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumProfile {
    Element,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub grid: usize,
    pub times: Vec<f64>,
    pub t_end: f64,
    pub initial: InitialDatum,
    pub disc: Discretization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySettings {
    /// Sweep bounds; the admissible range when unset.
    pub xi_min: Option<f64>,
    pub xi_max: Option<f64>,
    pub xi_count: usize,
    /// Half-width of the smoothing; `2 dx` when unset.
    pub smoothing: Option<f64>,
    pub theta: ThetaMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub xi: f64,
    pub count: usize,
    pub profile: SpectrumProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceSettings {
    pub xi0: f64,
    pub t0: f64,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSettings {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub spec: ProblemSpec,
    pub run: RunSettings,
    pub family: FamilySettings,
    pub spectrum: SpectrumSettings,
    pub reduce: ReduceSettings,
    pub tables: TableSettings,
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse { line, message: message.into() }
}

fn tokenize(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut section = "problem".to_string();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() || body.starts_with(';') {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header"))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", "))));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| err(line, format!("expected `key = value`, got `{body}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(line, format!("bad key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(line, format!("missing value for `{key}`")));
        }
        let slot = out.entry(section.clone()).or_default();
        if let Some(prev) = slot.get(key) {
            return Err(err(line, format!("`{key}` already set on line {}", prev.line)));
        }
        slot.insert(key.to_string(), Entry { line, value: value.to_string() });
    }
    Ok(out)
}

/// Reads keys out of one section and complains about leftovers.
struct Reader<'a> {
    section: &'a str,
    entries: BTreeMap<String, Entry>,
    epsilon: f64,
}

impl<'a> Reader<'a> {
    fn new(all: &mut Sections, section: &'a str, epsilon: f64) -> Self {
        Reader { section, entries: all.remove(section).unwrap_or_default(), epsilon }
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn quantity(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => parse_quantity(&e.value, self.epsilon).map(Some).map_err(|m| err(e.line, format!("{key}: {m}"))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|s| parse_quantity(s, self.epsilon))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|m| err(e.line, format!("{key}: {m}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<usize>()
                .map(Some)
                .map_err(|_| err(e.line, format!("{key}: expected a non-negative integer, got `{}`", e.value))),
        }
    }

    fn word<T>(&mut self, key: &str, choices: &[(&str, T)]) -> Result<Option<T>>
    where
        T: Copy,
    {
        match self.take(key) {
            None => Ok(None),
            Some(e) => choices.iter().find(|(w, _)| *w == e.value).map(|(_, v)| Some(*v)).ok_or_else(|| {
                let names: Vec<&str> = choices.iter().map(|(w, _)| *w).collect();
                err(e.line, format!("{key}: `{}` is not one of {}", e.value, names.join(", ")))
            }),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, e)) => Err(err(e.line, format!("unknown key `{key}` in [{}]", self.section))),
        }
    }
}

fn parse_quantity(text: &str, epsilon: f64) -> std::result::Result<f64, String> {
    let text = text.trim();
    let mut parts = text.split_whitespace();
    let (factor, unit) = match (parts.next(), parts.next(), parts.next()) {
        (Some(a), None, None) => match a {
            "eps" | "sqrt_eps" => ("1", Some(a)),
            _ => (a, None),
        },
        (Some(a), Some(b), None) => (a, Some(b)),
        _ => return Err(format!("cannot read `{text}` as a quantity")),
    };
    let factor: f64 = factor.parse().map_err(|_| format!("`{factor}` is not a number"))?;
    let scale = match unit {
        None => 1.0,
        Some("eps") => epsilon,
        Some("sqrt_eps") => epsilon.sqrt(),
        Some(other) => return Err(format!("unknown unit `{other}`; expected eps or sqrt_eps")),
    };
    let v = factor * scale;
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

const FLUXES: [(&str, u8); 5] = [("zero", 0), ("burgers", 1), ("shifted_burgers", 2), ("linear", 3), ("cubic", 4)];

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut all = tokenize(text)?;
        let eps_entry = all
            .get_mut("problem")
            .and_then(|p| p.remove("epsilon"))
            .ok_or_else(|| err(0, "[problem] epsilon is required"))?;
        let epsilon: f64 = eps_entry
            .value
            .parse()
            .map_err(|_| err(eps_entry.line, format!("epsilon: `{}` is not a number", eps_entry.value)))?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(err(eps_entry.line, "epsilon must be positive"));
        }

        let mut p = Reader::new(&mut all, "problem", epsilon);
        let ell = p.quantity("ell")?.unwrap_or(1.0);
        let kind = p.word("flux", &FLUXES)?.unwrap_or(1);
        let shift_line = p.entries.get("shift").map(|e| e.line);
        let shift = p.quantity("shift")?;
        let speed_line = p.entries.get("speed").map(|e| e.line);
        let speed = p.quantity("speed")?;
        let flux = match kind {
            0 => Flux::Zero,
            1 => Flux::Burgers,
            2 => Flux::ShiftedBurgers { shift: shift.ok_or_else(|| err(0, "shifted_burgers needs `shift`"))? },
            3 => Flux::Linear { speed: speed.ok_or_else(|| err(0, "linear flux needs `speed`"))? },
            _ => Flux::Cubic,
        };
        if kind != 2 && shift.is_some() {
            return Err(err(shift_line.unwrap_or(0), "`shift` only applies to flux = shifted_burgers"));
        }
        if kind != 3 && speed.is_some() {
            return Err(err(speed_line.unwrap_or(0), "`speed` only applies to flux = linear"));
        }
        let dir_line = p.entries.get("direction").map(|e| e.line).unwrap_or(0);
        let direction = p.word("direction", &[("decreasing", Direction::Decreasing), ("increasing", Direction::Increasing)])?;
        let star_line = p.entries.get("u_star").map(|e| e.line).unwrap_or(0);
        let u_star = p.quantity("u_star")?;
        let u_minus = p.quantity("u_minus")?;
        let u_plus = p.quantity("u_plus")?;
        let (u_minus, u_plus) = match (u_star, u_minus, u_plus) {
            (Some(a), None, None) => match direction.unwrap_or(Direction::Decreasing) {
                Direction::Decreasing => (a, -a),
                Direction::Increasing => (-a, a),
            },
            (None, Some(a), Some(b)) => {
                if direction.is_some() {
                    return Err(err(dir_line, "`direction` only applies together with `u_star`"));
                }
                (a, b)
            }
            (None, _, _) => return Err(err(0, "give either `u_star` or both `u_minus` and `u_plus`")),
            (Some(_), _, _) => return Err(err(star_line, "`u_star` excludes `u_minus`/`u_plus`")),
        };
        p.finish()?;
        let spec = ProblemSpec::new(epsilon, ell, u_minus, u_plus, flux).map_err(|e| err(0, e.to_string()))?;

        let mut r = Reader::new(&mut all, "run", epsilon);
        let grid = r.count("grid")?.unwrap_or(Grid::DEFAULT_CELLS);
        let times_line = r.entries.get("times").map(|e| e.line).unwrap_or(0);
        let mut times = r.list("times")?.unwrap_or_else(|| vec![1.0, 10.0, 100.0, 1e3]);
        if times.iter().any(|&t| !(t > 0.0)) {
            return Err(err(times_line, "output times must be positive"));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let t_end = r.quantity("t_end")?.unwrap_or_else(|| times.last().copied().unwrap_or(1.0));
        if !(t_end > 0.0) {
            return Err(err(0, "t_end must be positive"));
        }
        let initial = r.word("initial", &[("quadratic", InitialDatum::Quadratic), ("linear", InitialDatum::Linear)])?;
        let diffusion = r.word("diffusion", &[("mean_curvature", Diffusion::MeanCurvature), ("linear", Diffusion::Linear)])?;
        let convection = r.word("convection", &[("central", Convection::Central), ("rusanov", Convection::Rusanov)])?;
        r.finish()?;
        if grid < 4 {
            return Err(err(0, format!("grid must have at least 4 cells, got {grid}")));
        }
        let run = RunSettings {
            grid,
            times,
            t_end,
            initial: initial.unwrap_or(InitialDatum::Quadratic),
            disc: Discretization {
                diffusion: diffusion.unwrap_or(Diffusion::MeanCurvature),
                convection: convection.unwrap_or(Convection::Central),
            },
        };

        let mut f = Reader::new(&mut all, "family", epsilon);
        let family = FamilySettings {
            xi_min: f.quantity("xi_min")?,
            xi_max: f.quantity("xi_max")?,
            xi_count: f.count("xi_count")?.unwrap_or(41),
            smoothing: f.quantity("smoothing")?,
            theta: f
                .word("theta", &[("hyperbolic", ThetaMode::HyperbolicClosedForm), ("discrete", ThetaMode::DiscreteAdjoint)])?
                .unwrap_or(ThetaMode::HyperbolicClosedForm),
        };
        f.finish()?;

        let mut s = Reader::new(&mut all, "spectrum", epsilon);
        let spectrum = SpectrumSettings {
            xi: s.quantity("xi")?.unwrap_or(0.0),
            count: s.count("count")?.unwrap_or(crate::spectral::DEFAULT_EIGEN_COUNT),
            profile: s
                .word("profile", &[("element", SpectrumProfile::Element), ("zero", SpectrumProfile::Zero)])?
                .unwrap_or(SpectrumProfile::Element),
        };
        s.finish()?;

        let mut d = Reader::new(&mut all, "reduce", epsilon);
        let reduce = ReduceSettings {
            xi0: d.quantity("xi0")?.unwrap_or(0.0),
            t0: d.quantity("t0")?.unwrap_or(0.0),
            times: d.list("times")?.unwrap_or_else(|| crate::experiments::TABLE_TIMES.to_vec()),
        };
        d.finish()?;

        let mut t = Reader::new(&mut all, "tables", epsilon);
        let tables =
            TableSettings { epsilons: t.list("epsilons")?.unwrap_or_else(|| crate::experiments::TABLE_EPSILONS.to_vec()) };
        t.finish()?;

        Ok(Config { spec, run, family, spectrum, reduce, tables })
    }

    /// The configured initial datum on `grid`.
    pub fn initial_field(&self, grid: &Grid) -> GridField {
        let spec = &self.spec;
        let (ell, um, up) = (spec.ell, spec.u_minus, spec.u_plus);
        let (m, a) = (0.5 * (um + up), 0.5 * (um - up));
        match self.run.initial {
            InitialDatum::Quadratic => GridField::initial(spec, grid, |x| {
                let s = x / ell;
                m + a * (0.5 * s * s - s - 0.5)
            }),
            InitialDatum::Linear => GridField::initial(spec, grid, |x| m - a * x / ell),
        }
    }

    /// Defaults around a given problem.
    pub fn for_spec(spec: ProblemSpec) -> Config {
        let text = to_text_problem(&spec);
        let mut cfg = Config::parse(&text).expect("serialized problem parses");
        cfg.spec = spec;
        cfg
    }

    /// Canonical text form; `Config::parse(cfg.to_text())` gives `cfg` back.
    pub fn to_text(&self) -> String {
        let mut s = to_text_problem(&self.spec);
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        let r = &self.run;
        let _ = writeln!(s, "\n[run]\ngrid = {}\ntimes = {}\nt_end = {:e}", r.grid, list(&r.times), r.t_end);
        let _ = writeln!(
            s,
            "initial = {}\ndiffusion = {}\nconvection = {}",
            match r.initial {
                InitialDatum::Quadratic => "quadratic",
                InitialDatum::Linear => "linear",
            },
            match r.disc.diffusion {
                Diffusion::MeanCurvature => "mean_curvature",
                Diffusion::Linear => "linear",
            },
            match r.disc.convection {
                Convection::Central => "central",
                Convection::Rusanov => "rusanov",
            }
        );
        let f = &self.family;
        let _ = writeln!(s, "\n[family]\nxi_count = {}", f.xi_count);
        if let Some(v) = f.xi_min {
            let _ = writeln!(s, "xi_min = {v:e}");
        }
        if let Some(v) = f.xi_max {
            let _ = writeln!(s, "xi_max = {v:e}");
        }
        if let Some(v) = f.smoothing {
            let _ = writeln!(s, "smoothing = {v:e}");
        }
        let theta = match f.theta {
            ThetaMode::HyperbolicClosedForm => "hyperbolic",
            ThetaMode::DiscreteAdjoint => "discrete",
        };
        let _ = writeln!(s, "theta = {theta}");
        let sp = &self.spectrum;
        let profile = match sp.profile {
            SpectrumProfile::Element => "element",
            SpectrumProfile::Zero => "zero",
        };
        let _ = writeln!(s, "\n[spectrum]\nxi = {:e}\ncount = {}\nprofile = {profile}", sp.xi, sp.count);
        let d = &self.reduce;
        let _ = writeln!(s, "\n[reduce]\nxi0 = {:e}\nt0 = {:e}\ntimes = {}", d.xi0, d.t0, list(&d.times));
        let _ = writeln!(s, "\n[tables]\nepsilons = {}", list(&self.tables.epsilons));
        s
    }
}

fn to_text_problem(spec: &ProblemSpec) -> String {
    let mut s = String::from("[problem]\n");
    let _ = writeln!(s, "epsilon = {:e}\nell = {:e}", spec.epsilon, spec.ell);
    match spec.flux {
        Flux::Zero => s.push_str("flux = zero\n"),
        Flux::Burgers => s.push_str("flux = burgers\n"),
        Flux::ShiftedBurgers { shift } => {
            let _ = writeln!(s, "flux = shifted_burgers\nshift = {shift:e}");
        }
        Flux::Linear { speed } => {
            let _ = writeln!(s, "flux = linear\nspeed = {speed:e}");
        }
        Flux::Cubic => s.push_str("flux = cubic\n"),
    }
    let _ = writeln!(s, "u_minus = {:e}\nu_plus = {:e}", spec.u_minus, spec.u_plus);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_problem() {
        let c = Config::parse("epsilon = 0.005\nflux = burgers\nu_star = sqrt_eps\n").unwrap();
        assert_eq!(c.spec.epsilon, 0.005);
        assert_eq!(c.spec.u_minus, 0.005f64.sqrt());
        assert_eq!(c.spec.u_plus, -(0.005f64.sqrt()));
        assert_eq!(c.spec.flux, Flux::Burgers);
        assert_eq!(c.run.grid, Grid::DEFAULT_CELLS);
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("0.5 eps", 0.1), Ok(0.05));
        assert_eq!(parse_quantity("sqrt_eps", 0.04), Ok(0.2));
        assert_eq!(parse_quantity("0.25 sqrt_eps", 0.04), Ok(0.05));
        assert_eq!(parse_quantity("-1e-3", 7.0), Ok(-1e-3));
        assert!(parse_quantity("2 furlongs", 0.1).is_err());
        assert!(parse_quantity("abc", 0.1).is_err());
        assert!(parse_quantity("1 2 3", 0.1).is_err());
    }

    #[test]
    fn sections_and_comments() {
        let text = "\
# table run
[problem]
epsilon = 0.01   # diffusion
flux = shifted_burgers
shift = 0.25 sqrt_eps
u_star = 0.5 eps
direction = increasing

[run]
; grid size
grid = 200
times = 100, 10, 10
diffusion = linear
convection = rusanov
initial = linear

[spectrum]
xi = -0.2
count = 3
";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.spec.flux, Flux::ShiftedBurgers { shift: 0.025 });
        assert_eq!((c.spec.u_minus, c.spec.u_plus), (-0.005, 0.005));
        assert_eq!(c.run.grid, 200);
        assert_eq!(c.run.times, vec![10.0, 100.0]);
        assert_eq!(c.run.t_end, 100.0);
        assert_eq!(c.run.disc, Discretization { diffusion: Diffusion::Linear, convection: Convection::Rusanov });
        assert_eq!(c.run.initial, InitialDatum::Linear);
        assert_eq!(c.spectrum.xi, -0.2);
        assert_eq!(c.spectrum.count, 3);
    }

    fn line_of(text: &str) -> usize {
        match Config::parse(text) {
            Err(Error::ConfigParse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\nflux = quartic\n"), 3);
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\n[bogus]\n"), 3);
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\nnonsense\n"), 3);
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\ncolour = red\n"), 3);
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\nu_star = 2\n"), 3);
        assert_eq!(line_of("epsilon = x\n"), 1);
        assert_eq!(line_of("epsilon = 0.1\nu_star = 1\n[run]\ngrid = -4\n"), 4);
        assert_eq!(line_of("u_star = 1\n"), 0);
        assert_eq!(line_of("epsilon = 0.1\nu_minus = 1\n"), 0);
    }

    #[test]
    fn quadratic_datum_matches_table_datum() {
        let c = Config::parse("epsilon = 0.01\nu_star = sqrt_eps\n").unwrap();
        let grid = Grid::for_spec(&c.spec, 40).unwrap();
        let u = c.initial_field(&grid);
        let table = crate::experiments::table_datum(0.01);
        for (x, v) in grid.nodes.iter().zip(&u.values) {
            assert!((v - table(*x)).abs() < 1e-15);
        }
        assert_eq!(u.values[0], c.spec.u_minus);
        assert_eq!(*u.values.last().unwrap(), c.spec.u_plus);
    }

    #[test]
    fn round_trip() {
        let text = "epsilon = 0.02\nflux = linear\nspeed = 2 eps\nu_minus = 0.3\nu_plus = -0.1\n[family]\nxi_min = -0.5\nsmoothing = 0.01\ntheta = discrete\n[reduce]\nxi0 = -0.3\nt0 = 10\n";
        let c = Config::parse(text).unwrap();
        let again = Config::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
        let d = Config::for_spec(ProblemSpec::new(0.1, 2.0, -1.0, 1.0, Flux::Cubic).unwrap());
        assert_eq!(Config::parse(&d.to_text()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn problem_round_trips(
            eps in 1e-4f64..1.0,
            ell in 0.01f64..10.0,
            um in -2.0f64..2.0,
            up in -2.0f64..2.0,
            kind in 0u8..5,
            param in -3.0f64..3.0,
        ) {
            prop_assume!(um != up);
            let flux = match kind {
                0 => Flux::Zero,
                1 => Flux::Burgers,
                2 => Flux::ShiftedBurgers { shift: param },
                3 => Flux::Linear { speed: param },
                _ => Flux::Cubic,
            };
            let spec = ProblemSpec::new(eps, ell, um, up, flux).unwrap();
            let c = Config::for_spec(spec);
            prop_assert_eq!(Config::parse(&c.to_text()).unwrap().spec, spec);
        }
    }
}
