//! Scenario documents: JSON in, a fully resolved [`Scenario`] out.
//!
//! Parsing walks the document by hand rather than deriving, so that every
//! unknown key and every violated constraint is reported in one pass.

use std::fmt;

use serde_json::{json, Map, Value};

use landau_core::coefficients::CoefficientPath;
use landau_core::grid::VelocityGrid;
use landau_core::{Ball, Cylinder};
use landau_core::profiles::{CompactBump, Maxwellian, Profile};
use landau_core::solver::{Boundary, DriftScheme, Scheme, SolverConfig};
use landau_core::Vec3d;

pub const DEFAULT_N: usize = 33;
pub const DEFAULT_EXTENT: f64 = 8.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_FINAL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Monitors {
    pub q: f64,
    pub ball: Ball,
    pub alpha: f64,
    /// Monitored cylinder `ω`.
    pub cylinder: Cylinder,
    /// Cylinder `Ω ⋐ ω` on which the regularity norm is assembled.
    pub inner_cylinder: Cylinder,
    pub snapshot_stride: usize,
    pub sample_budget: usize,
    pub seed: u64,
    pub verdict: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub initial_data: Profile<f64>,
    pub grid: VelocityGrid<f64>,
    pub solver: SolverConfig<f64>,
    pub monitors: Monitors,
}

/// Every problem found in a document.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in scenario:", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

struct Walker {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walker {
    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    /// Object at `path`, reporting keys outside `allowed`.
    fn object<'a>(&mut self, v: &'a Value, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.err(format!("`{}` must be an object", if path.is_empty() { "<root>" } else { path }));
            return None;
        };
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(format!("unknown key `{}`", join(path, k)));
            }
        }
        Some(map)
    }

    fn sub<'a>(&mut self, map: &'a Map<String, Value>, path: &str, key: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        map.get(key).and_then(|v| self.object(v, &join(path, key), allowed))
    }

    fn number(&mut self, map: Option<&Map<String, Value>>, path: &str, key: &str, default: Option<f64>) -> f64 {
        match map.and_then(|m| m.get(key)) {
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => x,
                _ => {
                    self.err(format!("`{}` must be a finite number", join(path, key)));
                    f64::NAN
                }
            },
            None => default.unwrap_or_else(|| {
                self.err(format!("missing required key `{}`", join(path, key)));
                f64::NAN
            }),
        }
    }

    fn count(&mut self, map: Option<&Map<String, Value>>, path: &str, key: &str, default: u64) -> u64 {
        match map.and_then(|m| m.get(key)) {
            Some(v) => v.as_u64().unwrap_or_else(|| {
                self.err(format!("`{}` must be a nonnegative integer", join(path, key)));
                default
            }),
            None => default,
        }
    }

    fn boolean(&mut self, map: Option<&Map<String, Value>>, path: &str, key: &str, default: bool) -> bool {
        match map.and_then(|m| m.get(key)) {
            Some(v) => v.as_bool().unwrap_or_else(|| {
                self.err(format!("`{}` must be true or false", join(path, key)));
                default
            }),
            None => default,
        }
    }

    fn vec3(&mut self, map: Option<&Map<String, Value>>, path: &str, key: &str, default: Option<Vec3d>) -> Vec3d {
        match map.and_then(|m| m.get(key)) {
            Some(v) => {
                let xs: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(Value::as_f64).collect());
                match xs {
                    Some(x) if x.len() == 3 && x.iter().all(|c| c.is_finite()) => Vec3d::new(x[0], x[1], x[2]),
                    _ => {
                        self.err(format!("`{}` must be an array of 3 finite numbers", join(path, key)));
                        Vec3d::zero()
                    }
                }
            }
            None => default.unwrap_or_else(|| {
                self.err(format!("missing required key `{}`", join(path, key)));
                Vec3d::zero()
            }),
        }
    }

    fn choice<T: Copy>(&mut self, map: Option<&Map<String, Value>>, path: &str, key: &str, options: &[(&str, T)], default: T) -> T {
        match map.and_then(|m| m.get(key)) {
            Some(v) => {
                let found = v.as_str().and_then(|s| options.iter().find(|(name, _)| *name == s));
                match found {
                    Some((_, t)) => *t,
                    None => {
                        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                        self.err(format!("`{}` must be one of {}", join(path, key), names.join(", ")));
                        default
                    }
                }
            }
            None => default,
        }
    }

    fn maxwellian(&mut self, m: Option<&Map<String, Value>>, path: &str) -> Maxwellian<f64> {
        let mass = self.number(m, path, "mass", Some(1.0));
        let temperature = self.number(m, path, "temperature", Some(1.0));
        let mean = self.vec3(m, path, "mean", Some(Vec3d::zero()));
        if !(mass > 0.0) {
            self.err(format!("`{}` must be positive", join(path, "mass")));
        }
        if !(temperature > 0.0) {
            self.err(format!("`{}` must be positive", join(path, "temperature")));
        }
        Maxwellian::new(mass, mean, temperature)
    }

    fn ball(&mut self, m: Option<&Map<String, Value>>, path: &str, default: Ball) -> Ball {
        let center = self.vec3(m, path, "center", Some(default.center));
        let radius = self.number(m, path, "radius", Some(default.radius));
        if !(radius > 0.0) {
            self.err(format!("`{}` must be positive", join(path, "radius")));
        }
        Ball::new(center, radius)
    }

    fn cylinder(&mut self, m: Option<&Map<String, Value>>, path: &str, default: Cylinder) -> Cylinder {
        let t_start = self.number(m, path, "t_start", Some(default.t_start));
        let t_end = self.number(m, path, "t_end", Some(default.t_end));
        let center = self.vec3(m, path, "center", Some(default.center));
        let radius = self.number(m, path, "radius", Some(default.radius));
        match Cylinder::new(t_start, t_end, center, radius) {
            Ok(c) => c,
            Err(e) => {
                self.err(format!("`{path}`: {e}"));
                default
            }
        }
    }
}

const ROOT_KEYS: &[&str] = &["initial_data", "grid", "solver", "monitors"];
const GRID_KEYS: &[&str] = &["n", "L"];
const SOLVER_KEYS: &[&str] = &[
    "dt",
    "t_final",
    "scheme",
    "linear_tol",
    "coefficient_path",
    "boundary",
    "picard",
    "drift",
];
const MONITOR_KEYS: &[&str] = &[
    "q",
    "ball",
    "alpha",
    "cylinder",
    "inner_cylinder",
    "snapshot_stride",
    "sample_budget",
    "seed",
    "verdict",
];
const BALL_KEYS: &[&str] = &["center", "radius"];
const CYLINDER_KEYS: &[&str] = &["t_start", "t_end", "center", "radius"];
const MAXWELLIAN_KEYS: &[&str] = &["kind", "mass", "temperature", "mean"];
const MIXTURE_KEYS: &[&str] = &["kind", "components"];
const COMPONENT_KEYS: &[&str] = &["mass", "temperature", "mean"];
const BUMP_KEYS: &[&str] = &["kind", "center", "radius", "height", "power"];

fn ball_in_cube(ball: &Ball, extent: f64) -> bool {
    [ball.center.x, ball.center.y, ball.center.z]
        .iter()
        .all(|c| c.abs() + ball.radius <= extent)
}

/// Central 60% of the time span, three quarters of the radius.
pub fn default_inner(outer: &Cylinder) -> Cylinder {
    let span = outer.t_end - outer.t_start;
    Cylinder {
        t_start: outer.t_start + 0.2 * span,
        t_end: outer.t_end - 0.2 * span,
        center: outer.center,
        radius: 0.75 * outer.radius,
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ValidationErrors> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| ValidationErrors(vec![format!("not valid JSON: {e}")]))?;
    let mut w = Walker { errors: Vec::new() };
    let root = w.object(&doc, "", ROOT_KEYS);

    let initial_data = match root.and_then(|r| r.get("initial_data")) {
        None => {
            w.err("missing required key `initial_data`");
            Profile::Maxwellian(Maxwellian::standard())
        }
        Some(v) => match v.get("kind").and_then(Value::as_str) {
            Some("maxwellian") => {
                let m = w.object(v, "initial_data", MAXWELLIAN_KEYS);
                Profile::Maxwellian(w.maxwellian(m, "initial_data"))
            }
            Some("maxwellian_mixture") => {
                let m = w.object(v, "initial_data", MIXTURE_KEYS);
                let comps = m.and_then(|m| m.get("components")).and_then(Value::as_array);
                match comps {
                    Some(list) if !list.is_empty() => Profile::Mixture(
                        list.iter()
                            .enumerate()
                            .map(|(i, c)| {
                                let path = format!("initial_data.components[{i}]");
                                let cm = w.object(c, &path, COMPONENT_KEYS);
                                w.maxwellian(cm, &path)
                            })
                            .collect(),
                    ),
                    _ => {
                        w.err("`initial_data.components` must be a nonempty array");
                        Profile::Mixture(vec![Maxwellian::standard()])
                    }
                }
            }
            Some("compact_bump") => {
                let m = w.object(v, "initial_data", BUMP_KEYS);
                let p = "initial_data";
                let bump = CompactBump {
                    center: w.vec3(m, p, "center", Some(Vec3d::zero())),
                    radius: w.number(m, p, "radius", Some(1.0)),
                    height: w.number(m, p, "height", Some(1.0)),
                    power: w.number(m, p, "power", Some(3.0)),
                };
                if !(bump.radius > 0.0) {
                    w.err("`initial_data.radius` must be positive");
                }
                if !(bump.height > 0.0) {
                    w.err("`initial_data.height` must be positive");
                }
                if !(bump.power >= 1.0) {
                    w.err("`initial_data.power` must be at least 1");
                }
                Profile::Bump(bump)
            }
            _ => {
                w.err("`initial_data.kind` must be one of maxwellian, maxwellian_mixture, compact_bump");
                Profile::Maxwellian(Maxwellian::standard())
            }
        },
    };

    let g = root.and_then(|r| w.sub(r, "", "grid", GRID_KEYS));
    let n = w.count(g, "grid", "n", DEFAULT_N as u64) as usize;
    let extent = w.number(g, "grid", "L", Some(DEFAULT_EXTENT));
    let grid = match VelocityGrid::new(n, extent) {
        Ok(g) => g,
        Err(e) => {
            w.err(format!("`grid`: {e}"));
            VelocityGrid::new(DEFAULT_N, DEFAULT_EXTENT).unwrap()
        }
    };

    let s = root.and_then(|r| w.sub(r, "", "solver", SOLVER_KEYS));
    let mut solver = SolverConfig::new(
        w.number(s, "solver", "dt", Some(DEFAULT_DT)),
        w.number(s, "solver", "t_final", Some(DEFAULT_T_FINAL)),
    );
    solver.scheme = w.choice(
        s,
        "solver",
        "scheme",
        &[("semi_implicit", Scheme::SemiImplicit), ("fully_explicit", Scheme::FullyExplicit)],
        solver.scheme,
    );
    solver.linear_tol = w.number(s, "solver", "linear_tol", Some(solver.linear_tol));
    solver.coefficient_path = w.choice(
        s,
        "solver",
        "coefficient_path",
        &[("fast", CoefficientPath::Fast), ("direct", CoefficientPath::Direct)],
        solver.coefficient_path,
    );
    solver.boundary = w.choice(s, "solver", "boundary", &[("zero_flux", Boundary::ZeroFlux)], solver.boundary);
    solver.picard = w.boolean(s, "solver", "picard", false);
    solver.drift = w.choice(
        s,
        "solver",
        "drift",
        &[("fitted", DriftScheme::Fitted), ("central", DriftScheme::Central)],
        solver.drift,
    );

    let m = root.and_then(|r| w.sub(r, "", "monitors", MONITOR_KEYS));
    let q = w.number(m, "monitors", "q", Some(4.0));
    let bm = m.and_then(|mm| w.sub(mm, "monitors", "ball", BALL_KEYS));
    let ball = w.ball(bm, "monitors.ball", Ball::centered(2.0));
    let alpha = w.number(m, "monitors", "alpha", Some(0.5));
    let t_final = if solver.t_final > 0.0 { solver.t_final } else { DEFAULT_T_FINAL };
    let outer_default = Cylinder { t_start: 0.0, t_end: t_final, center: ball.center, radius: ball.radius };
    let cm = m.and_then(|mm| w.sub(mm, "monitors", "cylinder", CYLINDER_KEYS));
    let cylinder = w.cylinder(cm, "monitors.cylinder", outer_default);
    let inner_default = default_inner(&cylinder);
    let im = m.and_then(|mm| w.sub(mm, "monitors", "inner_cylinder", CYLINDER_KEYS));
    let inner_cylinder = w.cylinder(im, "monitors.inner_cylinder", inner_default);
    let snapshot_stride = w.count(m, "monitors", "snapshot_stride", 10) as usize;
    let sample_budget = w.count(m, "monitors", "sample_budget", 100_000) as usize;
    let seed = w.count(m, "monitors", "seed", 0);
    let verdict = w.boolean(m, "monitors", "verdict", true);

    if let Err(e) = solver.validate() {
        w.err(format!("`solver`: {}", e.to_string().trim_start_matches("invalid solver configuration: ")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        w.err(format!("`monitors.alpha` must lie in (0, 1), got {alpha}"));
    }
    if verdict && !(q > 3.0) {
        w.err(format!(
            "`monitors.q` must exceed 3 when the regularity verdict is enabled (integrability above the critical exponent), got {q}"
        ));
    } else if !(q >= 1.0) {
        w.err(format!("`monitors.q` must be at least 1, got {q}"));
    }
    if snapshot_stride == 0 {
        w.err("`monitors.snapshot_stride` must be at least 1");
    }
    if !ball_in_cube(&ball, extent) {
        w.err(format!("`monitors.ball` (radius {}) does not fit inside the grid cube [-{extent}, {extent}]³", ball.radius));
    }
    if !ball_in_cube(&cylinder.ball(), extent) {
        w.err("`monitors.cylinder` ball does not fit inside the grid cube");
    }
    if verdict && !inner_cylinder.is_compactly_inside(&cylinder) {
        w.err("`monitors.inner_cylinder` must lie compactly inside `monitors.cylinder`");
    }
    if cylinder.t_end > solver.t_final * (1.0 + 1e-12) {
        w.err("`monitors.cylinder.t_end` exceeds `solver.t_final`");
    }

    if !w.errors.is_empty() {
        return Err(ValidationErrors(w.errors));
    }
    solver.snapshot_stride = snapshot_stride;
    Ok(Scenario {
        initial_data,
        grid,
        solver,
        monitors: Monitors {
            q,
            ball,
            alpha,
            cylinder,
            inner_cylinder,
            snapshot_stride,
            sample_budget,
            seed,
            verdict,
        },
    })
}

fn v3(v: Vec3d) -> Value {
    json!([v.x, v.y, v.z])
}

fn cyl_json(c: &Cylinder) -> Value {
    json!({"t_start": c.t_start, "t_end": c.t_end, "center": v3(c.center), "radius": c.radius})
}

fn maxwellian_json(m: &Maxwellian<f64>) -> Value {
    json!({"mass": m.mass, "temperature": m.temperature, "mean": v3(m.mean)})
}

fn name<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("enum names serialize")
}

impl Scenario {
    /// The resolved scenario in the input format, every default explicit.
    pub fn to_json(&self) -> Value {
        let init = match &self.initial_data {
            Profile::Maxwellian(m) => {
                let mut v = maxwellian_json(m);
                v["kind"] = json!("maxwellian");
                v
            }
            Profile::Mixture(ms) => json!({
                "kind": "maxwellian_mixture",
                "components": ms.iter().map(maxwellian_json).collect::<Vec<_>>(),
            }),
            Profile::Bump(b) => json!({
                "kind": "compact_bump",
                "center": v3(b.center),
                "radius": b.radius,
                "height": b.height,
                "power": b.power,
            }),
        };
        let s = &self.solver;
        let m = &self.monitors;
        json!({
            "initial_data": init,
            "grid": {"n": self.grid.n(), "L": self.grid.extent()},
            "solver": {
                "dt": s.dt,
                "t_final": s.t_final,
                "scheme": name(&s.scheme),
                "linear_tol": s.linear_tol,
                "coefficient_path": name(&s.coefficient_path),
                "boundary": name(&s.boundary),
                "picard": s.picard,
                "drift": name(&s.drift),
            },
            "monitors": {
                "q": m.q,
                "ball": {"center": v3(m.ball.center), "radius": m.ball.radius},
                "alpha": m.alpha,
                "cylinder": cyl_json(&m.cylinder),
                "inner_cylinder": cyl_json(&m.inner_cylinder),
                "snapshot_stride": m.snapshot_stride,
                "sample_budget": m.sample_budget,
                "seed": m.seed,
                "verdict": m.verdict,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"initial_data": {"kind": "maxwellian", "mass": 1, "temperature": 1, "mean": [0, 0, 0]}}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.grid.n(), 33);
        assert_eq!(s.grid.extent(), 8.0);
        assert_eq!(s.solver.dt, 1e-3);
        assert_eq!(s.solver.t_final, 0.1);
        assert_eq!(s.monitors.q, 4.0);
        assert!(s.monitors.inner_cylinder.is_compactly_inside(&s.monitors.cylinder));
    }

    #[test]
    fn small_q_with_verdict_is_rejected() {
        let doc = r#"{"initial_data": {"kind": "maxwellian"}, "monitors": {"q": 2}}"#;
        let e = parse_scenario(doc).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("q") && m.contains("exceed 3")), "{e}");
        let doc = r#"{"initial_data": {"kind": "maxwellian"}, "monitors": {"q": 2, "verdict": false}}"#;
        assert!(parse_scenario(doc).is_ok());
    }

    #[test]
    fn violations_are_aggregated() {
        let doc = r#"{
            "initial_data": {"kind": "maxwellian", "mass": -1, "colour": "red"},
            "grid": {"n": 32},
            "monitors": {"ball": {"radius": 9}},
            "extra": 1
        }"#;
        let e = parse_scenario(doc).unwrap_err();
        let all = e.to_string();
        for needle in ["mass", "unknown key `initial_data.colour`", "unknown key `extra`", "grid", "monitors.ball"] {
            assert!(all.contains(needle), "missing {needle} in {all}");
        }
        assert!(e.0.len() >= 5);
    }

    #[test]
    fn resolved_json_round_trips() {
        for doc in [
            MINIMAL,
            r#"{"initial_data": {"kind": "maxwellian_mixture", "components": [{"mass": 0.6, "temperature": 0.8, "mean": [1, 0.5, 0]}, {"mass": 0.4, "temperature": 1.2, "mean": [-1, 0, 0]}]}, "grid": {"n": 17, "L": 6}, "solver": {"dt": 0.002, "picard": true}}"#,
            r#"{"initial_data": {"kind": "compact_bump", "center": [0.5, 0, 0], "radius": 2, "height": 0.1, "power": 4}, "solver": {"scheme": "fully_explicit", "coefficient_path": "direct"}, "monitors": {"seed": 9}}"#,
        ] {
            let s = parse_scenario(doc).unwrap();
            let again = parse_scenario(&s.to_json().to_string()).unwrap();
            assert_eq!(s, again);
        }
    }

    #[test]
    fn bad_enum_and_json_are_reported() {
        let e = parse_scenario(r#"{"initial_data": {"kind": "maxwellian"}, "solver": {"scheme": "magic"}}"#).unwrap_err();
        assert!(e.0[0].contains("semi_implicit"));
        assert!(parse_scenario("{").is_err());
        let e = parse_scenario(r#"{"initial_data": {"kind": "pancake"}}"#).unwrap_err();
        assert!(e.0[0].contains("kind"));
    }
}
