//! Scenario files: TOML documents with an optional `preset` base and
//! per-section overrides.
//!
//! ```toml
//! preset = "perimeter"
//!
//! [solver]
//! path = "numerical"
//!
//! [output]
//! out_dir = "out_numerical"
//! ```
//!
//! Keys and defaults (defaults are the `doubly_clamped` preset unless a
//! `preset` is given):
//!
//! | section      | key                      | type / values                          |
//! |--------------|--------------------------|----------------------------------------|
//! | `[geometry]` | `length`, `height`       | float > 0                              |
//! |              | `target_h`               | float > 0                              |
//! |              | `mesh_path`              | string, overrides the generated mesh   |
//! | `[material]` | `E`                      | float > 0                              |
//! |              | `nu`                     | float in (-1, 0.5)                     |
//! | `[bc]`       | `kind`                   | cantilever, doubly_clamped, free_isostatic |
//! | `[load]`     | `p`                      | float, top-edge traction `(0, -p)`     |
//! | `[objective]`| `kind`                   | external_work, perimeter               |
//! | `[balance]`  | `mode`                   | global, local                          |
//! |              | `relation`               | equality, inequality                   |
//! |              | `gamma`                  | float, ≥ 0 with equality               |
//! | `[solver]`   | `inv2tau`                | float > 0                              |
//! |              | `path`                   | analytic, numerical                    |
//! |              | `gradient_linearization` | previous, fixed_point                  |
//! |              | `shear_weight`           | engineering, frobenius                 |
//! | `[run]`      | `n_iter`                 | integer ≥ 0                            |
//! | `[output]`   | `snapshot_every`         | integer ≥ 0 (default 5, 0 = ends only) |
//! |              | `out_dir`                | string (default `./out`)               |
//! |              | `center`                 | `[x, y]`, radial/hoop center           |

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::constraints::{BalanceMode, BalanceRelation};
use crate::error::{Error, Result};
use crate::evolution::{BcKind, Scenario};
use crate::fem::ShearWeight;
use crate::objectives::Objective;
use crate::solver::{GradientLinearization, SolverPath};

const SECTIONS: &[(&str, &[&str])] = &[
    ("geometry", &["length", "height", "target_h", "mesh_path"]),
    ("material", &["E", "nu"]),
    ("bc", &["kind"]),
    ("load", &["p"]),
    ("objective", &["kind"]),
    ("balance", &["mode", "relation", "gamma"]),
    ("solver", &["inv2tau", "path", "gradient_linearization", "shear_weight"]),
    ("run", &["n_iter"]),
    ("output", &["snapshot_every", "out_dir", "center"]),
];

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

fn float(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::config(key, format!("expected a number, found {}", type_name(other)))),
    }
}

fn string<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::config(key, format!("expected a string, found {}", type_name(v))))
}

fn count(v: &Value, key: &str) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(Error::config(key, format!("must be non-negative, got {i}"))),
        other => Err(Error::config(key, format!("expected an integer, found {}", type_name(other)))),
    }
}

fn choice<T: Copy>(v: &Value, key: &str, options: &[(&str, T)]) -> Result<T> {
    let s = string(v, key)?;
    options.iter().find(|(n, _)| *n == s).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::config(key, format!("unknown value `{s}`, expected one of {}", names.join(", ")))
    })
}

fn positive(x: f64, key: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {x}")))
    }
}

/// Parses a scenario document. Relative `mesh_path` values are kept as written.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;

    let mut sc = match doc.get("preset") {
        Some(v) => {
            let name = string(v, "preset")?;
            Scenario::preset(name).ok_or_else(|| {
                Error::config(
                    "preset",
                    format!("unknown preset `{name}`, expected doubly_clamped, cantilever or perimeter"),
                )
            })?
        }
        None => Scenario::doubly_clamped(),
    };
    if !doc.contains_key("preset") {
        sc.name = "custom".into();
    }

    for (key, value) in &doc {
        if key == "preset" {
            continue;
        }
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == key) else {
            return Err(Error::config(key.as_str(), "unknown key"));
        };
        let Value::Table(table) = value else {
            return Err(Error::config(key.as_str(), format!("expected a section, found {}", type_name(value))));
        };
        for (k, v) in table {
            let path = format!("{key}.{k}");
            if !keys.contains(&k.as_str()) {
                return Err(Error::config(path, "unknown key"));
            }
            apply(&mut sc, &path, v)?;
        }
    }
    validate(&sc)?;
    Ok(sc)
}

fn apply(sc: &mut Scenario, path: &str, v: &Value) -> Result<()> {
    match path {
        "geometry.length" => sc.length = positive(float(v, path)?, path)?,
        "geometry.height" => sc.height = positive(float(v, path)?, path)?,
        "geometry.target_h" => sc.target_h = positive(float(v, path)?, path)?,
        "geometry.mesh_path" => sc.mesh_path = Some(PathBuf::from(string(v, path)?)),
        "material.E" => sc.young = positive(float(v, path)?, path)?,
        "material.nu" => {
            let nu = float(v, path)?;
            if !(nu > -1.0 && nu < 0.5) {
                return Err(Error::config(path, format!("must lie in (-1, 0.5), got {nu}")));
            }
            sc.poisson = nu;
        }
        "bc.kind" => {
            sc.bc = choice(
                v,
                path,
                &[
                    ("cantilever", BcKind::Cantilever),
                    ("doubly_clamped", BcKind::DoublyClamped),
                    ("free_isostatic", BcKind::FreeIsostatic),
                ],
            )?
        }
        "load.p" => {
            let p = float(v, path)?;
            if !p.is_finite() {
                return Err(Error::config(path, "must be finite"));
            }
            sc.load = p;
        }
        "objective.kind" => {
            sc.objective = choice(
                v,
                path,
                &[("external_work", Objective::ExternalWork), ("perimeter", Objective::Perimeter)],
            )?
        }
        "balance.mode" => {
            sc.balance_mode = choice(v, path, &[("global", BalanceMode::Global), ("local", BalanceMode::Local)])?
        }
        "balance.relation" => {
            sc.balance_relation = choice(
                v,
                path,
                &[("equality", BalanceRelation::Equality), ("inequality", BalanceRelation::Inequality)],
            )?
        }
        "balance.gamma" => {
            let g = float(v, path)?;
            if !g.is_finite() {
                return Err(Error::config(path, "must be finite"));
            }
            sc.gamma = g;
        }
        "solver.inv2tau" => sc.inv2tau = positive(float(v, path)?, path)?,
        "solver.path" => {
            sc.solver_path = choice(v, path, &[("analytic", SolverPath::Analytic), ("numerical", SolverPath::Numerical)])?
        }
        "solver.gradient_linearization" => {
            sc.gradient_linearization = choice(
                v,
                path,
                &[
                    ("previous", GradientLinearization::Previous),
                    ("fixed_point", GradientLinearization::FixedPoint),
                ],
            )?
        }
        "solver.shear_weight" => {
            sc.shear_weight = choice(v, path, &[("engineering", ShearWeight::Engineering), ("frobenius", ShearWeight::Frobenius)])?
        }
        "run.n_iter" => sc.n_iter = count(v, path)?,
        "output.snapshot_every" => sc.snapshot_every = count(v, path)?,
        "output.out_dir" => sc.out_dir = PathBuf::from(string(v, path)?),
        "output.center" => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::config(path, format!("expected [x, y], found {}", type_name(v))))?;
            if arr.len() != 2 {
                return Err(Error::config(path, format!("expected 2 coordinates, got {}", arr.len())));
            }
            sc.center = Some([float(&arr[0], path)?, float(&arr[1], path)?]);
        }
        _ => unreachable!("key list and dispatch disagree on {path}"),
    }
    Ok(())
}

fn validate(sc: &Scenario) -> Result<()> {
    if sc.balance_relation == BalanceRelation::Equality && sc.gamma < 0.0 {
        return Err(Error::config(
            "balance.gamma",
            format!("negative growth {} with equality balance would require resorption", sc.gamma),
        ));
    }
    Ok(())
}

/// Reads and parses a scenario file. A relative `mesh_path` is resolved
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sc = parse_config(&text)?;
    if let (Some(mp), Some(dir)) = (&sc.mesh_path, path.parent()) {
        if mp.is_relative() {
            sc.mesh_path = Some(dir.join(mp));
        }
    }
    Ok(sc)
}

fn enum_name<T: PartialEq>(v: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, t)| *t == v).map(|(n, _)| *n).unwrap_or("?")
}

/// Fully resolved scenario as a document `parse_config` accepts.
pub fn scenario_to_toml(sc: &Scenario) -> String {
    let mut s = String::new();
    s.push_str("[geometry]\n");
    s.push_str(&format!("length = {:?}\nheight = {:?}\ntarget_h = {:?}\n", sc.length, sc.height, sc.target_h));
    if let Some(p) = &sc.mesh_path {
        s.push_str(&format!("mesh_path = {:?}\n", p.display().to_string()));
    }
    s.push_str(&format!("\n[material]\nE = {:?}\nnu = {:?}\n", sc.young, sc.poisson));
    let bc = enum_name(
        sc.bc,
        &[
            ("cantilever", BcKind::Cantilever),
            ("doubly_clamped", BcKind::DoublyClamped),
            ("free_isostatic", BcKind::FreeIsostatic),
        ],
    );
    s.push_str(&format!("\n[bc]\nkind = \"{bc}\"\n"));
    s.push_str(&format!("\n[load]\np = {:?}\n", sc.load));
    let obj = enum_name(
        sc.objective,
        &[("external_work", Objective::ExternalWork), ("perimeter", Objective::Perimeter)],
    );
    s.push_str(&format!("\n[objective]\nkind = \"{obj}\"\n"));
    let mode = enum_name(sc.balance_mode, &[("global", BalanceMode::Global), ("local", BalanceMode::Local)]);
    let rel = enum_name(
        sc.balance_relation,
        &[("equality", BalanceRelation::Equality), ("inequality", BalanceRelation::Inequality)],
    );
    s.push_str(&format!(
        "\n[balance]\nmode = \"{mode}\"\nrelation = \"{rel}\"\ngamma = {:?}\n",
        sc.gamma
    ));
    let path = enum_name(sc.solver_path, &[("analytic", SolverPath::Analytic), ("numerical", SolverPath::Numerical)]);
    let lin = enum_name(
        sc.gradient_linearization,
        &[
            ("previous", GradientLinearization::Previous),
            ("fixed_point", GradientLinearization::FixedPoint),
        ],
    );
    let sw = enum_name(sc.shear_weight, &[("engineering", ShearWeight::Engineering), ("frobenius", ShearWeight::Frobenius)]);
    s.push_str(&format!(
        "\n[solver]\ninv2tau = {:?}\npath = \"{path}\"\ngradient_linearization = \"{lin}\"\nshear_weight = \"{sw}\"\n",
        sc.inv2tau
    ));
    s.push_str(&format!("\n[run]\nn_iter = {}\n", sc.n_iter));
    s.push_str(&format!(
        "\n[output]\nsnapshot_every = {}\nout_dir = {:?}\n",
        sc.snapshot_every,
        sc.out_dir.display().to_string()
    ));
    if let Some(c) = sc.center {
        s.push_str(&format!("center = [{:?}, {:?}]\n", c[0], c[1]));
    }
    s
}
