//! Flat key-value config documents (TOML syntax).

use toml::{Table, Value};

use crate::config::{AngularProfile, ConfigError, IntegratorKind, ModelConfig};
use crate::lattice::LatticeRadius;

use super::preset;

const REQUIRED: [&str; 5] = ["xi", "gamma", "init_c1", "init_c2", "init_c3"];

const KEYS: [&str; 31] = [
    "preset",
    "xi",
    "norm_weight",
    "gamma",
    "init_c1",
    "init_c2",
    "init_c3",
    "rho_max",
    "eta_max",
    "r_max",
    "n_dir",
    "angular_profile",
    "condensate_channel",
    "integrator",
    "dt_max",
    "cfl_safety",
    "positivity_tol",
    "max_rejects",
    "t_end",
    "output_interval",
    "seed",
    "c_q",
    "picard_c",
    "tail_levels",
    "phi_levels",
    "layers",
    "shell_levels",
    "coercivity_levels",
    "concentration_levels",
    "window_eps",
    "window_rate_c1",
];

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ModelConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("document", e.message().to_string()))?;
    parse_table(&table)
}

fn mismatch(key: &str, want: &str) -> ConfigError {
    ConfigError::new(key, format!("expected {want}"))
}

fn get_f64(v: &Value, key: &str) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(mismatch(key, "a number")),
    }
}

fn get_u32(v: &Value, key: &str) -> Result<u32, ConfigError> {
    match v {
        Value::Integer(i) => {
            u32::try_from(*i).map_err(|_| mismatch(key, "a nonnegative 32-bit integer"))
        }
        _ => Err(mismatch(key, "an integer")),
    }
}

fn get_u32_list(v: &Value, key: &str) -> Result<Vec<u32>, ConfigError> {
    match v {
        Value::Array(a) => a.iter().map(|x| get_u32(x, key)).collect(),
        _ => Err(mismatch(key, "an array of integers")),
    }
}

fn get_str<'a>(v: &'a Value, key: &str) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| mismatch(key, "a string"))
}

/// Parses `"m"`, `"m/d"` or `"m/Ξ^η"` (with `d` a power of Ξ) as a radius;
/// `"0"` is the zero radius.
pub fn parse_radius(text: &str, xi: u32) -> Result<LatticeRadius, ConfigError> {
    if text.trim() == "0" {
        return Ok(LatticeRadius::zero(xi));
    }
    radius_value(&Value::String(text.to_string()), xi)
}

/// `m`, `"m"`, `"m/d"` or `"m/Ξ^η"`, with `d` a power of Ξ.
fn radius_value(v: &Value, xi: u32) -> Result<LatticeRadius, ConfigError> {
    let key = "r_max";
    let bad = || mismatch(key, "a positive integer or a string \"m/Ξ^η\"");
    let (m, eta) = match v {
        Value::Integer(i) => (u128::try_from(*i).map_err(|_| bad())?, 0),
        Value::String(s) => {
            let (num, den) = match s.split_once('/') {
                Some((n, d)) => (n.trim(), Some(d.trim())),
                None => (s.trim(), None),
            };
            let m: u128 = num.parse().map_err(|_| bad())?;
            let eta = match den {
                None => 0,
                Some(d) => match d.split_once('^') {
                    Some((b, e)) => {
                        if b.trim().parse::<u32>().ok() != Some(xi) {
                            return Err(ConfigError::new(key, "denominator base must be Ξ"));
                        }
                        e.trim().parse::<u32>().map_err(|_| bad())?
                    }
                    None => {
                        let mut d: u128 = d.parse().map_err(|_| bad())?;
                        let mut eta = 0;
                        while d > 1 && d.is_multiple_of(xi as u128) {
                            d /= xi as u128;
                            eta += 1;
                        }
                        if d != 1 {
                            return Err(ConfigError::new(key, "denominator must be a power of Ξ"));
                        }
                        eta
                    }
                },
            };
            (m, eta)
        }
        _ => return Err(bad()),
    };
    if m == 0 {
        return Err(ConfigError::new(key, "r_max must be positive"));
    }
    Ok(LatticeRadius::canonical(xi, m, eta))
}

/// Builds a config from a parsed table: an optional `preset` base, then
/// every given key on top. Without a preset the keys `xi`, `gamma`,
/// `init_c1..3` are required.
pub fn parse_table(table: &Table) -> Result<ModelConfig, ConfigError> {
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::new(key.as_str(), "unknown key"));
        }
    }
    let mut c = match table.get("preset") {
        Some(v) => {
            preset(get_str(v, "preset")?).map_err(|e| ConfigError::new("preset", e.to_string()))?
        }
        None => {
            if let Some(missing) = REQUIRED.iter().find(|k| !table.contains_key(**k)) {
                return Err(ConfigError::new(*missing, "required key missing"));
            }
            ModelConfig::default()
        }
    };
    if let Some(v) = table.get("xi") {
        c.xi = get_u32(v, "xi")?;
        c.r_max = LatticeRadius::canonical(c.xi, c.r_max.numerator(), c.r_max.level());
    }
    for (key, slot) in [
        ("norm_weight", &mut c.norm_weight),
        ("gamma", &mut c.gamma),
        ("init_c1", &mut c.init_c1),
        ("init_c2", &mut c.init_c2),
        ("init_c3", &mut c.init_c3),
        ("dt_max", &mut c.dt_max),
        ("cfl_safety", &mut c.cfl_safety),
        ("positivity_tol", &mut c.positivity_tol),
        ("t_end", &mut c.t_end),
        ("output_interval", &mut c.output_interval),
        ("c_q", &mut c.c_q),
        ("picard_c", &mut c.picard_c),
        ("window_eps", &mut c.window_eps),
        ("window_rate_c1", &mut c.window_rate_c1),
    ] {
        if let Some(v) = table.get(key) {
            *slot = get_f64(v, key)?;
        }
    }
    for (key, slot) in [
        ("rho_max", &mut c.rho_max),
        ("eta_max", &mut c.eta_max),
        ("max_rejects", &mut c.max_rejects),
    ] {
        if let Some(v) = table.get(key) {
            *slot = get_u32(v, key)?;
        }
    }
    for (key, slot) in [
        ("tail_levels", &mut c.tail_levels),
        ("phi_levels", &mut c.phi_levels),
        ("shell_levels", &mut c.shell_levels),
        ("coercivity_levels", &mut c.coercivity_levels),
        ("concentration_levels", &mut c.concentration_levels),
    ] {
        if let Some(v) = table.get(key) {
            *slot = get_u32_list(v, key)?;
        }
    }
    if let Some(v) = table.get("r_max") {
        c.r_max = radius_value(v, c.xi)?;
    }
    if let Some(v) = table.get("n_dir") {
        c.n_dir = get_u32(v, "n_dir")? as usize;
    }
    if let Some(v) = table.get("angular_profile") {
        c.angular_profile =
            AngularProfile::parse(get_str(v, "angular_profile")?).ok_or_else(|| {
                mismatch(
                    "angular_profile",
                    "one of constant, sinusoidal, random-band",
                )
            })?;
    }
    if let Some(v) = table.get("condensate_channel") {
        c.condensate_channel = v
            .as_bool()
            .ok_or_else(|| mismatch("condensate_channel", "a boolean"))?;
    }
    if let Some(v) = table.get("integrator") {
        c.integrator = match get_str(v, "integrator")? {
            "rk4" => IntegratorKind::Rk4,
            "patankar" => IntegratorKind::Patankar,
            _ => return Err(mismatch("integrator", "rk4 or patankar")),
        };
    }
    if let Some(v) = table.get("seed") {
        c.seed = match v {
            Value::Integer(i) => {
                u64::try_from(*i).map_err(|_| mismatch("seed", "a nonnegative integer"))?
            }
            Value::String(s) => s
                .parse()
                .map_err(|_| mismatch("seed", "a 64-bit unsigned integer"))?,
            _ => return Err(mismatch("seed", "an integer")),
        };
    }
    if let Some(v) = table.get("layers") {
        let arr = v
            .as_array()
            .ok_or_else(|| mismatch("layers", "an array of [ρ, ε] pairs"))?;
        c.layers = arr
            .iter()
            .map(|p| match p.as_array().map(Vec::as_slice) {
                Some([rho, eps]) => Ok((get_u32(rho, "layers")?, get_f64(eps, "layers")?)),
                _ => Err(mismatch("layers", "an array of [ρ, ε] pairs")),
            })
            .collect::<Result<_, _>>()?;
    }
    c.validate()?;
    Ok(c)
}

fn int_list(v: &[u32]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect())
}

/// Every key of `config`, in a form [`parse_table`] reads back exactly.
pub fn config_table(c: &ModelConfig) -> Table {
    let mut t = Table::new();
    let mut put = |k: &str, v: Value| {
        t.insert(k.to_string(), v);
    };
    put("xi", Value::Integer(c.xi as i64));
    put("norm_weight", Value::Float(c.norm_weight));
    put("gamma", Value::Float(c.gamma));
    put("init_c1", Value::Float(c.init_c1));
    put("init_c2", Value::Float(c.init_c2));
    put("init_c3", Value::Float(c.init_c3));
    put("rho_max", Value::Integer(c.rho_max as i64));
    put("eta_max", Value::Integer(c.eta_max as i64));
    put(
        "r_max",
        if c.r_max.level() == 0 && c.r_max.numerator() <= i64::MAX as u128 {
            Value::Integer(c.r_max.numerator() as i64)
        } else {
            Value::String(format!(
                "{}/{}^{}",
                c.r_max.numerator(),
                c.xi,
                c.r_max.level()
            ))
        },
    );
    put("n_dir", Value::Integer(c.n_dir as i64));
    put(
        "angular_profile",
        Value::String(c.angular_profile.name().into()),
    );
    put("condensate_channel", Value::Boolean(c.condensate_channel));
    put("integrator", Value::String(c.integrator.name().into()));
    put("dt_max", Value::Float(c.dt_max));
    put("cfl_safety", Value::Float(c.cfl_safety));
    put("positivity_tol", Value::Float(c.positivity_tol));
    put("max_rejects", Value::Integer(c.max_rejects as i64));
    put("t_end", Value::Float(c.t_end));
    put("output_interval", Value::Float(c.output_interval));
    put(
        "seed",
        match i64::try_from(c.seed) {
            Ok(i) => Value::Integer(i),
            Err(_) => Value::String(c.seed.to_string()),
        },
    );
    put("c_q", Value::Float(c.c_q));
    put("picard_c", Value::Float(c.picard_c));
    put("tail_levels", int_list(&c.tail_levels));
    put("phi_levels", int_list(&c.phi_levels));
    put(
        "layers",
        Value::Array(
            c.layers
                .iter()
                .map(|&(r, e)| Value::Array(vec![Value::Integer(r as i64), Value::Float(e)]))
                .collect(),
        ),
    );
    put("shell_levels", int_list(&c.shell_levels));
    put("coercivity_levels", int_list(&c.coercivity_levels));
    put("concentration_levels", int_list(&c.concentration_levels));
    put("window_eps", Value::Float(c.window_eps));
    put("window_rate_c1", Value::Float(c.window_rate_c1));
    t
}

pub fn config_to_toml(c: &ModelConfig) -> String {
    toml::to_string(&config_table(c)).expect("config table serializes")
}
