use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::GridSpec;
use crate::physics::{BeamModel, DoseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Num,
    Int,
    Flag,
    List,
}

/// (key, kind, default, description)
const KEYS: &[(&str, Kind, &str, &str)] = &[
    ("E_K", Kind::Num, "300000", "kinetic energy, eV"),
    ("E", Kind::Num, "20", "energy loss of inelastic events, eV"),
    ("Lambda", Kind::Num, "300", "inelastic mean free path, nm"),
    ("t", Kind::Num, "30", "specimen thickness, nm"),
    ("R", Kind::Num, "7e-4", "damage constant, nm^4"),
    ("zeta", Kind::Num, "0.064", "dose allocation constant"),
    ("M", Kind::Int, "16", "protocol grid size"),
    ("sigma", Kind::Num, "1", "beam array pitch, nm"),
    ("beta_L", Kind::Num, "2", "band-pass low cut, mrad"),
    ("beta_H", Kind::Num, "3.5", "band-pass high cut, mrad"),
    ("grid", Kind::Int, "240", "image size, pixels"),
    ("pixel", Kind::Num, "0.05", "pixel size, nm"),
    ("blur", Kind::Num, "0.1", "atom smoothing width, nm"),
    ("water", Kind::Flag, "0", "add ice background outside the molecular mask"),
    ("k1_high", Kind::Num, "10", "Lambda/t of panels (c), (d)"),
    ("k1_low", Kind::Num, "5", "Lambda/t of panels (e), (f)"),
    ("lambda_over_t", Kind::List, "10,5", "Lambda/t columns of the repetition curves"),
    ("theta_bar", Kind::Num, "1e-3", "alternating specimen phase"),
    ("k", Kind::Int, "50", "electrons per round"),
    ("rounds", Kind::Int, "10000", "measurement rounds"),
    ("electron_log", Kind::Flag, "0", "write every electron outcome"),
    ("isn_betas", Kind::List, "2,4,8", "stripe periods of the inelastic sweep, mrad"),
    ("isn_trials", Kind::Int, "500", "single-event trials per period"),
    ("isn_spacing", Kind::Num, "0.04", "angular lattice step of the envelope, mrad"),
    ("mu_beta_max", Kind::Num, "12", "upper end of the mu curve, mrad"),
    ("mu_points", Kind::Int, "48", "points on the mu curve"),
    ("N", Kind::Num, "1e8", "electrons per exposure"),
    ("alpha", Kind::Num, "0.01", "detection weight of the measured element"),
    ("theta", Kind::Num, "0.01", "true phase for the reference schemes"),
    ("n_pixels", Kind::Int, "2", "pixels of the discrete schemes"),
    ("trials", Kind::Int, "20000", "Monte Carlo exposures"),
];

const ALIASES: &[(&str, &str)] =
    &[("Λ", "Lambda"), ("ζ", "zeta"), ("σ", "sigma"), ("β_L", "beta_L"), ("β_H", "beta_H"), ("θ̄", "theta_bar")];

const PROFILES: &[(&str, &[(&str, &str)])] = &[
    ("standard", &[]),
    ("quick", &[("rounds", "500"), ("isn_trials", "60"), ("trials", "2000"), ("grid", "120"), ("mu_points", "12")]),
];

pub fn profile_names() -> Vec<&'static str> {
    PROFILES.iter().map(|p| p.0).collect()
}

/// Key table as `key = default  # description` lines.
pub fn describe_keys() -> String {
    KEYS.iter().map(|(k, _, d, h)| format!("{k} = {d}  # {h}\n")).collect()
}

fn canonical(key: &str) -> Result<&'static str> {
    let key = key.trim();
    let key = ALIASES.iter().find(|a| a.0 == key).map(|a| a.1).unwrap_or(key);
    KEYS.iter().find(|k| k.0 == key).map(|k| k.0).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))
}

fn kind_of(key: &str) -> Kind {
    KEYS.iter().find(|k| k.0 == key).map(|k| k.1).unwrap_or(Kind::Num)
}

fn check_value(key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| Error::Config(format!("{key}: '{value}' is not {what}"));
    let finite = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    match kind_of(key) {
        Kind::Num => finite(value).map(|_| ()).ok_or_else(|| bad("a finite number")),
        Kind::Int => value.trim().parse::<u64>().map(|_| ()).map_err(|_| bad("a non-negative integer")),
        Kind::Flag => matches!(value.trim(), "0" | "1" | "true" | "false").then_some(()).ok_or_else(|| bad("0 or 1")),
        Kind::List => {
            let items: Vec<&str> = value.split(',').collect();
            if items.iter().all(|s| finite(s).is_some()) && !value.trim().is_empty() {
                Ok(())
            } else {
                Err(bad("a comma-separated list of numbers"))
            }
        }
    }
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(profile: &str, seed: u64, output_dir: PathBuf) -> Result<Self> {
        let prof = PROFILES.iter().find(|p| p.0 == profile).ok_or_else(|| {
            Error::Config(format!("unknown profile '{profile}' (known: {})", profile_names().join(", ")))
        })?;
        let mut values: BTreeMap<String, String> =
            KEYS.iter().map(|(k, _, d, _)| (k.to_string(), d.to_string())).collect();
        for (k, v) in prof.1.iter() {
            values.insert(k.to_string(), v.to_string());
        }
        Ok(Self { profile: profile.to_string(), seed, output_dir, values })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical(key)?;
        check_value(key, value)?;
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// `key=value` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config(format!("'{pair}' is not key=value")))?;
        self.set(k, v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_config_text(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn num(&self, key: &str) -> f64 {
        self.values[key].parse().expect("validated on insert")
    }

    pub fn int(&self, key: &str) -> usize {
        self.values[key].parse().expect("validated on insert")
    }

    pub fn flag(&self, key: &str) -> bool {
        matches!(self.values[key].as_str(), "1" | "true")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        self.values[key].split(',').map(|s| s.trim().parse().expect("validated on insert")).collect()
    }

    /// Sorted `key=value` lines; the hashed form.
    pub fn canonical_text(&self) -> String {
        let mut s = format!("profile={}\nseed={}\n", self.profile, self.seed);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.canonical_text().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "profile": self.profile,
            "seed": self.seed,
            "values": self.values,
        })
    }

    /// Inverse of `to_json`; every value goes through the same validation.
    pub fn from_json(v: &serde_json::Value, output_dir: PathBuf) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("config json: {m}"));
        let profile = v["profile"].as_str().ok_or_else(|| bad("missing profile"))?;
        let seed = v["seed"].as_u64().ok_or_else(|| bad("missing seed"))?;
        let mut c = Self::new(profile, seed, output_dir)?;
        let vals = v["values"].as_object().ok_or_else(|| bad("missing values"))?;
        for (k, val) in vals {
            let s = match val {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            c.set(k, &s)?;
        }
        Ok(c)
    }

    pub fn beam(&self) -> Result<BeamModel> {
        BeamModel::new(self.num("E_K"), self.num("E"), self.num("Lambda"))
    }

    pub fn dose(&self) -> Result<DoseModel> {
        DoseModel::new(self.num("R"), self.num("zeta"), 1.0)
    }

    pub fn image_grid(&self) -> Result<GridSpec> {
        let n = self.int("grid");
        GridSpec::new(n, n, self.num("pixel"))
    }

    pub fn thickness(&self) -> Result<f64> {
        let t = self.num("t");
        if !(t > 0.0) {
            return Err(Error::Config("t must be positive".into()));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::new("standard", 7, PathBuf::from("out")).unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let mut c = cfg();
        assert_eq!(c.num("E_K"), 300e3);
        c.set_pair("E_K=200000").unwrap();
        c.set("Λ", "250").unwrap();
        assert_eq!(c.num("Lambda"), 250.0);
        assert!((c.beam().unwrap().kinetic_energy_ev - 2e5).abs() < 1e-9);
        assert_eq!(c.list("lambda_over_t"), vec![10.0, 5.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = cfg();
        assert!(matches!(c.set("bogus", "1"), Err(Error::Config(_))));
        assert!(c.set("M", "-3").is_err());
        assert!(c.set("E", "nan").is_err());
        assert!(c.set("water", "yes").is_err());
        assert!(c.set_pair("novalue").is_err());
        assert!(RunConfig::new("nope", 1, PathBuf::new()).is_err());
        assert!(c.apply_text("E = 10\njunk line\n").is_err());
    }

    #[test]
    fn config_text() {
        let mut c = cfg();
        c.apply_text("# header\nE = 25   # eV\n\nrounds=12\n").unwrap();
        assert_eq!(c.num("E"), 25.0);
        assert_eq!(c.int("rounds"), 12);
    }

    #[test]
    fn json_round_trip_and_hash() {
        let mut c = cfg();
        c.set("sigma", "0.5").unwrap();
        let back = RunConfig::from_json(&c.to_json(), PathBuf::from("out")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut d = c.clone();
        d.set("sigma", "0.6").unwrap();
        assert_ne!(d.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn quick_profile() {
        let q = RunConfig::new("quick", 1, PathBuf::new()).unwrap();
        assert_eq!(q.int("rounds"), 500);
        assert!(describe_keys().contains("isn_trials"));
    }
}
