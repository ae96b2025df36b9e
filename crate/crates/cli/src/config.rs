//! Flat `key = value` configuration files. Keys mirror the trial
//! configuration; flags given on the command line override file values.
//!
//! ```text
//! # comment
//! domain = torus
//! n = 256
//! seed = 7
//! resolution = 512
//! alpha = 4
//! t = 3.69            # overrides the schedule
//! xi = 0.18
//! tol_mass = 1e-3
//! samples_per_cell = 10
//! sinkhorn.schedule = 0.1,0.03,0.01,0.003,0.001,0.0003,0.0001
//! sinkhorn.coarse_resolution = 64
//! sinkhorn.max_iterations = 1000
//! sinkhorn.tol = 1e-4
//! sinkhorn.relaxation = 1.5
//! ns = 256,1024,4096
//! trials = 32
//! base_seed = 1
//! ```

use sdmatch::experiments::{SweepPlan, TrialConfig};
use sdmatch::Domain;
use std::collections::BTreeMap;
use std::str::FromStr;

pub const KEYS: &[&str] = &[
    "domain",
    "n",
    "seed",
    "resolution",
    "alpha",
    "t",
    "xi",
    "tol_mass",
    "samples_per_cell",
    "sinkhorn.schedule",
    "sinkhorn.coarse_resolution",
    "sinkhorn.max_iterations",
    "sinkhorn.tol",
    "sinkhorn.relaxation",
    "ns",
    "trials",
    "base_seed",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`, got `{raw}`", i + 1))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(format!("line {}: unknown key `{k}`", i + 1));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Settings(map))
    }

    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v);
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("{key} = `{v}`: {e}")))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<T>().map_err(|e| format!("{key} = `{v}`: {e}")))
                    .collect()
            })
            .transpose()
    }

    /// Trial configuration; `n` defaults to `default_n` when given.
    pub fn trial_config(&self, default_n: Option<usize>) -> Result<TrialConfig, String> {
        let domain: Domain = self.get("domain")?.unwrap_or(Domain::Torus);
        let n = match (self.get::<usize>("n")?, default_n) {
            (Some(n), _) | (None, Some(n)) => n,
            (None, None) => return Err("missing required setting `n` (use --n or a config file)".into()),
        };
        let seed = self.get("seed")?.unwrap_or(0);
        let mut c = TrialConfig::new(domain, n, seed).map_err(|e| e.to_string())?;
        if let Some(a) = self.get("alpha")? {
            c = c.with_alpha(a).map_err(|e| e.to_string())?;
        }
        if let Some(t) = self.get("t")? {
            c.t = t;
        }
        if let Some(xi) = self.get("xi")? {
            c.xi = xi;
        }
        if let Some(r) = self.get("resolution")? {
            c.resolution = r;
        }
        if let Some(v) = self.get("tol_mass")? {
            c.tol_mass = v;
        }
        if let Some(v) = self.get("samples_per_cell")? {
            c.samples_per_cell = v;
        }
        if let Some(v) = self.list("sinkhorn.schedule")? {
            c.sinkhorn.schedule = v;
        }
        if let Some(v) = self.get("sinkhorn.coarse_resolution")? {
            c.sinkhorn.coarse_resolution = v;
        }
        if let Some(v) = self.get("sinkhorn.max_iterations")? {
            c.sinkhorn.max_iterations = v;
        }
        if let Some(v) = self.get("sinkhorn.tol")? {
            c.sinkhorn.tol = v;
        }
        if let Some(v) = self.get("sinkhorn.relaxation")? {
            c.sinkhorn.relaxation = v;
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, String> {
        let ns: Vec<usize> = self.list("ns")?.unwrap_or_else(|| vec![256, 1024, 4096]);
        if self.has("t") || self.has("xi") {
            return Err("a sweep derives t and xi per n; set alpha instead".into());
        }
        let first = *ns.first().ok_or("ns is empty")?;
        let template = self.trial_config(Some(first))?;
        let plan = SweepPlan {
            ns,
            trials: self.get("trials")?.unwrap_or(32),
            base_seed: self.get("base_seed")?.unwrap_or(0),
            template,
        };
        plan.configs().map_err(|e| e.to_string())?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let mut s = Settings::parse("# demo\nn = 256\nseed=7 # trailing\ndomain = square\nresolution = 256\n").unwrap();
        s.set("seed", Some("9".into()));
        s.set("n", None);
        let c = s.trial_config(None).unwrap();
        assert_eq!((c.n, c.seed, c.domain, c.resolution), (256, 9, Domain::Square, 256));
        assert!((c.t - 256f64.ln().powi(4) / 256.0).abs() < 1e-15);
    }

    #[test]
    fn errors_are_reported() {
        assert!(Settings::parse("bogus = 1").is_err());
        assert!(Settings::parse("n 3").is_err());
        assert!(Settings::parse("n = x").unwrap().trial_config(None).is_err());
        assert!(Settings::default().trial_config(None).unwrap_err().contains("missing"));
        let s = Settings::parse("ns = 64,128\ntrials = 4\nresolution = 128\nsinkhorn.schedule = 0.1, 0.01").unwrap();
        let plan = s.sweep_plan().unwrap();
        assert_eq!(plan.configs().unwrap().len(), 8);
        assert_eq!(plan.template.sinkhorn.schedule, vec![0.1, 0.01]);
        assert!(Settings::parse("ns = 128,64").unwrap().sweep_plan().is_err());
    }
}
