use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ncs_core::lqr::{solve_dare, LqrWeights};
use ncs_core::plant::DiscretePlant;
use ncs_core::synth::SynthConfig;
use ncs_core::Matrix;
use serde::Deserialize;

/// A fixed design for the single-design subcommands: either LQR weights or a
/// gain given directly (row-major, `inputs × states` entries).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub q: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub synth: SynthConfig,
    pub design: Option<DesignSection>,
}

pub fn parse(text: &str) -> Result<FileConfig> {
    let mut table: toml::Table = toml::from_str(text)?;
    let design = match table.remove("design") {
        Some(v) => Some(
            v.try_into::<DesignSection>()
                .context("invalid [design] section")?,
        ),
        None => None,
    };
    let synth: SynthConfig = toml::Value::Table(table).try_into()?;
    Ok(FileConfig { synth, design })
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

pub enum Gain {
    Direct(Matrix),
    Weights(LqrWeights),
}

impl FileConfig {
    pub fn gain_source(&self, d: &DiscretePlant) -> Result<Gain> {
        let Some(design) = &self.design else {
            bail!("this command needs a [design] section with q and r, or k");
        };
        if let Some(k) = &design.k {
            if design.q.is_some() || design.r.is_some() {
                bail!("[design] takes either k or (q, r), not both");
            }
            let m = d.inputs();
            if k.len() != m * d.states() {
                bail!("k needs {} entries, got {}", m * d.states(), k.len());
            }
            return Ok(Gain::Direct(Matrix::new(m, d.states(), k.clone())?));
        }
        match (&design.q, design.r) {
            (Some(q), Some(r)) => Ok(Gain::Weights(LqrWeights::new(q.clone(), r)?)),
            _ => bail!("[design] needs both q and r when k is absent"),
        }
    }
}

/// Gain from the design section; weights go through the Riccati solver.
/// `Ok(None)` means the weights are valid but produce no stabilizing gain.
pub fn resolve_gain(gain: &Gain, d: &DiscretePlant) -> Option<Matrix> {
    match gain {
        Gain::Direct(k) => Some(k.clone()),
        Gain::Weights(w) => solve_dare(d, w).ok().map(|design| design.k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.synth, SynthConfig::default());
        assert!(cfg.design.is_none());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = parse(
            r#"
            p_tx = 0.8
            outer = "ga"
            weight_bounds = [[-1.0, 1.0], [-1.0, 1.0], [-3.0, 0.0]]

            [plant]
            a = { rows = 2, cols = 2, data = [0.0, 1.0, 0.0, -0.1] }
            b = { rows = 2, cols = 1, data = [0.0, 0.1] }
            c = { rows = 1, cols = 2, data = [1.0, 0.0] }

            [sim]
            realizations = 5

            [design]
            k = [1.0, 4.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.synth.p_tx, 0.8);
        assert_eq!(cfg.synth.sim.realizations, 5);
        assert_eq!(cfg.synth.sim.horizon, 100);
        assert_eq!(cfg.design.unwrap().k, Some(vec![1.0, 4.0]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("p_txx = 0.5").is_err());
        assert!(parse("[sim]\nhorizonn = 5").is_err());
        assert!(parse("[design]\nkk = [1.0]").is_err());
    }
}
