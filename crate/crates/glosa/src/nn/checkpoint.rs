//! Plain-text, versioned policy checkpoints: a short header followed by
//! named tensors, one value per line. Values print in Rust's shortest
//! round-trip form, so save/load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dense::Dense;
use super::policy::{PolicyConfig, PolicySet};
use crate::error::{GlosaError, Result};

const MAGIC: &str = "glosa-policy";
const VERSION: u32 = 1;

pub fn policy_to_string(p: &PolicySet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} v{VERSION}");
    let _ = writeln!(s, "with_discrete {}", p.discrete.is_some());
    let _ = writeln!(s, "obs_dim {}", p.cfg.obs_dim);
    let _ = writeln!(s, "hidden {}", p.cfg.hidden);
    let _ = writeln!(s, "accel_limit {}", p.cfg.accel_limit);
    let _ = writeln!(s, "sigma_min {}", p.cfg.sigma_min);
    let _ = writeln!(s, "sigma_max {}", p.cfg.sigma_max);
    let tensor = |s: &mut String, name: &str, vals: &[f64]| {
        let _ = writeln!(s, "tensor {name} {}", vals.len());
        for v in vals {
            let _ = writeln!(s, "{v}");
        }
    };
    tensor(&mut s, "encoder.w", &p.encoder.w);
    tensor(&mut s, "encoder.b", &p.encoder.b);
    if let Some(d) = &p.discrete {
        tensor(&mut s, "discrete.w", &d.w);
        tensor(&mut s, "discrete.b", &d.b);
    }
    tensor(&mut s, "continuous.w", &p.continuous.w);
    tensor(&mut s, "continuous.b", &p.continuous.b);
    tensor(&mut s, "log_sigma", &[p.log_sigma]);
    tensor(&mut s, "critic_hidden.w", &p.critic_hidden.w);
    tensor(&mut s, "critic_hidden.b", &p.critic_hidden.b);
    tensor(&mut s, "critic_out.w", &p.critic_out.w);
    tensor(&mut s, "critic_out.b", &p.critic_out.b);
    s
}

fn bad(msg: impl Into<String>) -> GlosaError {
    GlosaError::Checkpoint(msg.into())
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.iter.next().ok_or_else(|| bad(format!("unexpected end at line {}", self.line_no)))
    }
}

fn parse_field<'a>(lines: &mut Lines<'a>, name: &str) -> Result<&'a str> {
    let line = lines.next()?;
    let (key, value) = line
        .split_once(' ')
        .ok_or_else(|| bad(format!("malformed line {:?}, expected `{name} <value>`", line)))?;
    if key != name {
        return Err(bad(format!("expected field {name}, found {key}")));
    }
    Ok(value)
}

fn parse_tensor(lines: &mut Lines, name: &str, expect_len: usize) -> Result<Vec<f64>> {
    let header = lines.next()?;
    let mut parts = header.split(' ');
    if parts.next() != Some("tensor") || parts.next() != Some(name) {
        return Err(bad(format!("expected `tensor {name} ..`, found {header:?}")));
    }
    let len: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(format!("bad length in {header:?}")))?;
    if len != expect_len {
        return Err(bad(format!("tensor {name}: expected {expect_len} values, header says {len}")));
    }
    let mut vals = Vec::with_capacity(len);
    for _ in 0..len {
        let v: f64 = lines
            .next()?
            .parse()
            .map_err(|_| bad(format!("tensor {name}: unparseable value near line {}", lines.line_no)))?;
        if !v.is_finite() {
            return Err(bad(format!("tensor {name}: non-finite value")));
        }
        vals.push(v);
    }
    Ok(vals)
}

pub fn policy_from_str(s: &str) -> Result<PolicySet> {
    let mut lines = Lines { iter: s.lines(), line_no: 0 };
    let header = lines.next()?;
    let expected = format!("{MAGIC} v{VERSION}");
    if header != expected {
        return Err(bad(format!("bad header {header:?}, expected {expected:?}")));
    }
    let with_discrete: bool =
        parse_field(&mut lines, "with_discrete")?.parse().map_err(|_| bad("bad with_discrete"))?;
    let obs_dim: usize =
        parse_field(&mut lines, "obs_dim")?.parse().map_err(|_| bad("bad obs_dim"))?;
    let hidden: usize = parse_field(&mut lines, "hidden")?.parse().map_err(|_| bad("bad hidden"))?;
    let accel_limit: f64 =
        parse_field(&mut lines, "accel_limit")?.parse().map_err(|_| bad("bad accel_limit"))?;
    let sigma_min: f64 =
        parse_field(&mut lines, "sigma_min")?.parse().map_err(|_| bad("bad sigma_min"))?;
    let sigma_max: f64 =
        parse_field(&mut lines, "sigma_max")?.parse().map_err(|_| bad("bad sigma_max"))?;

    let fill = |layer: &mut Dense, name: &str, lines: &mut Lines| -> Result<()> {
        layer.w = parse_tensor(lines, &format!("{name}.w"), layer.w.len())?;
        layer.b = parse_tensor(lines, &format!("{name}.b"), layer.b.len())?;
        Ok(())
    };

    let mut encoder = Dense::zeros(obs_dim, hidden);
    fill(&mut encoder, "encoder", &mut lines)?;
    let discrete = if with_discrete {
        let mut d = Dense::zeros(hidden, 2);
        fill(&mut d, "discrete", &mut lines)?;
        Some(d)
    } else {
        None
    };
    let mut continuous = Dense::zeros(hidden + 1, 1);
    fill(&mut continuous, "continuous", &mut lines)?;
    let log_sigma = parse_tensor(&mut lines, "log_sigma", 1)?[0];
    let mut critic_hidden = Dense::zeros(obs_dim, hidden);
    fill(&mut critic_hidden, "critic_hidden", &mut lines)?;
    let mut critic_out = Dense::zeros(hidden, 1);
    fill(&mut critic_out, "critic_out", &mut lines)?;
    if lines.iter.next().is_some() {
        return Err(bad("trailing content after final tensor"));
    }

    let cfg = PolicyConfig {
        obs_dim,
        hidden,
        accel_limit,
        sigma_init: log_sigma.exp().clamp(sigma_min, sigma_max),
        sigma_min,
        sigma_max,
        with_discrete,
    };
    cfg.validate()?;
    Ok(PolicySet { cfg, encoder, discrete, continuous, log_sigma, critic_hidden, critic_out })
}

pub fn save_policy(p: &PolicySet, path: &Path) -> Result<()> {
    fs::write(path, policy_to_string(p))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicySet> {
    let text = fs::read_to_string(path)?;
    policy_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};

    fn sample_policy(with_discrete: bool) -> PolicySet {
        let cfg = PolicyConfig { obs_dim: 5, hidden: 7, with_discrete, ..PolicyConfig::default() };
        let mut p = PolicySet::new(cfg, &mut derive_rng(3, Stream::Init, 0)).unwrap();
        p.log_sigma = -0.37;
        p
    }

    fn assert_same(a: &PolicySet, b: &PolicySet) {
        let bits = |v: &[f64]| -> Vec<u64> { v.iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&a.encoder.w), bits(&b.encoder.w));
        assert_eq!(bits(&a.encoder.b), bits(&b.encoder.b));
        assert_eq!(a.discrete.is_some(), b.discrete.is_some());
        if let (Some(x), Some(y)) = (&a.discrete, &b.discrete) {
            assert_eq!(bits(&x.w), bits(&y.w));
            assert_eq!(bits(&x.b), bits(&y.b));
        }
        assert_eq!(bits(&a.continuous.w), bits(&b.continuous.w));
        assert_eq!(bits(&a.continuous.b), bits(&b.continuous.b));
        assert_eq!(a.log_sigma.to_bits(), b.log_sigma.to_bits());
        assert_eq!(bits(&a.critic_hidden.w), bits(&b.critic_hidden.w));
        assert_eq!(bits(&a.critic_out.w), bits(&b.critic_out.w));
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for with_discrete in [true, false] {
            let p = sample_policy(with_discrete);
            let q = policy_from_str(&policy_to_string(&p)).unwrap();
            assert_same(&p, &q);
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.txt");
        let p = sample_policy(true);
        save_policy(&p, &path).unwrap();
        let q = load_policy(&path).unwrap();
        assert_same(&p, &q);
    }

    #[test]
    fn rejects_malformed_checkpoints() {
        let p = sample_policy(true);
        let good = policy_to_string(&p);

        let wrong_version = good.replacen("v1", "v9", 1);
        assert!(policy_from_str(&wrong_version).is_err());

        let truncated = &good[..good.len() / 2];
        assert!(policy_from_str(truncated).is_err());

        let mut trailing = good.clone();
        trailing.push_str("extra\n");
        assert!(policy_from_str(&trailing).is_err());

        let poisoned = good.replacen("tensor encoder.w", "tensor encoder.q", 1);
        assert!(policy_from_str(&poisoned).is_err());

        // Replace the first value of encoder.w with NaN.
        let mut lines: Vec<&str> = good.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with("tensor encoder.w")).unwrap();
        lines[idx + 1] = "NaN";
        assert!(policy_from_str(&lines.join("\n")).is_err());
    }
}
