//! Versioned plain-text model files.
//!
//! ```text
//! coral-model 1
//! meta <free text, one line>          (optional)
//! head coral|or|ce
//! input_dim <d>
//! hidden <h1> <h2> ...
//! ranks <K>
//! label <text>                        (K lines, in rank order)
//! standardize none
//! standardize <d>                     (or: followed by two lines)
//! mean <d values>
//! scale <d values>
//! params <P>
//! <P lines, one value each, in parameter declaration order>
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::Standardizer;
use crate::error::{CoralError, Result};
use crate::model::{Architecture, OrdinalModel};
use crate::ordinal::RankSpec;

pub const MAGIC: &str = "coral-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: OrdinalModel,
    pub ranks: RankSpec,
    pub standardizer: Option<Standardizer>,
    pub meta: Option<String>,
}

impl ModelFile {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let arch = self.model.arch();
        writeln!(out, "{MAGIC} {VERSION}")?;
        if let Some(meta) = &self.meta {
            writeln!(out, "meta {}", meta.replace('\n', " "))?;
        }
        writeln!(out, "head {}", arch.head)?;
        writeln!(out, "input_dim {}", arch.input_dim)?;
        let hidden: Vec<String> = arch.hidden.iter().map(ToString::to_string).collect();
        writeln!(out, "hidden {}", hidden.join(" "))?;
        writeln!(out, "ranks {}", arch.num_ranks)?;
        for l in self.ranks.labels() {
            writeln!(out, "label {}", l.replace('\n', " "))?;
        }
        match &self.standardizer {
            None => writeln!(out, "standardize none")?,
            Some(st) => {
                writeln!(out, "standardize {}", st.mean.len())?;
                writeln!(out, "mean {}", join(&st.mean))?;
                writeln!(out, "scale {}", join(&st.scale))?;
            }
        }
        writeln!(out, "params {}", self.model.params().len())?;
        for p in self.model.params() {
            writeln!(out, "{p}")?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| CoralError::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(err(0, "unexpected end of file".into())),
            }
        };
        let field = |(n, line): (usize, String), key: &str| -> Result<(usize, String)> {
            match line.split_once(' ') {
                Some((k, rest)) if k == key => Ok((n, rest.to_string())),
                _ if line == key => Ok((n, String::new())),
                _ => Err(err(n, format!("expected `{key}`, found {line:?}"))),
            }
        };
        let num = |n: usize, s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| err(n, format!("bad integer {s:?}")))
        };
        let floats = |n: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|v| v.parse().map_err(|_| err(n, format!("bad number {v:?}"))))
                .collect()
        };

        let (n, header) = field(next()?, MAGIC)?;
        if num(n, &header)? != VERSION as usize {
            return Err(err(n, format!("unsupported version {header}")));
        }
        let mut line = next()?;
        let mut meta = None;
        if line.1.starts_with("meta ") || line.1 == "meta" {
            meta = Some(field(line, "meta")?.1);
            line = next()?;
        }
        let (n, head) = field(line, "head")?;
        let head = head.parse().map_err(|e: CoralError| err(n, e.to_string()))?;
        let (n, d) = field(next()?, "input_dim")?;
        let input_dim = num(n, &d)?;
        let (n, h) = field(next()?, "hidden")?;
        let hidden = h.split_whitespace().map(|v| num(n, v)).collect::<Result<Vec<_>>>()?;
        let (n, k) = field(next()?, "ranks")?;
        let num_ranks = num(n, &k)?;
        let arch = Architecture::new(input_dim, hidden, head, num_ranks).map_err(|e| err(n, e.to_string()))?;
        let mut labels = Vec::with_capacity(num_ranks);
        for _ in 0..num_ranks {
            labels.push(field(next()?, "label")?.1);
        }
        let ranks = RankSpec::new(labels).map_err(|e| err(n, e.to_string()))?;

        let (n, st) = field(next()?, "standardize")?;
        let standardizer = if st == "none" {
            None
        } else {
            let dim = num(n, &st)?;
            let (nm, mean) = field(next()?, "mean")?;
            let (ns, scale) = field(next()?, "scale")?;
            let (mean, scale) = (floats(nm, &mean)?, floats(ns, &scale)?);
            if mean.len() != dim || scale.len() != dim || dim != input_dim {
                return Err(err(ns, "standardizer dimension mismatch".into()));
            }
            Some(Standardizer { mean, scale })
        };

        let (n, count) = field(next()?, "params")?;
        let count = num(n, &count)?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, v) = next()?;
            params.push(v.trim().parse::<f64>().map_err(|_| err(n, format!("bad parameter {v:?}")))?);
        }
        let (n, end) = next()?;
        if end != "end" {
            return Err(err(n, format!("expected `end`, found {end:?}")));
        }
        let model = OrdinalModel::from_params(arch, params).map_err(|e| err(n, e.to_string()))?;
        Ok(Self {
            model,
            ranks,
            standardizer,
            meta,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), path)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadKind;
    use proptest::prelude::*;

    fn sample(head: HeadKind, seed: u64, with_st: bool) -> ModelFile {
        let arch = Architecture::new(3, vec![5, 4], head, 4).unwrap();
        ModelFile {
            model: OrdinalModel::new(arch, seed).unwrap(),
            ranks: RankSpec::new(["bad", "okay", "good", "great"]).unwrap(),
            standardizer: with_st.then(|| Standardizer {
                mean: vec![0.1, -2.5, 1e-300],
                scale: vec![1.0, 0.0, 3.25],
            }),
            meta: Some("seed 0".into()),
        }
    }

    fn round_trip(f: &ModelFile) -> ModelFile {
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        ModelFile::read(&buf[..], Path::new("mem")).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for head in [HeadKind::Coral, HeadKind::Or, HeadKind::Ce] {
            let f = sample(head, 3, true);
            let back = round_trip(&f);
            assert_eq!(back, f);
            let bits = |m: &OrdinalModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back.model), bits(&f.model));
        }
        let f = sample(HeadKind::Coral, 1, false);
        assert_eq!(round_trip(&f), f);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        sample(HeadKind::Or, 0, false).write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bad_version = text.replacen("coral-model 1", "coral-model 9", 1);
        assert!(ModelFile::read(bad_version.as_bytes(), Path::new("m")).is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(ModelFile::read(truncated.as_bytes(), Path::new("m")).is_err());
        let bad_head = text.replace("head or", "head xx");
        assert!(ModelFile::read(bad_head.as_bytes(), Path::new("m")).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_parameters_round_trip(vals in prop::collection::vec(-1e300f64..1e300, 51)) {
            let arch = Architecture::new(3, vec![5, 4], HeadKind::Coral, 4).unwrap();
            let f = ModelFile {
                model: OrdinalModel::from_params(arch, vals).unwrap(),
                ranks: RankSpec::numbered(4).unwrap(),
                standardizer: None,
                meta: None,
            };
            prop_assert_eq!(round_trip(&f), f);
        }
    }
}
