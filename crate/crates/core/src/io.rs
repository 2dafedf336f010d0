//! Plain-text formats: sampled datasets (`t,u,y` CSV), multisine input
//! definitions, and estimation reports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, EstimatorKind};
use crate::harness::param_names;
use crate::signals::{Component, Dataset, Multisine, SampledSignal};

/// Samples read back from a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub times: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl DatasetFile {
    pub fn from_dataset(data: &Dataset) -> Self {
        Self {
            times: data.output.times().to_vec(),
            input: data.input.sample(data.output.times()),
            output: data.output.values().to_vec(),
        }
    }

    pub fn input_signal(&self) -> Result<SampledSignal> {
        SampledSignal::new(self.times.clone(), self.input.clone(), None)
    }

    pub fn output_signal(&self) -> Result<SampledSignal> {
        SampledSignal::new(self.times.clone(), self.output.clone(), None)
    }
}

pub fn write_dataset<W: Write>(data: &DatasetFile, mut w: W) -> Result<()> {
    writeln!(w, "t,u,y")?;
    for ((t, u), y) in data.times.iter().zip(&data.input).zip(&data.output) {
        writeln!(w, "{t},{u},{y}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &DatasetFile, path: &Path) -> Result<()> {
    write_dataset(data, BufWriter::new(fs::File::create(path)?))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number '{}'", s.trim())))
}

pub fn parse_dataset(text: &str) -> Result<DatasetFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "t,u,y" => {}
        _ => return Err(Error::Parse("dataset must start with header 't,u,y'".into())),
    }
    let mut out = DatasetFile {
        times: Vec::new(),
        input: Vec::new(),
        output: Vec::new(),
    };
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
        }
        out.times.push(parse_f64(f[0], i + 1)?);
        out.input.push(parse_f64(f[1], i + 1)?);
        out.output.push(parse_f64(f[2], i + 1)?);
    }
    if out.times.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    parse_dataset(&fs::read_to_string(path)?)
}

/// ```text
/// offset,0
/// amp,freq_rad_s,phase_rad
/// 1,0.714,-1.5707963267948966
/// ```
pub fn write_multisine<W: Write>(ms: &Multisine, mut w: W) -> Result<()> {
    writeln!(w, "offset,{}", ms.offset())?;
    writeln!(w, "amp,freq_rad_s,phase_rad")?;
    for c in ms.components() {
        writeln!(w, "{},{},{}", c.amplitude, c.frequency, c.phase)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_multisine(ms: &Multisine, path: &Path) -> Result<()> {
    write_multisine(ms, BufWriter::new(fs::File::create(path)?))
}

pub fn parse_multisine(text: &str) -> Result<Multisine> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let offset = match lines.next() {
        Some((i, l)) => match l.split_once(',') {
            Some(("offset", v)) => parse_f64(v, i + 1)?,
            _ => return Err(Error::Parse("input definition must start with 'offset,<value>'".into())),
        },
        None => return Err(Error::Parse("empty input definition".into())),
    };
    match lines.next() {
        Some((_, h)) if h.trim() == "amp,freq_rad_s,phase_rad" => {}
        None => return Multisine::new(offset, Vec::new()),
        _ => return Err(Error::Parse("expected header 'amp,freq_rad_s,phase_rad'".into())),
    }
    let mut components = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 1)));
        }
        components.push(Component {
            amplitude: parse_f64(f[0], i + 1)?,
            frequency: parse_f64(f[1], i + 1)?,
            phase: parse_f64(f[2], i + 1)?,
        });
    }
    Multisine::new(offset, components)
}

pub fn load_multisine(path: &Path) -> Result<Multisine> {
    parse_multisine(&fs::read_to_string(path)?)
}

/// `key = value` header followed by a per-iteration CSV block.
pub fn write_report<W: Write>(kind: EstimatorKind, result: &EstimationResult, mut w: W) -> Result<()> {
    let order = result.theta.order();
    let names = param_names(order);
    writeln!(w, "estimator = {kind}")?;
    writeln!(w, "n = {}", order.n)?;
    writeln!(w, "m = {}", order.m)?;
    writeln!(w, "converged = {}", result.converged)?;
    writeln!(w, "iterations = {}", result.iteration_count())?;
    for (name, v) in names.iter().zip(result.theta.values()) {
        writeln!(w, "{name} = {v}")?;
    }
    writeln!(w, "model = ({}) / ({})", result.final_model.num(), result.final_model.den())?;
    writeln!(w)?;
    writeln!(w, "[iterations]")?;
    writeln!(w, "index,relative_step,reflected,condition,{}", names.join(","))?;
    for rec in &result.iterations {
        let theta: Vec<String> = rec.theta.values().iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            rec.index,
            rec.relative_step,
            rec.reflected,
            rec.condition_estimate,
            theta.join(",")
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{initialize, srivc_c, EstimatorConfig, ModelOrder};
    use crate::harness::{reference_input, reference_system};
    use crate::signals::{generate_dataset, GridKind, NoiseModel, SamplingGrid};

    #[test]
    fn dataset_round_trip_is_exact() {
        let grid = SamplingGrid::generate(GridKind::IrregularUniform { h_lb: 0.05, h_hb: 0.6, seed: 3 }, 50, 0.0).unwrap();
        let data = generate_dataset(&reference_system(), &reference_input(), &grid, &NoiseModel::new(0.1, 4).unwrap()).unwrap();
        let file = DatasetFile::from_dataset(&data);
        let mut buf = Vec::new();
        write_dataset(&file, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert_eq!(parse_dataset(&text).unwrap(), file);
    }

    #[test]
    fn multisine_round_trip_is_exact() {
        let ms = Multisine::new(
            0.5,
            vec![Component { amplitude: 1.5, frequency: 0.7, phase: 0.1 }, Component { amplitude: 0.2, frequency: 3.0, phase: -2.0 }],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_multisine(&ms, &mut buf).unwrap();
        assert_eq!(parse_multisine(std::str::from_utf8(&buf).unwrap()).unwrap(), ms);
        assert_eq!(parse_multisine("offset,2\n").unwrap(), Multisine::constant(2.0));
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_dataset("a,b,c\n1,2,3\n").is_err());
        assert!(parse_dataset("t,u,y\n1,2\n").is_err());
        assert!(parse_dataset("t,u,y\n").is_err());
        assert!(parse_multisine("amp,freq_rad_s,phase_rad\n").is_err());
        assert!(parse_multisine("offset,0\namp,freq_rad_s,phase_rad\n1,-1,0\n").is_err());
    }

    #[test]
    fn report_lists_every_iteration() {
        let grid = SamplingGrid::generate(GridKind::Regular { h: 0.3 }, 300, 0.0).unwrap();
        let data = generate_dataset(&reference_system(), &reference_input(), &grid, &NoiseModel::new(0.1, 1).unwrap()).unwrap();
        let cfg = EstimatorConfig::default();
        let order = ModelOrder::new(2, 0).unwrap();
        let theta1 = initialize(&data.sampled_input(), &data.output, order, Some(2.142), &cfg).unwrap();
        let res = srivc_c(&data.input, &data.output, &theta1, &cfg).unwrap();
        let mut buf = Vec::new();
        write_report(EstimatorKind::SrivcC, &res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("estimator = srivc-c\n"));
        assert!(text.contains(&format!("iterations = {}", res.iteration_count())));
        let block = text.split("[iterations]\n").nth(1).unwrap();
        assert_eq!(block.lines().count(), 1 + res.iteration_count());
    }
}
