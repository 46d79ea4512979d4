//! Artifact readers and writers.
//!
//! Every file starts with provenance: JSON artifacts carry `config_sha256`
//! and `seed` fields, CSV artifacts a single `# key=value` comment line.
//! All writers are deterministic; floats use shortest round-trip formatting.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::PosteriorMatrix;
use crate::sim::{Band, DatasetManifest, PointWaveforms, Waveform};

/// Provenance stamp shared by every artifact.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    fn comment_line(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}

/// Wrapper that stamps a JSON payload with provenance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Stamped<T> {
    pub config_sha256: String,
    pub seed: u64,
    pub payload: T,
}

pub fn write_stamped_json<T: Serialize>(
    path: &Path,
    prov: &Provenance,
    payload: &T,
) -> Result<()> {
    write_json(
        path,
        &Stamped {
            config_sha256: prov.config_sha256.clone(),
            seed: prov.seed,
            payload,
        },
    )
}

pub fn read_stamped_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    read_json(path)
}

/// Waveforms CSV: one row per sample, keyed by point and band, dt carried on
/// every row. Rows appear in manifest point order, band A before band B.
pub fn write_waveforms_csv(
    path: &Path,
    prov: &Provenance,
    manifest: &DatasetManifest,
    waveforms: &[PointWaveforms],
) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(prov.comment_line().as_bytes())?;
    writeln!(w, "patient_id,margin_id,point_id,band,dt_ns,sample_index,amplitude")?;
    let mut point_idx = 0usize;
    for patient in &manifest.patients {
        for margin in &patient.margins {
            for point in &margin.points {
                let pw = &waveforms[point_idx];
                for band in Band::ALL {
                    let wf = pw.get(band);
                    for (k, &v) in wf.samples.iter().enumerate() {
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{}",
                            patient.id,
                            margin.id,
                            point.id,
                            band.name(),
                            wf.dt,
                            k,
                            v
                        )?;
                    }
                }
                point_idx += 1;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_waveforms_csv(path: &Path, manifest: &DatasetManifest) -> Result<Vec<PointWaveforms>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Input("empty waveform file".into()))?;
    if header != "patient_id,margin_id,point_id,band,dt_ns,sample_index,amplitude" {
        return Err(Error::Input(format!("unexpected waveform header: {header}")));
    }

    let mut out: Vec<PointWaveforms> = Vec::with_capacity(manifest.n_points());
    let mut current_point: Option<String> = None;
    let mut current: Option<(Waveform, Option<Waveform>)> = None; // (band A, band B)
    let finish =
        |current: &mut Option<(Waveform, Option<Waveform>)>, out: &mut Vec<PointWaveforms>| -> Result<()> {
            if let Some((a, b)) = current.take() {
                let b = b.ok_or_else(|| Error::Input("point missing band-B waveform".into()))?;
                out.push(PointWaveforms { band_a: a, band_b: b });
            }
            Ok(())
        };

    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(7, ',');
        let _patient = cols.next();
        let _margin = cols.next();
        let point = cols.next().ok_or_else(|| Error::Input("short waveform row".into()))?;
        let band = cols.next().ok_or_else(|| Error::Input("short waveform row".into()))?;
        let dt: f64 = cols
            .next()
            .ok_or_else(|| Error::Input("short waveform row".into()))?
            .parse()
            .map_err(|e| Error::Input(format!("bad dt: {e}")))?;
        let _idx = cols.next();
        let amp: f64 = cols
            .next()
            .ok_or_else(|| Error::Input("short waveform row".into()))?
            .parse()
            .map_err(|e| Error::Input(format!("bad amplitude: {e}")))?;

        if current_point.as_deref() != Some(point) {
            finish(&mut current, &mut out)?;
            current_point = Some(point.to_string());
            current = Some((Waveform { samples: Vec::new(), dt, band: Band::A }, None));
        }
        let slot = current.as_mut().unwrap();
        match band {
            "band-A" => slot.0.samples.push(amp),
            "band-B" => {
                slot.1
                    .get_or_insert_with(|| Waveform { samples: Vec::new(), dt, band: Band::B })
                    .samples
                    .push(amp);
            }
            other => return Err(Error::Input(format!("unknown band {other}"))),
        }
    }
    finish(&mut current, &mut out)?;
    if out.len() != manifest.n_points() {
        return Err(Error::Input(format!(
            "waveform file holds {} points but the manifest lists {}",
            out.len(),
            manifest.n_points()
        )));
    }
    Ok(out)
}

/// Feature matrix CSV keyed by (patient_id, margin_id, point_id), one row
/// per point, header naming every feature.
pub fn write_features_csv(
    path: &Path,
    prov: &Provenance,
    manifest: &DatasetManifest,
    features: &FeatureMatrix,
) -> Result<()> {
    if features.n_rows != manifest.n_points() {
        return Err(Error::Input(format!(
            "{} feature rows for {} manifest points",
            features.n_rows,
            manifest.n_points()
        )));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(prov.comment_line().as_bytes())?;
    writeln!(w, "patient_id,margin_id,point_id,{}", features.names.join(","))?;
    let mut row_idx = 0usize;
    for patient in &manifest.patients {
        for margin in &patient.margins {
            for point in &margin.points {
                let row = features.row(row_idx);
                write!(w, "{},{},{}", patient.id, margin.id, point.id)?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
                row_idx += 1;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path, manifest: &DatasetManifest) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Input("empty feature file".into()))?;
    let mut cols = header.split(',');
    for expected in ["patient_id", "margin_id", "point_id"] {
        if cols.next() != Some(expected) {
            return Err(Error::Input(format!("feature header must start with ids: {header}")));
        }
    }
    let names: Vec<String> = cols.map(|s| s.to_string()).collect();
    if names.is_empty() {
        return Err(Error::Input("feature file has no feature columns".into()));
    }
    let mut data = Vec::new();
    let mut n_rows = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let _ = fields.next();
        let _ = fields.next();
        let _ = fields.next();
        let mut count = 0usize;
        for field in fields {
            let v: f64 =
                field.parse().map_err(|e| Error::Input(format!("bad feature value: {e}")))?;
            data.push(v);
            count += 1;
        }
        if count != names.len() {
            return Err(Error::Input(format!(
                "row {n_rows} has {count} features, expected {}",
                names.len()
            )));
        }
        n_rows += 1;
    }
    if n_rows != manifest.n_points() {
        return Err(Error::Input(format!(
            "feature file holds {n_rows} rows but the manifest lists {}",
            manifest.n_points()
        )));
    }
    Ok(FeatureMatrix { names, n_rows, n_cols: data.len() / n_rows, data })
}

/// Out-of-fold posteriors CSV: point id then one probability column per
/// class.
pub fn write_posteriors_csv(
    path: &Path,
    prov: &Provenance,
    point_ids: &[String],
    class_names: &[String],
    posteriors: &PosteriorMatrix,
) -> Result<()> {
    if point_ids.len() != posteriors.n_rows || class_names.len() != posteriors.n_classes {
        return Err(Error::Input("posterior shape does not match ids".into()));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(prov.comment_line().as_bytes())?;
    writeln!(
        w,
        "point_id,{}",
        class_names.iter().map(|c| format!("p_{c}")).collect::<Vec<_>>().join(",")
    )?;
    for (id, row) in point_ids.iter().zip(posteriors.rows()) {
        write!(w, "{id}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_posteriors_csv(path: &Path) -> Result<(Vec<String>, PosteriorMatrix)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Input("empty posterior file".into()))?;
    let n_classes = header.split(',').count() - 1;
    if n_classes == 0 {
        return Err(Error::Input("posterior file has no class columns".into()));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        ids.push(fields.next().unwrap().to_string());
        for field in fields {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Input(format!("bad probability: {e}")))?,
            );
        }
    }
    let n_rows = ids.len();
    Ok((ids, PosteriorMatrix::new(n_rows, n_classes, data)?))
}

/// Square count matrix as CSV with class-name row and column labels.
pub fn write_matrix_csv(
    path: &Path,
    prov: &Provenance,
    class_names: &[String],
    counts: &[usize],
) -> Result<()> {
    let c = class_names.len();
    if counts.len() != c * c {
        return Err(Error::Input("matrix size does not match class names".into()));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(prov.comment_line().as_bytes())?;
    writeln!(w, "observed\\predicted,{}", class_names.join(","))?;
    for i in 0..c {
        write!(w, "{}", class_names[i])?;
        for j in 0..c {
            write!(w, ",{}", counts[i * c + j])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Confidence histogram CSV mirroring the per-class score distributions:
/// bin edges and a count column per true class.
pub fn write_confidence_histogram_csv(
    path: &Path,
    prov: &Provenance,
    class_names: &[String],
    cs: &[f64],
    labels: &[usize],
    n_bins: usize,
) -> Result<()> {
    if cs.len() != labels.len() || n_bins == 0 {
        return Err(Error::Input("bad histogram input".into()));
    }
    let c = class_names.len();
    let mut counts = vec![0usize; n_bins * c];
    for (&score, &y) in cs.iter().zip(labels) {
        let bin = ((score * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[bin * c + y] += 1;
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(prov.comment_line().as_bytes())?;
    writeln!(
        w,
        "bin_low,bin_high,{}",
        class_names.iter().map(|n| format!("count_{n}")).collect::<Vec<_>>().join(",")
    )?;
    for b in 0..n_bins {
        let lo = b as f64 / n_bins as f64;
        let hi = (b + 1) as f64 / n_bins as f64;
        write!(w, "{lo},{hi}")?;
        for y in 0..c {
            write!(w, ",{}", counts[b * c + y])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::synth_dataset;
    use tempfile::tempdir;

    fn prov() -> Provenance {
        Provenance { config_sha256: "deadbeef".into(), seed: 7 }
    }

    #[test]
    fn waveform_csv_round_trip() {
        let mut config = crate::sim::test_support::ladder_config(2, 2);
        config.margins_per_patient = (1, 1);
        config.points_per_margin = (2, 3);
        let ds = synth_dataset(&config, 3).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("waveforms.csv");
        write_waveforms_csv(&path, &prov(), &ds.manifest, &ds.waveforms).unwrap();
        let back = read_waveforms_csv(&path, &ds.manifest).unwrap();
        assert_eq!(back.len(), ds.waveforms.len());
        for (a, b) in ds.waveforms.iter().zip(&back) {
            assert_eq!(a.band_a.samples, b.band_a.samples);
            assert_eq!(a.band_b.samples, b.band_b.samples);
            assert_eq!(a.band_a.dt, b.band_a.dt);
        }
    }

    #[test]
    fn feature_csv_round_trip() {
        let mut config = crate::sim::test_support::ladder_config(2, 2);
        config.margins_per_patient = (1, 1);
        config.points_per_margin = (3, 3);
        let ds = synth_dataset(&config, 5).unwrap();
        let features = FeatureMatrix {
            names: vec!["a".into(), "b".into()],
            n_rows: 6,
            n_cols: 2,
            data: (0..12).map(|i| i as f64 * 0.317).collect(),
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &prov(), &ds.manifest, &features).unwrap();
        let back = read_features_csv(&path, &ds.manifest).unwrap();
        assert_eq!(back, features);
    }

    #[test]
    fn posterior_csv_round_trip() {
        let p = PosteriorMatrix::new(2, 3, vec![0.2, 0.3, 0.5, 0.9, 0.05, 0.05]).unwrap();
        let ids = vec!["x1".to_string(), "x2".to_string()];
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let dir = tempdir().unwrap();
        let path = dir.path().join("posteriors.csv");
        write_posteriors_csv(&path, &prov(), &ids, &names, &p).unwrap();
        let (ids2, p2) = read_posteriors_csv(&path).unwrap();
        assert_eq!(ids, ids2);
        assert_eq!(p, p2);
    }

    #[test]
    fn writers_are_byte_deterministic() {
        let mut config = crate::sim::test_support::ladder_config(2, 2);
        config.margins_per_patient = (1, 1);
        config.points_per_margin = (2, 2);
        let ds = synth_dataset(&config, 3).unwrap();
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_waveforms_csv(&p1, &prov(), &ds.manifest, &ds.waveforms).unwrap();
        write_waveforms_csv(&p2, &prov(), &ds.manifest, &ds.waveforms).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }
}
