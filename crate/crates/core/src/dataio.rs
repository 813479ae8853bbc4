//! Ingestion of the three modalities, date alignment, the embedding tensor
//! file format, and lagged correlation analysis.
//!
//! CSV schemas are strict line protocols (no quoting): stats files carry
//! `date,new_cases,new_hospitalized`, stringency files carry
//! `date,stringency_index,internal_movement`. Embedding sequences travel in
//! the binary MGEB container with a small key=value manifest sidecar.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use chrono::{Days, NaiveDate};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const STAT_COLUMNS: [&str; 2] = ["new_cases", "new_hospitalized"];
pub const REG_COLUMNS: [&str; 4] =
    ["stringency_index", "internal_movement", "stringency_index_roc", "internal_movement_roc"];

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MGEB";
pub const EMBEDDING_VERSION: u32 = 1;

/// Parsed per-day case statistics.
#[derive(Clone, Debug)]
pub struct StatsTable {
    pub dates: Vec<NaiveDate>,
    /// One `[new_cases, new_hospitalized]` pair per day.
    pub values: Vec<[f64; 2]>,
}

/// Parsed per-day stringency features (raw columns, before rate-of-change).
#[derive(Clone, Debug)]
pub struct StringencyTable {
    pub dates: Vec<NaiveDate>,
    /// One `[stringency_index, internal_movement]` pair per day.
    pub values: Vec<[f64; 2]>,
}

/// Decoded MGEB file plus its manifest.
#[derive(Clone, Debug)]
pub struct EmbeddingsFile {
    pub start_date: NaiveDate,
    pub region: String,
    pub source: String,
    /// Tdays×N×D, widened to f64.
    pub data: Tensor,
}

impl EmbeddingsFile {
    pub fn days(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn node_count(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn embed_dim(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Days::new(self.days() as u64 - 1)
    }
}

/// Date-aligned bundle of all modalities for one region.
#[derive(Clone, Debug)]
pub struct RegionDataset {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    /// Tdays×2 case statistics.
    pub stats: Tensor,
    /// Tdays×4 regulation features (index, movement, and their RoC).
    pub regulations: Tensor,
    /// Tdays×N×D embedding sequences; absent for statistics-only runs.
    pub embeddings: Option<Tensor>,
}

impl RegionDataset {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn stat_features(&self) -> usize {
        self.stats.cols()
    }

    pub fn reg_features(&self) -> usize {
        self.regulations.cols()
    }

    pub fn node_count(&self) -> usize {
        self.embeddings.as_ref().map(|e| e.shape()[1]).unwrap_or(0)
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.as_ref().map(|e| e.shape()[2]).unwrap_or(0)
    }

    /// N×D node features of day `t`.
    pub fn snapshot(&self, t: usize) -> Result<Tensor> {
        let emb = self
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no embedding modality".into()))?;
        let (n, d) = (emb.shape()[1], emb.shape()[2]);
        let start = t * n * d;
        Tensor::new(vec![n, d], emb.data()[start..start + n * d].to_vec())
    }

    /// One statistics column as a plain series.
    pub fn stat_series(&self, col: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.stats.at2(t, col)).collect()
    }

    pub fn reg_series(&self, col: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.regulations.at2(t, col)).collect()
    }

    /// Per-day L2 norm of the node-mean embedding vector.
    pub fn embedding_mean_norm_series(&self) -> Option<Vec<f64>> {
        let emb = self.embeddings.as_ref()?;
        let (t_days, n, d) = (emb.shape()[0], emb.shape()[1], emb.shape()[2]);
        let mut out = Vec::with_capacity(t_days);
        for t in 0..t_days {
            let mut mean = vec![0.0; d];
            for node in 0..n {
                for f in 0..d {
                    mean[f] += emb.at3(t, node, f);
                }
            }
            let norm = mean.iter().map(|v| (v / n as f64).powi(2)).sum::<f64>().sqrt();
            out.push(norm);
        }
        Some(out)
    }

    /// Contiguous day range as a new dataset.
    pub fn slice_days(&self, range: std::ops::Range<usize>) -> RegionDataset {
        let dates = self.dates[range.clone()].to_vec();
        let k = self.stats.cols();
        let stats = Tensor::new(
            vec![dates.len(), k],
            self.stats.data()[range.start * k..range.end * k].to_vec(),
        )
        .expect("slice shape");
        let r = self.regulations.cols();
        let regulations = Tensor::new(
            vec![dates.len(), r],
            self.regulations.data()[range.start * r..range.end * r].to_vec(),
        )
        .expect("slice shape");
        let embeddings = self.embeddings.as_ref().map(|e| {
            let (n, d) = (e.shape()[1], e.shape()[2]);
            Tensor::new(
                vec![dates.len(), n, d],
                e.data()[range.start * n * d..range.end * n * d].to_vec(),
            )
            .expect("slice shape")
        });
        RegionDataset { region: self.region.clone(), dates, stats, regulations, embeddings }
    }

    /// Keep only the first `k` nodes of the embedding modality.
    pub fn take_nodes(&self, k: usize) -> Result<RegionDataset> {
        let emb = self
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no embedding modality".into()))?;
        let (t_days, n, d) = (emb.shape()[0], emb.shape()[1], emb.shape()[2]);
        if k == 0 || k > n {
            return Err(Error::Config(format!("node count {k} outside 1..={n}")));
        }
        let mut data = Vec::with_capacity(t_days * k * d);
        for t in 0..t_days {
            data.extend_from_slice(&emb.data()[t * n * d..t * n * d + k * d]);
        }
        Ok(RegionDataset {
            region: self.region.clone(),
            dates: self.dates.clone(),
            stats: self.stats.clone(),
            regulations: self.regulations.clone(),
            embeddings: Some(Tensor::new(vec![t_days, k, d], data)?),
        })
    }

    /// Re-checks every dataset invariant; used after load, align, and synth.
    pub fn validate(&self) -> Result<()> {
        if self.dates.is_empty() {
            return Err(Error::EmptyInput("dataset has no days".into()));
        }
        check_contiguous_dates(&self.dates, None)?;
        if self.stats.rows() != self.len() || self.regulations.rows() != self.len() {
            return Err(Error::Alignment(format!(
                "modality lengths differ: {} dates, {} stat rows, {} regulation rows",
                self.len(),
                self.stats.rows(),
                self.regulations.rows()
            )));
        }
        if let Some(e) = &self.embeddings {
            if e.shape()[0] != self.len() {
                return Err(Error::Alignment(format!(
                    "embedding days {} != dataset days {}",
                    e.shape()[0],
                    self.len()
                )));
            }
            if !e.all_finite() {
                return Err(Error::Numeric("embeddings contain non-finite values".into()));
            }
        }
        for t in 0..self.len() {
            for c in 0..self.stats.cols() {
                let v = self.stats.at2(t, c);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Numeric(format!(
                        "negative or non-finite statistic {v} on {} ({})",
                        self.dates[t], STAT_COLUMNS[c.min(1)]
                    )));
                }
            }
            let s = self.regulations.at2(t, 0);
            if !(0.0..=100.0).contains(&s) {
                return Err(Error::Numeric(format!(
                    "stringency index {s} on {} outside [0, 100]",
                    self.dates[t]
                )));
            }
        }
        Ok(())
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    s.parse::<NaiveDate>()
        .map_err(|_| Error::ingest(line, format!("invalid ISO-8601 date {s:?}")))
}

fn parse_number(s: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::ingest(line, format!("invalid number {s:?} in column {column}")))?;
    if !v.is_finite() {
        return Err(Error::ingest(line, format!("non-finite value in column {column}")));
    }
    Ok(v)
}

/// Dates must be strictly increasing, daily, with no gaps; `line_offset`
/// converts an index to the CSV line for error messages.
fn check_contiguous_dates(dates: &[NaiveDate], line_offset: Option<usize>) -> Result<()> {
    for i in 1..dates.len() {
        let expected = dates[i - 1] + Days::new(1);
        if dates[i] == dates[i - 1] {
            let msg = format!("duplicated date {}", dates[i]);
            return Err(match line_offset {
                Some(off) => Error::ingest(i + off, msg),
                None => Error::Alignment(msg),
            });
        }
        if dates[i] != expected {
            let msg = format!("gap or disorder: {} follows {}, expected {}", dates[i], dates[i - 1], expected);
            return Err(match line_offset {
                Some(off) => Error::ingest(i + off, msg),
                None => Error::Alignment(msg),
            });
        }
    }
    Ok(())
}

fn read_csv_lines(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(Error::ingest(1, format!("expected header {header:?}, found {h:?}")))
        }
        None => return Err(Error::ingest(1, "empty file".to_string())),
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        rows.push((idx + 1, fields)); // 1-based line numbers
    }
    if rows.is_empty() {
        return Err(Error::ingest(1, "no data rows".to_string()));
    }
    Ok(rows)
}

pub fn load_stats_csv(path: &Path) -> Result<StatsTable> {
    let rows = read_csv_lines(path, "date,new_cases,new_hospitalized")?;
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != 3 {
            return Err(Error::ingest(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let date = parse_date(&fields[0], line)?;
        let cases = parse_number(&fields[1], "new_cases", line)?;
        let hosp = parse_number(&fields[2], "new_hospitalized", line)?;
        if cases < 0.0 || hosp < 0.0 {
            return Err(Error::ingest(line, format!("negative case count on {date}")));
        }
        dates.push(date);
        values.push([cases, hosp]);
    }
    check_contiguous_dates(&dates, Some(1))?;
    Ok(StatsTable { dates, values })
}

pub fn load_stringency_csv(path: &Path) -> Result<StringencyTable> {
    let rows = read_csv_lines(path, "date,stringency_index,internal_movement")?;
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != 3 {
            return Err(Error::ingest(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let date = parse_date(&fields[0], line)?;
        let index = parse_number(&fields[1], "stringency_index", line)?;
        let movement = parse_number(&fields[2], "internal_movement", line)?;
        for (name, v) in [("stringency_index", index), ("internal_movement", movement)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::ingest(line, format!("{name} {v} outside [0, 100] on {date}")));
            }
        }
        dates.push(date);
        values.push([index, movement]);
    }
    check_contiguous_dates(&dates, Some(1))?;
    Ok(StringencyTable { dates, values })
}

pub fn write_stats_csv(path: &Path, table: &StatsTable) -> Result<()> {
    let mut out = String::from("date,new_cases,new_hospitalized\n");
    for (date, v) in table.dates.iter().zip(&table.values) {
        out.push_str(&format!("{date},{},{}\n", fmt_num(v[0]), fmt_num(v[1])));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_stringency_csv(path: &Path, table: &StringencyTable) -> Result<()> {
    let mut out = String::from("date,stringency_index,internal_movement\n");
    for (date, v) in table.dates.iter().zip(&table.values) {
        out.push_str(&format!("{date},{},{}\n", fmt_num(v[0]), fmt_num(v[1])));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Shortest round-trippable decimal form.
fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// r_t = s_t − s_{t−p}; the first p entries are 0 (warm-up).
pub fn rate_of_change(series: &[f64], period: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::Config("rate_of_change period must be >= 1".into()));
    }
    if period >= series.len() {
        return Err(Error::Config(format!(
            "rate_of_change period {period} must be shorter than the series ({})",
            series.len()
        )));
    }
    let mut out = vec![0.0; series.len()];
    for t in period..series.len() {
        out[t] = series[t] - series[t - period];
    }
    Ok(out)
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

pub fn write_embeddings(path: &Path, emb: &EmbeddingsFile) -> Result<()> {
    let shape = emb.data.shape();
    if shape.len() != 3 {
        return Err(Error::dimension("write_embeddings", format!("{:?}", shape)));
    }
    let mut buf = Vec::with_capacity(20 + emb.data.numel() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    for d in shape {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in emb.data.data() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;

    let manifest = format!(
        "start_date={}\nregion={}\nsource={}\n",
        emb.start_date, emb.region, emb.source
    );
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingsFile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(Error::format_at(bytes.len() as u64, "file shorter than MGEB header"));
    }
    if &bytes[0..4] != EMBEDDING_MAGIC {
        return Err(Error::format_at(0, "bad magic, expected \"MGEB\""));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != EMBEDDING_VERSION {
        return Err(Error::format_at(4, format!("unsupported MGEB version {version}")));
    }
    let (t_days, n, d) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let expect = 20 + t_days * n * d * 4;
    if bytes.len() != expect {
        return Err(Error::format_at(
            bytes.len().min(expect) as u64,
            format!("payload is {} bytes, header implies {}", bytes.len() - 20, expect - 20),
        ));
    }
    let mut data = Vec::with_capacity(t_days * n * d);
    for chunk in bytes[20..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    let tensor = Tensor::new(vec![t_days, n, d], data)?;

    let manifest = std::fs::read_to_string(manifest_path(path)).map_err(|e| Error::Format {
        offset: None,
        detail: format!("missing embedding manifest: {e}"),
    })?;
    let mut start_date = None;
    let mut region = String::new();
    let mut source = String::new();
    for line in manifest.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "start_date" => {
                    start_date = Some(v.trim().parse::<NaiveDate>().map_err(|_| Error::Format {
                        offset: None,
                        detail: format!("invalid manifest start_date {v:?}"),
                    })?)
                }
                "region" => region = v.trim().to_string(),
                "source" => source = v.trim().to_string(),
                _ => {}
            }
        }
    }
    let start_date = start_date.ok_or_else(|| Error::Format {
        offset: None,
        detail: "manifest lacks start_date".into(),
    })?;
    Ok(EmbeddingsFile { start_date, region, source, data: tensor })
}

/// Intersects the date ranges of the loaded modalities into one dataset and
/// derives the regulation rate-of-change columns on the aligned span.
pub fn align(
    stats: &StatsTable,
    stringency: &StringencyTable,
    embeddings: Option<&EmbeddingsFile>,
    roc_period: usize,
    region: &str,
) -> Result<RegionDataset> {
    let mut start = *stats.dates.first().ok_or_else(|| Error::EmptyInput("no stats rows".into()))?;
    let mut end = *stats.dates.last().unwrap();
    let s_start = *stringency.dates.first().ok_or_else(|| Error::EmptyInput("no stringency rows".into()))?;
    let s_end = *stringency.dates.last().unwrap();
    start = start.max(s_start);
    end = end.min(s_end);
    if let Some(e) = embeddings {
        start = start.max(e.start_date);
        end = end.min(e.end_date());
    }
    if start > end {
        return Err(Error::Alignment(format!(
            "modalities share no dates (intersection would start {start} and end {end})"
        )));
    }
    let days = (end - start).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..days).map(|i| start + Days::new(i as u64)).collect();

    let offset_of = |first: NaiveDate| (start - first).num_days() as usize;
    let so = offset_of(stats.dates[0]);
    let stats_t = Tensor::from_rows(
        &(0..days).map(|i| stats.values[so + i].to_vec()).collect::<Vec<_>>(),
    )?;

    let go = offset_of(stringency.dates[0]);
    let index: Vec<f64> = (0..days).map(|i| stringency.values[go + i][0]).collect();
    let movement: Vec<f64> = (0..days).map(|i| stringency.values[go + i][1]).collect();
    if roc_period >= days {
        return Err(Error::Config(format!(
            "rate-of-change period {roc_period} too long for {days} aligned days"
        )));
    }
    let index_roc = rate_of_change(&index, roc_period)?;
    let movement_roc = rate_of_change(&movement, roc_period)?;
    let regs = Tensor::from_rows(
        &(0..days)
            .map(|i| vec![index[i], movement[i], index_roc[i], movement_roc[i]])
            .collect::<Vec<_>>(),
    )?;

    let emb_t = match embeddings {
        Some(e) => {
            let eo = offset_of(e.start_date);
            let (n, d) = (e.node_count(), e.embed_dim());
            let from = eo * n * d;
            let to = (eo + days) * n * d;
            Some(Tensor::new(vec![days, n, d], e.data.data()[from..to].to_vec())?)
        }
        None => None,
    };

    let ds = RegionDataset {
        region: region.to_string(),
        dates,
        stats: stats_t,
        regulations: regs,
        embeddings: emb_t,
    };
    ds.validate()?;
    Ok(ds)
}

/// Pearson correlation between a_t and b_{t+lag} over the valid overlap.
pub fn lagged_pearson(a: &[f64], b: &[f64], lag: i64) -> Result<f64> {
    if lag < 0 {
        return lagged_pearson(b, a, -lag);
    }
    let lag = lag as usize;
    if lag >= b.len() {
        return Err(Error::Contract(format!(
            "lag {lag} leaves no overlap (series length {})",
            b.len()
        )));
    }
    let n = a.len().min(b.len() - lag);
    if n < 3 {
        return Err(Error::Contract(format!("overlap {n} too short, need at least 3 points")));
    }
    let xs = &a[..n];
    let ys = &b[lag..lag + n];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant series".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}
