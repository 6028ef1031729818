//! Gittins tables built in parallel and cached on disk.
//!
//! A cached table is a CSV file with header `s,f,index` and one row per
//! state in storage order (`s + f = 2, 3, ...`, then `s = 1, 2, ...`).
//! Indices are written in Rust's shortest round-trip notation, so a reload
//! is bit-identical. The file name carries every calibration parameter:
//! `gittins_d{discount}_B{max_state}_tol{tol}_H{horizon}.csv`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use missbandit_core::{
    refine_index, sweep_chunk, sweep_pays, sweep_points, table_cells, trivial_bracket, Calibration, GittinsError,
    GittinsTable,
};

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "MISSBANDIT_CACHE_DIR";

/// Default table bound: covers the largest built-in trial (526 patients)
/// under a uniform prior with room to spare.
pub const DEFAULT_MAX_STATE: u32 = 530;

/// Errors from the table cache.
#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    /// Calibration or build failure.
    #[error(transparent)]
    Gittins(#[from] GittinsError),
    /// File system failure.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A cache file did not parse.
    #[error("{path}: malformed cache file: {reason}")]
    Malformed {
        /// File involved.
        path: PathBuf,
        /// What was wrong.
        reason: String,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

/// Cache directory: `$MISSBANDIT_CACHE_DIR`, else `./gittins-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("gittins-cache"))
}

/// File name of the table for these parameters.
pub fn cache_file_name(calibration: &Calibration, max_state: u32) -> String {
    format!(
        "gittins_d{}_B{}_tol{:e}_H{}.csv",
        calibration.discount, max_state, calibration.tol, calibration.horizon
    )
}

/// Build the table using the rayon pool in scope: grid chunks of the
/// sweep and per-state refinement both run in parallel.
pub fn build_table_parallel(calibration: &Calibration, max_state: u32) -> Result<GittinsTable, GittinsError> {
    let cells: Vec<(u32, u32)> = table_cells(max_state).collect();
    if !sweep_pays(max_state) {
        let values = cells
            .par_iter()
            .map(|&(s, f)| {
                let (lo, hi) = trivial_bracket(s, f);
                refine_index(s, f, lo, hi, calibration)
            })
            .collect();
        return GittinsTable::from_values(*calibration, max_state, values);
    }
    let points = sweep_points(missbandit_core::sweep_step());
    let chunks = rayon::current_num_threads().max(1) as u32;
    let per_chunk = points.div_ceil(chunks);
    let mut sweeps: Vec<_> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = (c * per_chunk).min(points);
            let end = ((c + 1) * per_chunk).min(points);
            sweep_chunk(calibration, max_state, start..end)
        })
        .collect();
    let first = sweeps.remove(0);
    let merged = sweeps.into_iter().fold(first, |low, high| low.merge(high));
    let brackets = merged.brackets()?;
    let values = cells
        .par_iter()
        .zip(brackets.par_iter())
        .map(|(&(s, f), &(lo, hi))| refine_index(s, f, lo, hi, calibration))
        .collect();
    GittinsTable::from_values(*calibration, max_state, values)
}

/// Write `table` as cache CSV to `path`, atomically.
pub fn write_table(table: &GittinsTable, path: &Path) -> Result<(), CacheError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_error(dir))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        writeln!(out, "s,f,index").map_err(io_error(path))?;
        for (s, f, g) in table.iter() {
            writeln!(out, "{s},{f},{g:?}").map_err(io_error(path))?;
        }
        out.flush().map_err(io_error(path))?;
    }
    tmp.persist(path).map_err(|e| CacheError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Read a cache CSV written by [`write_table`].
pub fn read_table(path: &Path, calibration: &Calibration, max_state: u32) -> Result<GittinsTable, CacheError> {
    let malformed = |reason: String| CacheError::Malformed { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let mut values = Vec::new();
    let mut expected = table_cells(max_state);
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let field = |i: usize| record.get(i).ok_or_else(|| malformed(format!("row {}: missing field {i}", line + 1)));
        let s: u32 = field(0)?.parse().map_err(|_| malformed(format!("row {}: bad s", line + 1)))?;
        let f: u32 = field(1)?.parse().map_err(|_| malformed(format!("row {}: bad f", line + 1)))?;
        let g: f64 = field(2)?.parse().map_err(|_| malformed(format!("row {}: bad index", line + 1)))?;
        if expected.next() != Some((s, f)) {
            return Err(malformed(format!("row {}: unexpected state ({s}, {f})", line + 1)));
        }
        values.push(g);
    }
    Ok(GittinsTable::from_values(*calibration, max_state, values)?)
}

/// Outcome of [`load_or_build`].
#[derive(Debug)]
pub struct CachedTable {
    /// The table.
    pub table: GittinsTable,
    /// Cache file backing it.
    pub path: PathBuf,
    /// True if the table came from disk.
    pub hit: bool,
}

/// Load the table from `dir`, building and writing it on a miss.
pub fn load_or_build(calibration: &Calibration, max_state: u32, dir: &Path) -> Result<CachedTable, CacheError> {
    let path = dir.join(cache_file_name(calibration, max_state));
    if path.exists() {
        let table = read_table(&path, calibration, max_state)?;
        return Ok(CachedTable { table, path, hit: true });
    }
    let table = build_table_parallel(calibration, max_state)?;
    write_table(&table, &path)?;
    Ok(CachedTable { table, path, hit: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_build_matches_serial() {
        let cal = Calibration::with_discount(0.99).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let parallel = pool.install(|| build_table_parallel(&cal, 6)).unwrap();
        let serial = missbandit_core::build_table(&cal, 6).unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let cal = Calibration::with_discount(0.99).unwrap();
        let max_state = (1..).find(|&m| sweep_pays(m)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let parallel = pool.install(|| build_table_parallel(&cal, max_state)).unwrap();
        let serial = missbandit_core::build_table(&cal, max_state).unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn cache_round_trip_and_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cal = Calibration::with_discount(0.99).unwrap();
        let first = load_or_build(&cal, 4, dir.path()).unwrap();
        assert!(!first.hit);
        let bytes = fs::read(&first.path).unwrap();
        let second = load_or_build(&cal, 4, dir.path()).unwrap();
        assert!(second.hit);
        assert_eq!(first.table, second.table);
        assert_eq!(fs::read(&second.path).unwrap(), bytes);
        assert_eq!(
            first.path.file_name().unwrap().to_str().unwrap(),
            "gittins_d0.99_B4_tol1e-5_H2000.csv"
        );
    }

    #[test]
    fn malformed_cache_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cal = Calibration::with_discount(0.99).unwrap();
        let path = dir.path().join(cache_file_name(&cal, 1));
        fs::write(&path, "s,f,index\n1,1,0.87\n2,1,0.9\n").unwrap();
        assert!(matches!(read_table(&path, &cal, 1), Err(CacheError::Malformed { .. })));
    }
}
