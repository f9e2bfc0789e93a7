//! Text formats for the geometric modalities and for tabular outputs.
//!
//! All formats are UTF-8 with LF line endings; lines starting with `#` are
//! comments (except the `#vertices` header of graph files). Reals are written
//! with 17 significant digits so that `load(write(x))` is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{GaussianComponent, GaussianMixture, Graph, PointCloud, Voxel, VoxelGrid};
use crate::signal::Signal;

/// How point masses are obtained when loading a cloud.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MassPolicy {
    /// Ignore any mass column and use `1/N`.
    Uniform,
    /// Use the `mass` column when present, else `1/N`.
    #[default]
    Column,
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(token: &str, what: &str) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(format!("cannot parse {what} from {token:?}")))
}

fn parse_index(token: &str, what: &str) -> Result<usize> {
    token
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::format(format!("cannot parse {what} from {token:?}")))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn is_numeric_row(row: &[String]) -> bool {
    row.iter().all(|f| f.parse::<f64>().is_ok())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV with header `x0,...,x{d-1}[,mass]`.
pub fn load_point_cloud(path: impl AsRef<Path>, policy: MassPolicy) -> Result<PointCloud> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    let (header, body) = rows
        .split_first()
        .ok_or_else(|| Error::format(format!("{}: empty point cloud file", path.display())))?;
    if is_numeric_row(header) {
        return Err(Error::format(format!(
            "{}: missing header `x0,...,x{{d-1}}[,mass]`",
            path.display()
        )));
    }
    let has_mass = header.last().map(String::as_str) == Some("mass");
    let dim = header.len() - usize::from(has_mass);
    for (a, name) in header[..dim].iter().enumerate() {
        if *name != format!("x{a}") {
            return Err(Error::format(format!(
                "{}: unexpected column {name:?}, expected x{a}",
                path.display()
            )));
        }
    }
    if dim == 0 {
        return Err(Error::format(format!("{}: no coordinate columns", path.display())));
    }
    let mut positions = Vec::with_capacity(body.len() * dim);
    let mut masses = Vec::with_capacity(body.len());
    for (line, row) in body.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::format(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 1,
                row.len(),
                header.len()
            )));
        }
        for tok in &row[..dim] {
            positions.push(parse_real(tok, "coordinate")?);
        }
        if has_mass {
            masses.push(parse_real(&row[dim], "mass")?);
        }
    }
    let n = body.len();
    if n == 0 {
        return Err(Error::value(format!("{}: point cloud has no points", path.display())));
    }
    if !has_mass || policy == MassPolicy::Uniform {
        masses = vec![1.0 / n as f64; n];
    }
    PointCloud::new(dim, positions, masses)
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let header: Vec<String> = (0..cloud.dim())
        .map(|a| format!("x{a}"))
        .chain(std::iter::once("mass".to_owned()))
        .collect();
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for i in 0..cloud.len() {
        let fields: Vec<String> = cloud
            .point(i)
            .iter()
            .chain(std::iter::once(&cloud.masses()[i]))
            .map(|&x| fmt_real(x))
            .collect();
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    finish(path, w)
}

/// Reads `#vertices N` followed by `i j w` lines, plus an optional one-column
/// mass file.
pub fn load_graph(path: impl AsRef<Path>, mass_path: Option<&Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut n_vertices = None;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#vertices") {
            if n_vertices.is_some() {
                return Err(Error::format(format!("{}: repeated #vertices header", path.display())));
            }
            n_vertices = Some(parse_index(rest, "vertex count")?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let n = n_vertices.ok_or_else(|| {
            Error::format(format!("{}: missing `#vertices N` header", path.display()))
        })?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::format(format!(
                "{}:{}: expected `i j w`",
                path.display(),
                lineno + 1
            )));
        }
        let i = parse_index(tokens[0], "vertex index")?;
        let j = parse_index(tokens[1], "vertex index")?;
        let w = parse_real(tokens[2], "edge weight")?;
        if i >= n || j >= n {
            return Err(Error::format(format!(
                "{}:{}: vertex index out of range [0, {n})",
                path.display(),
                lineno + 1
            )));
        }
        edges.push((i, j, w));
    }
    let n = n_vertices
        .ok_or_else(|| Error::format(format!("{}: missing `#vertices N` header", path.display())))?;
    let masses = match mass_path {
        Some(mp) => load_column(mp, "mass")?,
        None => vec![1.0 / n.max(1) as f64; n],
    };
    Graph::new(n, edges, masses)
}

/// Writes the edge list to `path` and, when given, the masses to `mass_path`.
pub fn write_graph(path: impl AsRef<Path>, mass_path: Option<&Path>, graph: &Graph) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "#vertices {}", graph.n_vertices()).map_err(io)?;
    for &(i, j, wt) in graph.edges() {
        writeln!(w, "{i} {j} {}", fmt_real(wt)).map_err(io)?;
    }
    finish(path, w)?;
    if let Some(mp) = mass_path {
        write_table(mp, &["mass"], &[Column::Real(graph.masses().to_vec())])?;
    }
    Ok(())
}

/// Reads a one-column CSV, with an optional header named `name`.
fn load_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let rows = read_records(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        if row.len() != 1 {
            return Err(Error::format(format!("{}: expected one column", path.display())));
        }
        if k == 0 && row[0] == name {
            continue;
        }
        out.push(parse_real(&row[0], name)?);
    }
    Ok(out)
}

fn expect_keyword<'a>(line: Option<&'a str>, key: &str, count: usize, path: &Path) -> Result<Vec<&'a str>> {
    let line = line.ok_or_else(|| Error::format(format!("{}: missing `{key}` line", path.display())))?;
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(key) {
        return Err(Error::format(format!("{}: expected `{key}` line, got {line:?}", path.display())));
    }
    let rest: Vec<&str> = tokens.collect();
    if rest.len() != count {
        return Err(Error::format(format!(
            "{}: `{key}` expects {count} values",
            path.display()
        )));
    }
    Ok(rest)
}

/// Reads `dims`, `origin`, `spacing` header lines followed by `ix iy iz mass`.
pub fn load_voxel_grid(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let d = expect_keyword(lines.next(), "dims", 3, path)?;
    let dims = [
        parse_index(d[0], "nx")?,
        parse_index(d[1], "ny")?,
        parse_index(d[2], "nz")?,
    ];
    let o = expect_keyword(lines.next(), "origin", 3, path)?;
    let origin = [
        parse_real(o[0], "origin")?,
        parse_real(o[1], "origin")?,
        parse_real(o[2], "origin")?,
    ];
    let h = expect_keyword(lines.next(), "spacing", 1, path)?;
    let spacing = parse_real(h[0], "spacing")?;
    let mut occupied = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(Error::format(format!(
                "{}: expected `ix iy iz mass`, got {line:?}",
                path.display()
            )));
        }
        occupied.push(Voxel {
            index: [
                parse_index(t[0], "ix")?,
                parse_index(t[1], "iy")?,
                parse_index(t[2], "iz")?,
            ],
            mass: parse_real(t[3], "mass")?,
        });
    }
    VoxelGrid::new(dims, origin, spacing, occupied)
}

pub fn write_voxel_grid(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let [nx, ny, nz] = grid.dims();
    let [ox, oy, oz] = grid.origin();
    writeln!(w, "dims {nx} {ny} {nz}").map_err(io)?;
    writeln!(w, "origin {} {} {}", fmt_real(ox), fmt_real(oy), fmt_real(oz)).map_err(io)?;
    writeln!(w, "spacing {}", fmt_real(grid.spacing())).map_err(io)?;
    for v in grid.occupied() {
        let [i, j, k] = v.index;
        writeln!(w, "{i} {j} {k} {}", fmt_real(v.mass)).map_err(io)?;
    }
    finish(path, w)
}

/// Reads rows `weight, m0..m{d-1}, c00..c{d*d-1}`; an optional header row
/// is skipped.
pub fn load_gmm(path: impl AsRef<Path>) -> Result<GaussianMixture> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    let mut dim = None;
    let mut components = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        if k == 0 && !is_numeric_row(row) {
            continue;
        }
        let len = row.len();
        // len = 1 + d + d^2
        let d = (1..=len).find(|d| 1 + d + d * d >= len).unwrap_or(0);
        if d == 0 || 1 + d + d * d != len {
            return Err(Error::format(format!(
                "{}: row {} has {len} fields, not of the form 1 + d + d^2",
                path.display(),
                k + 1
            )));
        }
        if *dim.get_or_insert(d) != d {
            return Err(Error::format(format!("{}: ragged mixture rows", path.display())));
        }
        let vals = row
            .iter()
            .map(|t| parse_real(t, "mixture entry"))
            .collect::<Result<Vec<f64>>>()?;
        components.push(GaussianComponent {
            weight: vals[0],
            mean: vals[1..1 + d].to_vec(),
            covariance: vals[1 + d..].to_vec(),
        });
    }
    let dim = dim.ok_or_else(|| Error::format(format!("{}: no mixture components", path.display())))?;
    GaussianMixture::new(dim, components)
}

pub fn write_gmm(path: impl AsRef<Path>, gmm: &GaussianMixture) -> Result<()> {
    let path = path.as_ref();
    let d = gmm.dim();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let mut header = vec!["weight".to_owned()];
    header.extend((0..d).map(|a| format!("m{a}")));
    header.extend((0..d * d).map(|a| format!("c{}{}", a / d, a % d)));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for c in gmm.components() {
        let fields: Vec<String> = std::iter::once(&c.weight)
            .chain(&c.mean)
            .chain(&c.covariance)
            .map(|&x| fmt_real(x))
            .collect();
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    finish(path, w)
}

/// One column of an output table.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Index(Vec<usize>),
    Real(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Index(v) => v.len(),
            Column::Real(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Index(v) => v[row].to_string(),
            Column::Real(v) => fmt_real(v[row]),
            Column::Text(v) => v[row].clone(),
        }
    }

    /// `0..n` index column.
    pub fn range(n: usize) -> Self {
        Column::Index((0..n).collect())
    }
}

/// Writes a CSV table with a header row.
pub fn write_table(path: impl AsRef<Path>, column_names: &[&str], columns: &[Column]) -> Result<()> {
    let path = path.as_ref();
    if columns.is_empty() {
        return Err(Error::format("cannot write a table without columns"));
    }
    if column_names.len() != columns.len() {
        return Err(Error::format(format!(
            "{} column names for {} columns",
            column_names.len(),
            columns.len()
        )));
    }
    let rows = columns[0].len();
    if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::Shape {
            expected: rows,
            actual: bad.len(),
        });
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", column_names.join(",")).map_err(io)?;
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| c.cell(r)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    finish(path, w)
}

/// Writes a signal as `index,f0,...,f{P-1}`.
pub fn write_signal(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    let names: Vec<String> = std::iter::once("index".to_owned())
        .chain((0..signal.channels()).map(|c| format!("f{c}")))
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut columns = vec![Column::range(signal.rows())];
    columns.extend((0..signal.channels()).map(|c| Column::Real(signal.column(c))));
    write_table(path, &names, &columns)
}

/// Reads a table with a header row. Returns the column names and the numeric
/// columns.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    let (header, body) = rows
        .split_first()
        .ok_or_else(|| Error::format(format!("{}: empty table", path.display())))?;
    if is_numeric_row(header) {
        return Err(Error::format(format!("{}: missing header row", path.display())));
    }
    let mut columns = vec![Vec::with_capacity(body.len()); header.len()];
    for (k, row) in body.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::format(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                k + 1,
                row.len(),
                header.len()
            )));
        }
        for (col, tok) in columns.iter_mut().zip(row) {
            col.push(parse_real(tok, "table entry")?);
        }
    }
    Ok((header.clone(), columns))
}

/// Reads a signal table; a leading `index` column is dropped.
pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let (names, mut columns) = read_table(path)?;
    if names.first().map(String::as_str) == Some("index") {
        columns.remove(0);
    }
    Signal::from_columns(&columns)
}
