//! CSV input and output. Numbers are written with 17 significant digits.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

pub fn num(x: f64) -> String {
    // no negative zero in output
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// Row-oriented CSV sink over a file or stdout.
pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn create(out: Option<&Path>, header: &[&str]) -> Result<Self, CliError> {
        let sink: Box<dyn Write> = match out {
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
            None => Box::new(std::io::stdout().lock()),
        };
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads the named numeric columns (in the given order) from a headed CSV.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_columns(file, names).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Column extraction from any reader; errors name the offending line.
pub fn parse_columns<R: std::io::Read>(input: R, names: &[&str]) -> Result<Vec<Vec<f64>>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let index: Vec<usize> = names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| format!("missing column {name:?}"))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, &j) in cols.iter_mut().zip(&index) {
            let field = record.get(j).unwrap_or("");
            let v: f64 = field
                .parse()
                .map_err(|_| format!("line {line}: column {:?} is not a number: {field:?}", &headers[j]))?;
            col.push(v);
        }
    }
    Ok(cols)
}

/// Header names of a CSV file.
pub fn read_headers(path: &Path) -> Result<Vec<String>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(headers.iter().map(str::to_string).collect())
}
