//! CSV tables: `#` comment lines, a header row, numbers with 17 significant
//! digits, and an optional trailing comment.

use std::io::Write;
use std::path::Path;

use mona_core::formulations::{reconstruct_electric, FormulationError};
use mona_core::netlist::BranchClass;
use mona_core::{Formulation, ImplicitDae, Trajectory};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Written as a final `# ...` line after the data.
    pub trailer: Option<String>,
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

impl Table {
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|&v| format_number(v)))?;
        }
        let mut out = csv.into_inner().map_err(|e| e.into_error())?;
        if let Some(t) = &self.trailer {
            writeln!(out, "# {t}")?;
        }
        out.flush()
    }

    pub fn write_file(&self, path: &Path) -> Result<(), CliError> {
        let io = |source| CliError::Write {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        self.write_to(std::io::BufWriter::new(file)).map_err(io)
    }
}

/// Columns `t`, the native unknowns, and for MONA the reconstructed `e_<node>`,
/// `i_<V>` and `phi_<L>`.
pub fn trajectory_table(dae: &ImplicitDae, traj: &Trajectory) -> Result<Table, FormulationError> {
    let mut header = vec!["t".to_string()];
    header.extend(dae.variable_names());
    let mut rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| std::iter::once(*t).chain(x.iter().copied()).collect())
        .collect();
    if dae.formulation == Formulation::Mona {
        let inc = &dae.incidence;
        header.extend(inc.nodes.iter().map(|n| format!("e_{n}")));
        header.extend(
            inc.names(BranchClass::VoltageSource)
                .iter()
                .map(|n| format!("i_{n}")),
        );
        header.extend(
            inc.names(BranchClass::Inductor)
                .iter()
                .map(|n| format!("phi_{n}")),
        );
        let rec = reconstruct_electric(dae, traj)?;
        for (n, row) in rows.iter_mut().enumerate() {
            row.extend(rec.potentials[n].iter());
            row.extend(rec.source_currents[n].iter());
            row.extend(rec.fluxes[n].iter());
        }
    }
    Ok(Table {
        header,
        rows,
        ..Table::default()
    })
}
