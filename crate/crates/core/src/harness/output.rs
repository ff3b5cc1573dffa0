//! Artifact writers. Every file is written to a temporary sibling and then
//! renamed into place.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::analysis::BoundCurve;
use crate::dynamics::Trajectory;
use crate::graph::WeightedDigraph;

pub fn write_atomic<F>(path: &Path, fill: F) -> Result<PathBuf, HarnessError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let file = fs::File::create(&tmp).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        fill(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(path.to_path_buf())
}

/// `t,e_1,...,e_n`.
pub fn write_error_curves(w: &mut dyn Write, traj: &Trajectory) -> io::Result<()> {
    write!(w, "t")?;
    for i in 1..=traj.node_count() {
        write!(w, ",e_{i}")?;
    }
    writeln!(w)?;
    for k in 0..traj.len() {
        write!(w, "{:.16e}", traj.times[k])?;
        for &e in traj.errors_at(k) {
            write!(w, ",{e:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One node's error next to every bound curve: `t,error,<kind>_lower,<kind>_upper,...`.
pub fn write_node_bounds(
    w: &mut dyn Write,
    traj: &Trajectory,
    node: usize,
    curves: &[BoundCurve],
) -> io::Result<()> {
    write!(w, "t,error")?;
    let mut columns = Vec::new();
    for c in curves {
        if let Some(pos) = c.nodes.iter().position(|&n| n == node) {
            write!(w, ",{0}_lower,{0}_upper", c.kind)?;
            columns.push((c, pos));
        }
    }
    writeln!(w)?;
    for k in 0..traj.len() {
        write!(w, "{:.16e},{:.16e}", traj.times[k], traj.error(k, node))?;
        for (c, pos) in &columns {
            write!(w, ",{:.16e},{:.16e}", c.lower(k, *pos), c.upper(k, *pos))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Every edge with a flag marking the traced path: `tail,head,weight,on_path`.
pub fn write_path_edges(w: &mut dyn Write, g: &WeightedDigraph, path: &[usize]) -> io::Result<()> {
    writeln!(w, "tail,head,weight,on_path")?;
    for e in g.edges() {
        let on_path = path.windows(2).any(|p| p[0] == e.tail && p[1] == e.head);
        writeln!(w, "{},{},{},{}", e.tail + 1, e.head + 1, e.weight, u8::from(on_path))?;
    }
    Ok(())
}

/// `node,x,y,state,on_path`.
pub fn write_path_nodes(
    w: &mut dyn Write,
    positions: &[(f64, f64)],
    states: &[f64],
    path: &[usize],
) -> io::Result<()> {
    writeln!(w, "node,x,y,state,on_path")?;
    for (i, ((x, y), s)) in positions.iter().zip(states).enumerate() {
        writeln!(w, "{},{x},{y},{s:.16e},{}", i + 1, u8::from(path.contains(&i)))?;
    }
    Ok(())
}
