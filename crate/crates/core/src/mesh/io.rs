use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryEdge, TriMesh};
use crate::error::{Error, Result};

/// On-disk mesh layout. Indices are 0-based; `fixed_vertices` lists the
/// frozen vertex indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<(usize, usize, String)>,
    pub fixed_vertices: Vec<usize>,
}

impl From<&TriMesh> for MeshFile {
    fn from(m: &TriMesh) -> Self {
        MeshFile {
            vertices: m.vertices.clone(),
            triangles: m.triangles.clone(),
            boundary_edges: m
                .boundary_edges
                .iter()
                .map(|e| (e.vertices[0], e.vertices[1], e.tag.clone()))
                .collect(),
            fixed_vertices: (0..m.num_vertices()).filter(|&v| m.fixed[v]).collect(),
        }
    }
}

impl TryFrom<MeshFile> for TriMesh {
    type Error = Error;

    fn try_from(f: MeshFile) -> Result<TriMesh> {
        let nv = f.vertices.len();
        let mut fixed = vec![false; nv];
        for (k, &v) in f.fixed_vertices.iter().enumerate() {
            if v >= nv {
                return Err(Error::InvalidMesh(format!(
                    "fixed_vertices[{k}]: vertex index {v} out of range (vertex count {nv})"
                )));
            }
            fixed[v] = true;
        }
        let edges = f
            .boundary_edges
            .into_iter()
            .map(|(a, b, tag)| BoundaryEdge {
                vertices: [a, b],
                tag,
            })
            .collect();
        TriMesh::new(f.vertices, f.triangles, edges, fixed)
    }
}

/// Parses a mesh from JSON text.
pub fn parse_mesh(text: &str) -> Result<TriMesh> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::MeshParse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    TriMesh::try_from(file)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_mesh(&text).map_err(|e| match e {
        Error::MeshParse { location, message } => Error::MeshParse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        Error::InvalidMesh(msg) => Error::InvalidMesh(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string(&MeshFile::from(mesh))?;
    fs::write(path, json)?;
    Ok(())
}
