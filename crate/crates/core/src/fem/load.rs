use std::f64::consts::PI;

use super::ParamPoint;
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;

/// Consistent nodal forces (N per Pa) of a unit pressure acting in +x on
/// the mesh's loaded edges. Linear edges split the resultant equally
/// between their end nodes.
pub fn edge_load_vector(mesh: &Mesh2D) -> Result<Vec<f64>> {
    if mesh.loaded_edges.is_empty() {
        return Err(Error::InvalidMesh("mesh has no loaded edges".into()));
    }
    let mut f = vec![0.0; mesh.dof_count()];
    for &[a, b] in &mesh.loaded_edges {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let half = 0.5 * length * mesh.thickness;
        f[2 * a] += half;
        f[2 * b] += half;
    }
    Ok(f)
}

/// `A |sin(2π f t)|`
pub fn load_modulation(amplitude: f64, frequency: f64, t: f64) -> f64 {
    amplitude * (2.0 * PI * frequency * t).sin().abs()
}

/// Full-dof load vector at time `t` for the portal-frame load.
pub fn load_vector_portal(mesh: &Mesh2D, t: f64, point: &ParamPoint) -> Result<Vec<f64>> {
    let s = load_modulation(point.amplitude, point.frequency, t);
    let mut f = edge_load_vector(mesh)?;
    for v in &mut f {
        *v *= s;
    }
    Ok(f)
}
