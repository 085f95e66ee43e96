//! Full-order plane-stress model of the frame.
//!
//! Stiffness is stored per subdomain so that any damage state is an affine
//! combination of fixed matrices. Clamped dofs are removed by row and
//! column elimination when [`FomArrays`] is built.

pub mod element;
mod load;
mod modal;
pub mod moving_load;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, GenAlphaParams, SparseSystem, StateHistory, TimeGrid};
use crate::linalg::CsrMatrix;
use crate::mesh::Mesh2D;

pub use load::{edge_load_vector, load_modulation, load_vector_portal};
pub use modal::natural_frequencies;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Pa
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m³
    pub density: f64,
}

impl Material {
    /// E = 30 GPa, ν = 0.2, ρ = 2500 kg/m³.
    pub fn concrete() -> Self {
        Self {
            young_modulus: 30e9,
            poisson_ratio: 0.2,
            density: 2500.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young_modulus.is_finite() && self.young_modulus > 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "Young's modulus must be positive, got {}",
                self.young_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidMaterial(format!(
                "Poisson's ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// Plane-stress constitutive matrix in Voigt order (xx, yy, xy).
    pub fn plane_stress(&self) -> [[f64; 3]; 3] {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        let c = e / (1.0 - nu * nu);
        [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
    }
}

/// One operating and damage condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    /// Damage class: 0 is undamaged, p damages subdomain Ω_p.
    pub class: usize,
    /// Load amplitude (Pa).
    pub amplitude: f64,
    /// Load frequency (Hz).
    pub frequency: f64,
    /// Fractional stiffness loss in the damaged subdomain.
    pub damage_level: f64,
}

impl ParamPoint {
    pub fn undamaged(amplitude: f64, frequency: f64) -> Self {
        Self {
            class: 0,
            amplitude,
            frequency,
            damage_level: 0.0,
        }
    }

    pub fn validate(&self, subdomain_count: usize) -> Result<()> {
        if self.class > subdomain_count {
            return Err(Error::InvalidArgument(format!(
                "damage class {} exceeds {subdomain_count}",
                self.class
            )));
        }
        if self.class == 0 && self.damage_level != 0.0 {
            return Err(Error::InvalidArgument(
                "undamaged points must carry a zero damage level".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.damage_level) {
            return Err(Error::InvalidArgument(format!(
                "damage level must lie in [0, 1), got {}",
                self.damage_level
            )));
        }
        if !self.amplitude.is_finite() || !(self.frequency.is_finite() && self.frequency >= 0.0) {
            return Err(Error::InvalidArgument("non-finite load parameters".into()));
        }
        Ok(())
    }
}

/// Stiffness multipliers ψ_p for subdomains 0..=G.
pub fn damage_coefficients(subdomain_count: usize, class: usize, damage_level: f64) -> Result<Vec<f64>> {
    if class > subdomain_count {
        return Err(Error::InvalidArgument(format!(
            "damage class {class} exceeds {subdomain_count}"
        )));
    }
    if !(0.0..1.0).contains(&damage_level) {
        return Err(Error::InvalidArgument(format!(
            "damage level must lie in [0, 1), got {damage_level}"
        )));
    }
    let mut psi = vec![1.0; subdomain_count + 1];
    if class != 0 {
        psi[class] = 1.0 - damage_level;
    }
    Ok(psi)
}

fn element_xy(mesh: &Mesh2D, e: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.elements[e];
    [mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]]
}

fn element_dofs(el: &[usize; 3]) -> [usize; 6] {
    [
        2 * el[0],
        2 * el[0] + 1,
        2 * el[1],
        2 * el[1] + 1,
        2 * el[2],
        2 * el[2] + 1,
    ]
}

fn check_areas(mesh: &Mesh2D) -> Result<()> {
    for e in 0..mesh.elements.len() {
        let area = mesh.signed_area(e);
        if !(area > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "element {e} has non-positive signed area {area:e}"
            )));
        }
    }
    Ok(())
}

/// Assembles element matrices into the full dof space. Elements for which
/// `include` is false contribute explicit zeros, so every call yields the
/// same sparsity pattern.
fn assemble(
    mesh: &Mesh2D,
    include: impl Fn(usize) -> bool,
    kernel: impl Fn(&[[f64; 2]; 3]) -> [[f64; 6]; 6],
) -> Result<CsrMatrix> {
    check_areas(mesh)?;
    let n = mesh.dof_count();
    let mut triplets = Vec::with_capacity(36 * mesh.elements.len());
    for (e, el) in mesh.elements.iter().enumerate() {
        let dofs = element_dofs(el);
        let take = include(e);
        let ke = if take {
            kernel(&element_xy(mesh, e))
        } else {
            [[0.0; 6]; 6]
        };
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], ke[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Consistent mass matrix over all dofs.
pub fn assemble_mass(mesh: &Mesh2D, material: &Material) -> Result<CsrMatrix> {
    material.validate()?;
    assemble(
        mesh,
        |_| true,
        |xy| element::cst_mass(xy, material.density, mesh.thickness),
    )
}

/// Undamaged stiffness over all dofs, assembled in one pass.
pub fn assemble_stiffness(mesh: &Mesh2D, material: &Material) -> Result<CsrMatrix> {
    material.validate()?;
    assemble(
        mesh,
        |_| true,
        |xy| element::cst_stiffness(xy, material, mesh.thickness),
    )
}

/// Per-subdomain stiffness `K_p`, p = 0..=G, over all dofs.
pub fn assemble_stiffness_components(mesh: &Mesh2D, material: &Material) -> Result<Vec<CsrMatrix>> {
    material.validate()?;
    (0..=mesh.subdomain_count)
        .map(|p| {
            assemble(
                mesh,
                |e| mesh.subdomain[e] == p,
                |xy| element::cst_stiffness(xy, material, mesh.thickness),
            )
        })
        .collect()
}

/// Constrained full-order arrays of the affine decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct FomArrays {
    pub mass: CsrMatrix,
    /// `K_p` for p = 0..=G, sharing one sparsity pattern.
    pub stiffness: Vec<CsrMatrix>,
    /// Nodal forces of a unit pressure on the loaded edge.
    pub load: Vec<f64>,
    /// Full-mesh index of every retained dof.
    pub free_dofs: Vec<usize>,
    pub full_dof_count: usize,
}

impl FomArrays {
    pub fn build(mesh: &Mesh2D, material: &Material) -> Result<Self> {
        mesh.validate()?;
        let free = mesh.free_dofs();
        let mass = assemble_mass(mesh, material)?.submatrix(&free);
        let stiffness = assemble_stiffness_components(mesh, material)?
            .iter()
            .map(|k| k.submatrix(&free))
            .collect();
        let full_load = edge_load_vector(mesh)?;
        let load = free.iter().map(|&d| full_load[d]).collect();
        Ok(Self {
            mass,
            stiffness,
            load,
            free_dofs: free,
            full_dof_count: mesh.dof_count(),
        })
    }

    /// Number of retained dofs M.
    pub fn dof_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn subdomain_count(&self) -> usize {
        self.stiffness.len() - 1
    }

    /// `K(g, δ) = Σ ψ_p K_p`.
    pub fn stiffness_at(&self, class: usize, damage_level: f64) -> Result<CsrMatrix> {
        let psi = damage_coefficients(self.subdomain_count(), class, damage_level)?;
        let mats: Vec<&CsrMatrix> = self.stiffness.iter().collect();
        CsrMatrix::linear_combination(&mats, &psi)
    }

    /// Retained-dof position of a full-mesh dof, if it is not constrained.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_dofs.binary_search(&dof).ok()
    }

    /// Scatters a retained-dof vector into the full dof space.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_dof_count];
        for (&d, &v) in self.free_dofs.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }

    /// Integrates the response to `point` from rest.
    pub fn solve(&self, point: &ParamPoint, grid: &TimeGrid, params: &GenAlphaParams) -> Result<StateHistory> {
        point.validate(self.subdomain_count())?;
        let k = self.stiffness_at(point.class, point.damage_level)?;
        let system = SparseSystem::new(&self.mass, &k)?;
        let zero = vec![0.0; self.dof_count()];
        let (amplitude, frequency) = (point.amplitude, point.frequency);
        integrate(
            &system,
            |t, f: &mut [f64]| {
                let s = load_modulation(amplitude, frequency, t);
                for (fi, &li) in f.iter_mut().zip(&self.load) {
                    *fi = s * li;
                }
            },
            &zero,
            &zero,
            grid,
            params,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_portal_mesh, rectangle_mesh, PortalGeometry};

    fn unit() -> Material {
        Material {
            young_modulus: 1.0,
            poisson_ratio: 0.25,
            density: 1.0,
        }
    }

    #[test]
    fn material_bounds() {
        assert!(Material::concrete().validate().is_ok());
        for bad in [
            Material {
                young_modulus: 0.0,
                ..unit()
            },
            Material {
                poisson_ratio: 0.5,
                ..unit()
            },
            Material {
                poisson_ratio: -0.1,
                ..unit()
            },
            Material {
                density: -1.0,
                ..unit()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn rigid_translation_recovers_total_mass() {
        let mesh = rectangle_mesh(2.0, 1.5, 3, 4, 0.2).unwrap();
        let m = assemble_mass(&mesh, &Material { density: 7.0, ..unit() }).unwrap();
        let r: Vec<f64> = (0..mesh.dof_count())
            .map(|d| if d % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let total = 7.0 * 0.2 * 3.0;
        assert!((m.bilinear(&r, &r) - total).abs() / total < 1e-12);
    }

    #[test]
    fn mass_is_linear_in_density() {
        let mesh = rectangle_mesh(1.0, 1.0, 2, 2, 1.0).unwrap();
        let m1 = assemble_mass(&mesh, &unit()).unwrap();
        let m2 = assemble_mass(&mesh, &Material { density: 2.0, ..unit() }).unwrap();
        for (a, b) in m1.values().iter().zip(m2.values()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn single_subdomain_components() {
        let mesh = rectangle_mesh(1.0, 1.0, 2, 2, 1.0).unwrap();
        let parts = assemble_stiffness_components(&mesh, &unit()).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], assemble_stiffness(&mesh, &unit()).unwrap());
    }

    #[test]
    fn components_sum_to_monolithic() {
        let mesh = generate_portal_mesh(&PortalGeometry::reference(), 0.3).unwrap();
        let mat = Material::concrete();
        let parts = assemble_stiffness_components(&mesh, &mat).unwrap();
        let whole = assemble_stiffness(&mesh, &mat).unwrap();
        let refs: Vec<&CsrMatrix> = parts.iter().collect();
        let sum = CsrMatrix::linear_combination(&refs, &vec![1.0; refs.len()]).unwrap();
        let scale = whole.max_abs();
        for (a, b) in sum.values().iter().zip(whole.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        assert!(whole.symmetry_defect() < 1e-14);
    }

    #[test]
    fn damage_is_affine() {
        let mesh = generate_portal_mesh(&PortalGeometry::reference(), 0.3).unwrap();
        let fom = FomArrays::build(&mesh, &Material::concrete()).unwrap();
        let k0 = fom.stiffness_at(0, 0.0).unwrap();
        let k = fom.stiffness_at(2, 0.25).unwrap();
        let scale = k0.max_abs();
        for ((a, b), c) in k.values().iter().zip(k0.values()).zip(fom.stiffness[2].values()) {
            assert!((a - (b - 0.25 * c)).abs() <= 1e-13 * scale);
        }
        assert!(fom.stiffness_at(1, 1.0).is_err());
        assert!(fom.stiffness_at(1, -0.1).is_err());
        assert!(fom.stiffness_at(5, 0.1).is_err());
    }
}
