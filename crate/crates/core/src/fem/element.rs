//! Constant-strain triangle kernels under plane stress.

use super::Material;

/// Strain–displacement matrix `B` (3×6) and signed area of a triangle.
pub fn strain_displacement(xy: &[[f64; 2]; 3]) -> ([[f64; 6]; 3], f64) {
    let [p0, p1, p2] = *xy;
    let area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    let b = [p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]];
    let c = [p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]];
    let mut bm = [[0.0; 6]; 3];
    let inv = 1.0 / (2.0 * area);
    for k in 0..3 {
        bm[0][2 * k] = b[k] * inv;
        bm[1][2 * k + 1] = c[k] * inv;
        bm[2][2 * k] = c[k] * inv;
        bm[2][2 * k + 1] = b[k] * inv;
    }
    (bm, area)
}

/// `t · A · Bᵀ D B`, dofs ordered `(u₀, v₀, u₁, v₁, u₂, v₂)`.
pub fn cst_stiffness(xy: &[[f64; 2]; 3], material: &Material, thickness: f64) -> [[f64; 6]; 6] {
    let (b, area) = strain_displacement(xy);
    let d = material.plane_stress();
    let mut db = [[0.0; 6]; 3];
    for i in 0..3 {
        for j in 0..6 {
            db[i][j] = (0..3).map(|k| d[i][k] * b[k][j]).sum();
        }
    }
    let scale = thickness * area;
    let mut ke = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            ke[i][j] = scale * (0..3).map(|k| b[k][i] * db[k][j]).sum::<f64>();
        }
    }
    ke
}

/// Consistent mass `ρ t A / 12 · [[2,1,1],[1,2,1],[1,1,2]]` per direction.
pub fn cst_mass(xy: &[[f64; 2]; 3], density: f64, thickness: f64) -> [[f64; 6]; 6] {
    let (_, area) = strain_displacement(xy);
    let scale = density * thickness * area / 12.0;
    let mut me = [[0.0; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            let v = if a == b { 2.0 * scale } else { scale };
            me[2 * a][2 * b] = v;
            me[2 * a + 1][2 * b + 1] = v;
        }
    }
    me
}
