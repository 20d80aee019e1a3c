//! CSV and plain-text serialization of run artifacts.
//!
//! Every file starts with `#` comment lines naming the generating scenario
//! and the config checksum, so any artifact can be traced back to the run
//! that produced it. Floats are written in shortest round-trip form, which
//! re-parses to the identical bits.

use crate::aperture::DensityProfile;
use crate::bohm::{ImpactRecord, TrajectoryOutcome};
use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Provenance stamped into every artifact.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub scenario: String,
    pub config_sha256: String,
}

impl Provenance {
    fn header(&self) -> String {
        format!("# scenario: {}\n# config_sha256: {}\n", self.scenario, self.config_sha256)
    }
}

/// `x_m,rho_per_m` rows with profile metadata in the comments.
pub fn profile_csv(profile: &DensityProfile, prov: &Provenance) -> String {
    let m = &profile.meta;
    let mut s = prov.header();
    s.push_str(&format!("# mode: {}\n", m.mode));
    s.push_str(&format!("# t_s: {}\n", m.t));
    s.push_str(&format!("# delta_z_m: {}\n", m.delta_z));
    s.push_str(&format!("# k0z_per_m: {}\n", m.k0z));
    s.push_str(&format!("# z0_m: {}\n", m.z0));
    s.push_str(&format!("# n_quad_slit: {}\n", m.n_quad_slit));
    s.push_str(&format!("# n_quad_k: {}\n", m.n_quad_k));
    s.push_str("x_m,rho_per_m\n");
    for (i, v) in profile.values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", profile.grid.point(i), v));
    }
    s
}

/// `traj_id,t_s,x_m,y_m,z_m` rows over a bundle of paths.
pub fn trajectories_csv(bundle: &[TrajectoryOutcome], prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("traj_id,t_s,x_m,y_m,z_m\n");
    for (id, out) in bundle.iter().enumerate() {
        for st in &out.states {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                id, st.t, st.position[0], st.position[1], st.position[2]
            ));
        }
    }
    s
}

/// `x_m,y_m,t_s,slit` rows.
pub fn impacts_csv(impacts: &[ImpactRecord], prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("x_m,y_m,t_s,slit\n");
    for i in impacts {
        s.push_str(&format!("{},{},{},{}\n", i.x, i.y, i.t_arrival, i.slit));
    }
    s
}

/// Plain-text matrix: one labeled row per line, x positions as the column
/// header.
pub fn matrix_csv(
    row_label: &str,
    xs: &[f64],
    rows: &[(f64, Vec<f64>)],
    prov: &Provenance,
) -> String {
    let mut s = prov.header();
    s.push_str(row_label);
    for x in xs {
        s.push_str(&format!(",{x}"));
    }
    s.push('\n');
    for (label, values) in rows {
        debug_assert_eq!(values.len(), xs.len());
        s.push_str(&format!("{label}"));
        for v in values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

/// Flat `key = value` block with provenance comments.
pub fn keyed_text(body: &str, prov: &Provenance) -> String {
    format!("{}{}", prov.header(), body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{ProfileMeta, ProfileMode};
    use crate::model::Grid1D;

    fn prov() -> Provenance {
        Provenance { scenario: "test".into(), config_sha256: "ab".repeat(32) }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn profile_csv_round_trips_values() {
        let grid = Grid1D::symmetric(1e-3, 5).unwrap();
        let profile = DensityProfile {
            grid,
            values: vec![0.1, 0.25, 1.0 / 3.0, 0.25, 0.1],
            meta: ProfileMeta {
                mode: ProfileMode::Interference,
                t: 0.196,
                delta_z: 0.113,
                k0z: 0.0,
                z0: 0.0,
                n_quad_slit: 200,
                n_quad_k: 20,
            },
        };
        let text = profile_csv(&profile, &prov());
        assert!(text.contains("# scenario: test\n"));
        assert!(text.contains("x_m,rho_per_m\n"));
        // every data row re-parses to the same bits
        let mut n = 0;
        for line in text.lines().filter(|l| !l.starts_with('#') && l.contains(',')) {
            if line.starts_with("x_m") {
                continue;
            }
            let (x, v) = line.split_once(',').unwrap();
            let x: f64 = x.parse().unwrap();
            let v: f64 = v.parse().unwrap();
            let i = ((x - grid.min) / grid.spacing()).round() as usize;
            assert_eq!(x, grid.point(i));
            assert_eq!(v, profile.values[i]);
            n += 1;
        }
        assert_eq!(n, 5);
    }

    #[test]
    fn matrix_layout() {
        let text = matrix_csv(
            "z_m",
            &[-1.0, 0.0, 1.0],
            &[(0.5, vec![1.0, 2.0, 3.0]), (1.5, vec![4.0, 5.0, 6.0])],
            &prov(),
        );
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], "z_m,-1,0,1");
        assert_eq!(lines[1], "0.5,1,2,3");
        assert_eq!(lines[2], "1.5,4,5,6");
    }
}
