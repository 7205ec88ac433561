//! Output writers: versioned CSV tables, a legacy-format VTK snapshot of
//! the final fields, and a one-row run summary. Every file is written
//! atomically (sibling temp file + rename), so an interrupted run never
//! leaves a truncated artifact behind.

use std::path::Path;

use crate::error::Result;
use crate::march::{MarchOutcome, StepRecord};
use crate::mesh::Mesh;
use crate::spaces::DofLayout;

/// Writes `content` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// First line of every CSV artifact: format version plus table name, as a
/// comment so column parsers skip it.
pub fn csv_header(table: &str) -> String {
    format!("# iterproj-csv v1 {table}\n")
}

fn push_float(s: &mut String, v: f64) {
    s.push_str(&format!("{v:.15e}"));
}

/// Per-step time series. Error columns appear only when the run had an
/// exact solution to compare against.
pub fn steps_csv(records: &[StepRecord], with_errors: bool) -> String {
    let mut s = csv_header("steps");
    s.push_str("step,time,iterations,converged,dp_max,dp_l2,weak_div,strong_div,max_speed,energy,energy_slack");
    if with_errors {
        s.push_str(",err_u_l2,err_u_h1,err_p_l2");
    }
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},", r.n));
        push_float(&mut s, r.t);
        s.push_str(&format!(",{},{},", r.iterations, r.converged));
        for v in [r.dp_max, r.dp_l2, r.weak_div, r.strong_div, r.max_speed, r.energy] {
            push_float(&mut s, v);
            s.push(',');
        }
        if let Some(slack) = r.energy_slack {
            push_float(&mut s, slack);
        }
        if with_errors {
            s.push(',');
            if let Some(e) = r.errors {
                push_float(&mut s, e.u_l2);
                s.push(',');
                push_float(&mut s, e.u_h1);
                s.push(',');
                push_float(&mut s, e.p_l2);
            } else {
                s.push_str(",,");
            }
        }
        s.push('\n');
    }
    s
}

/// Every pass of every step's pressure iteration.
pub fn iterations_csv(records: &[StepRecord]) -> String {
    let mut s = csv_header("iterations");
    s.push_str("step,pass,dp_max,dp_l2,weak_div,strong_div\n");
    for r in records {
        for pass in &r.passes {
            s.push_str(&format!("{},{},", r.n, pass.s));
            push_float(&mut s, pass.dp_max);
            s.push(',');
            push_float(&mut s, pass.dp_l2);
            s.push(',');
            push_float(&mut s, pass.weak_div);
            s.push(',');
            push_float(&mut s, pass.strong_div);
            s.push('\n');
        }
    }
    s
}

/// One-row digest of a finished run.
pub fn summary_csv(out: &MarchOutcome, with_errors: bool) -> String {
    let mut s = csv_header("summary");
    s.push_str("t_final,steps,total_iterations,avg_iterations,final_energy,final_max_speed");
    if with_errors {
        s.push_str(",err_u_l2,err_u_h1,err_p_l2");
    }
    s.push('\n');
    let total: usize = out.records.iter().map(|r| r.iterations).sum();
    let steps = out.records.len();
    let avg = if steps > 0 { total as f64 / steps as f64 } else { 0.0 };
    let last = out.records.last();
    push_float(&mut s, out.state.t);
    s.push_str(&format!(",{steps},{total},"));
    push_float(&mut s, avg);
    s.push(',');
    push_float(&mut s, last.map(|r| r.energy).unwrap_or(0.0));
    s.push(',');
    push_float(&mut s, last.map(|r| r.max_speed).unwrap_or(0.0));
    if with_errors {
        s.push(',');
        if let Some(e) = last.and_then(|r| r.errors) {
            push_float(&mut s, e.u_l2);
            s.push(',');
            push_float(&mut s, e.u_h1);
            s.push(',');
            push_float(&mut s, e.p_l2);
        } else {
            s.push_str(",,");
        }
    }
    s.push('\n');
    s
}

/// Uniform refinement of one quadratic element into eight linear
/// sub-tetrahedra: four corner cells plus the midpoint octahedron split
/// along its `m01 - m23` diagonal.
pub fn subdivide_tet(mesh: &Mesh, t: usize) -> [[usize; 4]; 8] {
    let v = mesh.tets[t];
    let m = mesh.tet_midpoints[t];
    // Midpoint order matches the element edge order:
    // m[0]=m01 m[1]=m02 m[2]=m03 m[3]=m12 m[4]=m13 m[5]=m23.
    let (a, b, c, d, e, f) = (m[0], m[1], m[2], m[3], m[4], m[5]);
    [
        [v[0], a, b, c],
        [v[1], a, d, e],
        [v[2], b, d, f],
        [v[3], c, e, f],
        [a, f, b, d],
        [a, f, d, e],
        [a, f, e, c],
        [a, f, c, b],
    ]
}

/// Legacy ASCII VTK unstructured-grid snapshot. Quadratic velocity is
/// emitted at every node of a uniformly refined linear mesh; the
/// vertex-linear pressure is averaged onto edge midpoints.
pub fn vtk_snapshot(mesh: &Mesh, u: &[f64], p: &[f64], title: &str) -> String {
    let n_nodes = mesh.n_nodes();
    let mut s = String::with_capacity(64 * n_nodes);
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title);
    s.push('\n');
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    s.push_str(&format!("POINTS {n_nodes} double\n"));
    for x in &mesh.nodes {
        s.push_str(&format!("{:.12e} {:.12e} {:.12e}\n", x[0], x[1], x[2]));
    }

    let n_cells = 8 * mesh.n_tets();
    s.push_str(&format!("CELLS {} {}\n", n_cells, 5 * n_cells));
    for t in 0..mesh.n_tets() {
        for sub in subdivide_tet(mesh, t) {
            s.push_str(&format!("4 {} {} {} {}\n", sub[0], sub[1], sub[2], sub[3]));
        }
    }
    s.push_str(&format!("CELL_TYPES {n_cells}\n"));
    for _ in 0..n_cells {
        s.push_str("10\n");
    }

    s.push_str(&format!("POINT_DATA {n_nodes}\n"));
    s.push_str("VECTORS velocity double\n");
    for node in 0..n_nodes {
        s.push_str(&format!(
            "{:.12e} {:.12e} {:.12e}\n",
            u[DofLayout::velocity_dof(node, 0)],
            u[DofLayout::velocity_dof(node, 1)],
            u[DofLayout::velocity_dof(node, 2)]
        ));
    }

    // Extend the pressure to midpoints by edge-endpoint averaging.
    let mut nodal_p = vec![0.0f64; n_nodes];
    nodal_p[..mesh.n_primary].copy_from_slice(&p[..mesh.n_primary]);
    for &(lo, hi, mid) in &mesh.edges {
        nodal_p[mid] = 0.5 * (p[lo] + p[hi]);
    }
    s.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for v in &nodal_p {
        s.push_str(&format!("{v:.12e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::ErrorNorms;
    use crate::march::TimeState;
    use crate::mesh::build_uniform_cube_mesh;
    use crate::projector::IterationRecord;

    fn record(n: u64, with_errors: bool, with_slack: bool) -> StepRecord {
        StepRecord {
            n,
            t: n as f64 * 0.1,
            iterations: 3,
            converged: true,
            dp_max: 1e-3,
            dp_l2: 1e-4,
            weak_div: 1e-5,
            strong_div: 1e-2,
            max_speed: 1.0,
            energy: 2.5,
            force_sq: 0.5,
            energy_slack: with_slack.then_some(1e-6),
            errors: with_errors.then_some(ErrorNorms {
                u_l2: 1e-3,
                u_h1_semi: 1e-2,
                u_h1: 1.005e-2,
                p_l2: 2e-3,
            }),
            passes: vec![
                IterationRecord {
                    s: 0,
                    dp_max: 1e-1,
                    dp_l2: 1e-2,
                    weak_div: 1e-3,
                    strong_div: 1e-1,
                },
                IterationRecord {
                    s: 1,
                    dp_max: 1e-3,
                    dp_l2: 1e-4,
                    weak_div: 1e-5,
                    strong_div: 1e-2,
                },
            ],
        }
    }

    #[test]
    fn csv_tables_carry_version_header_and_conditional_error_columns() {
        let recs = vec![record(1, true, true), record(2, true, false)];
        let with = steps_csv(&recs, true);
        assert!(with.starts_with("# iterproj-csv v1 steps\n"));
        let header = with.lines().nth(1).unwrap();
        assert!(header.ends_with("err_u_l2,err_u_h1,err_p_l2"));
        // Every data row has the same number of fields as the header.
        let cols = header.split(',').count();
        for line in with.lines().skip(2) {
            assert_eq!(line.split(',').count(), cols, "row {line}");
        }

        let without = steps_csv(&recs, false);
        assert!(!without.contains("err_u_l2"));

        let iters = iterations_csv(&recs);
        assert!(iters.starts_with("# iterproj-csv v1 iterations\n"));
        // Two records with two passes each.
        assert_eq!(iters.lines().count(), 2 + 4);
    }

    #[test]
    fn summary_reports_totals_and_final_errors() {
        let out = MarchOutcome {
            records: vec![record(1, true, true), record(2, true, true)],
            state: TimeState {
                u_n: vec![],
                u_nm1: vec![],
                p_n: vec![],
                p_nm1: vec![],
                t: 0.2,
                n: 2,
            },
        };
        let s = summary_csv(&out, true);
        let header = s.lines().nth(1).unwrap();
        let row = s.lines().nth(2).unwrap();
        assert_eq!(header.split(',').count(), row.split(',').count());
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "2"); // steps
        assert_eq!(fields[2], "6"); // total iterations
    }

    #[test]
    fn subdivision_partitions_each_element() {
        let mesh = build_uniform_cube_mesh(2, [0.0; 3], [1.0; 3]).unwrap();
        let volume = |tet: &[usize; 4]| -> f64 {
            let o = mesh.nodes[tet[0]];
            let mut e = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for c in 0..3 {
                    e[i][c] = mesh.nodes[tet[i + 1]][c] - o[c];
                }
            }
            let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
            det.abs() / 6.0
        };
        for t in 0..mesh.n_tets() {
            let parent = mesh.tet_volume(t);
            let mut sum = 0.0;
            for sub in subdivide_tet(&mesh, t) {
                let v = volume(&sub);
                // Uniform refinement: every child has an eighth of the
                // parent volume.
                assert!((v - parent / 8.0).abs() < 1e-15, "child {v} parent {parent}");
                sum += v;
            }
            assert!((sum - parent).abs() < 1e-14);
        }
    }

    #[test]
    fn vtk_snapshot_is_well_formed() {
        let mesh = build_uniform_cube_mesh(1, [0.0; 3], [1.0; 3]).unwrap();
        let n = mesh.n_nodes();
        let u: Vec<f64> = (0..3 * n).map(|i| i as f64).collect();
        let p: Vec<f64> = (0..mesh.n_primary).map(|i| i as f64).collect();
        let text = vtk_snapshot(&mesh, &u, &p, "test snapshot");
        assert!(text.contains(&format!("POINTS {n} double")));
        assert!(text.contains(&format!("CELLS {} {}", 8 * mesh.n_tets(), 40 * mesh.n_tets())));
        assert!(text.contains("VECTORS velocity double"));
        assert!(text.contains("SCALARS pressure double 1"));
        // Midpoint pressure is the average of the edge endpoints.
        let (lo, hi, mid) = mesh.edges[0];
        let scalars: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.starts_with("LOOKUP_TABLE"))
            .skip(1)
            .take(n)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(scalars.len(), n);
        assert!((scalars[mid] - 0.5 * (p[lo] + p[hi])).abs() < 1e-12);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("output-atomic-{}.csv", std::process::id()));
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        assert!(!std::path::Path::new(&tmp).exists());
        std::fs::remove_file(&path).ok();
    }
}
