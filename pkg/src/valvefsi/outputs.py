"""Run outputs: per-step CSV, events, timings and VTK field snapshots."""

import json
import os

import numpy as np

CSV_COLUMNS = ("t", "c", "cdot", "OA", "flux", "dp_probe", "F_fluid",
               "F_elastic", "denom", "rhs", "iters", "res")


def format_row(row: dict) -> str:
    parts = []
    for col in CSV_COLUMNS:
        v = row[col]
        if col == "iters":
            parts.append(str(int(v)))
        else:
            parts.append(f"{float(v):.17g}")
    return ",".join(parts)


def write_csv(rows, path):
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            f.write(format_row(row) + "\n")


def read_csv(path):
    """Parse a run CSV back to a list of row dicts (lossless at 17 digits)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        rows = []
        for line in f:
            vals = line.strip().split(",")
            row = {}
            for col, val in zip(CSV_COLUMNS, vals):
                row[col] = int(val) if col == "iters" else float(val)
            rows.append(row)
    return rows


def write_events(events, path):
    with open(path, "w") as f:
        f.write("time,step,event,c,cdot\n")
        for e in events:
            f.write(f"{e['time']:.17g},{e['step']},{e['event']},"
                    f"{e['c']:.17g},{e['cdot']:.17g}\n")


def write_timings(timings: dict, path):
    with open(path, "w") as f:
        json.dump(timings, f, indent=2, sort_keys=True)


def write_vtk(path, mesh, point_fields: dict):
    """Legacy ASCII VTK unstructured grid with vertex point data.

    point_fields maps names to (n_vertices,) scalars or (n_vertices, d)
    vectors (padded to three components).
    """
    verts = mesh.vertices
    n = len(verts)
    cells = mesh.cells
    if mesh.dim == 2:
        order = [0, 1, 3, 2]  # lexicographic corners -> VTK_QUAD
        cell_type = 9
    else:
        order = [0, 1, 3, 2, 4, 5, 7, 6]  # -> VTK_HEXAHEDRON
        cell_type = 12
    conn = cells[:, order]
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\nvalvefsi snapshot\nASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {n} double\n")
        for v in verts:
            coords = list(v) + [0.0] * (3 - mesh.dim)
            f.write(" ".join(f"{x:.9e}" for x in coords) + "\n")
        f.write(f"CELLS {len(conn)} {len(conn) * (len(order) + 1)}\n")
        for c in conn:
            f.write(f"{len(order)} " + " ".join(str(i) for i in c) + "\n")
        f.write(f"CELL_TYPES {len(conn)}\n")
        for _ in range(len(conn)):
            f.write(f"{cell_type}\n")
        f.write(f"POINT_DATA {n}\n")
        for name, data in point_fields.items():
            data = np.asarray(data)
            if data.ndim == 1:
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for x in data:
                    f.write(f"{x:.9e}\n")
            else:
                f.write(f"VECTORS {name} double\n")
                for row in data:
                    vals = list(row) + [0.0] * (3 - data.shape[1])
                    f.write(" ".join(f"{x:.9e}" for x in vals) + "\n")


def snapshot_path(directory, step: int) -> str:
    return os.path.join(directory, f"step_{step:06d}.vtk")
