"""Minimal legacy-VTK reader used only to validate writer output structurally."""

import numpy as np


def read_legacy_vtk(path):
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    assert lines[0].startswith("# vtk DataFile Version"), "missing VTK header"
    title = lines[1]
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    i = 4
    assert lines[i].startswith("POINTS ")
    n_points = int(lines[i].split()[1])
    i += 1
    points = np.array([[float(v) for v in lines[i + j].split()] for j in range(n_points)])
    assert points.shape == (n_points, 3)
    i += n_points
    assert lines[i].startswith("CELLS ")
    n_cells, total = int(lines[i].split()[1]), int(lines[i].split()[2])
    i += 1
    cells = []
    for j in range(n_cells):
        toks = [int(v) for v in lines[i + j].split()]
        assert toks[0] == len(toks) - 1
        assert all(0 <= v < n_points for v in toks[1:])
        cells.append(toks[1:])
    assert sum(len(c) + 1 for c in cells) == total
    i += n_cells
    assert lines[i].startswith("CELL_TYPES ")
    assert int(lines[i].split()[1]) == n_cells
    i += 1
    cell_types = [int(lines[i + j]) for j in range(n_cells)]
    i += n_cells
    point_data = {}
    if i < len(lines) and lines[i].startswith("POINT_DATA"):
        assert int(lines[i].split()[1]) == n_points
        i += 1
        while i < len(lines):
            if lines[i].startswith("VECTORS"):
                name = lines[i].split()[1]
                i += 1
                arr = np.array(
                    [[float(v) for v in lines[i + j].split()] for j in range(n_points)]
                )
                point_data[name] = arr
                i += n_points
            elif lines[i].startswith("SCALARS"):
                name = lines[i].split()[1]
                assert lines[i + 1].startswith("LOOKUP_TABLE")
                i += 2
                arr = np.array([float(lines[i + j]) for j in range(n_points)])
                point_data[name] = arr
                i += n_points
            elif not lines[i].strip():
                i += 1
            else:
                raise AssertionError(f"unexpected VTK line: {lines[i]!r}")
    return {
        "title": title,
        "points": points,
        "cells": cells,
        "cell_types": cell_types,
        "point_data": point_data,
    }
