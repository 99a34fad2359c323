"""Render triangle wireframes from goafem mesh dumps.

Dump format: header "nv nt", then nv lines "x y boundary_flag", then nt
lines "v0 v1 v2".
"""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class DumpError(Exception):
    pass


def read_dump(path):
    try:
        with open(path) as f:
            nv, nt = map(int, f.readline().split())
            vertices = np.empty((nv, 2))
            boundary = np.empty(nv, dtype=bool)
            for i in range(nv):
                x, y, flag = f.readline().split()
                vertices[i] = (float(x), float(y))
                boundary[i] = bool(int(flag))
            triangles = np.empty((nt, 3), dtype=int)
            for i in range(nt):
                triangles[i] = list(map(int, f.readline().split()))
    except (ValueError, IndexError) as exc:
        raise DumpError(f"{path}: malformed mesh dump: {exc}") from exc
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        raise DumpError(f"{path}: triangle vertex id out of range")
    return vertices, triangles, boundary


def plot_mesh(dump_path, output_path) -> None:
    vertices, triangles, _ = read_dump(dump_path)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.triplot(vertices[:, 0], vertices[:, 1], triangles,
               color="black", linewidth=0.4)
    ax.set_aspect("equal")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(output_path, dpi=150)
    plt.close(fig)
