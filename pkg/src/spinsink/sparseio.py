"""Serialization helpers: sparse triplet text format, CSV and metadata files.

The triplet format is one entry per line, ``row col re im`` (0-based indices,
``%r`` floats), preceded by a ``# dim <n>`` header line.  It exists for oracle
cross-checks against independent implementations.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
import scipy.sparse as sp

__all__ = [
    "save_triplets",
    "load_triplets",
    "write_series_csv",
    "write_spectrum_csv",
    "write_metadata",
    "config_hash",
]


def save_triplets(matrix: sp.spmatrix, path) -> None:
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# dim {coo.shape[0]}\n")
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            fh.write(f"{int(coo.row[k])} {int(coo.col[k])} {float(coo.data[k].real)!r} {float(coo.data[k].imag)!r}\n")


def load_triplets(path) -> sp.csr_matrix:
    rows, cols, data = [], [], []
    dim = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["dim"]:
                    dim = int(parts[1])
                continue
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            data.append(float(re) + 1j * float(im))
    if dim is None:
        raise ValueError("triplet file lacks a '# dim' header")
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def write_series_csv(path, t_grid, columns: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]):
    """Long-format series: ``t, observable, mean, std, stderr`` per row."""
    with open(path, "w") as fh:
        fh.write("t,observable,mean,std,stderr\n")
        for name, (mean, std, stderr) in columns.items():
            for k, t in enumerate(t_grid):
                fh.write(f"{float(t)!r},{name},{float(mean[k])!r},{float(std[k])!r},{float(stderr[k])!r}\n")


def write_spectrum_csv(path, eig):
    with open(path, "w") as fh:
        fh.write("sector,index_in_sector,energy\n")
        if eig.sectors is None:
            for k, e in enumerate(eig.energies):
                fh.write(f"-1,{k},{float(e)!r}\n")
            return
        for n in eig.sector_labels():
            idx = eig.sector_indices(int(n))
            for j, k in enumerate(idx):
                fh.write(f"{int(n)},{j},{float(eig.energies[k])!r}\n")


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_metadata(path, config: dict, extra: dict | None = None):
    meta = {"config_hash": config_hash(config), "config": config}
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
