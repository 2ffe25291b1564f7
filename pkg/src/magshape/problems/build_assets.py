"""Regenerate the shipped die-press meshes.

    python -m magshape.problems.build_assets [OUTDIR]

Writes into the package asset directory unless OUTDIR is given.
"""
from __future__ import annotations

import sys
from pathlib import Path

from ..mesh import save_mesh
from . import die_press_geometry as geo
from .die_press import AFFINE_LAYOUT_ASSET, AFFINE_MESH_ASSET, DE_MESH_ASSET, asset_path
from .die_press_affine import build_affine_mesh, save_affine_assets

DE_SIZES = (0.3, 0.5, 1.5)
AFFINE_SIZES = (0.45, 0.8, 2.5)


def build_assets(outdir=None) -> list[Path]:
    out = Path(outdir) if outdir else asset_path(DE_MESH_ASSET).parent
    out.mkdir(parents=True, exist_ok=True)
    hf, hm, hc = DE_SIZES
    mesh = geo.build_reference_mesh(h_fine=hf, h_mid=hm, h_coarse=hc)
    save_mesh(mesh, out / DE_MESH_ASSET)
    hf, hm, hc = AFFINE_SIZES
    amesh, layout = build_affine_mesh(h_fine=hf, h_mid=hm, h_coarse=hc)
    save_affine_assets(amesh, layout, out / AFFINE_MESH_ASSET, out / AFFINE_LAYOUT_ASSET)
    return [out / DE_MESH_ASSET, out / AFFINE_MESH_ASSET, out / AFFINE_LAYOUT_ASSET]


if __name__ == "__main__":
    for path in build_assets(sys.argv[1] if len(sys.argv) > 1 else None):
        print(path)
