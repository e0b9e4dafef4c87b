"""Unmix a small synthetic datacube and write abundance images.

Three endmembers are painted as smooth blobs over a 24 x 32 pixel grid.
The cube is unfolded, its endmembers extracted, and the NNLS abundances
refolded into one PGM image per endmember under ``demo_out/``.
"""
from pathlib import Path

import numpy as np

from chemdim.core import HyperCube, unfold
from chemdim.estimator import estimate
from chemdim.extractor import extract, reconstruct
from chemdim.io import write_pgm
from chemdim.synth import generate_endmembers


def blob_weights(nx, ny, centers, width=6.0):
    x, y = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    w = np.stack([np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2)) for cx, cy in centers], -1)
    return w + 0.02


def main(out="demo_out"):
    rng = np.random.default_rng(4)
    e = generate_endmembers(3, seed=rng, normalize=True)
    w = blob_weights(24, 32, [(5, 6), (18, 10), (12, 26)])
    cube = HyperCube(w @ e + rng.normal(0, 1e-4, (24, 32, e.shape[1])))
    z, pmap = unfold(cube)

    rep = estimate(z, g=8, seed=2)
    print(f"estimated sources: {rep.k_cd}")
    es = extract(rep.candidates, rep.k_cd)
    amap, images = reconstruct(z, es, pmap)

    out = Path(out)
    out.mkdir(exist_ok=True)
    for j, img in enumerate(images):
        write_pgm(out / f"abundance_E{j + 1}.pgm", img)
        x, y = np.unravel_index(np.argmax(img), img.shape)
        print(f"E{j + 1}: peak abundance at pixel ({x}, {y})")
    print(f"images written to {out}/")


if __name__ == "__main__":
    main()
