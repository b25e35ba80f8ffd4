"""Render a synthetic piecewise-planar pair and write it in the layout the CLI expects.

Writes left.png, right.png, gt.pfm (left view) and nonocc.png to the output
directory, then prints the matching lexstereo command line.
"""

import argparse
from pathlib import Path

import numpy as np

from lexstereo import io
from lexstereo.synthetic import three_plane_scene, weak_texture_scene

SCENES = {"three-plane": three_plane_scene, "weak-texture": weak_texture_scene}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", type=Path)
    p.add_argument("--scene", choices=sorted(SCENES), default="three-plane")
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=72)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    kwargs = dict(width=args.width, height=args.height, seed=args.seed)
    if args.noise is not None:
        kwargs["noise"] = args.noise
    scene = SCENES[args.scene](**kwargs)
    io.ensure_dir(args.out)
    io.write_png(np.rint(scene.pair.left).astype(np.uint8), args.out / "left.png")
    io.write_png(np.rint(scene.pair.right).astype(np.uint8), args.out / "right.png")
    io.write_pfm(scene.gt_left, args.out / "gt.pfm")
    io.write_png(scene.nonocc_left.astype(np.uint8) * 255, args.out / "nonocc.png")
    ndisp = int(scene.pair.disp_max) + 1
    print(f"lexstereo --left {args.out / 'left.png'} --right {args.out / 'right.png'} --ndisp {ndisp} "
          f"--gt {args.out / 'gt.pfm'} --nonocc {args.out / 'nonocc.png'} --out {args.out / 'result'}")


if __name__ == "__main__":
    main()
