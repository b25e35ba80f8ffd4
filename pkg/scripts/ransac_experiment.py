"""Effect of the RANSAC proposer on a weakly textured scene, over several seeds and texture strengths."""

import argparse

from lexstereo.core import MatchParams
from lexstereo.energy import EnergyModel
from lexstereo.localexp import OptimizerConfig, optimize
from lexstereo.metrics import bad_rate
from lexstereo.synthetic import weak_texture_scene


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--amps", default="5")
    p.add_argument("--noise", type=float, default=3.0)
    p.add_argument("--seeds", default="0,1")
    p.add_argument("--iters", type=int, default=10)
    args = p.parse_args()

    print("amp  seed  bad2 off   bad2 on   reduction")
    for amp in (float(a) for a in args.amps.split(",")):
        scene = weak_texture_scene(noise=args.noise, weak_amp=amp)
        model = EnergyModel(scene.pair, MatchParams(window_radius=10))
        for seed in (int(s) for s in args.seeds.split(",")):
            errs = []
            for k in (0, 1):
                cfg = OptimizerConfig(cell_sizes=(3, 9, 15), k_rans=(k,), outer_iters=args.iters, seed=seed)
                f, _ = optimize(model, cfg)
                errs.append(bad_rate(f.disparity(), scene.gt_left, scene.nonocc_left, 2.0))
            print(f"{amp:4.1f}  {seed:4d}  {errs[0]:7.2f}%  {errs[1]:7.2f}%  {100 * (1 - errs[1] / errs[0]):6.1f}%")


if __name__ == "__main__":
    main()
